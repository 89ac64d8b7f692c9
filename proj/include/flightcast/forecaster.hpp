#pragma once

// One handle over every forecaster kind, plus loading by the kind tag stored
// in the model file.

#include "flightcast/baselines.hpp"
#include "flightcast/eval.hpp"
#include "flightcast/models.hpp"

#include <string>
#include <variant>

namespace flightcast {

using AnyModel = std::variant<LinearForecaster, ArForecaster, Seq2SeqModel>;

inline std::string kind_of(const AnyModel& m) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, LinearForecaster>) {
                return "linear_regression";
            } else if constexpr (std::is_same_v<T, ArForecaster>) {
                return "autoregressive";
            } else {
                return x.kind();
            }
        },
        m);
}

/// Row label used in comparison tables.
inline std::string model_label(const std::string& kind) {
    if (kind == "linear_regression") return "Linear_Regression";
    if (kind == "autoregressive") return "Autoregressive";
    if (kind == "seq2seq") return "Seq2Seq";
    if (kind == "seq2seq_attention") return "Seq2Seq_Attention";
    return kind;
}

inline std::size_t n_lag_of(const AnyModel& m) {
    if (const auto* lr = std::get_if<LinearForecaster>(&m)) return lr->config.n_lag;
    if (const auto* ar = std::get_if<ArForecaster>(&m)) return ar->n_lag();
    return std::get<Seq2SeqModel>(m).config.n_lag;
}

inline std::size_t n_look_ahead_of(const AnyModel& m) {
    if (const auto* lr = std::get_if<LinearForecaster>(&m)) return lr->config.n_look_ahead;
    if (const auto* ar = std::get_if<ArForecaster>(&m)) return ar->n_look_ahead;
    return std::get<Seq2SeqModel>(m).config.n_look_ahead;
}

inline bool uses_swim(const AnyModel& m) {
    if (const auto* lr = std::get_if<LinearForecaster>(&m)) return lr->config.use_swim;
    if (std::holds_alternative<ArForecaster>(m)) return false;
    return std::get<Seq2SeqModel>(m).config.use_swim;
}

inline BatchForecaster batch_forecaster(const AnyModel& m) {
    if (const auto* lr = std::get_if<LinearForecaster>(&m)) {
        return per_window([lr](const SupervisedWindow& w) { return lr->forecast(w); });
    }
    if (const auto* ar = std::get_if<ArForecaster>(&m)) {
        return per_window([ar](const SupervisedWindow& w) { return ar->forecast(w); });
    }
    const auto* s2s = &std::get<Seq2SeqModel>(m);
    return [s2s](std::span<const SupervisedWindow> windows) { return forecast_batch(*s2s, windows); };
}

inline ModelFile any_to_model_file(const AnyModel& m) {
    return std::visit([](const auto& x) { return to_model_file(x); }, m);
}

inline AnyModel any_from_model_file(const ModelFile& file) {
    if (file.kind == "linear_regression") return linear_from_model_file(file);
    if (file.kind == "autoregressive") return ar_from_model_file(file);
    if (file.kind == "seq2seq" || file.kind == "seq2seq_attention") return seq2seq_from_model_file(file);
    throw FormatError("unknown model kind '" + file.kind + "'");
}

} // namespace flightcast
