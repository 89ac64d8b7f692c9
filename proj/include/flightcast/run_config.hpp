#pragma once

// Run configuration shared by the train/evaluate commands.

#include "flightcast/error.hpp"
#include "flightcast/models.hpp"
#include "flightcast/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

namespace flightcast {

enum class DataMode { aspm, aspm_swim };

inline std::string to_string(DataMode m) { return m == DataMode::aspm ? "aspm" : "aspm+swim"; }

inline std::string data_label(DataMode m) { return m == DataMode::aspm ? "ASPM" : "ASPM+SWIM"; }

inline DataMode parse_data_mode(const std::string& text) {
    if (text == "aspm") return DataMode::aspm;
    if (text == "aspm+swim") return DataMode::aspm_swim;
    throw ConfigError("unknown data mode '" + text + "' (expected aspm or aspm+swim)");
}

/// Accepts the short CLI names as well as the stored kind tags.
inline std::string canonical_kind(const std::string& text) {
    if (text == "lr" || text == "linear_regression") return "linear_regression";
    if (text == "ar" || text == "autoregressive") return "autoregressive";
    if (text == "seq2seq") return "seq2seq";
    if (text == "seq2seq_attention") return "seq2seq_attention";
    throw ConfigError("unknown model kind '" + text + "' (expected lr, ar, seq2seq or seq2seq_attention)");
}

struct RunConfig {
    DataMode mode = DataMode::aspm;
    std::string kind = "seq2seq_attention";
    ModelConfig model;
    TrainingConfig training;
    SplitSpec split = SplitSpec::reference();
    std::size_t ar_order = 96;
    bool lr_calendar_features = true;
    std::optional<std::filesystem::path> data_path;

    /// Applies kind-implied settings and checks cross-field rules.
    void finalize() {
        kind = canonical_kind(kind);
        if (kind == "seq2seq") model.use_attention = false;
        if (kind == "seq2seq_attention") model.use_attention = true;
        if (mode == DataMode::aspm && model.use_swim) {
            throw ConfigError("data mode 'aspm' cannot use the swim observed input; use mode 'aspm+swim' or drop observed_inputs");
        }
        if (ar_order < 1) {
            throw ConfigError("ar.order must be at least 1");
        }
        try {
            model.validate();
            training.validate();
            split.validate();
        } catch (const ContractError& e) {
            throw ConfigError(e.what());
        }
    }

    std::size_t n_lag() const { return kind == "autoregressive" ? ar_order : model.n_lag; }
};

namespace detail {

inline DateRange date_range_field(const nlohmann::json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) {
        throw ConfigError(std::string("split.") + key + " must be [first_date, last_date]");
    }
    const auto first = parse_date(v[0].get<std::string>());
    const auto last = parse_date(v[1].get<std::string>());
    if (!first || !last) {
        throw ConfigError(std::string("split.") + key + " dates must be YYYY-MM-DD");
    }
    return {*first, *last};
}

} // namespace detail

/// Parses a run config. Relative data paths resolve against `base_dir`.
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    RunConfig rc;
    try {
        if (!j.is_object()) {
            throw ConfigError("run config must be a JSON object");
        }
        rc.mode = parse_data_mode(j.value("mode", std::string("aspm")));
        rc.kind = j.value("kind", rc.kind);
        if (j.contains("model")) rc.model = j.at("model").get<ModelConfig>();
        if (j.contains("training")) rc.training = j.at("training").get<TrainingConfig>();
        if (j.contains("split")) {
            rc.split.train = detail::date_range_field(j.at("split"), "train");
            rc.split.test = detail::date_range_field(j.at("split"), "test");
        }
        if (j.contains("ar")) rc.ar_order = j.at("ar").value("order", rc.ar_order);
        if (j.contains("lr")) rc.lr_calendar_features = j.at("lr").value("calendar_features", rc.lr_calendar_features);
        if (j.contains("data")) {
            std::filesystem::path p = j.at("data").get<std::string>();
            rc.data_path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    return rc;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    return run_config_from_json(read_json_file(path), path.parent_path());
}

} // namespace flightcast
