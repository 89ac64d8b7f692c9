#pragma once

// File-level workflows behind the `flightcast` subcommands.

#include "flightcast/baselines.hpp"
#include "flightcast/datagen.hpp"
#include "flightcast/eval.hpp"
#include "flightcast/forecaster.hpp"
#include "flightcast/models.hpp"
#include "flightcast/pipeline.hpp"
#include "flightcast/run_config.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace flightcast {

/// Progress messages on a side stream. Wall-clock prefixes are dropped in
/// deterministic mode so that captured logs are reproducible too.
class Logger {
public:
    explicit Logger(std::ostream& out = std::cerr, bool deterministic = false, bool quiet = false)
        : out_(&out), deterministic_(deterministic), quiet_(quiet) {}

    void info(const std::string& message) const {
        if (quiet_) return;
        if (!deterministic_) {
            const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
            *out_ << '[' << format_timestamp(now) << "] ";
        }
        *out_ << message << '\n';
    }

private:
    std::ostream* out_;
    bool deterministic_;
    bool quiet_;
};

inline std::vector<QuarterHourRecord> load_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open data file " + path.string());
    }
    return clean_series(parse_records(in));
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    return out;
}

/// `report.json` -> `report.<suffix>`.
inline std::filesystem::path sibling_path(const std::filesystem::path& path, const std::string& suffix) {
    std::filesystem::path out = path;
    out.replace_extension(suffix);
    return out;
}

// ---------------------------------------------------------------------------
// datagen

inline std::size_t cmd_datagen(const std::filesystem::path& config_path, const std::filesystem::path& out_path,
                               std::optional<std::uint64_t> seed, const Logger& log) {
    SyntheticConfig cfg = synthetic_config_from_json(read_json_file(config_path));
    if (seed) cfg.seed = *seed;
    const auto records = generate(cfg);
    auto out = open_output(out_path);
    write_records(out, records);
    log.info("wrote " + std::to_string(records.size()) + " records to " + out_path.string());
    return records.size();
}

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
    AnyModel model;
    std::vector<double> losses; // per epoch; one in-sample mse for closed-form fits
};

inline bool has_swim(const std::vector<QuarterHourRecord>& records) {
    return std::any_of(records.begin(), records.end(), [](const QuarterHourRecord& r) { return r.swim_observed_departures.has_value(); });
}

inline TrainOutcome train_model(const RunConfig& rc, const std::vector<QuarterHourRecord>& train_records, const Logger& log) {
    const bool swim = rc.model.use_swim;
    if (swim && !has_swim(train_records)) {
        throw DataError("the swim observed input is requested but the training range has no SWIM values");
    }
    TrainOutcome out{ArForecaster{}, {}};
    if (rc.kind == "autoregressive") {
        std::vector<double> y;
        y.reserve(train_records.size());
        for (const auto& r : train_records) y.push_back(r.dep_demand);
        ArForecaster ar{fit_ar(y, rc.ar_order), rc.model.n_look_ahead};
        out.losses.push_back(ar.model.residual_std * ar.model.residual_std);
        log.info("fitted AR(" + std::to_string(rc.ar_order) + ") on " + std::to_string(y.size()) + " slices");
        out.model = std::move(ar);
    } else if (rc.kind == "linear_regression") {
        const auto windows = make_windows(train_records, rc.model.n_lag, rc.model.n_look_ahead, {swim});
        LinearForecasterConfig lc{rc.model.n_lag, rc.model.n_look_ahead, swim, rc.lr_calendar_features};
        LinearForecaster lr = LinearForecaster::fit(lc, windows);
        for (const auto& w : lr.model.warnings) log.info("warning: " + w);
        double se = 0.0;
        for (const auto& w : windows) {
            const auto f = lr.forecast(w);
            for (std::size_t h = 0; h < f.size(); ++h) se += (f[h] - w.targets[h]) * (f[h] - w.targets[h]);
        }
        out.losses.push_back(se / static_cast<double>(windows.size() * rc.model.n_look_ahead));
        log.info("fitted linear regression on " + std::to_string(windows.size()) + " windows");
        out.model = std::move(lr);
    } else {
        const auto windows = make_windows(train_records, rc.model.n_lag, rc.model.n_look_ahead, {swim});
        Seq2SeqModel model = Seq2SeqModel::create(rc.model, fit_scaler(train_records), rc.training.seed);
        log.info("training " + model.kind() + " on " + std::to_string(windows.size()) + " windows");
        out.losses = train(model, windows, rc.training, [&](std::size_t epoch, double loss) {
            log.info("epoch " + std::to_string(epoch) + "/" + std::to_string(rc.training.epochs) + " loss " + format_number(loss));
        });
        out.model = std::move(model);
    }
    return out;
}

/// Trains on the split's train range, writes the model file and `<model>.loss.csv`.
inline TrainOutcome cmd_train(const RunConfig& rc, const std::filesystem::path& data_path, const std::filesystem::path& model_path,
                              const Logger& log) {
    const auto records = load_records(data_path);
    const Split split = split_train_test(records, rc.split);
    for (const auto& w : split.warnings) log.info("warning: " + w);
    if (split.train.empty()) {
        throw DataError("training range " + format_date(rc.split.train.first) + ".." + format_date(rc.split.train.last) + " is empty");
    }
    TrainOutcome outcome = train_model(rc, split.train, log);

    ModelFile file = any_to_model_file(outcome.model);
    file.config["data_mode"] = to_string(rc.mode);
    {
        auto out = open_output(model_path);
        out << encode_model_file(file);
    }
    auto loss = open_output(sibling_path(model_path, ".loss.csv"));
    loss << "epoch,loss\n";
    for (std::size_t e = 0; e < outcome.losses.size(); ++e) {
        loss << e + 1 << ',' << format_number(outcome.losses[e]) << '\n';
    }
    log.info("wrote " + model_path.string());
    return outcome;
}

// ---------------------------------------------------------------------------
// evaluate

struct LoadedModel {
    AnyModel model;
    DataMode mode = DataMode::aspm;
};

inline LoadedModel load_any_model(const std::filesystem::path& path) {
    const ModelFile file = read_model_file(path);
    LoadedModel out{any_from_model_file(file), DataMode::aspm};
    const auto mode = file.config.value("data_mode", std::string());
    out.mode = mode.empty() ? (uses_swim(out.model) ? DataMode::aspm_swim : DataMode::aspm) : parse_data_mode(mode);
    return out;
}

/// Rolling-origin scoring over the test range with any forecaster.
inline Evaluation evaluate_on_split(const BatchForecaster& forecaster, std::size_t n_lag, std::size_t n_look_ahead, bool swim,
                                    const Split& split) {
    if (split.test.empty()) {
        throw DataError("test range holds no records");
    }
    if (swim && !has_swim(split.test)) {
        throw DataError("model uses SWIM observed inputs but the test data has no SWIM values");
    }
    const auto windows = make_test_windows(split, n_lag, n_look_ahead, {swim});
    if (windows.empty()) {
        throw DataError("test range is too short for n_lag " + std::to_string(n_lag) + " and n_look_ahead " + std::to_string(n_look_ahead));
    }
    return evaluate_windows(windows, forecaster);
}

/// Writes the report JSON to `report_path` and the forecast CSV next to it.
inline EvaluationReport cmd_evaluate(const std::filesystem::path& model_path, const std::filesystem::path& data_path, const SplitSpec& spec,
                                     const std::filesystem::path& report_path, const Logger& log) {
    const LoadedModel loaded = load_any_model(model_path);
    const auto records = load_records(data_path);
    const Split split = split_train_test(records, spec);
    for (const auto& w : split.warnings) log.info("warning: " + w);

    EvaluationReport report;
    report.kind = kind_of(loaded.model);
    report.data_label = data_label(loaded.mode);
    report.model_label = model_label(report.kind);
    report.n_lag = n_lag_of(loaded.model);
    report.n_look_ahead = n_look_ahead_of(loaded.model);
    report.test_first = format_date(spec.test.first);
    report.test_last = format_date(spec.test.last);
    report.evaluation = evaluate_on_split(batch_forecaster(loaded.model), report.n_lag, report.n_look_ahead, uses_swim(loaded.model), split);

    {
        auto out = open_output(report_path);
        out << to_json(report).dump(2) << '\n';
    }
    auto csv = open_output(sibling_path(report_path, ".forecast.csv"));
    write_forecast_csv(csv, report.evaluation.pairs);
    log.info(report.model_label + " on " + report.data_label + ": quarter mse " + format_number(report.evaluation.quarter.mse) + " over " +
             std::to_string(report.evaluation.quarter.n) + " pairs");
    return report;
}

// ---------------------------------------------------------------------------
// forecast

/// Forecast issued right after the last record: `timestamp,predicted` rows.
inline void cmd_forecast(const std::filesystem::path& model_path, const std::filesystem::path& data_path, std::ostream& out) {
    const LoadedModel loaded = load_any_model(model_path);
    const auto records = load_records(data_path);
    const bool swim = uses_swim(loaded.model);
    if (swim && !has_swim(records)) {
        throw DataError("model uses SWIM observed inputs but the data has no SWIM values");
    }
    const auto window = latest_window(records, n_lag_of(loaded.model), n_look_ahead_of(loaded.model), {swim});
    const auto predicted = batch_forecaster(loaded.model)(std::span<const SupervisedWindow>(&window, 1)).front();
    out << "timestamp,predicted\n";
    for (std::size_t h = 0; h < predicted.size(); ++h) {
        out << format_timestamp(window.future_f[h].slice_start) << ',' << format_number(predicted[h]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// compare

inline ComparisonTable cmd_compare(const std::vector<std::filesystem::path>& reports, AggregationLevel level, bool sort_descending) {
    if (reports.empty()) {
        throw ConfigError("compare needs at least one report");
    }
    std::vector<ComparisonRow> rows;
    for (const auto& path : reports) {
        std::ifstream in(path);
        if (!in) {
            throw DataError("cannot open report " + path.string());
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + " is not a readable report: " + e.what());
        }
        rows.push_back(comparison_row_from_report(j, level));
    }
    return comparison_table(std::move(rows), sort_descending);
}

} // namespace flightcast
