#pragma once

// Error metrics, hourly/daily aggregation, rolling-origin scoring and the
// model comparison table.

#include "flightcast/error.hpp"
#include "flightcast/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace flightcast {

struct MetricsReport {
    double mse = 0.0;
    double mae = 0.0;
    double explained_variance = 1.0;
    std::size_t n = 0;
};

namespace detail {

inline double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double population_variance(std::span<const double> v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

} // namespace detail

inline MetricsReport compute_metrics(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size()) {
        throw ContractError("compute_metrics: " + std::to_string(actual.size()) + " actual values vs " + std::to_string(predicted.size()) +
                            " predictions");
    }
    if (actual.empty()) {
        throw ContractError("compute_metrics: nothing to score");
    }
    std::vector<double> residual(actual.size());
    double se = 0.0;
    double ae = 0.0;
    bool all_zero = true;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        residual[i] = actual[i] - predicted[i];
        se += residual[i] * residual[i];
        ae += std::fabs(residual[i]);
        all_zero = all_zero && residual[i] == 0.0;
    }
    MetricsReport r;
    r.n = actual.size();
    r.mse = se / static_cast<double>(r.n);
    r.mae = ae / static_cast<double>(r.n);
    const double var_actual = detail::population_variance(actual);
    if (var_actual == 0.0) {
        r.explained_variance = all_zero ? 1.0 : 0.0;
    } else {
        r.explained_variance = all_zero ? 1.0 : 1.0 - detail::population_variance(residual) / var_actual;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Aggregation

enum class AggregationLevel { quarter, hourly, daily };

inline std::string to_string(AggregationLevel level) {
    switch (level) {
    case AggregationLevel::quarter: return "quarter";
    case AggregationLevel::hourly: return "hourly";
    case AggregationLevel::daily: return "daily";
    }
    return "?";
}

inline AggregationLevel parse_aggregation_level(const std::string& text) {
    if (text == "quarter") return AggregationLevel::quarter;
    if (text == "hourly") return AggregationLevel::hourly;
    if (text == "daily") return AggregationLevel::daily;
    throw ConfigError("unknown aggregation level '" + text + "' (expected quarter, hourly or daily)");
}

struct TimedValue {
    Timestamp ts;
    double value = 0.0;

    friend bool operator==(const TimedValue&, const TimedValue&) = default;
};

/// Sums quarter-hour values per clock hour or UTC day. Buckets missing any of
/// their slices are dropped. Output is time-ordered and stamped with the
/// bucket start; sums accumulate in time order.
inline std::vector<TimedValue> aggregate(std::span<const TimedValue> quarter_series, AggregationLevel level) {
    for (const auto& v : quarter_series) {
        if (!on_slice_boundary(v.ts)) {
            throw ContractError("aggregate: " + format_timestamp(v.ts) + " is not on a 15-minute boundary");
        }
    }
    if (level == AggregationLevel::quarter) {
        return {quarter_series.begin(), quarter_series.end()};
    }
    const std::chrono::seconds width = level == AggregationLevel::hourly ? std::chrono::seconds(3600) : std::chrono::seconds(86400);
    const std::size_t needed = level == AggregationLevel::hourly ? kSlicesPerHour : kSlicesPerDay;

    std::vector<TimedValue> sorted(quarter_series.begin(), quarter_series.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const TimedValue& a, const TimedValue& b) { return a.ts < b.ts; });

    std::vector<TimedValue> out;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const Timestamp bucket = std::chrono::floor<std::chrono::seconds>(sorted[i].ts - sorted[i].ts.time_since_epoch() % width);
        double sum = 0.0;
        std::size_t count = 0;
        Timestamp previous{};
        for (; i < sorted.size() && sorted[i].ts < bucket + width; ++i) {
            if (count > 0 && sorted[i].ts == previous) {
                throw ContractError("aggregate: duplicate slice " + format_timestamp(previous));
            }
            previous = sorted[i].ts;
            sum += sorted[i].value;
            ++count;
        }
        if (count == needed) {
            out.push_back({bucket, sum});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Comparison

/// Signed whole-percent improvement of `mse_model` relative to `mse_reference`.
inline int mse_comparison(double mse_model, double mse_reference) {
    if (!(mse_reference > 0.0)) {
        throw ContractError("mse_comparison: reference mse must be positive");
    }
    return static_cast<int>(std::lround((mse_reference - mse_model) / mse_reference * 100.0));
}

struct ComparisonRow {
    std::string data_label;
    std::string model_label;
    MetricsReport metrics;
    std::size_t n_lag = 0;
    std::size_t n_look_ahead = 0;
    int mse_comparison_pct = 0;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;
    std::size_t reference = 0; // index into rows
};

/// Fills mse_comparison_pct against the minimum-mse row; ties go to the first
/// row in input order. Optionally sorts rows by mse descending afterwards.
inline ComparisonTable comparison_table(std::vector<ComparisonRow> rows, bool sort_by_mse_descending = false) {
    if (rows.empty()) {
        throw ContractError("comparison_table: no rows");
    }
    std::size_t ref = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].metrics.mse < rows[ref].metrics.mse) ref = i;
    }
    const double ref_mse = rows[ref].metrics.mse;
    for (auto& r : rows) {
        r.mse_comparison_pct = ref_mse > 0.0 ? mse_comparison(r.metrics.mse, ref_mse) : 0;
    }
    rows[ref].mse_comparison_pct = 0;
    if (sort_by_mse_descending) {
        std::vector<std::size_t> order(rows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rows[a].metrics.mse > rows[b].metrics.mse; });
        std::vector<ComparisonRow> sorted;
        std::size_t new_ref = 0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            if (order[k] == ref) new_ref = k;
            sorted.push_back(rows[order[k]]);
        }
        return {std::move(sorted), new_ref};
    }
    return {std::move(rows), ref};
}

inline std::string format_percent(int pct) { return std::to_string(pct) + "%"; }

inline void render_table(std::ostream& out, const ComparisonTable& table) {
    const std::vector<std::string> header{"data", "model", "n_lag", "n_look_ahead", "mse", "mae", "explained_variance", "mse_comparison"};
    std::vector<std::vector<std::string>> cells{header};
    char buf[64];
    for (const auto& r : table.rows) {
        std::vector<std::string> row{r.data_label, r.model_label, std::to_string(r.n_lag), std::to_string(r.n_look_ahead)};
        for (double v : {r.metrics.mse, r.metrics.mae, r.metrics.explained_variance}) {
            std::snprintf(buf, sizeof buf, "%.4f", v);
            row.emplace_back(buf);
        }
        row.push_back(format_percent(r.mse_comparison_pct));
        cells.push_back(std::move(row));
    }
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    }
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            const bool numeric = c >= 2;
            const std::string pad(widths[c] - row[c].size(), ' ');
            out << (c ? "  " : "") << (numeric ? pad + row[c] : row[c] + (c + 1 < row.size() ? pad : ""));
        }
        out << '\n';
    }
}

inline nlohmann::json to_json(const MetricsReport& m) {
    return {{"mse", m.mse}, {"mae", m.mae}, {"explained_variance", m.explained_variance}, {"n", m.n}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
    return {j.at("mse").get<double>(), j.at("mae").get<double>(), j.at("explained_variance").get<double>(), j.at("n").get<std::size_t>()};
}

inline nlohmann::json to_json(const ComparisonTable& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        rows.push_back({{"data_label", r.data_label},
                        {"model_label", r.model_label},
                        {"n_lag", r.n_lag},
                        {"n_look_ahead", r.n_look_ahead},
                        {"mse", r.metrics.mse},
                        {"mae", r.metrics.mae},
                        {"explained_variance", r.metrics.explained_variance},
                        {"n", r.metrics.n},
                        {"mse_comparison_pct", r.mse_comparison_pct}});
    }
    return {{"reference_row", table.reference}, {"rows", std::move(rows)}};
}

// ---------------------------------------------------------------------------
// Rolling-origin evaluation

struct ScoredPair {
    Timestamp origin;
    std::size_t horizon = 0; // 1-based
    Timestamp target_time;
    double actual = 0.0;
    double predicted = 0.0;
};

struct Evaluation {
    std::vector<ScoredPair> pairs; // origin-major, horizon-minor
    MetricsReport quarter;
    MetricsReport hourly;
    MetricsReport daily;
    std::vector<double> per_horizon_mse;

    const MetricsReport& level(AggregationLevel l) const {
        return l == AggregationLevel::quarter ? quarter : l == AggregationLevel::hourly ? hourly : daily;
    }
};

/// Forecasts for a batch of windows, one vector of tau_max values per window.
using BatchForecaster = std::function<std::vector<std::vector<double>>(std::span<const SupervisedWindow>)>;

/// Adapts a one-window forecaster.
template <typename F>
BatchForecaster per_window(F single) {
    return [single = std::move(single)](std::span<const SupervisedWindow> windows) {
        std::vector<std::vector<double>> out;
        out.reserve(windows.size());
        for (const auto& w : windows) out.push_back(single(w));
        return out;
    };
}

/// Scores every (origin, horizon) pair. Hourly and daily figures: each horizon
/// yields one forecast per target slice; that stitched series and the matching
/// actuals are aggregated, and the resulting buckets pooled across horizons.
inline Evaluation evaluate_windows(std::span<const SupervisedWindow> windows, const BatchForecaster& forecaster) {
    if (windows.empty()) {
        throw ContractError("evaluate: no test windows");
    }
    const std::size_t tau = windows.front().targets.size();
    const auto forecasts = forecaster(windows);
    if (forecasts.size() != windows.size()) {
        throw ContractError("evaluate: forecaster returned " + std::to_string(forecasts.size()) + " forecasts for " +
                            std::to_string(windows.size()) + " windows");
    }
    Evaluation ev;
    std::vector<std::vector<TimedValue>> actual_by_h(tau), predicted_by_h(tau);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        if (w.targets.size() != tau || forecasts[i].size() != tau) {
            throw ContractError("evaluate: window at " + format_timestamp(w.origin) + " does not carry " + std::to_string(tau) + " values");
        }
        for (std::size_t h = 0; h < tau; ++h) {
            const Timestamp t = w.future_f[h].slice_start;
            ev.pairs.push_back({w.origin, h + 1, t, w.targets[h], forecasts[i][h]});
            actual_by_h[h].push_back({t, w.targets[h]});
            predicted_by_h[h].push_back({t, forecasts[i][h]});
        }
    }
    std::vector<double> actual, predicted;
    for (const auto& p : ev.pairs) {
        actual.push_back(p.actual);
        predicted.push_back(p.predicted);
    }
    ev.quarter = compute_metrics(actual, predicted);
    for (std::size_t h = 0; h < tau; ++h) {
        double se = 0.0;
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const double d = actual_by_h[h][i].value - predicted_by_h[h][i].value;
            se += d * d;
        }
        ev.per_horizon_mse.push_back(se / static_cast<double>(windows.size()));
    }
    for (AggregationLevel level : {AggregationLevel::hourly, AggregationLevel::daily}) {
        std::vector<double> a, p;
        for (std::size_t h = 0; h < tau; ++h) {
            for (const auto& v : aggregate(actual_by_h[h], level)) a.push_back(v.value);
            for (const auto& v : aggregate(predicted_by_h[h], level)) p.push_back(v.value);
        }
        MetricsReport m;
        if (!a.empty()) {
            m = compute_metrics(a, p);
        } else {
            m = {std::nan(""), std::nan(""), std::nan(""), 0};
        }
        (level == AggregationLevel::hourly ? ev.hourly : ev.daily) = m;
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Report files

inline constexpr const char* kPoolingDescription =
    "all horizons 1..n_look_ahead of every test origin at 15-minute stride; hourly/daily: per-horizon series aggregated, then pooled";

struct EvaluationReport {
    std::string data_label;
    std::string model_label;
    std::string kind;
    std::size_t n_lag = 0;
    std::size_t n_look_ahead = 0;
    std::string test_first;
    std::string test_last;
    Evaluation evaluation;
};

inline nlohmann::json metrics_json_or_null(const MetricsReport& m) {
    if (m.n == 0) {
        return {{"mse", nullptr}, {"mae", nullptr}, {"explained_variance", nullptr}, {"n", 0}};
    }
    return to_json(m);
}

inline nlohmann::json to_json(const EvaluationReport& r) {
    return {{"data_label", r.data_label},
            {"model_label", r.model_label},
            {"kind", r.kind},
            {"n_lag", r.n_lag},
            {"n_look_ahead", r.n_look_ahead},
            {"test_range", {r.test_first, r.test_last}},
            {"pooling", kPoolingDescription},
            {"levels",
             {{"quarter", metrics_json_or_null(r.evaluation.quarter)},
              {"hourly", metrics_json_or_null(r.evaluation.hourly)},
              {"daily", metrics_json_or_null(r.evaluation.daily)}}},
            {"per_horizon_mse", r.evaluation.per_horizon_mse}};
}

/// Reads the comparison-relevant part of a report written by to_json.
inline ComparisonRow comparison_row_from_report(const nlohmann::json& j, AggregationLevel level = AggregationLevel::quarter) {
    try {
        ComparisonRow row;
        row.data_label = j.at("data_label").get<std::string>();
        row.model_label = j.at("model_label").get<std::string>();
        row.n_lag = j.at("n_lag").get<std::size_t>();
        row.n_look_ahead = j.at("n_look_ahead").get<std::size_t>();
        const auto& m = j.at("levels").at(to_string(level));
        if (m.at("mse").is_null()) {
            throw DataError("report for " + row.model_label + " has no " + to_string(level) + " metrics");
        }
        row.metrics = metrics_from_json(m);
        return row;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed evaluation report: ") + e.what());
    }
}

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_forecast_csv(std::ostream& out, std::span<const ScoredPair> pairs) {
    out << "timestamp,actual,predicted\n";
    for (const auto& p : pairs) {
        out << format_timestamp(p.target_time) << ',' << format_number(p.actual) << ',' << format_number(p.predicted) << '\n';
    }
}

} // namespace flightcast
