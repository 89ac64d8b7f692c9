#pragma once

// Multiple linear regression (direct multi-horizon strategy) and AR(p)
// (recursive strategy). Least squares goes through Householder QR.

#include "flightcast/error.hpp"
#include "flightcast/model_file.hpp"
#include "flightcast/pipeline.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace flightcast {

/// Row-major dense matrix used to hand designs to the solvers.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct LeastSquaresResult {
    std::vector<double> coefficients;
    bool ridge_rescued = false;
};

inline constexpr double kRidgeJitter = 1e-8;

/// Householder QR solution of min ||X b - y||. A numerically rank-deficient
/// design (|R_jj| <= 1e-10 * max |R_kk|) is re-solved on the ridge-augmented
/// system [X; sqrt(1e-8) I].
inline LeastSquaresResult solve_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& target) {
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
    const Eigen::MatrixXd& packed = qr.matrixQR();
    const Eigen::Index n = design.cols();
    double largest = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) largest = std::max(largest, std::fabs(packed(j, j)));
    bool deficient = largest == 0.0;
    for (Eigen::Index j = 0; j < n && !deficient; ++j) {
        deficient = std::fabs(packed(j, j)) <= 1e-10 * largest;
    }
    LeastSquaresResult out;
    Eigen::VectorXd solution;
    if (!deficient) {
        solution = qr.solve(target);
    } else {
        Eigen::MatrixXd augmented(design.rows() + n, n);
        augmented.topRows(design.rows()) = design;
        augmented.bottomRows(n) = std::sqrt(kRidgeJitter) * Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(design.rows() + n);
        rhs.head(design.rows()) = target;
        solution = augmented.householderQr().solve(rhs);
        out.ridge_rescued = true;
    }
    out.coefficients.assign(solution.data(), solution.data() + solution.size());
    return out;
}

// ---------------------------------------------------------------------------
// Linear regression

/// One coefficient vector per horizon: [intercept, w_1 .. w_d].
struct LinearModel {
    std::vector<std::vector<double>> coefficients;
    std::vector<std::string> warnings;

    std::size_t horizons() const { return coefficients.size(); }
    std::size_t feature_count() const { return coefficients.empty() ? 0 : coefficients.front().size() - 1; }

    double predict(std::size_t horizon, std::span<const double> features) const {
        const auto& c = coefficients.at(horizon);
        if (features.size() + 1 != c.size()) {
            throw DimensionError("linear model expects " + std::to_string(c.size() - 1) + " features, got " +
                                 std::to_string(features.size()));
        }
        double acc = c[0];
        for (std::size_t i = 0; i < features.size(); ++i) acc += c[i + 1] * features[i];
        return acc;
    }
};

namespace detail {

inline Eigen::MatrixXd with_intercept(const Matrix& features) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(features.rows), static_cast<Eigen::Index>(features.cols + 1));
    for (std::size_t r = 0; r < features.rows; ++r) {
        x(static_cast<Eigen::Index>(r), 0) = 1.0;
        for (std::size_t c = 0; c < features.cols; ++c) {
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c + 1)) = features(r, c);
        }
    }
    return x;
}

inline LinearModel fit_per_horizon(std::span<const Matrix> designs, const Matrix& targets) {
    LinearModel model;
    for (std::size_t h = 0; h < targets.cols; ++h) {
        const Matrix& features = designs[designs.size() == 1 ? 0 : h];
        if (features.rows != targets.rows) {
            throw DimensionError("design has " + std::to_string(features.rows) + " rows, targets have " + std::to_string(targets.rows));
        }
        if (features.rows <= features.cols) {
            throw ContractError("linear regression needs more rows than features (n = " + std::to_string(features.rows) +
                                ", d = " + std::to_string(features.cols) + ")");
        }
        Eigen::VectorXd y(static_cast<Eigen::Index>(targets.rows));
        for (std::size_t r = 0; r < targets.rows; ++r) y(static_cast<Eigen::Index>(r)) = targets(r, h);
        auto result = solve_least_squares(with_intercept(features), y);
        if (result.ridge_rescued) {
            model.warnings.push_back("horizon " + std::to_string(h + 1) + ": rank-deficient design, solved with ridge jitter 1e-8");
        }
        model.coefficients.push_back(std::move(result.coefficients));
    }
    return model;
}

} // namespace detail

/// Ordinary least squares per horizon, all horizons sharing one feature matrix.
inline LinearModel fit_linear_regression(const Matrix& features, const Matrix& targets) {
    return detail::fit_per_horizon(std::span<const Matrix>(&features, 1), targets);
}

/// Same, with a dedicated feature matrix per horizon (equal widths).
inline LinearModel fit_linear_regression(const std::vector<Matrix>& per_horizon, const Matrix& targets) {
    if (per_horizon.size() != targets.cols) {
        throw DimensionError("need one design per horizon: " + std::to_string(per_horizon.size()) + " vs " + std::to_string(targets.cols));
    }
    for (const Matrix& m : per_horizon) {
        if (m.cols != per_horizon.front().cols) {
            throw DimensionError("per-horizon designs must share a width");
        }
    }
    return detail::fit_per_horizon(per_horizon, targets);
}

struct LinearForecasterConfig {
    std::size_t n_lag = 10;
    std::size_t n_look_ahead = 8;
    bool use_swim = false;
    bool calendar_features = true;
};

/// Linear regression over windows. Features for horizon tau:
/// [past y (p), past SWIM (p, optional), one-hot calendar of slice t+tau with
/// the first category of each field dropped].
struct LinearForecaster {
    LinearForecasterConfig config;
    LinearModel model;

    static constexpr std::size_t kCalendarWidth = 23 + 3 + 6 + 11;

    std::size_t feature_width() const {
        return config.n_lag * (config.use_swim ? 2 : 1) + (config.calendar_features ? kCalendarWidth : 0);
    }

    void features(const SupervisedWindow& w, std::size_t horizon, std::span<double> out) const {
        std::size_t k = 0;
        for (double y : w.past_y) out[k++] = y;
        if (config.use_swim) {
            for (const auto& x : w.past_x) out[k++] = x.at(0);
        }
        if (config.calendar_features) {
            std::fill(out.begin() + static_cast<std::ptrdiff_t>(k), out.end(), 0.0);
            const Calendar& c = w.future_f[horizon].calendar;
            if (c.hour > 0) out[k + static_cast<std::size_t>(c.hour - 1)] = 1.0;
            k += 23;
            if (c.qtr > 1) out[k + static_cast<std::size_t>(c.qtr - 2)] = 1.0;
            k += 3;
            if (c.day_of_week > 1) out[k + static_cast<std::size_t>(c.day_of_week - 2)] = 1.0;
            k += 6;
            if (c.month > 1) out[k + static_cast<std::size_t>(c.month - 2)] = 1.0;
        }
    }

    void check(const SupervisedWindow& w, bool need_targets) const {
        if (w.past_y.size() != config.n_lag || w.future_f.size() != config.n_look_ahead ||
            (need_targets && w.targets.size() != config.n_look_ahead)) {
            throw ContractError("window does not match linear model (n_lag " + std::to_string(config.n_lag) + ", n_look_ahead " +
                                std::to_string(config.n_look_ahead) + ")");
        }
        if (config.use_swim) {
            for (const auto& x : w.past_x) {
                if (x.size() != 1) throw ContractError("linear model expects one SWIM value per past step");
            }
        }
    }

    static LinearForecaster fit(const LinearForecasterConfig& config, const std::vector<SupervisedWindow>& windows) {
        if (config.n_lag < 1 || config.n_look_ahead < 1) {
            throw ContractError("linear model needs n_lag and n_look_ahead >= 1");
        }
        LinearForecaster f{config, {}};
        const std::size_t width = f.feature_width();
        std::vector<Matrix> designs(config.n_look_ahead, Matrix(windows.size(), width));
        Matrix targets(windows.size(), config.n_look_ahead);
        for (std::size_t r = 0; r < windows.size(); ++r) {
            f.check(windows[r], true);
            for (std::size_t h = 0; h < config.n_look_ahead; ++h) {
                f.features(windows[r], h, std::span<double>(designs[h].values).subspan(r * width, width));
                targets(r, h) = windows[r].targets[h];
            }
        }
        f.model = fit_linear_regression(designs, targets);
        return f;
    }

    std::vector<double> forecast(const SupervisedWindow& w) const {
        check(w, false);
        std::vector<double> row(feature_width());
        std::vector<double> out(config.n_look_ahead);
        for (std::size_t h = 0; h < config.n_look_ahead; ++h) {
            features(w, h, row);
            out[h] = std::max(0.0, model.predict(h, row));
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Autoregression

/// y_t = c + sum_k phi_k y_{t-k} + eps_t.
struct ARModel {
    std::size_t order = 1;
    double intercept = 0.0;
    std::vector<double> phi; // phi_1 .. phi_p
    double residual_std = 0.0;
};

/// OLS of y_t on [1, y_{t-1}, ..., y_{t-p}] over every t with a full lag window.
inline ARModel fit_ar(std::span<const double> series, std::size_t p) {
    if (p < 1) {
        throw ContractError("AR order must be at least 1");
    }
    if (series.size() <= 2 * p) {
        throw ContractError("AR(" + std::to_string(p) + ") needs more than " + std::to_string(2 * p) + " observations, got " +
                            std::to_string(series.size()));
    }
    const std::size_t rows = series.size() - p;
    ARModel model;
    model.order = p;
    model.phi.assign(p, 0.0);

    bool constant_regressors = true;
    for (std::size_t i = 1; i < series.size() - 1 && constant_regressors; ++i) {
        constant_regressors = series[i] == series[0];
    }
    if (constant_regressors) {
        double total = 0.0;
        for (std::size_t t = p; t < series.size(); ++t) total += series[t];
        model.intercept = total / static_cast<double>(rows);
    } else {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p + 1));
        Eigen::VectorXd y(static_cast<Eigen::Index>(rows));
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t t = r + p;
            const auto ri = static_cast<Eigen::Index>(r);
            x(ri, 0) = 1.0;
            for (std::size_t k = 1; k <= p; ++k) x(ri, static_cast<Eigen::Index>(k)) = series[t - k];
            y(ri) = series[t];
        }
        const auto result = solve_least_squares(x, y);
        model.intercept = result.coefficients[0];
        std::copy(result.coefficients.begin() + 1, result.coefficients.end(), model.phi.begin());
    }
    double ss = 0.0;
    for (std::size_t t = p; t < series.size(); ++t) {
        double fitted = model.intercept;
        for (std::size_t k = 1; k <= p; ++k) fitted += model.phi[k - 1] * series[t - k];
        ss += (series[t] - fitted) * (series[t] - fitted);
    }
    model.residual_std = std::sqrt(ss / static_cast<double>(rows));
    return model;
}

/// Recursive mean forecast: each prediction joins the lag window of the next step.
/// Outputs are clamped at zero; the recursion itself runs on unclamped values.
inline std::vector<double> ar_forecast(const ARModel& model, std::span<const double> history, std::size_t steps) {
    const std::size_t p = model.order;
    if (history.size() < p) {
        throw ContractError("AR(" + std::to_string(p) + ") forecast needs " + std::to_string(p) + " history values, got " +
                            std::to_string(history.size()));
    }
    std::vector<double> lags(history.end() - static_cast<std::ptrdiff_t>(p), history.end()); // oldest first
    std::vector<double> out;
    out.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        double next = model.intercept;
        for (std::size_t k = 1; k <= p; ++k) next += model.phi[k - 1] * lags[lags.size() - k];
        lags.push_back(next);
        out.push_back(std::max(0.0, next));
    }
    return out;
}

struct ArForecaster {
    ARModel model;
    std::size_t n_look_ahead = 8;

    std::size_t n_lag() const { return model.order; }

    std::vector<double> forecast(const SupervisedWindow& w) const { return ar_forecast(model, w.past_y, n_look_ahead); }
};

// ---------------------------------------------------------------------------
// Persistence

inline ModelFile to_model_file(const LinearForecaster& f) {
    ModelFile file;
    file.kind = "linear_regression";
    file.config = {{"n_lag", f.config.n_lag},
                   {"n_look_ahead", f.config.n_look_ahead},
                   {"observed_inputs", f.config.use_swim ? nlohmann::json::array({"swim"}) : nlohmann::json::array()},
                   {"calendar_features", f.config.calendar_features}};
    std::vector<double> flat;
    for (const auto& c : f.model.coefficients) flat.insert(flat.end(), c.begin(), c.end());
    file.add("lr.coefficients", {f.model.horizons(), f.feature_width() + 1}, std::move(flat));
    return file;
}

inline LinearForecaster linear_from_model_file(const ModelFile& file) {
    if (file.kind != "linear_regression") {
        throw FormatError("model file holds a '" + file.kind + "' model, not linear_regression");
    }
    LinearForecaster f;
    try {
        f.config.n_lag = file.config.at("n_lag").get<std::size_t>();
        f.config.n_look_ahead = file.config.at("n_look_ahead").get<std::size_t>();
        f.config.use_swim = !file.config.at("observed_inputs").empty();
        f.config.calendar_features = file.config.at("calendar_features").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed linear model config: ") + e.what());
    }
    const ParameterBlock& b = file.block("lr.coefficients");
    const std::size_t width = f.feature_width() + 1;
    if (b.shape != Shape{f.config.n_look_ahead, width}) {
        throw FormatError("lr.coefficients has shape " + to_string(b.shape) + ", expected " + to_string({f.config.n_look_ahead, width}));
    }
    for (std::size_t h = 0; h < f.config.n_look_ahead; ++h) {
        f.model.coefficients.emplace_back(b.values.begin() + static_cast<std::ptrdiff_t>(h * width),
                                          b.values.begin() + static_cast<std::ptrdiff_t>((h + 1) * width));
    }
    return f;
}

inline ModelFile to_model_file(const ArForecaster& f) {
    ModelFile file;
    file.kind = "autoregressive";
    file.config = {{"order", f.model.order}, {"n_lag", f.model.order}, {"n_look_ahead", f.n_look_ahead}, {"observed_inputs", nlohmann::json::array()}};
    file.add("ar.intercept", {1}, {f.model.intercept});
    file.add("ar.phi", {f.model.order}, f.model.phi);
    file.add("ar.residual_std", {1}, {f.model.residual_std});
    return file;
}

inline ArForecaster ar_from_model_file(const ModelFile& file) {
    if (file.kind != "autoregressive") {
        throw FormatError("model file holds a '" + file.kind + "' model, not autoregressive");
    }
    ArForecaster f;
    try {
        f.model.order = file.config.at("order").get<std::size_t>();
        f.n_look_ahead = file.config.at("n_look_ahead").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed AR config: ") + e.what());
    }
    const ParameterBlock& phi = file.block("ar.phi");
    if (phi.values.size() != f.model.order) {
        throw FormatError("ar.phi length disagrees with the AR order");
    }
    f.model.phi = phi.values;
    f.model.intercept = file.block("ar.intercept").values.at(0);
    f.model.residual_std = file.block("ar.residual_std").values.at(0);
    return f;
}

} // namespace flightcast
