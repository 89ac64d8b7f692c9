#pragma once

// Reference computations used by the tests. They deliberately avoid the
// library's own code paths: plain loops, the C time functions, and Gaussian
// elimination on the normal equations.

#include "flightcast/pipeline.hpp"

#include <cmath>
#include <cstddef>
#include <ctime>
#include <stdexcept>
#include <utility>
#include <vector>

namespace oracle {

/// Solves A x = b (n x n, row-major) by Gaussian elimination with partial pivoting.
inline std::vector<double> gauss_solve(std::vector<double> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::fabs(a[r * n + col]) > std::fabs(a[pivot * n + col])) pivot = r;
        }
        if (a[pivot * n + col] == 0.0) throw std::runtime_error("singular system");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
            std::swap(b[col], b[pivot]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / a[col * n + col];
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * x[c];
        x[i] = s / a[i * n + i];
    }
    return x;
}

/// (X^T X)^{-1} X^T y for a row-major X with `cols` columns.
inline std::vector<double> normal_equations(const std::vector<double>& x, std::size_t cols, const std::vector<double>& y) {
    const std::size_t rows = y.size();
    std::vector<double> xtx(cols * cols, 0.0), xty(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < cols; ++i) {
            xty[i] += x[r * cols + i] * y[r];
            for (std::size_t j = 0; j < cols; ++j) xtx[i * cols + j] += x[r * cols + i] * x[r * cols + j];
        }
    }
    return gauss_solve(std::move(xtx), std::move(xty));
}

struct CivilFields {
    int hour, qtr, day_of_week, month, year, day;
};

/// Calendar fields through gmtime_r; day_of_week mapped to 1 = Monday.
inline CivilFields civil(std::time_t t) {
    std::tm tm{};
    gmtime_r(&t, &tm);
    return {tm.tm_hour, tm.tm_min / 15 + 1, tm.tm_wday == 0 ? 7 : tm.tm_wday, tm.tm_mon + 1, tm.tm_year + 1900, tm.tm_mday};
}

inline std::time_t utc_time(int year, int month, int day, int hour = 0, int minute = 0) {
    std::tm tm{};
    tm.tm_year = year - 1900;
    tm.tm_mon = month - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = minute;
    return timegm(&tm);
}

/// Window enumeration straight from index arithmetic over parallel arrays.
struct BruteWindow {
    std::size_t origin_index;
    std::vector<double> past;
    std::vector<double> past_swim;
    std::vector<double> targets;
    std::vector<long long> target_times;
};

inline std::vector<BruteWindow> enumerate_windows(const std::vector<double>& demand, const std::vector<double>& swim,
                                                  const std::vector<long long>& times, std::size_t p, std::size_t tau) {
    std::vector<BruteWindow> out;
    const std::size_t n = demand.size();
    for (std::size_t t = 0; t < n; ++t) {
        if (t < p || t + tau > n) continue;
        BruteWindow w{t, {}, {}, {}, {}};
        for (std::size_t k = 0; k < p; ++k) {
            w.past.push_back(demand[t - p + k]);
            w.past_swim.push_back(swim[t - p + k]);
        }
        for (std::size_t k = 0; k < tau; ++k) {
            w.targets.push_back(demand[t + k]);
            w.target_times.push_back(times[t + k]);
        }
        out.push_back(std::move(w));
    }
    return out;
}

/// AR mean recursion written out term by term; returns unclamped values.
inline std::vector<double> ar_recursion(double c, const std::vector<double>& phi, std::vector<double> history, std::size_t steps) {
    std::vector<double> out;
    for (std::size_t s = 0; s < steps; ++s) {
        double y = c;
        const std::size_t n = history.size();
        for (std::size_t k = 0; k < phi.size(); ++k) {
            y += phi[k] * history[n - 1 - k];
        }
        history.push_back(y);
        out.push_back(y);
    }
    return out;
}

inline flightcast::Timestamp to_timestamp(std::time_t t) { return flightcast::Timestamp{std::chrono::seconds{t}}; }

} // namespace oracle
