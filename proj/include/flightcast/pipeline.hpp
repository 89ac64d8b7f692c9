#pragma once

// Feature processing: parse -> clean/gap-fill -> calendar -> scale -> window.

#include "flightcast/error.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace flightcast {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;

inline constexpr std::chrono::seconds kSlice{15 * 60};
inline constexpr std::size_t kSlicesPerHour = 4;
inline constexpr std::size_t kSlicesPerDay = 96;

// ---------------------------------------------------------------------------
// Time helpers

inline bool on_slice_boundary(Timestamp ts) { return ts.time_since_epoch().count() % kSlice.count() == 0; }

/// `YYYY-MM-DDTHH:MM:SSZ`.
inline std::string format_timestamp(Timestamp ts) {
    const auto day = std::chrono::floor<std::chrono::days>(ts);
    const Date ymd{day};
    const std::chrono::hh_mm_ss hms{ts - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(hms.hours().count()),
                  static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
    return buf;
}

inline std::string format_date(Date d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

namespace detail {

inline bool parse_digits(std::string_view text, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > text.size()) {
        return false;
    }
    const char* first = text.data() + pos;
    const auto [ptr, ec] = std::from_chars(first, first + len, out);
    return ec == std::errc{} && ptr == first + len;
}

} // namespace detail

inline std::optional<Date> parse_date(std::string_view text) {
    int y = 0, m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !detail::parse_digits(text, 0, 4, y) ||
        !detail::parse_digits(text, 5, 2, m) || !detail::parse_digits(text, 8, 2, d)) {
        return std::nullopt;
    }
    const Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)}, std::chrono::day{static_cast<unsigned>(d)}};
    if (!date.ok()) {
        return std::nullopt;
    }
    return date;
}

/// RFC-3339 UTC with a literal `Z`: `YYYY-MM-DDTHH:MM:SSZ`.
inline std::optional<Timestamp> parse_timestamp(std::string_view text) {
    if (text.size() != 20 || text[10] != 'T' || text[13] != ':' || text[16] != ':' || text[19] != 'Z') {
        return std::nullopt;
    }
    const auto date = parse_date(text.substr(0, 10));
    int hh = 0, mm = 0, ss = 0;
    if (!date || !detail::parse_digits(text, 11, 2, hh) || !detail::parse_digits(text, 14, 2, mm) ||
        !detail::parse_digits(text, 17, 2, ss) || hh > 23 || mm > 59 || ss > 59) {
        return std::nullopt;
    }
    return std::chrono::sys_days{*date} + std::chrono::hours{hh} + std::chrono::minutes{mm} + std::chrono::seconds{ss};
}

inline Date date_of(Timestamp ts) { return Date{std::chrono::floor<std::chrono::days>(ts)}; }

// ---------------------------------------------------------------------------
// Records

/// Future-known inputs of one slice. qtr, day_of_week and month are 1-based;
/// day_of_week uses 1 = Monday .. 7 = Sunday.
struct Calendar {
    int hour = 0;
    int qtr = 1;
    int day_of_week = 1;
    int month = 1;

    friend bool operator==(const Calendar&, const Calendar&) = default;
};

inline Calendar derive_calendar(Timestamp ts) {
    if (!on_slice_boundary(ts)) {
        throw ContractError("timestamp " + format_timestamp(ts) + " is not on a 15-minute boundary");
    }
    const auto day = std::chrono::floor<std::chrono::days>(ts);
    const std::chrono::hh_mm_ss hms{ts - day};
    const Date ymd{day};
    Calendar cal;
    cal.hour = static_cast<int>(hms.hours().count());
    cal.qtr = static_cast<int>(hms.minutes().count()) / 15 + 1;
    cal.day_of_week = static_cast<int>(std::chrono::weekday{day}.iso_encoding());
    cal.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
    return cal;
}

struct QuarterHourRecord {
    Timestamp slice_start;
    Calendar calendar;
    double dep_demand = 0.0;
    std::optional<double> swim_observed_departures;

    friend bool operator==(const QuarterHourRecord&, const QuarterHourRecord&) = default;
};

inline constexpr std::string_view kCsvHeader = "slice_start_utc,hour,qtr,day_of_week,month,dep_demand,swim_observed_departures";

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

inline std::optional<double> parse_number(std::string_view text) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

inline std::string_view trim_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    return line;
}

} // namespace detail

/// Parses the quarter-hour CSV. Calendar cells may be empty (derived) or filled
/// (validated). Output is sorted by timestamp; duplicate timestamps are rejected.
inline std::vector<QuarterHourRecord> parse_records(std::istream& in) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) {
        throw ParseError(1, "missing header row");
    }
    if (detail::trim_cr(line) != kCsvHeader) {
        throw ParseError(1, "header must be '" + std::string(kCsvHeader) + "'");
    }
    std::vector<QuarterHourRecord> records;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view row = detail::trim_cr(line);
        if (row.empty()) {
            continue;
        }
        const auto fields = detail::split_fields(row);
        if (fields.size() != 7) {
            throw ParseError(line_no, "expected 7 fields, got " + std::to_string(fields.size()));
        }
        QuarterHourRecord rec;
        const auto ts = parse_timestamp(fields[0]);
        if (!ts) {
            throw ParseError(line_no, "bad timestamp '" + std::string(fields[0]) + "'");
        }
        if (!on_slice_boundary(*ts)) {
            throw ParseError(line_no, "timestamp " + std::string(fields[0]) + " is not on a 15-minute boundary");
        }
        rec.slice_start = *ts;
        rec.calendar = derive_calendar(*ts);
        const int derived[] = {rec.calendar.hour, rec.calendar.qtr, rec.calendar.day_of_week, rec.calendar.month};
        static constexpr const char* names[] = {"hour", "qtr", "day_of_week", "month"};
        for (std::size_t k = 0; k < 4; ++k) {
            const std::string_view cell = fields[1 + k];
            if (cell.empty()) {
                continue;
            }
            const auto v = detail::parse_number(cell);
            if (!v || *v != static_cast<double>(derived[k])) {
                throw ParseError(line_no, std::string(names[k]) + " '" + std::string(cell) + "' disagrees with " +
                                              std::string(fields[0]) + " (expected " + std::to_string(derived[k]) + ")");
            }
        }
        const auto demand = detail::parse_number(fields[5]);
        if (!demand) {
            throw ParseError(line_no, "bad dep_demand '" + std::string(fields[5]) + "'");
        }
        rec.dep_demand = *demand;
        if (!fields[6].empty()) {
            const auto swim = detail::parse_number(fields[6]);
            if (!swim || *swim < 0.0) {
                throw ParseError(line_no, "bad swim_observed_departures '" + std::string(fields[6]) + "'");
            }
            rec.swim_observed_departures = *swim;
        }
        records.push_back(rec);
    }
    std::stable_sort(records.begin(), records.end(),
                     [](const QuarterHourRecord& a, const QuarterHourRecord& b) { return a.slice_start < b.slice_start; });
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].slice_start == records[i - 1].slice_start) {
            throw DataError("duplicate slice_start_utc " + format_timestamp(records[i].slice_start));
        }
    }
    return records;
}

inline std::vector<QuarterHourRecord> parse_records(const std::string& text) {
    std::istringstream in(text);
    return parse_records(in);
}

namespace detail {

inline void write_count(std::ostream& out, double v) {
    if (v == std::floor(v) && std::fabs(v) < 1e15) {
        out << static_cast<long long>(v);
    } else {
        char buf[32];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        out.write(buf, ptr - buf);
    }
}

} // namespace detail

inline void write_records(std::ostream& out, const std::vector<QuarterHourRecord>& records) {
    out << kCsvHeader << '\n';
    for (const auto& r : records) {
        out << format_timestamp(r.slice_start) << ',' << r.calendar.hour << ',' << r.calendar.qtr << ',' << r.calendar.day_of_week
            << ',' << r.calendar.month << ',';
        detail::write_count(out, r.dep_demand);
        out << ',';
        if (r.swim_observed_departures) {
            detail::write_count(out, *r.swim_observed_departures);
        }
        out << '\n';
    }
}

/// Rejects negative demand and fills missing slices with zero demand and no SWIM value.
inline std::vector<QuarterHourRecord> clean_series(const std::vector<QuarterHourRecord>& records) {
    std::vector<QuarterHourRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (!(r.dep_demand >= 0.0) || !std::isfinite(r.dep_demand)) {
            throw DataError("negative or non-finite dep_demand at " + format_timestamp(r.slice_start));
        }
        if (!out.empty()) {
            if (r.slice_start <= out.back().slice_start) {
                throw ContractError("clean_series requires strictly increasing timestamps");
            }
            for (Timestamp t = out.back().slice_start + kSlice; t < r.slice_start; t += kSlice) {
                out.push_back({t, derive_calendar(t), 0.0, std::nullopt});
            }
        }
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scaling

/// z-score transform for one feature; population standard deviation.
struct FeatureScaler {
    double mean = 0.0;
    double stddev = 1.0;
    bool degenerate = false; // zero variance in the fit data; std forced to 1

    static FeatureScaler fit(std::span<const double> values) {
        if (values.empty()) {
            throw ContractError("cannot fit a scaler on no values");
        }
        double total = 0.0;
        for (double v : values) total += v;
        const double mu = total / static_cast<double>(values.size());
        double ss = 0.0;
        for (double v : values) ss += (v - mu) * (v - mu);
        const double sd = std::sqrt(ss / static_cast<double>(values.size()));
        if (sd > 0.0) {
            return {mu, sd, false};
        }
        return {mu, 1.0, true};
    }

    double apply(double v) const { return (v - mean) / stddev; }
    double inverse(double z) const { return z * stddev + mean; }

    friend bool operator==(const FeatureScaler&, const FeatureScaler&) = default;
};

/// Statistics of the model inputs, fit on the training split only.
struct Scaler {
    FeatureScaler demand;
    std::optional<FeatureScaler> swim; // present when the data carries a SWIM channel

    friend bool operator==(const Scaler&, const Scaler&) = default;
};

inline Scaler fit_scaler(const std::vector<QuarterHourRecord>& train) {
    if (train.empty()) {
        throw ContractError("fit_scaler: empty training records");
    }
    std::vector<double> demand;
    std::vector<double> swim;
    demand.reserve(train.size());
    for (const auto& r : train) {
        demand.push_back(r.dep_demand);
        if (r.swim_observed_departures) {
            swim.push_back(*r.swim_observed_departures);
        }
    }
    Scaler s{FeatureScaler::fit(demand), std::nullopt};
    if (!swim.empty()) {
        s.swim = FeatureScaler::fit(swim);
    }
    return s;
}

inline double apply_scaler(const FeatureScaler& s, double v) { return s.apply(v); }

// ---------------------------------------------------------------------------
// Windowing

struct FutureStep {
    Timestamp slice_start;
    Calendar calendar;
};

/// One forecast instance. The origin is the start of the first target slice:
/// past values cover [origin - p*T, origin), targets cover [origin, origin + tau_max*T).
struct SupervisedWindow {
    Timestamp origin;
    std::vector<double> past_y;              // p values, oldest first
    std::vector<std::vector<double>> past_x; // p observed-input vectors (empty vectors without SWIM)
    std::vector<FutureStep> future_f;        // tau_max future-known inputs
    std::vector<double> targets;             // tau_max values; empty when unknown (live forecast)
};

struct WindowOptions {
    bool with_swim = false; // fill past_x with the SWIM count (missing values read as 0)
};

/// Window whose first target is records[origin_index].
inline SupervisedWindow window_at(const std::vector<QuarterHourRecord>& records, std::size_t origin_index, std::size_t p,
                                  std::size_t tau_max, WindowOptions options = {}) {
    SupervisedWindow w;
    w.origin = records[origin_index].slice_start;
    w.past_y.reserve(p);
    w.past_x.reserve(p);
    for (std::size_t k = origin_index - p; k < origin_index; ++k) {
        w.past_y.push_back(records[k].dep_demand);
        if (options.with_swim) {
            w.past_x.push_back({records[k].swim_observed_departures.value_or(0.0)});
        } else {
            w.past_x.emplace_back();
        }
    }
    w.future_f.reserve(tau_max);
    w.targets.reserve(tau_max);
    for (std::size_t k = origin_index; k < origin_index + tau_max; ++k) {
        w.future_f.push_back({records[k].slice_start, records[k].calendar});
        w.targets.push_back(records[k].dep_demand);
    }
    return w;
}

/// Stride-1 windows over a gap-free series: length - p - tau_max + 1 of them.
inline std::vector<SupervisedWindow> make_windows(const std::vector<QuarterHourRecord>& records, std::size_t p, std::size_t tau_max,
                                                  WindowOptions options = {}) {
    if (p < 1 || tau_max < 1) {
        throw ContractError("make_windows: p and tau_max must be at least 1");
    }
    if (records.size() < p + tau_max) {
        throw ContractError("make_windows: series of length " + std::to_string(records.size()) + " is too short; need at least p + tau_max = " +
                            std::to_string(p + tau_max));
    }
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].slice_start - records[i - 1].slice_start != kSlice) {
            throw ContractError("make_windows: series has a gap or disorder at " + format_timestamp(records[i].slice_start));
        }
    }
    std::vector<SupervisedWindow> windows;
    windows.reserve(records.size() - p - tau_max + 1);
    for (std::size_t origin = p; origin + tau_max <= records.size(); ++origin) {
        windows.push_back(window_at(records, origin, p, tau_max, options));
    }
    return windows;
}

/// Window for a live forecast issued right after the last record.
inline SupervisedWindow latest_window(const std::vector<QuarterHourRecord>& records, std::size_t p, std::size_t tau_max,
                                      WindowOptions options = {}) {
    if (records.size() < p) {
        throw ContractError("latest_window: need at least " + std::to_string(p) + " records");
    }
    SupervisedWindow w;
    w.origin = records.back().slice_start + kSlice;
    for (std::size_t k = records.size() - p; k < records.size(); ++k) {
        w.past_y.push_back(records[k].dep_demand);
        w.past_x.push_back(options.with_swim ? std::vector<double>{records[k].swim_observed_departures.value_or(0.0)}
                                             : std::vector<double>{});
    }
    for (std::size_t k = 0; k < tau_max; ++k) {
        const Timestamp t = w.origin + k * kSlice;
        w.future_f.push_back({t, derive_calendar(t)});
    }
    return w;
}

// ---------------------------------------------------------------------------
// Train/test split

/// Inclusive calendar-date range.
struct DateRange {
    Date first;
    Date last;

    bool contains(Date d) const { return first <= d && d <= last; }
};

struct SplitSpec {
    DateRange train;
    DateRange test;

    void validate() const {
        if (!train.first.ok() || !train.last.ok() || !test.first.ok() || !test.last.ok()) {
            throw ContractError("split: invalid date");
        }
        if (train.last < train.first || test.last < test.first) {
            throw ContractError("split: range ends before it starts");
        }
        if (!(train.last < test.first)) {
            throw ContractError("split: train range " + format_date(train.first) + ".." + format_date(train.last) +
                                " must end before test range " + format_date(test.first) + ".." + format_date(test.last));
        }
    }

    /// 2019 for training, January 2020 for testing.
    static SplitSpec reference() {
        using namespace std::chrono;
        return {{2019y / January / 1, 2019y / December / 31}, {2020y / January / 1, 2020y / January / 31}};
    }
};

struct Split {
    std::vector<QuarterHourRecord> train;
    std::vector<QuarterHourRecord> test;
    std::vector<std::string> warnings;
};

inline Split split_train_test(const std::vector<QuarterHourRecord>& records, const SplitSpec& spec) {
    spec.validate();
    Split out;
    for (const auto& r : records) {
        const Date d = date_of(r.slice_start);
        if (spec.train.contains(d)) {
            out.train.push_back(r);
        } else if (spec.test.contains(d)) {
            out.test.push_back(r);
        }
    }
    if (out.train.empty()) {
        out.warnings.push_back("train range " + format_date(spec.train.first) + ".." + format_date(spec.train.last) + " holds no records");
    }
    if (out.test.empty()) {
        out.warnings.push_back("test range " + format_date(spec.test.first) + ".." + format_date(spec.test.last) + " holds no records");
    }
    return out;
}

/// Windows whose origins lie in the test range. History may reach back into
/// the trailing train records when the two partitions are contiguous.
inline std::vector<SupervisedWindow> make_test_windows(const Split& split, std::size_t p, std::size_t tau_max, WindowOptions options = {}) {
    if (split.test.empty()) {
        return {};
    }
    std::vector<QuarterHourRecord> joined;
    std::size_t first_origin = p;
    if (!split.train.empty() && split.test.front().slice_start - split.train.back().slice_start == kSlice) {
        const std::size_t borrow = std::min(p, split.train.size());
        joined.assign(split.train.end() - static_cast<std::ptrdiff_t>(borrow), split.train.end());
        first_origin = std::max(p, borrow);
    }
    const std::size_t test_start = joined.size();
    joined.insert(joined.end(), split.test.begin(), split.test.end());
    first_origin = std::max(first_origin, test_start);
    for (std::size_t i = 1; i < joined.size(); ++i) {
        if (joined[i].slice_start - joined[i - 1].slice_start != kSlice) {
            throw ContractError("make_test_windows: test series has a gap at " + format_timestamp(joined[i].slice_start));
        }
    }
    std::vector<SupervisedWindow> windows;
    for (std::size_t origin = first_origin; origin + tau_max <= joined.size(); ++origin) {
        windows.push_back(window_at(joined, origin, p, tau_max, options));
    }
    return windows;
}

} // namespace flightcast
