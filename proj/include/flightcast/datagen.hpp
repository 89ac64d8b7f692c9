#pragma once

// Synthetic quarter-hour departure demand with daily and weekly seasonality,
// surge events, and a SWIM-like observed channel that sees surges early.
//
// Randomness is counter based: every slice draws from its own PCG32 stream
// (stream id = slice number since the Unix epoch), so any sub-range generates
// exactly the values of the full run.

#include "flightcast/error.hpp"
#include "flightcast/pipeline.hpp"
#include "flightcast/random.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flightcast {

enum class NoiseMode { deterministic, poisson };

struct SurgeEvent {
    Date date;
    int start_hour = 12;
    int duration_quarters = 4;
    double added_rate = 0.0;
};

/// Optional daily surge lottery: each day independently gets at most one surge.
struct RandomSurges {
    double daily_probability = 0.0;
    int min_duration = 4;
    int max_duration = 12;
    double min_rate = 2.0;
    double max_rate = 8.0;
    int earliest_start_hour = 6;
    int latest_start_hour = 20;
};

struct SyntheticConfig {
    Date first_day;
    Date last_day;
    double base_rate = 5.0;
    std::array<double, 24> hour_profile{};
    std::array<double, 7> dow_profile{}; // Monday .. Sunday
    std::vector<SurgeEvent> surges;
    std::optional<RandomSurges> random_surges;
    NoiseMode noise = NoiseMode::poisson;
    bool include_swim = true;
    double swim_noise_std = 0.5;
    bool swim_lead = true;
    int swim_lead_quarters = 4;
    std::uint64_t seed = 1;

    SyntheticConfig() {
        using namespace std::chrono;
        first_day = 2019y / January / 1;
        last_day = 2020y / January / 31;
        hour_profile.fill(1.0);
        dow_profile.fill(1.0);
    }

    void validate() const {
        if (!first_day.ok() || !last_day.ok() || last_day < first_day) {
            throw ContractError("datagen: invalid date range " + format_date(first_day) + ".." + format_date(last_day));
        }
        if (!(base_rate >= 0.0)) {
            throw ContractError("datagen: base_rate must be non-negative");
        }
        for (double v : hour_profile) {
            if (!(v > 0.0)) throw ContractError("datagen: hour_profile entries must be positive");
        }
        for (double v : dow_profile) {
            if (!(v > 0.0)) throw ContractError("datagen: dow_profile entries must be positive");
        }
        for (const auto& s : surges) {
            if (!s.date.ok() || s.start_hour < 0 || s.start_hour > 23 || s.duration_quarters < 1 || !(s.added_rate >= 0.0)) {
                throw ContractError("datagen: invalid surge on " + format_date(s.date) + " (start hour 0-23, duration >= 1, rate >= 0)");
            }
        }
        if (random_surges) {
            const auto& r = *random_surges;
            if (!(r.daily_probability >= 0.0 && r.daily_probability <= 1.0) || r.min_duration < 1 || r.max_duration < r.min_duration ||
                !(r.min_rate >= 0.0) || r.max_rate < r.min_rate || r.earliest_start_hour < 0 || r.latest_start_hour > 23 ||
                r.latest_start_hour < r.earliest_start_hour) {
                throw ContractError("datagen: invalid random_surges settings");
            }
        }
        if (!(swim_noise_std >= 0.0) || swim_lead_quarters < 0) {
            throw ContractError("datagen: swim_noise_std and swim_lead_quarters must be non-negative");
        }
    }
};

namespace detail {

inline constexpr std::uint64_t kDemandPurpose = 0xd3;
inline constexpr std::uint64_t kSurgeCountPurpose = 0x5c;
inline constexpr std::uint64_t kSwimPurpose = 0x5e;
inline constexpr std::uint64_t kSurgeDayPurpose = 0xda;

inline std::int64_t slice_number(Timestamp ts) { return ts.time_since_epoch().count() / kSlice.count(); }

inline Pcg32 slice_rng(const SyntheticConfig& cfg, std::uint64_t purpose, std::int64_t slice) {
    return Pcg32(mix_seed(cfg.seed, purpose), static_cast<std::uint64_t>(slice));
}

inline Timestamp day_start(Date d) { return Timestamp{std::chrono::sys_days{d}}; }

inline bool covers(Timestamp start, int duration, Timestamp t) { return start <= t && t < start + duration * kSlice; }

/// Surge drawn for `day` by the random lottery, if any.
inline std::optional<SurgeEvent> random_surge_on(const SyntheticConfig& cfg, std::chrono::sys_days day) {
    const auto& r = *cfg.random_surges;
    Pcg32 rng(mix_seed(cfg.seed, kSurgeDayPurpose), static_cast<std::uint64_t>(day.time_since_epoch().count()));
    if (!rng.bernoulli(r.daily_probability)) {
        return std::nullopt;
    }
    SurgeEvent s;
    s.date = Date{day};
    s.start_hour = r.earliest_start_hour + static_cast<int>(rng.below(static_cast<std::uint32_t>(r.latest_start_hour - r.earliest_start_hour + 1)));
    s.duration_quarters = r.min_duration + static_cast<int>(rng.below(static_cast<std::uint32_t>(r.max_duration - r.min_duration + 1)));
    s.added_rate = rng.uniform(r.min_rate, r.max_rate);
    return s;
}

} // namespace detail

/// Added surge rate at slice t from the configured and lottery events.
inline double surge_rate(const SyntheticConfig& cfg, Timestamp t) {
    double rate = 0.0;
    for (const auto& s : cfg.surges) {
        if (detail::covers(detail::day_start(s.date) + std::chrono::hours(s.start_hour), s.duration_quarters, t)) {
            rate += s.added_rate;
        }
    }
    if (cfg.random_surges) {
        const auto today = std::chrono::floor<std::chrono::days>(t);
        const int reach_days = (23 * 4 + cfg.random_surges->max_duration) / 96 + 1;
        for (int back = reach_days; back >= 0; --back) {
            const auto day = today - std::chrono::days(back);
            if (const auto s = detail::random_surge_on(cfg, day)) {
                if (detail::covers(Timestamp{day} + std::chrono::hours(s->start_hour), s->duration_quarters, t)) {
                    rate += s->added_rate;
                }
            }
        }
    }
    return rate;
}

/// Seasonal rate without surges.
inline double base_rate_at(const SyntheticConfig& cfg, const Calendar& c) {
    return cfg.base_rate * cfg.hour_profile[static_cast<std::size_t>(c.hour)] * cfg.dow_profile[static_cast<std::size_t>(c.day_of_week - 1)];
}

namespace detail {

struct SliceCounts {
    double demand = 0.0;
    double surge = 0.0; // part of demand attributable to surges
};

inline SliceCounts slice_counts(const SyntheticConfig& cfg, Timestamp t) {
    const double base = base_rate_at(cfg, derive_calendar(t));
    const double extra = surge_rate(cfg, t);
    const std::int64_t n = slice_number(t);
    if (cfg.noise == NoiseMode::deterministic) {
        const double total = std::nearbyint(base + extra);
        return {total, total - std::nearbyint(base)};
    }
    Pcg32 base_rng = slice_rng(cfg, kDemandPurpose, n);
    Pcg32 surge_rng = slice_rng(cfg, kSurgeCountPurpose, n);
    const auto b = static_cast<double>(base_rng.poisson(base));
    const auto s = static_cast<double>(surge_rng.poisson(extra));
    return {b + s, s};
}

} // namespace detail

/// Demand is round(lambda) (deterministic) or a Poisson draw of the seasonal
/// part plus an independent Poisson draw of the surge part. The SWIM channel
/// is demand plus rounded Gaussian noise, floored at zero; with swim_lead each
/// slice's surge count is moved swim_lead_quarters earlier in that channel.
inline std::vector<QuarterHourRecord> generate(const SyntheticConfig& cfg) {
    cfg.validate();
    const Timestamp first = detail::day_start(cfg.first_day);
    const Timestamp end = detail::day_start(cfg.last_day) + std::chrono::days(1);
    std::vector<QuarterHourRecord> out;
    out.reserve(static_cast<std::size_t>((end - first) / kSlice));
    for (Timestamp t = first; t < end; t += kSlice) {
        const auto counts = detail::slice_counts(cfg, t);
        QuarterHourRecord r{t, derive_calendar(t), counts.demand, std::nullopt};
        if (cfg.include_swim) {
            double swim = counts.demand;
            if (cfg.swim_lead) {
                swim += detail::slice_counts(cfg, t + cfg.swim_lead_quarters * kSlice).surge - counts.surge;
            }
            if (cfg.swim_noise_std > 0.0) {
                Pcg32 rng = detail::slice_rng(cfg, detail::kSwimPurpose, detail::slice_number(t));
                swim += std::nearbyint(rng.normal(0.0, cfg.swim_noise_std));
            }
            r.swim_observed_departures = std::max(0.0, swim);
        }
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline Date date_field(const nlohmann::json& j, const char* key) {
    const auto text = j.at(key).get<std::string>();
    const auto d = parse_date(text);
    if (!d) {
        throw ConfigError(std::string("datagen config: '") + key + "' is not a YYYY-MM-DD date: " + text);
    }
    return *d;
}

template <std::size_t N>
std::array<double, N> profile_field(const nlohmann::json& j, const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != N) {
        throw ConfigError(std::string("datagen config: '") + key + "' needs " + std::to_string(N) + " entries, got " + std::to_string(v.size()));
    }
    std::array<double, N> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

} // namespace detail

/// Reads a generator config; absent keys keep their defaults.
inline SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
    SyntheticConfig cfg;
    try {
        if (j.contains("first_day")) cfg.first_day = detail::date_field(j, "first_day");
        if (j.contains("last_day")) cfg.last_day = detail::date_field(j, "last_day");
        cfg.base_rate = j.value("base_rate", cfg.base_rate);
        if (j.contains("hour_profile")) cfg.hour_profile = detail::profile_field<24>(j, "hour_profile");
        if (j.contains("dow_profile")) cfg.dow_profile = detail::profile_field<7>(j, "dow_profile");
        for (const auto& s : j.value("surges", nlohmann::json::array())) {
            cfg.surges.push_back({detail::date_field(s, "date"), s.at("start_hour").get<int>(), s.at("duration_quarters").get<int>(),
                                  s.at("added_rate").get<double>()});
        }
        if (j.contains("random_surges")) {
            const auto& r = j.at("random_surges");
            RandomSurges rs;
            rs.daily_probability = r.value("daily_probability", rs.daily_probability);
            rs.min_duration = r.value("min_duration", rs.min_duration);
            rs.max_duration = r.value("max_duration", rs.max_duration);
            rs.min_rate = r.value("min_rate", rs.min_rate);
            rs.max_rate = r.value("max_rate", rs.max_rate);
            rs.earliest_start_hour = r.value("earliest_start_hour", rs.earliest_start_hour);
            rs.latest_start_hour = r.value("latest_start_hour", rs.latest_start_hour);
            cfg.random_surges = rs;
        }
        const std::string noise = j.value("noise", std::string("poisson"));
        if (noise == "poisson") {
            cfg.noise = NoiseMode::poisson;
        } else if (noise == "deterministic") {
            cfg.noise = NoiseMode::deterministic;
        } else {
            throw ConfigError("datagen config: noise must be 'poisson' or 'deterministic', got '" + noise + "'");
        }
        cfg.include_swim = j.value("include_swim", cfg.include_swim);
        cfg.swim_noise_std = j.value("swim_noise_std", cfg.swim_noise_std);
        cfg.swim_lead = j.value("swim_lead", cfg.swim_lead);
        cfg.swim_lead_quarters = j.value("swim_lead_quarters", cfg.swim_lead_quarters);
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("datagen config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

} // namespace flightcast
