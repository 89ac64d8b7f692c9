#include "flightcast/datagen.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace flightcast;
using namespace std::chrono;

namespace {

SyntheticConfig flat(double rate, NoiseMode noise) {
    SyntheticConfig cfg;
    cfg.first_day = 2019y / March / 1;
    cfg.last_day = 2019y / March / 7;
    cfg.base_rate = rate;
    cfg.noise = noise;
    cfg.include_swim = false;
    return cfg;
}

double correlation(const std::vector<double>& x, const std::vector<double>& y, int lag) {
    // corr(x_t, y_{t+lag}) over the overlapping range.
    const std::size_t n = x.size();
    const std::size_t shift = static_cast<std::size_t>(std::abs(lag));
    std::vector<double> a, b;
    for (std::size_t t = 0; t + shift < n; ++t) {
        a.push_back(lag >= 0 ? x[t] : x[t + shift]);
        b.push_back(lag >= 0 ? y[t + shift] : y[t]);
    }
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(b.size());
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

} // namespace

TEST_CASE("flat deterministic profile gives a constant series", "[datagen]") {
    const auto recs = generate(flat(3.0, NoiseMode::deterministic));
    CHECK(recs.size() == 7 * 96);
    for (const auto& r : recs) {
        CHECK(r.dep_demand == 3.0);
        CHECK(!r.swim_observed_departures);
    }
    CHECK(format_timestamp(recs.front().slice_start) == "2019-03-01T00:00:00Z");
    CHECK(format_timestamp(recs.back().slice_start) == "2019-03-07T23:45:00Z");
}

TEST_CASE("deterministic rounding is half-to-even", "[datagen]") {
    CHECK(generate(flat(2.5, NoiseMode::deterministic)).front().dep_demand == 2.0);
    CHECK(generate(flat(3.5, NoiseMode::deterministic)).front().dep_demand == 4.0);
}

TEST_CASE("same seed, same output; different seed, different output", "[datagen]") {
    SyntheticConfig cfg = flat(4.0, NoiseMode::poisson);
    cfg.include_swim = true;
    cfg.random_surges = RandomSurges{0.5, 4, 12, 3.0, 9.0, 6, 20};
    CHECK(generate(cfg) == generate(cfg));
    SyntheticConfig other = cfg;
    other.seed = 2;
    CHECK(generate(cfg) != generate(other));
}

TEST_CASE("a fixed surge adds exactly its rate in deterministic mode", "[datagen]") {
    SyntheticConfig cfg = flat(3.0, NoiseMode::deterministic);
    cfg.surges.push_back({2019y / March / 3, 9, 8, 10.0});
    const auto recs = generate(cfg);
    const Timestamp start = Timestamp{sys_days{2019y / March / 3}} + hours(9);
    int surged = 0;
    for (const auto& r : recs) {
        const bool inside = r.slice_start >= start && r.slice_start < start + 8 * kSlice;
        CHECK(r.dep_demand == (inside ? 13.0 : 3.0));
        surged += inside ? 1 : 0;
    }
    CHECK(surged == 8);
}

TEST_CASE("seasonal profiles scale the rate", "[datagen]") {
    SyntheticConfig cfg = flat(2.0, NoiseMode::deterministic);
    cfg.hour_profile[7] = 3.0;
    cfg.dow_profile[4] = 2.0; // Friday
    for (const auto& r : generate(cfg)) {
        const double expected = std::nearbyint(2.0 * (r.calendar.hour == 7 ? 3.0 : 1.0) * (r.calendar.day_of_week == 5 ? 2.0 : 1.0));
        CHECK(r.dep_demand == expected);
    }
}

TEST_CASE("generated counts are non-negative integers", "[datagen]") {
    SyntheticConfig cfg = flat(1.5, NoiseMode::poisson);
    cfg.include_swim = true;
    cfg.swim_noise_std = 3.0;
    cfg.random_surges = RandomSurges{0.7, 4, 16, 2.0, 12.0, 0, 23};
    for (const auto& r : generate(cfg)) {
        CHECK(r.dep_demand >= 0.0);
        CHECK(r.dep_demand == std::floor(r.dep_demand));
        REQUIRE(r.swim_observed_departures);
        CHECK(*r.swim_observed_departures >= 0.0);
        CHECK(*r.swim_observed_departures == std::floor(*r.swim_observed_departures));
    }
}

TEST_CASE("Poisson sample mean matches the rate", "[datagen]") {
    SyntheticConfig cfg = flat(3.0, NoiseMode::poisson);
    cfg.first_day = 2019y / January / 1;
    cfg.last_day = 2021y / December / 31;
    const auto recs = generate(cfg);
    REQUIRE(recs.size() >= 100000);
    double total = 0.0;
    for (const auto& r : recs) total += r.dep_demand;
    const double n = static_cast<double>(recs.size());
    CHECK(std::fabs(total / n - 3.0) <= 3.0 * std::sqrt(3.0 / n));
}

TEST_CASE("SWIM channel leads demand by the configured lag", "[datagen]") {
    SyntheticConfig cfg = flat(0.5, NoiseMode::poisson);
    cfg.first_day = 2019y / January / 1;
    cfg.last_day = 2019y / March / 31;
    cfg.include_swim = true;
    cfg.random_surges = RandomSurges{1.0, 8, 16, 10.0, 20.0, 0, 20};
    const auto recs = generate(cfg);
    std::vector<double> swim, demand;
    for (const auto& r : recs) {
        swim.push_back(*r.swim_observed_departures);
        demand.push_back(r.dep_demand);
    }
    int best = -99;
    double best_corr = -2.0;
    for (int lag = -8; lag <= 8; ++lag) {
        const double c = correlation(swim, demand, lag);
        if (c > best_corr) {
            best_corr = c;
            best = lag;
        }
    }
    CHECK(best == 4);
}

TEST_CASE("sub-range generation matches the full run slice for slice", "[datagen]") {
    SyntheticConfig full = flat(4.0, NoiseMode::poisson);
    full.include_swim = true;
    full.random_surges = RandomSurges{0.9, 4, 16, 3.0, 10.0, 0, 23};
    full.surges.push_back({2019y / March / 4, 23, 12, 5.0});
    SyntheticConfig part = full;
    part.first_day = 2019y / March / 5;
    part.last_day = 2019y / March / 6;
    const auto all = generate(full);
    const auto some = generate(part);
    const auto offset = static_cast<std::size_t>((Timestamp{sys_days{part.first_day}} - all.front().slice_start) / kSlice);
    REQUIRE(some.size() == 2 * 96);
    for (std::size_t i = 0; i < some.size(); ++i) CHECK(some[i] == all[offset + i]);
}

TEST_CASE("invalid configs are rejected", "[datagen]") {
    SyntheticConfig cfg = flat(3.0, NoiseMode::deterministic);
    cfg.last_day = 2019y / February / 1;
    CHECK_THROWS_AS(generate(cfg), ContractError);
    cfg = flat(-1.0, NoiseMode::deterministic);
    CHECK_THROWS_AS(generate(cfg), ContractError);
    cfg = flat(1.0, NoiseMode::deterministic);
    cfg.hour_profile[3] = 0.0;
    CHECK_THROWS_AS(generate(cfg), ContractError);
    cfg = flat(1.0, NoiseMode::deterministic);
    cfg.surges.push_back({2019y / March / 2, 5, 0, 1.0});
    CHECK_THROWS_AS(generate(cfg), ContractError);
}

TEST_CASE("generator config from JSON", "[datagen]") {
    const auto j = nlohmann::json::parse(R"({
        "first_day": "2019-05-01", "last_day": "2019-05-02", "base_rate": 2.0,
        "surges": [{"date": "2019-05-01", "start_hour": 8, "duration_quarters": 4, "added_rate": 6.0}],
        "random_surges": {"daily_probability": 0.25},
        "noise": "deterministic", "include_swim": false, "seed": 9
    })");
    const auto cfg = synthetic_config_from_json(j);
    CHECK(cfg.first_day == 2019y / May / 1);
    CHECK(cfg.base_rate == 2.0);
    CHECK(cfg.surges.size() == 1);
    CHECK(cfg.random_surges->daily_probability == 0.25);
    CHECK(cfg.noise == NoiseMode::deterministic);
    CHECK(!cfg.include_swim);
    CHECK(cfg.seed == 9);

    CHECK_THROWS_AS(synthetic_config_from_json(nlohmann::json::parse(R"({"noise": "gaussian"})")), ConfigError);
    CHECK_THROWS_AS(synthetic_config_from_json(nlohmann::json::parse(R"({"first_day": "May 1"})")), ConfigError);
    CHECK_THROWS_AS(synthetic_config_from_json(nlohmann::json::parse(R"({"hour_profile": [1, 2]})")), ConfigError);
    CHECK_THROWS_AS(synthetic_config_from_json(nlohmann::json::parse(R"({"base_rate": -3})")), ContractError);
}
