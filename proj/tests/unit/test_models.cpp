#include "flightcast/datagen.hpp"
#include "flightcast/models.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

using namespace flightcast;
using Catch::Approx;

namespace {

std::vector<QuarterHourRecord> seasonal_records(std::size_t days, bool with_swim, std::uint64_t seed = 5) {
    SyntheticConfig cfg;
    using namespace std::chrono;
    cfg.first_day = 2019y / March / 4;
    cfg.last_day = Date{sys_days{cfg.first_day} + std::chrono::days(days - 1)};
    cfg.base_rate = 6.0;
    for (std::size_t h = 0; h < 24; ++h) cfg.hour_profile[h] = 1.0 + 0.8 * std::sin(static_cast<double>(h) / 24.0 * 2.0 * M_PI);
    cfg.noise = NoiseMode::poisson;
    cfg.include_swim = with_swim;
    cfg.seed = seed;
    return generate(cfg);
}

ModelConfig tiny_config(bool attention, bool swim) {
    ModelConfig c;
    c.n_lag = 3;
    c.n_look_ahead = 2;
    c.hidden_dim = 4;
    c.embedding = {2, 1, 2, 2};
    c.use_attention = attention;
    c.use_swim = swim;
    return c;
}

void set_all(Seq2SeqModel& m, double value) {
    for (auto& t : m.parameters()) {
        for (double& v : t.mutable_data()) v = value;
    }
}

} // namespace

TEST_CASE("model config validation and JSON round trip", "[models]") {
    ModelConfig c;
    CHECK(c.embedding.total() == 8 + 2 + 4 + 6);
    CHECK(c.decoder_input_dim() == 21);
    c.n_lag = 0;
    CHECK_THROWS_AS(c.validate(), ContractError);

    ModelConfig d = tiny_config(true, true);
    d.attention_kind = AttentionKind::dot;
    const nlohmann::json j = d;
    CHECK(j.at("observed_inputs") == nlohmann::json::array({"swim"}));
    CHECK(j.get<ModelConfig>() == d);

    TrainingConfig t;
    t.teacher_forcing_ratio = 1.5;
    CHECK_THROWS_AS(t.validate(), ContractError);
}

TEST_CASE("create requires SWIM statistics when SWIM is an input", "[models]") {
    const auto records = seasonal_records(2, false);
    CHECK_THROWS_AS(Seq2SeqModel::create(tiny_config(false, true), fit_scaler(records), 1), ContractError);
}

TEST_CASE("encoder shape, zero case and unrolled-loop oracle", "[models]") {
    const auto records = seasonal_records(2, true);
    Seq2SeqModel m = Seq2SeqModel::create(tiny_config(true, true), fit_scaler(records), 3);
    const std::vector<std::vector<double>> past{{0.1, -0.3}, {0.7, 0.2}, {-1.2, 0.4}};

    const EncoderOutput out = encode(m, past);
    CHECK(out.states.shape() == Shape{3, 4});

    LstmState s = LstmState::zeros(4);
    for (std::size_t k = 0; k < past.size(); ++k) {
        s = lstm_cell_step(m.encoder, Tensor({2}, past[k]), s);
        for (std::size_t j = 0; j < 4; ++j) CHECK(out.states.at(k, j) == s.h[j]);
    }
    CHECK(out.final_state.c.values() == s.c.values());
    CHECK_THROWS_AS(encode(m, {{0.0, 0.0}}), ContractError);

    set_all(m, 0.0);
    const EncoderOutput zeroed = encode(m, past);
    for (double v : zeroed.states.data()) CHECK(v == 0.0);
}

TEST_CASE("plain and attention models share encoder behaviour", "[models]") {
    const auto records = seasonal_records(2, false);
    ModelConfig with = tiny_config(true, false);
    with.n_lag = 1;
    ModelConfig without = with;
    without.use_attention = false;
    const Scaler scaler = fit_scaler(records);
    Seq2SeqModel a = Seq2SeqModel::create(with, scaler, 8);
    Seq2SeqModel b = Seq2SeqModel::create(without, scaler, 99);
    b.encoder = a.encoder;
    const std::vector<std::vector<double>> past{{0.25}};
    CHECK(encode(a, past).states.values() == encode(b, past).states.values());
    CHECK(a.kind() == "seq2seq_attention");
    CHECK(b.kind() == "seq2seq");
    CHECK(!b.attention.has_value());
}

TEST_CASE("forecast shape, zero network and determinism", "[models]") {
    const auto records = seasonal_records(3, true);
    const Scaler scaler = fit_scaler(records);
    const auto windows = make_windows(records, 3, 2, {true});
    Seq2SeqModel m = Seq2SeqModel::create(tiny_config(true, true), scaler, 4);

    const auto f = forecast(m, windows[10]);
    CHECK(f.size() == 2);
    CHECK(forecast(m, windows[10]) == f);
    for (double v : f) CHECK((v >= 0.0 && std::isfinite(v)));

    set_all(m, 0.0);
    for (double v : forecast(m, windows[20])) CHECK(v == Approx(scaler.demand.mean).epsilon(1e-15));

    SupervisedWindow broken = windows[0];
    broken.future_f.pop_back();
    CHECK_THROWS_AS(forecast(m, broken), ContractError);
}

TEST_CASE("batched forecasting equals one-window forecasting", "[models]") {
    const auto records = seasonal_records(3, true);
    const auto windows = make_windows(records, 3, 2, {true});
    const Seq2SeqModel m = Seq2SeqModel::create(tiny_config(true, true), fit_scaler(records), 21);
    const std::span<const SupervisedWindow> some(windows.data(), 40);
    const auto batched = forecast_batch(m, some, 16);
    for (std::size_t i = 0; i < some.size(); ++i) {
        const auto single = forecast(m, some[i]);
        for (std::size_t h = 0; h < 2; ++h) CHECK(batched[i][h] == Approx(single[h]).epsilon(1e-13));
    }
}

TEST_CASE("forecasts are non-negative and finite for extreme inputs", "[models]") {
    const auto records = seasonal_records(2, true);
    auto windows = make_windows(records, 3, 2, {true});
    const Seq2SeqModel m = Seq2SeqModel::create(tiny_config(true, true), fit_scaler(records), 2);
    Pcg32 rng(1, 1);
    for (int trial = 0; trial < 50; ++trial) {
        SupervisedWindow w = windows[static_cast<std::size_t>(trial)];
        for (double& y : w.past_y) y = rng.uniform(0.0, 1e4);
        for (auto& x : w.past_x) x[0] = rng.uniform(0.0, 1e4);
        for (double v : forecast(m, w)) CHECK((v >= 0.0 && std::isfinite(v)));
    }
}

TEST_CASE("end-to-end loss passes grad_check", "[models]") {
    const auto records = seasonal_records(2, true);
    const auto windows = make_windows(records, 3, 2, {true});
    Pcg32 pick(6, 6);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const bool attention = trial % 2 == 0;
        const Seq2SeqModel m = Seq2SeqModel::create(tiny_config(attention, true), fit_scaler(records), static_cast<std::uint64_t>(trial));
        std::vector<const SupervisedWindow*> batch;
        for (int b = 0; b < 3; ++b) batch.push_back(&windows[pick.below(static_cast<std::uint32_t>(windows.size()))]);
        const auto inputs = detail::make_batch_inputs(m, batch, true);
        std::vector<Tensor> params = m.parameters();
        const TeacherForcing forcing = [trial](std::size_t) { return trial % 4 < 2; };
        worst = std::max(worst, grad_check([&] { return mse_loss(decode_batch(m, inputs, forcing), inputs.targets); }, params, 1e-5));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("training contracts", "[models]") {
    const auto records = seasonal_records(3, false);
    const auto windows = make_windows(records, 3, 2);
    const Scaler scaler = fit_scaler(records);
    TrainingConfig cfg;
    cfg.epochs = 3;

    SECTION("learning rate 0 leaves parameters untouched") {
        Seq2SeqModel m = Seq2SeqModel::create(tiny_config(false, false), scaler, 1);
        const Seq2SeqModel before = m.clone();
        cfg.learning_rate = 0.0;
        cfg.teacher_forcing_ratio = 1.0;
        const auto history = train(m, windows, cfg);
        CHECK(history.size() == 3);
        const auto pa = m.parameters(), pb = before.parameters();
        for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].values() == pb[i].values());
        CHECK(history[1] == Approx(history[0]).epsilon(1e-12));
        CHECK(history[2] == Approx(history[0]).epsilon(1e-12));
    }
    SECTION("same seed, same history") {
        Seq2SeqModel a = Seq2SeqModel::create(tiny_config(true, false), scaler, 1);
        Seq2SeqModel b = Seq2SeqModel::create(tiny_config(true, false), scaler, 1);
        CHECK(train(a, windows, cfg) == train(b, windows, cfg));
        CHECK(forecast(a, windows[5]) == forecast(b, windows[5]));
    }
    SECTION("empty set and non-finite loss") {
        Seq2SeqModel m = Seq2SeqModel::create(tiny_config(false, false), scaler, 1);
        CHECK_THROWS_AS(train(m, {}, cfg), ContractError);
        auto poisoned = windows;
        poisoned[0].targets[0] = std::nan("");
        cfg.batch_size = poisoned.size();
        cfg.teacher_forcing_ratio = 0.0;
        try {
            train(m, poisoned, cfg);
            FAIL("expected divergence");
        } catch (const DivergenceError& e) {
            CHECK(e.epoch() == 1);
        }
    }
    SECTION("constant targets: loss falls within 5 epochs") {
        auto flat = windows;
        for (auto& w : flat) {
            for (double& y : w.targets) y = 9.0;
        }
        Seq2SeqModel m = Seq2SeqModel::create(tiny_config(false, false), scaler, 2);
        cfg.epochs = 5;
        cfg.learning_rate = 1e-2;
        const auto history = train(m, flat, cfg);
        CHECK(history.back() < history.front());
    }
}

TEST_CASE("noiseless seasonal series: loss halves by epoch 20 with default hyperparameters", "[models]") {
    SyntheticConfig cfg;
    using namespace std::chrono;
    cfg.first_day = 2019y / April / 1;
    cfg.last_day = 2019y / April / 14;
    cfg.base_rate = 6.0;
    for (std::size_t h = 0; h < 24; ++h) cfg.hour_profile[h] = 1.0 + 0.8 * std::sin(static_cast<double>(h) / 24.0 * 2.0 * M_PI);
    cfg.noise = NoiseMode::deterministic;
    cfg.include_swim = false;
    const auto records = generate(cfg);
    ModelConfig mc;
    mc.use_attention = false;
    Seq2SeqModel m = Seq2SeqModel::create(mc, fit_scaler(records), 42);
    TrainingConfig tc;
    tc.epochs = 20;
    const auto history = train(m, make_windows(records, mc.n_lag, mc.n_look_ahead), tc);
    INFO("epoch 1 loss " << history.front() << ", epoch 20 loss " << history.back());
    CHECK(history.back() <= 0.5 * history.front());
}

TEST_CASE("model files round trip bit-exactly and reject damage", "[models]") {
    const auto records = seasonal_records(3, true);
    const auto windows = make_windows(records, 3, 2, {true});
    Seq2SeqModel m = Seq2SeqModel::create(tiny_config(true, true), fit_scaler(records), 77);
    TrainingConfig tc;
    tc.epochs = 1;
    train(m, windows, tc);

    const auto path = std::filesystem::temp_directory_path() / "flightcast_models_roundtrip.model";
    save_model(m, path);
    const Seq2SeqModel loaded = load_model(path);
    CHECK(loaded.config == m.config);
    CHECK(loaded.scaler.demand.mean == m.scaler.demand.mean);
    for (const auto& w : windows) CHECK(forecast(loaded, w) == forecast(m, w));

    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    CHECK_THROWS_AS(decode_model_file(text.substr(0, text.size() / 2)), ChecksumError);

    auto doc = nlohmann::json::parse(text.substr(0, text.find('\n')));
    doc["format_version"] = 0;
    CHECK_THROWS_AS(decode_model_file(seal_model_text(doc.dump())), VersionError);
    std::filesystem::remove(path);
}
