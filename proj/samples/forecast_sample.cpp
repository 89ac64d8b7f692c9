// Small end-to-end run of the library: generate a few weeks of synthetic
// demand, fit the two baselines and a small attention model, and print their
// quarter-hour scores on the last week.

#include "flightcast/flightcast.hpp"

#include <iostream>

namespace fc = flightcast;

int main() {
    using namespace std::chrono;

    fc::SyntheticConfig data;
    data.first_day = 2019y / September / 1;
    data.last_day = 2019y / September / 28;
    data.base_rate = 4.0;
    for (std::size_t h = 0; h < 24; ++h) data.hour_profile[h] = h < 6 ? 0.3 : 1.2;
    data.random_surges = fc::RandomSurges{0.6, 4, 12, 5.0, 12.0, 8, 18};
    const auto records = fc::generate(data);

    const fc::SplitSpec spec{{2019y / September / 1, 2019y / September / 21}, {2019y / September / 22, 2019y / September / 28}};
    const fc::Split split = fc::split_train_test(records, spec);

    fc::ModelConfig mc;
    mc.n_lag = 10;
    mc.n_look_ahead = 8;
    mc.hidden_dim = 16;
    mc.use_swim = true;
    fc::TrainingConfig tc;
    tc.epochs = 3;

    const auto train_windows = fc::make_windows(split.train, mc.n_lag, mc.n_look_ahead, {true});
    fc::Seq2SeqModel attention = fc::Seq2SeqModel::create(mc, fc::fit_scaler(split.train), 7);
    fc::train(attention, train_windows, tc, [](std::size_t epoch, double loss) {
        std::cout << "epoch " << epoch << " loss " << fc::format_number(loss) << '\n';
    });

    std::vector<double> demand;
    for (const auto& r : split.train) demand.push_back(r.dep_demand);
    const fc::ArForecaster ar{fc::fit_ar(demand, 16), mc.n_look_ahead};
    const auto lr = fc::LinearForecaster::fit({mc.n_lag, mc.n_look_ahead, true, true}, train_windows);

    std::vector<fc::ComparisonRow> rows;
    auto score = [&](const fc::AnyModel& model) {
        const auto windows = fc::make_test_windows(split, fc::n_lag_of(model), mc.n_look_ahead, {fc::uses_swim(model)});
        const auto ev = fc::evaluate_windows(windows, fc::batch_forecaster(model));
        rows.push_back({"ASPM+SWIM", fc::model_label(fc::kind_of(model)), ev.quarter, fc::n_lag_of(model), mc.n_look_ahead, 0});
    };
    score(lr);
    score(ar);
    score(attention);
    fc::render_table(std::cout, fc::comparison_table(rows));
}
