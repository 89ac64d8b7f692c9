// flightcast: generate data, train, evaluate, forecast and compare departure
// demand models.
//
// Exit codes: 0 success, 2 usage/config/data error, 3 numeric failure.

#include "flightcast/flightcast.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fc = flightcast;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Options {
    std::string config;
    std::string data;
    std::string model;
    std::string out;
    std::string kind;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
    bool quiet = false;
    std::string level = "quarter";
    bool sort_desc = false;
    std::vector<std::string> reports;
};

std::string require(const std::string& value, const char* flag, const char* command) {
    if (value.empty()) {
        throw fc::ConfigError(std::string(command) + " needs " + flag);
    }
    return value;
}

fc::RunConfig run_config(const Options& o) {
    fc::RunConfig rc = o.config.empty() ? fc::RunConfig{} : fc::load_run_config(o.config);
    if (!o.kind.empty()) rc.kind = o.kind;
    if (o.seed) rc.training.seed = *o.seed;
    rc.finalize();
    return rc;
}

std::string data_path(const Options& o, const fc::RunConfig& rc, const char* command) {
    if (!o.data.empty()) return o.data;
    if (rc.data_path) return rc.data_path->string();
    throw fc::ConfigError(std::string(command) + " needs --data (or a \"data\" entry in the run config)");
}

int run(const std::string& command, const Options& o) {
    const fc::Logger log(std::cerr, o.deterministic, o.quiet);
    if (command == "datagen") {
        const auto n = fc::cmd_datagen(require(o.config, "--config", "datagen"), require(o.out, "--out", "datagen"), o.seed, log);
        std::cout << n << " records\n";
    } else if (command == "train") {
        const fc::RunConfig rc = run_config(o);
        const std::string model = o.model.empty() ? require(o.out, "--model or --out", "train") : o.model;
        fc::cmd_train(rc, data_path(o, rc, "train"), model, log);
    } else if (command == "evaluate") {
        const fc::RunConfig rc = o.config.empty() ? fc::RunConfig{} : fc::load_run_config(o.config);
        const auto report = fc::cmd_evaluate(require(o.model, "--model", "evaluate"), data_path(o, rc, "evaluate"), rc.split,
                                             require(o.out, "--out", "evaluate"), log);
        for (auto level : {fc::AggregationLevel::quarter, fc::AggregationLevel::hourly, fc::AggregationLevel::daily}) {
            const auto& m = report.evaluation.level(level);
            std::cout << fc::to_string(level) << ": mse " << fc::format_number(m.mse) << " mae " << fc::format_number(m.mae)
                      << " explained_variance " << fc::format_number(m.explained_variance) << " n " << m.n << '\n';
        }
    } else if (command == "forecast") {
        const fc::RunConfig rc = o.config.empty() ? fc::RunConfig{} : fc::load_run_config(o.config);
        const std::string model = require(o.model, "--model", "forecast");
        if (o.out.empty()) {
            fc::cmd_forecast(model, data_path(o, rc, "forecast"), std::cout);
        } else {
            auto out = fc::open_output(o.out);
            fc::cmd_forecast(model, data_path(o, rc, "forecast"), out);
        }
    } else if (command == "compare") {
        std::vector<std::filesystem::path> paths(o.reports.begin(), o.reports.end());
        const auto table = fc::cmd_compare(paths, fc::parse_aggregation_level(o.level), o.sort_desc);
        fc::render_table(std::cout, table);
        if (!o.out.empty()) {
            auto out = fc::open_output(o.out);
            out << fc::to_json(table).dump(2) << '\n';
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quarter-hour departure demand forecasting"};
    app.require_subcommand(1);
    Options o;

    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "Run or generator config (JSON)");
        sub->add_option("--data", o.data, "Quarter-hour records (CSV)");
        sub->add_option("--model", o.model, "Model file");
        sub->add_option("--out", o.out, "Output path");
        sub->add_option("--kind", o.kind, "Model kind: lr, ar, seq2seq, seq2seq_attention");
        sub->add_option("--seed", o.seed, "Seed override");
        sub->add_flag("--deterministic", o.deterministic, "Suppress wall-clock stamps in log lines");
        sub->add_flag("--quiet", o.quiet, "No progress messages");
    };
    common(app.add_subcommand("datagen", "Generate a synthetic data set"));
    common(app.add_subcommand("train", "Train a model on the train range"));
    common(app.add_subcommand("evaluate", "Rolling-origin evaluation over the test range"));
    common(app.add_subcommand("forecast", "Forecast after the last record"));
    auto* compare = app.add_subcommand("compare", "Compare evaluation reports");
    common(compare);
    compare->add_option("reports", o.reports, "Evaluation report files")->required();
    compare->add_option("--level", o.level, "quarter, hourly or daily")->check(CLI::IsMember({"quarter", "hourly", "daily"}));
    compare->add_flag("--sort", o.sort_desc, "Sort rows by mse, largest first");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return run(command, o);
    } catch (const fc::DivergenceError& e) {
        std::cerr << "error: training diverged at " << e.what() << '\n';
        return kExitNumeric;
    } catch (const fc::NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}
