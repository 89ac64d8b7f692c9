// Runs the flightcast binary end to end on small synthetic data.

#include <catch_amalgamated.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "flightcast_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct Run {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Run cli(const std::string& args) {
    const fs::path out = workdir() / "stdout.txt";
    const fs::path err = workdir() / "stderr.txt";
    const std::string cmd = std::string("'") + FLIGHTCAST_CLI + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

/// Three weeks of data: two for training, one for testing.
const fs::path& dataset() {
    static const fs::path csv = [] {
        const fs::path cfg = workdir() / "gen.json";
        write(cfg, R"({"first_day": "2019-03-01", "last_day": "2019-03-21", "base_rate": 4.0,
                       "random_surges": {"daily_probability": 0.5, "min_rate": 4.0, "max_rate": 10.0},
                       "seed": 11})");
        const fs::path data = workdir() / "data.csv";
        const Run r = cli("datagen --config " + q(cfg) + " --out " + q(data) + " --quiet");
        REQUIRE(r.code == 0);
        return data;
    }();
    return csv;
}

fs::path run_config(const std::string& name, const std::string& mode, const std::string& kind, const std::string& inputs,
                    int epochs = 2) {
    const fs::path p = workdir() / (name + ".json");
    write(p, R"({"mode": ")" + mode + R"(", "kind": ")" + kind + R"(",
                "model": {"n_lag": 6, "n_look_ahead": 4, "hidden_dim": 6, "observed_inputs": )" +
                 inputs + R"(},
                "training": {"epochs": )" + std::to_string(epochs) +
                 R"(, "seed": 3},
                "split": {"train": ["2019-03-01", "2019-03-14"], "test": ["2019-03-15", "2019-03-21"]},
                "ar": {"order": 12}})");
    return p;
}

std::size_t lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

} // namespace

TEST_CASE("datagen writes the records and is deterministic", "[cli]") {
    const fs::path data = dataset();
    const std::string text = slurp(data);
    CHECK(text.rfind("slice_start_utc,hour,qtr,day_of_week,month,dep_demand,swim_observed_departures\n", 0) == 0);
    CHECK(lines(text) == 1 + 21 * 96);

    const fs::path again = workdir() / "data_again.csv";
    const Run r = cli("datagen --config " + q(workdir() / "gen.json") + " --out " + q(again));
    CHECK(r.code == 0);
    CHECK(r.out == "2016 records\n");
    CHECK(slurp(again) == text);

    const fs::path reseeded = workdir() / "data_seed.csv";
    CHECK(cli("datagen --config " + q(workdir() / "gen.json") + " --out " + q(reseeded) + " --seed 12 --quiet").code == 0);
    CHECK(slurp(reseeded) != text);
}

TEST_CASE("usage and config errors exit with 2", "[cli]") {
    CHECK(cli("datagen --config /nonexistent/gen.json --out " + q(workdir() / "x.csv")).code == 2);
    CHECK(cli("").code == 2);
    CHECK(cli("bogus").code == 2);
    CHECK(cli("train --data " + q(dataset())).code == 2);
    CHECK(cli("compare").code == 2);
    CHECK(cli("compare " + q(workdir() / "missing.json")).code == 2);

    const Run swim_in_aspm =
        cli("train --config " + q(run_config("bad_mode", "aspm", "seq2seq", R"(["swim"])")) + " --data " + q(dataset()) + " --out " +
            q(workdir() / "bad.model"));
    CHECK(swim_in_aspm.code == 2);
    CHECK(swim_in_aspm.err.find("aspm") != std::string::npos);
    CHECK(!fs::exists(workdir() / "bad.model"));

    const fs::path empty_train = workdir() / "empty_train.json";
    write(empty_train, R"({"kind": "ar", "split": {"train": ["2018-01-01", "2018-01-31"], "test": ["2019-03-15", "2019-03-21"]}})");
    CHECK(cli("train --config " + q(empty_train) + " --data " + q(dataset()) + " --out " + q(workdir() / "e.model")).code == 2);
}

TEST_CASE("train, evaluate, forecast and compare", "[cli]") {
    const fs::path data = dataset();
    struct Case {
        std::string name, mode, kind, inputs;
    };
    const std::vector<Case> cases{{"ar", "aspm", "ar", "[]"},
                                  {"lr", "aspm", "lr", "[]"},
                                  {"s2s", "aspm", "seq2seq", "[]"},
                                  {"att_swim", "aspm+swim", "seq2seq_attention", R"(["swim"])"}};
    std::string reports;
    for (const auto& c : cases) {
        const fs::path cfg = run_config(c.name, c.mode, c.kind, c.inputs);
        const fs::path model = workdir() / (c.name + ".model");
        const Run train = cli("train --config " + q(cfg) + " --data " + q(data) + " --model " + q(model) + " --deterministic");
        INFO(c.name << ": " << train.err);
        REQUIRE(train.code == 0);
        const std::string loss = slurp(workdir() / (c.name + ".loss.csv"));
        CHECK(loss.rfind("epoch,loss\n", 0) == 0);
        CHECK(lines(loss) == (c.kind.starts_with("seq2seq") ? 3u : 2u));

        const fs::path report = workdir() / (c.name + ".report.json");
        const Run eval = cli("evaluate --config " + q(cfg) + " --model " + q(model) + " --data " + q(data) + " --out " + q(report) + " --quiet");
        REQUIRE(eval.code == 0);
        CHECK(eval.out.find("hourly: mse ") != std::string::npos);
        const auto j = nlohmann::json::parse(slurp(report));
        CHECK(j.at("levels").size() == 3);
        const std::size_t pairs = j.at("levels").at("quarter").at("n").get<std::size_t>();
        CHECK(lines(slurp(workdir() / (c.name + ".report.forecast.csv"))) == pairs + 1);
        reports += " " + q(report);

        const Run fc = cli("forecast --model " + q(model) + " --data " + q(data));
        REQUIRE(fc.code == 0);
        CHECK(fc.out.rfind("timestamp,predicted\n2019-03-22T00:00:00Z,", 0) == 0);
        CHECK(lines(fc.out) == 5);
    }
    const Run cmp = cli("compare" + reports + " --level daily --out " + q(workdir() / "table.json"));
    REQUIRE(cmp.code == 0);
    CHECK(cmp.out.find("mse_comparison") != std::string::npos);
    CHECK(cmp.out.find(" 0%") != std::string::npos);
    CHECK(nlohmann::json::parse(slurp(workdir() / "table.json")).at("rows").size() == 4);

    // A SWIM model against data without a SWIM column is a mode mismatch.
    std::string text = slurp(data);
    std::string stripped;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) stripped += line.substr(0, line.rfind(',') + 1) + (stripped.empty() ? "swim_observed_departures" : "") + "\n";
    const fs::path plain = workdir() / "plain.csv";
    write(plain, stripped);
    CHECK(cli("evaluate --model " + q(workdir() / "att_swim.model") + " --data " + q(plain) + " --out " + q(workdir() / "r.json") +
              " --config " + q(run_config("att_swim", "aspm+swim", "seq2seq_attention", R"(["swim"])")))
              .code == 2);
}

TEST_CASE("compare reproduces the reference percentages", "[cli]") {
    const std::vector<std::pair<std::string, double>> rows{
        {"Linear_Regression", 7.63}, {"Autoregressive", 8.91}, {"Seq2Seq", 6.53}, {"Seq2Seq_Attention", 6.27}, {"Seq2Seq_Attention", 5.49}};
    std::string args;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        nlohmann::json j{{"data_label", i < 3 ? "ASPM" : "ASPM+SWIM"},
                         {"model_label", rows[i].first},
                         {"n_lag", 10},
                         {"n_look_ahead", 124},
                         {"levels",
                          {{"quarter", {{"mse", rows[i].second}, {"mae", 1.0}, {"explained_variance", 0.5}, {"n", 100}}},
                           {"hourly", {{"mse", nullptr}, {"mae", nullptr}, {"explained_variance", nullptr}, {"n", 0}}},
                           {"daily", {{"mse", nullptr}, {"mae", nullptr}, {"explained_variance", nullptr}, {"n", 0}}}}}};
        const fs::path p = workdir() / ("table_row" + std::to_string(i) + ".json");
        write(p, j.dump());
        args += " " + q(p);
    }
    const Run r = cli("compare" + args);
    REQUIRE(r.code == 0);
    std::istringstream table(r.out);
    std::vector<std::string> pct;
    std::string line;
    std::getline(table, line);
    while (std::getline(table, line)) pct.push_back(line.substr(line.find_last_of(' ') + 1));
    CHECK(pct == std::vector<std::string>{"-39%", "-62%", "-19%", "-14%", "0%"});

    CHECK(cli("compare" + args + " --level hourly").code == 2);
    const Run single = cli("compare " + q(workdir() / "table_row1.json"));
    CHECK(single.out.find(" 0%") != std::string::npos);
}

TEST_CASE("corrupted and missing model files are rejected", "[cli]") {
    const fs::path data = dataset();
    const fs::path cfg = run_config("ar_again", "aspm", "ar", "[]");
    const fs::path model = workdir() / "ar_again.model";
    REQUIRE(cli("train --config " + q(cfg) + " --data " + q(data) + " --out " + q(model) + " --quiet").code == 0);
    std::string text = slurp(model);
    text[text.size() / 2] = text[text.size() / 2] == 'A' ? 'B' : 'A';
    write(model, text);
    const Run r = cli("forecast --model " + q(model) + " --data " + q(data));
    CHECK(r.code == 2);
    CHECK(r.err.find("checksum") != std::string::npos);
    CHECK(cli("forecast --model " + q(workdir() / "nope.model") + " --data " + q(data)).code == 2);
}

TEST_CASE("non-finite training loss exits with 3 and names the epoch", "[cli]") {
    // An absurd learning rate sends the weights to ~1e300 after the first
    // step; the next batch loss overflows.
    const fs::path cfg = workdir() / "overflow.json";
    write(cfg, R"({"mode": "aspm", "kind": "seq2seq", "model": {"n_lag": 6, "n_look_ahead": 4, "hidden_dim": 6},
                   "training": {"epochs": 1, "learning_rate": 1e300},
                   "split": {"train": ["2019-03-01", "2019-03-14"], "test": ["2019-03-15", "2019-03-21"]}})");
    const Run r = cli("train --config " + q(cfg) + " --data " + q(dataset()) + " --out " + q(workdir() / "overflow.model") + " --quiet");
    CHECK(r.code == 3);
    CHECK(r.err.find("epoch 1") != std::string::npos);
}
