#include "flightcast/model_file.hpp"
#include "flightcast/random.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

using namespace flightcast;

namespace {

ModelFile sample_file() {
    ModelFile f;
    f.kind = "example";
    f.config = {{"n_lag", 3}};
    f.scaler = scaler_to_json(Scaler{{2.5, 1.5, false}, FeatureScaler{1.0, 1.0, true}});
    f.add("w", {2, 2}, {1.0, -0.0, 1e-300, std::numeric_limits<double>::max()});
    f.add("b", {1}, {0.1});
    return f;
}

} // namespace

TEST_CASE("base64 round trips arbitrary bytes", "[model_file]") {
    CHECK(base64::encode(std::vector<std::uint8_t>{'M', 'a', 'n'}) == "TWFu");
    CHECK(base64::encode(std::vector<std::uint8_t>{'M', 'a'}) == "TWE=");
    CHECK(base64::encode(std::vector<std::uint8_t>{'M'}) == "TQ==");
    Pcg32 rng(3, 3);
    for (std::size_t n = 0; n < 40; ++n) {
        std::vector<std::uint8_t> bytes(n);
        for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.below(256));
        CHECK(base64::decode(base64::encode(bytes)) == bytes);
    }
    CHECK_THROWS_AS(base64::decode("TW=u"), FormatError);
}

TEST_CASE("doubles survive encoding bit for bit", "[model_file]") {
    const std::vector<double> v{0.0, -0.0, 1.0 / 3.0, -1e-310, 6.02e23, std::numeric_limits<double>::denorm_min()};
    const auto back = decode_doubles(encode_doubles(v));
    REQUIRE(back.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(std::signbit(back[i]) == std::signbit(v[i]));
        CHECK(back[i] == v[i]);
    }
}

TEST_CASE("crc32 check value", "[model_file]") { CHECK(crc32("123456789") == 0xcbf43926u); }

TEST_CASE("model file encode/decode", "[model_file]") {
    const ModelFile f = sample_file();
    const std::string text = encode_model_file(f);
    CHECK(text.find("crc32:") != std::string::npos);
    const ModelFile back = decode_model_file(text);
    CHECK(back.kind == "example");
    CHECK(back.config == f.config);
    CHECK(back.blocks.at("w").values == f.blocks.at("w").values);
    CHECK(back.blocks.at("w").shape == Shape{2, 2});
    CHECK(scaler_from_json(back.scaler) == scaler_from_json(f.scaler));
    CHECK(encode_model_file(back) == text);
    CHECK_THROWS_AS(back.block("missing"), FormatError);
}

TEST_CASE("damaged model files are rejected with distinct errors", "[model_file]") {
    const std::string text = encode_model_file(sample_file());
    SECTION("flipped byte") {
        std::string bad = text;
        bad[text.size() / 3] ^= 0x01;
        CHECK_THROWS_AS(decode_model_file(bad), ChecksumError);
    }
    SECTION("truncated") {
        for (std::size_t cut : {std::size_t{0}, std::size_t{1}, text.size() / 2, text.size() - 1}) {
            CHECK_THROWS_AS(decode_model_file(text.substr(0, cut)), ChecksumError);
        }
    }
    SECTION("valid checksum over invalid JSON") { CHECK_THROWS_AS(decode_model_file(seal_model_text("{not json")), FormatError); }
    SECTION("missing field") { CHECK_THROWS_AS(decode_model_file(seal_model_text(R"({"format_version":1})")), FormatError); }
    SECTION("future version") {
        auto doc = nlohmann::json::parse(text.substr(0, text.find('\n')));
        doc["format_version"] = 2;
        CHECK_THROWS_AS(decode_model_file(seal_model_text(doc.dump())), VersionError);
    }
    SECTION("shape disagreeing with data") {
        auto doc = nlohmann::json::parse(text.substr(0, text.find('\n')));
        doc["blocks"]["w"]["shape"] = {3, 3};
        CHECK_THROWS_AS(decode_model_file(seal_model_text(doc.dump())), FormatError);
    }
}

TEST_CASE("load_into checks shapes", "[model_file]") {
    const ModelFile f = sample_file();
    Tensor ok(Shape{2, 2});
    f.load_into("w", ok);
    CHECK(ok.values() == f.blocks.at("w").values);
    Tensor wrong(Shape{4});
    CHECK_THROWS_AS(f.load_into("w", wrong), FormatError);
}

TEST_CASE("reading a missing file is a load error", "[model_file]") {
    CHECK_THROWS_AS(read_model_file("/nonexistent/flightcast.model"), LoadError);
}
