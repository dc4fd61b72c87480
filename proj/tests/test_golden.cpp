#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pear/oracle.hpp"
#include "pear/policy.hpp"
#include "pear/trajectory.hpp"
#include "pear/weights.hpp"

using namespace pear;

namespace {

std::string data_path(const std::string& name) { return std::string(TEST_DATA_DIR) + "/" + name; }

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("weight dumps match the golden files byte for byte") {
    const TabularPolicy target = TabularPolicy::load(data_path("target.ckpt.json"));
    const TrajectoryBatch batch = load_jsonl(data_path("weights_input.jsonl"));
    REQUIRE(batch.items.size() == 5);
    for (const char* mode : {"uniform", "suffix"}) {
        WeightConfig cfg;
        cfg.mode = parse_weight_mode(mode);
        std::ostringstream out;
        for (size_t i = 0; i < batch.items.size(); ++i) {
            const TokenRatios r = token_log_ratios(batch.items[i], target, cfg);
            out << weights_jsonl_line(std::to_string(i), cfg, r, compute_weights(r, cfg)) << '\n';
        }
        CHECK(out.str() == read_file(data_path(std::string("weights_golden_") + mode + ".jsonl")));
    }
}

TEST_CASE("golden weights agree with the independent reference") {
    const TabularPolicy target = TabularPolicy::load(data_path("target.ckpt.json"));
    const TabularPolicy behavior = TabularPolicy::load(data_path("behavior.ckpt.json"));
    const TrajectoryBatch batch = load_jsonl(data_path("weights_input.jsonl"));
    for (const char* mode : {"uniform", "suffix"}) {
        std::ifstream golden(data_path(std::string("weights_golden_") + mode + ".jsonl"));
        std::string line;
        size_t i = 0;
        while (std::getline(golden, line)) {
            const nlohmann::json j = nlohmann::json::parse(line);
            WeightConfig cfg;
            cfg.mode = parse_weight_mode(mode);
            const WeightVector ref =
                oracle::recompute_weights_reference(batch.items[i], target, behavior, cfg);
            const auto g_hat = j.at("g_hat").get<std::vector<double>>();
            REQUIRE(g_hat.size() == ref.g_hat.size());
            for (size_t t = 0; t < g_hat.size(); ++t)
                CHECK(std::abs(g_hat[t] - ref.g_hat[t]) <=
                      1e-12 * std::max(1.0, std::abs(ref.g_hat[t])));
            ++i;
        }
        CHECK(i == batch.items.size());
    }
}

TEST_CASE("empty input produces empty output") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "empty_input.jsonl").string();
    std::ofstream(path).close();
    const TrajectoryBatch batch = load_jsonl(path);
    CHECK(batch.items.empty());
    std::remove(path.c_str());
}
