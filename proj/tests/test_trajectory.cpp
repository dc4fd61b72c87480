#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pear/checks.hpp"
#include "pear/errors.hpp"
#include "pear/policy.hpp"
#include "pear/trajectory.hpp"

using namespace pear;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

Trajectory make_traj() {
    Trajectory t;
    t.prompt = {1, 2};
    t.response = {0, 3, 1};
    t.behavior_logprobs = {-0.5, -1.25, -0.001953125};
    t.reward = 1.0;
    return t;
}

}  // namespace

TEST_CASE("jsonl round trip is bit exact") {
    TrajectoryBatch batch;
    batch.items.push_back(make_traj());
    Trajectory neg = make_traj();
    neg.label = Label::Negative;
    neg.reward = 0.0;
    batch.items.push_back(neg);
    Trajectory bare;
    bare.prompt = {0};
    bare.response = {2};
    batch.items.push_back(bare);  // no logprobs, no reward

    const std::string path = temp_path("traj_roundtrip.jsonl");
    write_jsonl(batch, path);
    const TrajectoryBatch loaded = load_jsonl(path);
    REQUIRE(loaded.items.size() == batch.items.size());
    for (size_t i = 0; i < batch.items.size(); ++i) {
        CHECK(loaded.items[i].prompt == batch.items[i].prompt);
        CHECK(loaded.items[i].response == batch.items[i].response);
        REQUIRE(loaded.items[i].behavior_logprobs.size() ==
                batch.items[i].behavior_logprobs.size());
        for (size_t t = 0; t < batch.items[i].behavior_logprobs.size(); ++t)
            CHECK(loaded.items[i].behavior_logprobs[t] == batch.items[i].behavior_logprobs[t]);
        CHECK(loaded.items[i].reward == batch.items[i].reward);
        CHECK(loaded.items[i].label == batch.items[i].label);
    }
    std::remove(path.c_str());
}

TEST_CASE("validation rejects malformed records") {
    Trajectory t = make_traj();
    t.behavior_logprobs.pop_back();
    CHECK_THROWS_AS(validate_trajectory(t, "x"), ValidationError);

    t = make_traj();
    t.behavior_logprobs[0] = 0.5;  // positive log-prob
    CHECK_THROWS_AS(validate_trajectory(t, "x"), ValidationError);

    t = make_traj();
    t.label = Label::Negative;  // negative label requires zero reward
    CHECK_THROWS_AS(validate_trajectory(t, "x"), ValidationError);

    t = make_traj();
    CHECK_NOTHROW(validate_trajectory(t, "x"));
}

TEST_CASE("parse errors carry the line number") {
    const std::string path = temp_path("traj_badline.jsonl");
    {
        std::ofstream out(path);
        out << "{\"prompt\":[0],\"response\":[1]}\n";
        out << "not json\n";
    }
    try {
        load_jsonl(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("annotate_behavior is idempotent and rejects oov tokens") {
    const TabularPolicy policy = random_policy(4, 2, 2, 8, 99);
    TrajectoryBatch batch;
    Trajectory t;
    t.prompt = {1};
    t.response = {0, 2, 3};
    batch.items.push_back(t);

    const TrajectoryBatch once = annotate_behavior(batch, policy);
    const TrajectoryBatch twice = annotate_behavior(once, policy);
    REQUIRE(once.items[0].behavior_logprobs.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(once.items[0].behavior_logprobs[i] == twice.items[0].behavior_logprobs[i]);
        CHECK(once.items[0].behavior_logprobs[i] ==
              policy.score_response(t.prompt, t.response)[i]);
    }

    Trajectory oov;
    oov.prompt = {0};
    oov.response = {7};  // outside vocab
    TrajectoryBatch bad;
    bad.items.push_back(oov);
    CHECK_THROWS_AS(annotate_behavior(bad, policy), ValidationError);
}
