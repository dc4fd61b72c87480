#include <doctest.h>

#include <json.hpp>

#include "pear/config.hpp"
#include "pear/errors.hpp"

using namespace pear;
using nlohmann::json;

TEST_CASE("weight config round trips through json") {
    WeightConfig cfg;
    cfg.mode = WeightMode::Uniform;
    cfg.block_size = 3;
    cfg.gamma = 0.97;
    cfg.delta_lo = -0.5;
    cfg.delta_hi = 0.5;
    cfg.log_g_lo = -8.0;
    cfg.log_g_hi = 4.0;
    const WeightConfig back = weight_config_from_json(json::parse(weight_config_to_json(cfg).dump()));
    CHECK(back.mode == cfg.mode);
    CHECK(back.block_size == cfg.block_size);
    CHECK(back.gamma == cfg.gamma);
    CHECK(back.delta_lo == cfg.delta_lo);
    CHECK(back.delta_hi == cfg.delta_hi);
    CHECK(back.log_g_lo == cfg.log_g_lo);
    CHECK(back.log_g_hi == cfg.log_g_hi);

    CHECK_THROWS_AS(weight_config_from_json(json::parse(R"({"block_size":0})")), ValidationError);
    CHECK_THROWS_AS(weight_config_from_json(json::parse(R"({"mode":"banana"})")), ParseError);
}

TEST_CASE("objective spec round trips through json") {
    for (const char* kind :
         {"nll", "general_family", "top_p", "bottom_p", "top_log_p", "bottom_log_p",
          "kl_regularized", "talr"}) {
        ObjectiveSpec spec;
        spec.kind = parse_objective_kind(kind);
        spec.alpha = 0.5;
        spec.q = 0.3;
        spec.beta = 0.1;
        spec.talr_tau = 1.5;
        const ObjectiveSpec back =
            objective_from_json(json::parse(objective_to_json(spec).dump()));
        CHECK(back.kind == spec.kind);
    }
    const ObjectiveSpec talr =
        objective_from_json(json::parse(R"({"kind":"talr","talr_tau":2.0,"talr_floor":0.05})"));
    REQUIRE(talr.talr_tau.has_value());
    CHECK(*talr.talr_tau == 2.0);
    CHECK(talr.talr_floor == 0.05);
    CHECK_THROWS_AS(objective_from_json(json::parse(R"({"kind":"nope"})")), ParseError);
}

TEST_CASE("pipeline config validation") {
    const json base = json::parse(R"({
        "task": {"kind": "parity", "prompt_len": 3, "response_len": 4, "vocab_size": 4},
        "arms": [{"name": "sft"}],
        "eval": {"k": [1, 8], "samples_per_prompt": 8}
    })");
    const PipelineConfig cfg = pipeline_config_from_json(base);
    CHECK(cfg.arms.size() == 1);
    CHECK(cfg.task.kind == TaskKind::Parity);
    CHECK(cfg.eval_k == std::vector<int>{1, 8});
    CHECK(cfg.behavior_checkpoint.empty());

    json no_arms = base;
    no_arms["arms"] = json::array();
    CHECK_THROWS_AS(pipeline_config_from_json(no_arms), ValidationError);

    json bad_k = base;
    bad_k["eval"]["k"] = {1, 16};
    CHECK_THROWS_AS(pipeline_config_from_json(bad_k), ValidationError);

    json ckpt = base;
    ckpt["behavior_policy"] = "some/path.json";
    CHECK(pipeline_config_from_json(ckpt).behavior_checkpoint == "some/path.json");
    ckpt["behavior_policy"] = "train-fresh";
    CHECK(pipeline_config_from_json(ckpt).behavior_checkpoint.empty());
}

TEST_CASE("offline arm config defaults and parsing") {
    const OfflineConfig cfg = offline_config_from_json(json::parse(R"({
        "name": "reweighted",
        "weighting": "pear",
        "objective": {"kind": "general_family", "alpha": 0.7},
        "weight_config": {"mode": "suffix", "block_size": 2},
        "lr": 0.05, "epochs": 4, "lambda_neg": 0.2
    })"));
    CHECK(cfg.name == "reweighted");
    CHECK(cfg.weighting == Weighting::Pear);
    CHECK(cfg.objective.kind == ObjectiveKind::GeneralFamily);
    CHECK(cfg.objective.alpha == 0.7);
    CHECK(cfg.weight_config.block_size == 2);
    CHECK(cfg.lr == 0.05);
    CHECK(cfg.epochs == 4);
    CHECK(cfg.lambda_neg == 0.2);
    CHECK_FALSE(cfg.freeze_weights_per_epoch);
}

TEST_CASE("arm report round trips through json") {
    ArmReport report;
    report.name = "arm-a";
    report.offline_pass_at = {{1, 0.25}, {8, 0.75}};
    report.online_pass_at = {{1, 0.5}, {8, 1.0}};
    report.final_offline_loss = 0.125;
    report.final_online_reward = 0.875;
    const ArmReport back = arm_report_from_json(json::parse(arm_report_to_json(report).dump()));
    CHECK(back.name == report.name);
    CHECK(back.offline_pass_at == report.offline_pass_at);
    CHECK(back.online_pass_at == report.online_pass_at);
    CHECK(back.final_offline_loss == report.final_offline_loss);
    CHECK(back.final_online_reward == report.final_online_reward);

    ArmReport failed;
    failed.name = "broken";
    failed.failed = true;
    failed.error = "it broke";
    const ArmReport fb = arm_report_from_json(json::parse(arm_report_to_json(failed).dump()));
    CHECK(fb.failed);
    CHECK(fb.error == "it broke");
}
