#include "pear/config.hpp"

#include "pear/errors.hpp"

namespace pear {

using nlohmann::json;
using nlohmann::ordered_json;

WeightConfig weight_config_from_json(const json& j) {
    WeightConfig cfg;
    if (j.contains("mode")) cfg.mode = parse_weight_mode(j["mode"].get<std::string>());
    cfg.block_size = j.value("block_size", cfg.block_size);
    cfg.gamma = j.value("gamma", cfg.gamma);
    if (j.contains("delta_clip")) {
        cfg.delta_lo = j["delta_clip"].at(0).get<double>();
        cfg.delta_hi = j["delta_clip"].at(1).get<double>();
    }
    if (j.contains("g_clip_log")) {
        cfg.log_g_lo = j["g_clip_log"].at(0).get<double>();
        cfg.log_g_hi = j["g_clip_log"].at(1).get<double>();
    }
    cfg.validate();
    return cfg;
}

ordered_json weight_config_to_json(const WeightConfig& cfg) {
    ordered_json j;
    j["mode"] = to_string(cfg.mode);
    j["block_size"] = cfg.block_size;
    j["gamma"] = cfg.gamma;
    j["delta_clip"] = {cfg.delta_lo, cfg.delta_hi};
    j["g_clip_log"] = {cfg.log_g_lo, cfg.log_g_hi};
    return j;
}

ObjectiveSpec objective_from_json(const json& j) {
    ObjectiveSpec spec;
    spec.kind = parse_objective_kind(j.value("kind", "nll"));
    spec.alpha = j.value("alpha", spec.alpha);
    spec.q = j.value("q", spec.q);
    spec.beta = j.value("beta", spec.beta);
    spec.forward_kd = j.value("forward_kd", spec.forward_kd);
    spec.talr_floor = j.value("talr_floor", spec.talr_floor);
    if (j.contains("talr_tau") && !j["talr_tau"].is_null())
        spec.talr_tau = j["talr_tau"].get<double>();
    return spec;
}

ordered_json objective_to_json(const ObjectiveSpec& spec) {
    ordered_json j;
    j["kind"] = to_string(spec.kind);
    switch (spec.kind) {
        case ObjectiveKind::GeneralFamily: j["alpha"] = spec.alpha; break;
        case ObjectiveKind::TopP:
        case ObjectiveKind::BottomP:
        case ObjectiveKind::TopLogP:
        case ObjectiveKind::BottomLogP: j["q"] = spec.q; break;
        case ObjectiveKind::KlRegularized:
            j["beta"] = spec.beta;
            j["forward_kd"] = spec.forward_kd;
            break;
        case ObjectiveKind::Talr:
            j["talr_floor"] = spec.talr_floor;
            if (spec.talr_tau) j["talr_tau"] = *spec.talr_tau;
            break;
        case ObjectiveKind::Nll: break;
    }
    return j;
}

TaskSpec task_spec_from_json(const json& j) {
    TaskSpec spec;
    spec.kind = parse_task_kind(j.value("kind", "parity"));
    spec.prompt_len = j.value("prompt_len", spec.prompt_len);
    spec.response_len = j.value("response_len", spec.response_len);
    spec.vocab_size = j.value("vocab_size", spec.vocab_size);
    spec.seed = j.value("seed", spec.seed);
    return spec;
}

ordered_json task_spec_to_json(const TaskSpec& spec) {
    ordered_json j;
    j["kind"] = to_string(spec.kind);
    j["prompt_len"] = spec.prompt_len;
    j["response_len"] = spec.response_len;
    j["vocab_size"] = spec.vocab_size;
    j["seed"] = spec.seed;
    return j;
}

OfflineConfig offline_config_from_json(const json& j) {
    OfflineConfig cfg;
    cfg.name = j.value("name", cfg.name);
    if (j.contains("objective")) cfg.objective = objective_from_json(j["objective"]);
    if (j.contains("weighting")) cfg.weighting = parse_weighting(j["weighting"].get<std::string>());
    if (j.contains("weight_config")) cfg.weight_config = weight_config_from_json(j["weight_config"]);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lambda_neg = j.value("lambda_neg", cfg.lambda_neg);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.freeze_weights_per_epoch = j.value("freeze_weights_per_epoch", false);
    return cfg;
}

OnlineConfig online_config_from_json(const json& j) {
    OnlineConfig cfg;
    cfg.group_size = j.value("group_size", cfg.group_size);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.batch_prompts = j.value("batch_prompts", cfg.batch_prompts);
    cfg.kl_coeff = j.value("kl_coeff", cfg.kl_coeff);
    cfg.steps = j.value("steps", cfg.steps);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig cfg;
    cfg.task = task_spec_from_json(j.at("task"));
    cfg.n_prompts = j.value("n_prompts", cfg.n_prompts);
    cfg.n_offline_trajectories = j.value("n_offline_trajectories", cfg.n_offline_trajectories);
    cfg.include_negatives = j.value("include_negatives", cfg.include_negatives);
    cfg.behavior_train_steps = j.value("behavior_train_steps", cfg.behavior_train_steps);
    cfg.behavior_lr = j.value("behavior_lr", cfg.behavior_lr);
    if (!j.contains("arms") || j["arms"].empty())
        throw ValidationError("config: arms must be non-empty");
    for (const auto& arm : j["arms"]) cfg.arms.push_back(offline_config_from_json(arm));
    if (j.contains("online")) cfg.online = online_config_from_json(j["online"]);
    if (j.contains("eval")) {
        cfg.eval_k = j["eval"].value("k", cfg.eval_k);
        cfg.eval_samples_per_prompt =
            j["eval"].value("samples_per_prompt", cfg.eval_samples_per_prompt);
    }
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("behavior_policy") && j["behavior_policy"].is_string() &&
        j["behavior_policy"].get<std::string>() != "train-fresh")
        cfg.behavior_checkpoint = j["behavior_policy"].get<std::string>();
    for (int k : cfg.eval_k)
        if (k > cfg.eval_samples_per_prompt)
            throw ValidationError("config: eval k exceeds samples_per_prompt");
    return cfg;
}

ordered_json arm_report_to_json(const ArmReport& report) {
    ordered_json j;
    j["name"] = report.name;
    j["failed"] = report.failed;
    if (report.failed) {
        j["error"] = report.error;
        return j;
    }
    ordered_json off, on;
    for (const auto& [k, v] : report.offline_pass_at) off[std::to_string(k)] = v;
    for (const auto& [k, v] : report.online_pass_at) on[std::to_string(k)] = v;
    j["offline_pass_at"] = off;
    j["online_pass_at"] = on;
    j["final_offline_loss"] = report.final_offline_loss;
    j["final_online_reward"] = report.final_online_reward;
    return j;
}

ArmReport arm_report_from_json(const json& j) {
    ArmReport report;
    report.name = j.at("name").get<std::string>();
    report.failed = j.value("failed", false);
    if (report.failed) {
        report.error = j.value("error", "");
        return report;
    }
    for (const auto& [k, v] : j.at("offline_pass_at").items())
        report.offline_pass_at[std::stoi(k)] = v.get<double>();
    for (const auto& [k, v] : j.at("online_pass_at").items())
        report.online_pass_at[std::stoi(k)] = v.get<double>();
    report.final_offline_loss = j.value("final_offline_loss", 0.0);
    report.final_online_reward = j.value("final_online_reward", 0.0);
    return report;
}

}  // namespace pear
