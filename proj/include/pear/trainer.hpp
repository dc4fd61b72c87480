#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pear/objectives.hpp"
#include "pear/policy.hpp"
#include "pear/tasks.hpp"
#include "pear/trajectory.hpp"
#include "pear/weights.hpp"

namespace pear {

enum class Weighting { None, Pear, SingleStep };

Weighting parse_weighting(const std::string& s);
std::string to_string(Weighting w);

struct OfflineConfig {
    std::string name = "arm";
    ObjectiveSpec objective;
    Weighting weighting = Weighting::None;
    WeightConfig weight_config;
    double lr = 0.1;
    int epochs = 1;
    int batch_size = 32;
    double lambda_neg = 0.0;
    std::uint64_t seed = 0;
    // Recompute importance weights from the live policy every step (the
    // default) or freeze them at the start of each epoch.
    bool freeze_weights_per_epoch = false;
};

struct StepLog {
    int step = 0;
    double loss = 0.0;
    double mean_weight = 1.0;
    double clip_rate = 0.0;  // fraction of tokens whose weight hit a clip bound
    double reward = 0.0;     // online only
};

std::string step_log_jsonl_line(const StepLog& log);

struct OfflineResult {
    TabularPolicy policy;
    std::vector<StepLog> steps;
    int skipped_negatives = 0;
};

// Frozen-weight loss and analytic gradient for one trajectory under the
// composed objective. g_hat/obj_weights are treated as constants; exposed
// for finite-difference checks and the stop-gradient tests.
double composed_loss(const TabularPolicy& policy, const Trajectory& traj,
                     const ObjectiveSpec& spec, std::span<const double> g_hat,
                     std::span<const double> obj_weights, double lambda_neg,
                     const TabularPolicy* ref = nullptr);
Eigen::MatrixXd composed_grad(const TabularPolicy& policy, const Trajectory& traj,
                              const ObjectiveSpec& spec, std::span<const double> g_hat,
                              std::span<const double> obj_weights, double lambda_neg,
                              const TabularPolicy* ref = nullptr);

// Plain gradient descent on the composed loss; weights recomputed from the
// current policy (stop-gradient within the step). `ref` supplies the
// reference distribution for KL-regularized objectives (defaults to init).
OfflineResult train_offline(const TabularPolicy& init, const TrajectoryBatch& batch,
                            const OfflineConfig& cfg);

struct OnlineConfig {
    int group_size = 8;
    double lr = 0.02;
    int batch_prompts = 16;
    double kl_coeff = 0.01;
    int steps = 200;
    std::uint64_t seed = 0;
};

struct OnlineResult {
    TabularPolicy policy;
    std::vector<StepLog> steps;
    std::vector<double> reward_curve;  // mean sampled reward per step
};

// Group-relative policy gradient: per prompt, group_size rollouts,
// advantages (r - mean)/std (zero when std is zero), broadcast to all
// tokens, plus a forward-KL penalty toward the frozen init.
OnlineResult train_online(const TabularPolicy& init, const TaskSpec& task,
                          const std::vector<TaskInstance>& train, const OnlineConfig& cfg);

struct ArmReport {
    std::string name;
    std::map<int, double> offline_pass_at;
    std::map<int, double> online_pass_at;
    double final_offline_loss = 0.0;
    double final_online_reward = 0.0;
    bool failed = false;
    std::string error;
};

struct PipelineConfig {
    TaskSpec task;
    int n_prompts = 20;  // total instances; generate() splits 80/20 train/test
    int n_offline_trajectories = 256;
    bool include_negatives = false;
    int behavior_train_steps = 300;
    double behavior_lr = 0.5;
    std::vector<OfflineConfig> arms;
    OnlineConfig online;
    std::vector<int> eval_k = {1, 8};
    int eval_samples_per_prompt = 8;
    std::uint64_t seed = 0;
    std::string behavior_checkpoint;  // empty = train-fresh
};

struct PipelineResult {
    std::vector<ArmReport> arms;
    std::vector<std::vector<StepLog>> offline_logs;
    std::vector<std::vector<StepLog>> online_logs;
    std::vector<std::vector<double>> reward_curves;
    // per-arm trained checkpoints plus the shared behavior policy, so the
    // run command can persist them for the other subcommands
    std::vector<TabularPolicy> offline_policies;
    std::vector<TabularPolicy> online_policies;
    std::optional<TabularPolicy> behavior;
};

// Offline train -> eval -> online train -> eval per arm; all arms share the
// task data, behavior buffer, and online rollout seeds.
PipelineResult run_pipeline(const PipelineConfig& cfg);

// Builds the behavior policy (train-fresh: NLL on canonical answers) and
// samples + verifies the offline buffer. Exposed for the CLI.
TabularPolicy train_fresh_behavior(const TaskSpec& task,
                                   const std::vector<TaskInstance>& train,
                                   int steps, double lr, std::uint64_t seed);
TrajectoryBatch build_offline_buffer(const TabularPolicy& behavior, const TaskSpec& task,
                                     const std::vector<TaskInstance>& train, int count,
                                     bool include_negatives, std::uint64_t seed);

std::string report_table(const std::vector<ArmReport>& arms, std::span<const int> k_values);

}  // namespace pear
