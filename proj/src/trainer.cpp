#include "pear/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "pear/errors.hpp"
#include "pear/rng.hpp"

namespace pear {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Per-trajectory frozen quantities for one optimization step.
struct FrozenWeights {
    std::vector<double> g_hat;   // PEAR / single-step weights (or ones)
    std::vector<double> log_g;
    std::vector<double> obj_w;   // mask / TALR weights (or ones)
};

double token_prob(const TabularPolicy& policy, const Trajectory& traj, size_t t) {
    std::span<const int> response(traj.response);
    return std::exp(policy.logprob(traj.prompt, response.subspan(0, t), traj.response[t]));
}

}  // namespace

Weighting parse_weighting(const std::string& s) {
    if (s == "none") return Weighting::None;
    if (s == "pear") return Weighting::Pear;
    if (s == "single_step") return Weighting::SingleStep;
    throw ParseError("unknown weighting '" + s + "' (want none, pear, or single_step)");
}

std::string to_string(Weighting w) {
    switch (w) {
        case Weighting::None: return "none";
        case Weighting::Pear: return "pear";
        case Weighting::SingleStep: return "single_step";
    }
    return "?";
}

std::string step_log_jsonl_line(const StepLog& log) {
    return "{\"step\":" + std::to_string(log.step) + ",\"loss\":" + fmt17(log.loss) +
           ",\"mean_weight\":" + fmt17(log.mean_weight) +
           ",\"clip_rate\":" + fmt17(log.clip_rate) + ",\"reward\":" + fmt17(log.reward) + "}";
}

double composed_loss(const TabularPolicy& policy, const Trajectory& traj,
                     const ObjectiveSpec& spec, std::span<const double> g_hat,
                     std::span<const double> obj_weights, double lambda_neg,
                     const TabularPolicy* ref) {
    const size_t T = traj.response.size();
    std::span<const int> response(traj.response);
    auto loss_at = [&](size_t t) -> double {
        if (spec.kind == ObjectiveKind::KlRegularized) {
            if (!ref) throw ValidationError("kl_regularized objective needs a reference policy");
            const int row = policy.context_row(traj.prompt, response.subspan(0, t));
            const Eigen::VectorXd p = policy.row_probs(row);
            const Eigen::VectorXd r = ref->row_probs(row);
            std::vector<double> pv(p.data(), p.data() + p.size());
            std::vector<double> rv(r.data(), r.data() + r.size());
            return kl_regularized_loss(pv, rv, traj.response[t], spec.beta, spec.forward_kd);
        }
        return token_loss(token_prob(policy, traj, t), spec).loss;
    };
    if (traj.label == Label::Negative) {
        double sum = 0.0;
        for (size_t t = 0; t < T; ++t) sum += loss_at(t);
        return -lambda_neg * (g_hat.empty() ? 1.0 : g_hat[0]) * sum;
    }
    if (g_hat.size() != T || obj_weights.size() != T)
        throw ValidationError("composed_loss: weight length mismatch");
    double total = 0.0;
    for (size_t t = 0; t < T; ++t) total += g_hat[t] * obj_weights[t] * loss_at(t);
    return total;
}

Eigen::MatrixXd composed_grad(const TabularPolicy& policy, const Trajectory& traj,
                              const ObjectiveSpec& spec, std::span<const double> g_hat,
                              std::span<const double> obj_weights, double lambda_neg,
                              const TabularPolicy* ref) {
    const size_t T = traj.response.size();
    std::span<const int> response(traj.response);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(policy.rows(), policy.vocab_size());
    const bool negative = traj.label == Label::Negative;
    if (!negative && (g_hat.size() != T || obj_weights.size() != T))
        throw ValidationError("composed_grad: weight length mismatch");
    for (size_t t = 0; t < T; ++t) {
        const int row = policy.context_row(traj.prompt, response.subspan(0, t));
        const int y = traj.response[t];
        const Eigen::VectorXd p = policy.row_probs(row);
        Eigen::VectorXd row_grad;
        switch (spec.kind) {
            case ObjectiveKind::Nll:
            case ObjectiveKind::Talr:
            case ObjectiveKind::TopLogP:
            case ObjectiveKind::BottomLogP: {
                row_grad = p;
                row_grad(y) -= 1.0;
                break;
            }
            case ObjectiveKind::GeneralFamily: {
                // d/dz of (1 - p^a)/a  =  p^a * (p - onehot)
                const double pa = std::pow(p(y), spec.alpha);
                row_grad = pa * p;
                row_grad(y) -= pa;
                break;
            }
            case ObjectiveKind::TopP:
            case ObjectiveKind::BottomP: {
                row_grad = p(y) * p;
                row_grad(y) -= p(y);
                break;
            }
            case ObjectiveKind::KlRegularized: {
                if (!ref)
                    throw ValidationError("kl_regularized objective needs a reference policy");
                const Eigen::VectorXd r = ref->row_probs(row);
                if (spec.forward_kd) {
                    row_grad = p - r;
                } else {
                    row_grad = p;
                    row_grad(y) -= 1.0;
                    const Eigen::ArrayXd a = (p.array() / r.array()).log();
                    const double kl = (p.array() * a).sum();
                    row_grad += (spec.beta * (p.array() * (a - kl))).matrix();
                }
                break;
            }
        }
        const double coeff = negative
                                 ? -lambda_neg * (g_hat.empty() ? 1.0 : g_hat[0])
                                 : g_hat[t] * obj_weights[t];
        grad.row(row) += coeff * row_grad.transpose();
    }
    return grad;
}

namespace {

FrozenWeights freeze_for(const TabularPolicy& policy, const Trajectory& traj,
                         const OfflineConfig& cfg) {
    FrozenWeights fw;
    const size_t T = traj.response.size();
    fw.obj_w.assign(T, 1.0);
    if (traj.label == Label::Negative) {
        if (cfg.weighting == Weighting::Pear || cfg.weighting == Weighting::SingleStep) {
            const double g = negative_sequence_weight(traj, policy, cfg.weight_config);
            fw.g_hat.assign(T, g);
            fw.log_g.assign(T, std::log(g));
        } else {
            fw.g_hat.assign(T, 1.0);
            fw.log_g.assign(T, 0.0);
        }
        return fw;
    }
    switch (cfg.weighting) {
        case Weighting::None:
            fw.g_hat.assign(T, 1.0);
            fw.log_g.assign(T, 0.0);
            break;
        case Weighting::Pear: {
            const WeightVector wv =
                compute_weights(token_log_ratios(traj, policy, cfg.weight_config),
                                cfg.weight_config);
            fw.g_hat = wv.g_hat;
            fw.log_g = wv.log_g;
            break;
        }
        case Weighting::SingleStep: {
            const WeightVector wv =
                single_step_weights(token_log_ratios(traj, policy, cfg.weight_config));
            fw.g_hat = wv.g_hat;
            fw.log_g = wv.log_g;
            break;
        }
    }
    // Objective-side masks, frozen at the same point as the PEAR weights.
    if (cfg.objective.kind != ObjectiveKind::Nll &&
        cfg.objective.kind != ObjectiveKind::KlRegularized &&
        cfg.objective.kind != ObjectiveKind::Talr) {
        for (size_t t = 0; t < T; ++t)
            fw.obj_w[t] = token_loss(token_prob(policy, traj, t), cfg.objective).weight;
    }
    return fw;
}

}  // namespace

OfflineResult train_offline(const TabularPolicy& init, const TrajectoryBatch& batch,
                            const OfflineConfig& cfg) {
    if (cfg.lr <= 0.0) throw ValidationError("offline lr must be > 0");
    if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
    for (size_t i = 0; i < batch.items.size(); ++i)
        if (!batch.items[i].has_behavior_logprobs())
            throw ValidationError("trajectory " + std::to_string(i) +
                                  " has no behavior log-probs; annotate first");

    OfflineResult result{init, {}, 0};
    const TabularPolicy ref = init;  // reference for KL-regularized objectives
    TabularPolicy& policy = result.policy;
    const int n = static_cast<int>(batch.items.size());
    const int batch_size = std::max(1, std::min(cfg.batch_size, n));
    int step = 0;

    std::vector<FrozenWeights> epoch_frozen;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.freeze_weights_per_epoch) {
            epoch_frozen.clear();
            for (const Trajectory& traj : batch.items)
                epoch_frozen.push_back(freeze_for(policy, traj, cfg));
        }
        for (int begin = 0; begin < n; begin += batch_size) {
            const int end = std::min(begin + batch_size, n);
            // Freeze weights for the minibatch from the live policy.
            std::vector<const Trajectory*> items;
            std::vector<FrozenWeights> frozen;
            for (int i = begin; i < end; ++i) {
                const Trajectory& traj = batch.items[i];
                if (traj.label == Label::Negative && cfg.lambda_neg == 0.0) {
                    ++result.skipped_negatives;
                    continue;
                }
                items.push_back(&traj);
                frozen.push_back(cfg.freeze_weights_per_epoch ? epoch_frozen[i]
                                                              : freeze_for(policy, traj, cfg));
            }
            if (items.empty()) continue;
            if (cfg.objective.kind == ObjectiveKind::Talr) {
                std::vector<std::vector<double>> nlls;
                std::vector<size_t> pos_idx;
                for (size_t i = 0; i < items.size(); ++i) {
                    if (items[i]->label == Label::Negative) continue;
                    std::vector<double> seq;
                    for (size_t t = 0; t < items[i]->response.size(); ++t)
                        seq.push_back(-std::log(token_prob(policy, *items[i], t)));
                    nlls.push_back(std::move(seq));
                    pos_idx.push_back(i);
                }
                if (!nlls.empty()) {
                    const auto w = talr_weights(nlls, cfg.objective);
                    for (size_t j = 0; j < pos_idx.size(); ++j) frozen[pos_idx[j]].obj_w = w[j];
                }
            }

            double loss = 0.0, weight_sum = 0.0, clip_hits = 0.0;
            int n_tokens = 0;
            Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(policy.rows(), policy.vocab_size());
            const double scale = 1.0 / static_cast<double>(items.size());
            for (size_t i = 0; i < items.size(); ++i) {
                loss += scale * composed_loss(policy, *items[i], cfg.objective, frozen[i].g_hat,
                                              frozen[i].obj_w, cfg.lambda_neg, &ref);
                grad += scale * composed_grad(policy, *items[i], cfg.objective, frozen[i].g_hat,
                                              frozen[i].obj_w, cfg.lambda_neg, &ref);
                for (size_t t = 0; t < frozen[i].g_hat.size(); ++t) {
                    weight_sum += frozen[i].g_hat[t];
                    if (frozen[i].log_g[t] == cfg.weight_config.log_g_lo ||
                        frozen[i].log_g[t] == cfg.weight_config.log_g_hi)
                        clip_hits += 1.0;
                    ++n_tokens;
                }
            }
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at step " << step << "; first trajectory in batch:";
                for (int tok : items.front()->response) msg << ' ' << tok;
                msg << "; weights:";
                for (double g : frozen.front().g_hat) msg << ' ' << g;
                throw ValidationError(msg.str());
            }
            policy.logits() -= cfg.lr * grad;
            StepLog log;
            log.step = step++;
            log.loss = loss;
            log.mean_weight = n_tokens ? weight_sum / n_tokens : 1.0;
            log.clip_rate = n_tokens ? clip_hits / n_tokens : 0.0;
            result.steps.push_back(log);
        }
    }
    return result;
}

OnlineResult train_online(const TabularPolicy& init, const TaskSpec& task,
                          const std::vector<TaskInstance>& train, const OnlineConfig& cfg) {
    if (cfg.group_size < 2) throw ValidationError("group_size must be >= 2");
    if (train.empty()) throw ValidationError("train_online: no training prompts");
    OnlineResult result{init, {}, {}};
    const TabularPolicy ref = init;  // frozen offline checkpoint for the KL penalty
    TabularPolicy& policy = result.policy;
    const int content = task.content_vocab();

    for (int step = 0; step < cfg.steps; ++step) {
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(policy.rows(), policy.vocab_size());
        std::vector<char> visited(static_cast<size_t>(policy.rows()), 0);
        double reward_sum = 0.0, surrogate = 0.0;
        int n_rollouts = 0;
        for (int b = 0; b < cfg.batch_prompts; ++b) {
            const TaskInstance& inst =
                train[(static_cast<size_t>(step) * cfg.batch_prompts + b) % train.size()];
            std::vector<Trajectory> rollouts;
            std::vector<double> rewards;
            for (int g = 0; g < cfg.group_size; ++g) {
                const std::uint64_t seed = derive_seed(
                    cfg.seed, (static_cast<std::uint64_t>(step) << 24) ^
                                  (static_cast<std::uint64_t>(b) << 12) ^ g);
                Trajectory roll = policy.sample_fixed(inst.prompt, task.response_len, seed);
                rewards.push_back(verify(task, inst.prompt, roll.response).reward);
                rollouts.push_back(std::move(roll));
            }
            const double mean =
                std::accumulate(rewards.begin(), rewards.end(), 0.0) / rewards.size();
            double var = 0.0;
            for (double r : rewards) var += (r - mean) * (r - mean);
            const double sd = std::sqrt(var / rewards.size());
            for (size_t g = 0; g < rollouts.size(); ++g) {
                reward_sum += rewards[g];
                ++n_rollouts;
                const double adv = sd > 0.0 ? (rewards[g] - mean) / sd : 0.0;
                std::span<const int> response(rollouts[g].response);
                for (size_t t = 0; t < response.size(); ++t) {
                    const int row = policy.context_row(inst.prompt, response.subspan(0, t));
                    visited[row] = 1;
                    surrogate -= adv * rollouts[g].behavior_logprobs[t];
                    if (adv == 0.0) continue;
                    // score function of the EOS-excluded sampling distribution
                    Eigen::VectorXd p = policy.row_probs(row);
                    double total = 0.0;
                    for (int i = 0; i < content; ++i) total += p(i);
                    Eigen::VectorXd score = Eigen::VectorXd::Zero(policy.vocab_size());
                    for (int i = 0; i < content; ++i) score(i) = -p(i) / total;
                    score(response[t]) += 1.0;
                    grad.row(row) += adv * score.transpose();
                }
            }
        }
        const double scale = 1.0 / std::max(1, n_rollouts);
        Eigen::MatrixXd update = scale * grad;
        if (cfg.kl_coeff > 0.0) {
            for (Eigen::Index row = 0; row < policy.rows(); ++row) {
                if (!visited[row]) continue;
                const Eigen::ArrayXd p = policy.row_probs(static_cast<int>(row)).array();
                const Eigen::ArrayXd r = ref.row_probs(static_cast<int>(row)).array();
                const Eigen::ArrayXd a = (p / r).log();
                const double kl = (p * a).sum();
                update.row(row) -= cfg.kl_coeff * (p * (a - kl)).matrix().transpose();
            }
        }
        policy.logits() += cfg.lr * update;  // ascent
        const double mean_reward = n_rollouts ? reward_sum / n_rollouts : 0.0;
        StepLog log;
        log.step = step;
        log.loss = surrogate * scale;
        log.reward = mean_reward;
        if (!std::isfinite(log.loss))
            throw ValidationError("non-finite online surrogate at step " + std::to_string(step));
        result.steps.push_back(log);
        result.reward_curve.push_back(mean_reward);
    }
    return result;
}

TabularPolicy train_fresh_behavior(const TaskSpec& task,
                                   const std::vector<TaskInstance>& train,
                                   int steps, double lr, std::uint64_t seed) {
    TabularPolicy policy = TabularPolicy::uniform(task.vocab_size, 2, 64, task.response_len);
    (void)seed;  // training is full-batch deterministic
    TrajectoryBatch batch;
    batch.id = "behavior-fit";
    for (const TaskInstance& inst : train) {
        Trajectory traj;
        traj.prompt = inst.prompt;
        traj.response = inst.hidden_answer;
        batch.items.push_back(std::move(traj));
    }
    std::vector<double> ones;
    for (int s = 0; s < steps; ++s) {
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(policy.rows(), policy.vocab_size());
        for (const Trajectory& traj : batch.items) {
            ones.assign(traj.response.size(), 1.0);
            grad += grad_weighted_nll(policy, traj, ones);
        }
        policy.logits() -= (lr / static_cast<double>(batch.items.size())) * grad;
    }
    return policy;
}

TrajectoryBatch build_offline_buffer(const TabularPolicy& behavior, const TaskSpec& task,
                                     const std::vector<TaskInstance>& train, int count,
                                     bool include_negatives, std::uint64_t seed) {
    TrajectoryBatch batch;
    batch.id = "offline-buffer";
    long long attempts = 0;
    const long long max_attempts = 50LL * count + 1000;
    size_t prompt_idx = 0;
    while (static_cast<int>(batch.items.size()) < count && attempts < max_attempts) {
        const TaskInstance& inst = train[prompt_idx % train.size()];
        ++prompt_idx;
        Trajectory traj = behavior.sample_fixed(inst.prompt, task.response_len,
                                                derive_seed(seed, ++attempts));
        const VerifyResult vr = verify(task, inst.prompt, traj.response);
        if (vr.reward == 1) {
            traj.reward = 1.0;
            traj.label = Label::Positive;
        } else if (include_negatives) {
            traj.reward = 0.0;
            traj.label = Label::Negative;
        } else {
            continue;
        }
        batch.items.push_back(std::move(traj));
    }
    if (batch.items.empty())
        throw ValidationError("offline buffer is empty; behavior policy never succeeds");
    return annotate_behavior(batch, behavior);
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    if (cfg.arms.empty()) throw ValidationError("run_pipeline: no arms configured");
    for (int k : cfg.eval_k)
        if (k > cfg.eval_samples_per_prompt)
            throw ValidationError("eval k exceeds samples per prompt");

    const auto instances = generate(cfg.task, cfg.n_prompts);
    std::vector<TaskInstance> train, test;
    for (const TaskInstance& inst : instances)
        (inst.split == "train" ? train : test).push_back(inst);

    const TabularPolicy behavior =
        cfg.behavior_checkpoint.empty()
            ? train_fresh_behavior(cfg.task, train, cfg.behavior_train_steps, cfg.behavior_lr,
                                   derive_seed(cfg.seed, 0xbe))
            : TabularPolicy::load(cfg.behavior_checkpoint);
    const TrajectoryBatch buffer =
        build_offline_buffer(behavior, cfg.task, train, cfg.n_offline_trajectories,
                             cfg.include_negatives, derive_seed(cfg.seed, 0xbf));

    PipelineResult result;
    result.behavior = behavior;
    // Shared across arms so the online stage sees identical rollout seeds.
    OnlineConfig online = cfg.online;
    online.seed = derive_seed(cfg.seed, 0x01);
    const std::uint64_t eval_seed_offline = derive_seed(cfg.seed, 0x02);
    const std::uint64_t eval_seed_online = derive_seed(cfg.seed, 0x03);

    for (const OfflineConfig& arm_cfg : cfg.arms) {
        ArmReport report;
        report.name = arm_cfg.name;
        try {
            const TabularPolicy init =
                TabularPolicy::uniform(cfg.task.vocab_size, 2, 64, cfg.task.response_len);
            OfflineConfig offline = arm_cfg;
            offline.seed = derive_seed(cfg.seed, 0x04);
            OfflineResult off = train_offline(init, buffer, offline);
            report.final_offline_loss = off.steps.empty() ? 0.0 : off.steps.back().loss;
            const EvalReport off_eval =
                evaluate(off.policy, cfg.task, test, cfg.eval_k, cfg.eval_samples_per_prompt,
                         eval_seed_offline);
            report.offline_pass_at = off_eval.pass_at;

            OnlineResult on = train_online(off.policy, cfg.task, train, online);
            report.final_online_reward =
                on.reward_curve.empty() ? 0.0 : on.reward_curve.back();
            const EvalReport on_eval =
                evaluate(on.policy, cfg.task, test, cfg.eval_k, cfg.eval_samples_per_prompt,
                         eval_seed_online);
            report.online_pass_at = on_eval.pass_at;

            result.offline_logs.push_back(std::move(off.steps));
            result.online_logs.push_back(std::move(on.steps));
            result.reward_curves.push_back(std::move(on.reward_curve));
            result.offline_policies.push_back(std::move(off.policy));
            result.online_policies.push_back(std::move(on.policy));
        } catch (const std::exception& e) {
            report.failed = true;
            report.error = e.what();
            result.arms.push_back(std::move(report));
            // partial results are flagged; a failed arm aborts the run
            throw ValidationError("arm '" + arm_cfg.name + "' failed: " + e.what());
        }
        result.arms.push_back(std::move(report));
    }
    return result;
}

std::string report_table(const std::vector<ArmReport>& arms, std::span<const int> k_values) {
    std::ostringstream out;
    out << "arm";
    for (int k : k_values) out << "\toffline_pass@" << k;
    for (int k : k_values) out << "\tonline_pass@" << k;
    out << '\n';
    for (const ArmReport& arm : arms) {
        out << arm.name;
        if (arm.failed) {
            out << "\tFAILED: " << arm.error << '\n';
            continue;
        }
        char buf[32];
        for (int k : k_values) {
            std::snprintf(buf, sizeof(buf), "\t%.4f", arm.offline_pass_at.at(k));
            out << buf;
        }
        for (int k : k_values) {
            std::snprintf(buf, sizeof(buf), "\t%.4f", arm.online_pass_at.at(k));
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace pear
