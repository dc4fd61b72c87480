#include <doctest.h>

#include <cmath>
#include <numeric>

#include "pear/checks.hpp"
#include "pear/errors.hpp"
#include "pear/rng.hpp"
#include "pear/trainer.hpp"

using namespace pear;

namespace {

TrajectoryBatch annotated_batch(const TabularPolicy& behavior, int n, std::uint64_t seed) {
    TrajectoryBatch batch;
    auto rng = make_rng(seed);
    for (int i = 0; i < n; ++i) {
        Trajectory t;
        t.prompt = {static_cast<int>(rng() % behavior.vocab_size())};
        const int T = 3 + static_cast<int>(rng() % 3);
        for (int j = 0; j < T; ++j)
            t.response.push_back(static_cast<int>(rng() % behavior.vocab_size()));
        t.behavior_logprobs = behavior.score_response(t.prompt, t.response);
        t.reward = 1.0;
        batch.items.push_back(std::move(t));
    }
    return batch;
}

}  // namespace

TEST_CASE("one reweighted step equals one plain step with frozen multipliers") {
    const TabularPolicy init = random_policy(4, 2, 2, 8, 301);
    const TabularPolicy behavior = random_policy(4, 2, 2, 8, 302);
    const TrajectoryBatch batch = annotated_batch(behavior, 6, 303);

    OfflineConfig cfg;
    cfg.objective = ObjectiveSpec::nll();
    cfg.weighting = Weighting::Pear;
    cfg.lr = 0.25;
    cfg.epochs = 1;
    cfg.batch_size = 100;  // single full-batch step
    const OfflineResult trained = train_offline(init, batch, cfg);
    REQUIRE(trained.steps.size() == 1);

    // manual step: freeze the weights from the init policy, then plain descent
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(init.rows(), init.vocab_size());
    const double scale = 1.0 / batch.items.size();
    for (const Trajectory& traj : batch.items) {
        const WeightVector w = compute_weights(
            token_log_ratios(traj, init, cfg.weight_config), cfg.weight_config);
        const std::vector<double> ones(traj.response.size(), 1.0);
        grad += scale * composed_grad(init, traj, cfg.objective, w.g_hat, ones, 0.0, &init);
    }
    const Eigen::MatrixXd manual = init.logits() - cfg.lr * grad;
    CHECK((trained.policy.logits() - manual).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("analytic gradients match finite differences") {
    const TabularPolicy behavior = random_policy(3, 1, 1, 6, 311);
    const TrajectoryBatch batch = annotated_batch(behavior, 1, 312);
    const Trajectory& traj = batch.items[0];
    const TabularPolicy ref = random_policy(3, 1, 1, 6, 313);

    std::vector<ObjectiveSpec> specs = {
        ObjectiveSpec::nll(),
        ObjectiveSpec::general_family(0.5),
        ObjectiveSpec::thresholded(ObjectiveKind::TopP, 0.2),
        ObjectiveSpec::kl_regularized(0.3),
        ObjectiveSpec::kl_regularized(0.0, true),
    };
    for (size_t si = 0; si < specs.size(); ++si) {
        TabularPolicy policy = random_policy(3, 1, 1, 6, 320 + si);
        const size_t T = traj.response.size();
        std::vector<double> g_hat(T), obj_w(T, 1.0);
        for (size_t t = 0; t < T; ++t) g_hat[t] = 0.5 + 0.3 * t;  // arbitrary frozen weights
        const Eigen::MatrixXd analytic =
            composed_grad(policy, traj, specs[si], g_hat, obj_w, 0.0, &ref);
        const double h = 1e-5;
        double worst = 0.0;
        for (Eigen::Index r = 0; r < policy.rows(); ++r) {
            for (Eigen::Index c = 0; c < policy.vocab_size(); ++c) {
                const double save = policy.logits()(r, c);
                policy.logits()(r, c) = save + h;
                const double up = composed_loss(policy, traj, specs[si], g_hat, obj_w, 0.0, &ref);
                policy.logits()(r, c) = save - h;
                const double dn = composed_loss(policy, traj, specs[si], g_hat, obj_w, 0.0, &ref);
                policy.logits()(r, c) = save;
                const double fd = (up - dn) / (2.0 * h);
                worst = std::max(worst, std::abs(analytic(r, c) - fd) /
                                            std::max(1.0, std::abs(fd)));
            }
        }
        INFO("objective ", to_string(specs[si].kind));
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("negative trajectories are skipped at lambda zero and counted") {
    const TabularPolicy init = random_policy(4, 2, 2, 8, 331);
    const TabularPolicy behavior = random_policy(4, 2, 2, 8, 332);
    TrajectoryBatch batch = annotated_batch(behavior, 4, 333);
    batch.items[1].label = Label::Negative;
    batch.items[1].reward = 0.0;
    batch.items[3].label = Label::Negative;
    batch.items[3].reward = 0.0;

    OfflineConfig cfg;
    cfg.lambda_neg = 0.0;
    cfg.epochs = 2;
    const OfflineResult result = train_offline(init, batch, cfg);
    CHECK(result.skipped_negatives == 4);  // two per epoch

    // with lambda > 0 the negatives contribute an ascent term
    cfg.lambda_neg = 0.1;
    cfg.weighting = Weighting::Pear;
    const OfflineResult with_neg = train_offline(init, batch, cfg);
    CHECK(with_neg.skipped_negatives == 0);
    CHECK((with_neg.policy.logits() - result.policy.logits()).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("offline training is deterministic and logs every step") {
    const TabularPolicy init = random_policy(4, 2, 2, 8, 341);
    const TabularPolicy behavior = random_policy(4, 2, 2, 8, 342);
    const TrajectoryBatch batch = annotated_batch(behavior, 10, 343);
    OfflineConfig cfg;
    cfg.weighting = Weighting::Pear;
    cfg.objective = ObjectiveSpec::talr();
    cfg.epochs = 3;
    cfg.batch_size = 4;
    const OfflineResult a = train_offline(init, batch, cfg);
    const OfflineResult b = train_offline(init, batch, cfg);
    CHECK(a.policy.logits() == b.policy.logits());
    CHECK(a.steps.size() == 9);  // ceil(10/4) = 3 minibatches x 3 epochs
    for (size_t i = 0; i < a.steps.size(); ++i) {
        CHECK(a.steps[i].loss == b.steps[i].loss);
        CHECK(std::isfinite(a.steps[i].loss));
        CHECK(a.steps[i].clip_rate >= 0.0);
        CHECK(a.steps[i].clip_rate <= 1.0);
    }
}

TEST_CASE("epoch-frozen weights change the trajectory of training") {
    const TabularPolicy init = random_policy(4, 2, 2, 8, 351);
    const TabularPolicy behavior = random_policy(4, 2, 2, 8, 352);
    const TrajectoryBatch batch = annotated_batch(behavior, 12, 353);
    OfflineConfig cfg;
    cfg.weighting = Weighting::Pear;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.lr = 0.5;
    const OfflineResult live = train_offline(init, batch, cfg);
    cfg.freeze_weights_per_epoch = true;
    const OfflineResult frozen = train_offline(init, batch, cfg);
    CHECK((live.policy.logits() - frozen.policy.logits()).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("unannotated batches are rejected") {
    const TabularPolicy init = random_policy(4, 2, 2, 8, 361);
    TrajectoryBatch batch;
    Trajectory t;
    t.prompt = {0};
    t.response = {1, 2};
    batch.items.push_back(t);
    CHECK_THROWS_AS(train_offline(init, batch, OfflineConfig{}), ValidationError);
}

TEST_CASE("online training is deterministic and improves on an easy task") {
    TaskSpec task;
    task.kind = TaskKind::Parity;
    task.prompt_len = 3;
    task.response_len = 4;
    task.vocab_size = 4;
    task.seed = 5;
    const auto instances = generate(task, 10);
    std::vector<TaskInstance> train;
    for (const auto& inst : instances)
        if (inst.split == "train") train.push_back(inst);

    const TabularPolicy init = TabularPolicy::uniform(task.vocab_size, 2, 16, task.response_len);
    OnlineConfig cfg;
    cfg.steps = 120;
    cfg.batch_prompts = 4;
    cfg.group_size = 4;
    cfg.lr = 0.5;
    cfg.seed = 6;
    const OnlineResult a = train_online(init, task, train, cfg);
    const OnlineResult b = train_online(init, task, train, cfg);
    CHECK(a.policy.logits() == b.policy.logits());
    REQUIRE(a.reward_curve.size() == 120);
    const double early =
        std::accumulate(a.reward_curve.begin(), a.reward_curve.begin() + 10, 0.0) / 10.0;
    const double late =
        std::accumulate(a.reward_curve.end() - 10, a.reward_curve.end(), 0.0) / 10.0;
    CHECK(late > early + 0.1);
}

TEST_CASE("behavior fitting and buffer construction") {
    TaskSpec task;
    task.kind = TaskKind::Parity;
    task.prompt_len = 3;
    task.response_len = 4;
    task.vocab_size = 4;
    task.seed = 15;
    const auto instances = generate(task, 10);
    std::vector<TaskInstance> train;
    for (const auto& inst : instances)
        if (inst.split == "train") train.push_back(inst);
    const TabularPolicy behavior = train_fresh_behavior(task, train, 100, 0.5, 1);
    const TrajectoryBatch buffer = build_offline_buffer(behavior, task, train, 32, false, 2);
    CHECK(!buffer.items.empty());
    for (const Trajectory& t : buffer.items) {
        CHECK(t.label == Label::Positive);
        CHECK(t.reward == 1.0);
        CHECK(t.has_behavior_logprobs());
        CHECK(verify(task, t.prompt, t.response).reward == 1);
        // stored scores come from the full softmax of the behavior policy
        const std::vector<double> rescored = behavior.score_response(t.prompt, t.response);
        for (size_t i = 0; i < rescored.size(); ++i)
            CHECK(t.behavior_logprobs[i] == rescored[i]);
    }
    const TrajectoryBatch with_neg = build_offline_buffer(behavior, task, train, 32, true, 2);
    CHECK(with_neg.items.size() == 32);
}

TEST_CASE("small two-arm pipeline produces a complete report") {
    PipelineConfig cfg;
    cfg.task.kind = TaskKind::Parity;
    cfg.task.prompt_len = 3;
    cfg.task.response_len = 4;
    cfg.task.vocab_size = 4;
    cfg.task.seed = 25;
    cfg.n_prompts = 10;
    cfg.n_offline_trajectories = 32;
    cfg.behavior_train_steps = 80;
    cfg.online.steps = 20;
    cfg.online.batch_prompts = 4;
    cfg.online.group_size = 4;
    cfg.eval_k = {1, 4};
    cfg.eval_samples_per_prompt = 4;
    cfg.seed = 77;

    OfflineConfig sft;
    sft.name = "sft";
    OfflineConfig pear_arm;
    pear_arm.name = "reweighted";
    pear_arm.weighting = Weighting::Pear;
    cfg.arms = {sft, pear_arm};

    const PipelineResult result = run_pipeline(cfg);
    REQUIRE(result.arms.size() == 2);
    for (const ArmReport& arm : result.arms) {
        CHECK(!arm.failed);
        CHECK(arm.offline_pass_at.count(1) == 1);
        CHECK(arm.online_pass_at.count(4) == 1);
    }
    const std::string table = report_table(result.arms, cfg.eval_k);
    CHECK(table.find("offline_pass@1") != std::string::npos);
    CHECK(table.find("online_pass@4") != std::string::npos);
    CHECK(table.find("sft") != std::string::npos);
    CHECK(table.find("reweighted") != std::string::npos);

    // determinism of the whole pipeline
    const PipelineResult again = run_pipeline(cfg);
    for (size_t i = 0; i < result.arms.size(); ++i) {
        CHECK(result.arms[i].offline_pass_at == again.arms[i].offline_pass_at);
        CHECK(result.arms[i].online_pass_at == again.arms[i].online_pass_at);
    }
}
