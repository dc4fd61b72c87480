#include "pear/checks.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "pear/oracle.hpp"
#include "pear/rng.hpp"
#include "pear/trajectory.hpp"
#include "pear/weights.hpp"

namespace pear {

TabularPolicy random_policy(int vocab, int order, int buckets, int max_len,
                            std::uint64_t seed, double scale) {
    TabularPolicy policy(vocab, order, buckets, max_len);
    auto rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    for (Eigen::Index r = 0; r < policy.logits().rows(); ++r)
        for (Eigen::Index c = 0; c < policy.logits().cols(); ++c)
            policy.logits()(r, c) = normal(rng);
    return policy;
}

namespace {

oracle::SequenceFn seeded_phi(std::uint64_t seed) {
    return [seed](std::span<const int> response) {
        std::uint64_t h = seed;
        for (int tok : response) h = mix_seed(h ^ static_cast<std::uint64_t>(tok + 1));
        return static_cast<double>(h % 1000) / 1000.0;
    };
}

CheckResult check_change_of_measure_battery() {
    CheckResult result{"change-of-measure identity (50 seeded pairs, unclipped)", true, ""};
    const int V = 3, T = 4;
    double worst = 0.0;
    for (int s = 0; s < 50; ++s) {
        const TabularPolicy theta = random_policy(V, 2, 1, T, derive_seed(9000, 2 * s));
        const TabularPolicy beta = random_policy(V, 2, 1, T, derive_seed(9000, 2 * s + 1));
        oracle::EnumerationDomain domain{V, T, {1, 2}};
        const double disc =
            oracle::check_change_of_measure(theta, beta, seeded_phi(777 + s), domain);
        worst = std::max(worst, disc);
    }
    result.passed = worst <= 1e-12;
    std::ostringstream os;
    os << "max discrepancy " << worst;
    result.detail = os.str();
    return result;
}

CheckResult check_clipping_bias() {
    CheckResult result{"clipping bias is strictly positive when ratios exceed bounds", true, ""};
    const int V = 3, T = 4;
    // strong logit scale so raw log-ratios exceed [-0.08, 0.3]
    const TabularPolicy theta = random_policy(V, 2, 1, T, 1234, 2.0);
    const TabularPolicy beta = random_policy(V, 2, 1, T, 5678, 2.0);
    oracle::EnumerationDomain domain{V, T, {0}};
    WeightConfig clip;  // default clip bounds
    const double biased =
        oracle::check_change_of_measure(theta, beta, seeded_phi(11), domain, &clip);
    const double unbiased = oracle::check_change_of_measure(theta, beta, seeded_phi(11), domain);
    result.passed = biased > 1e-6 && unbiased <= 1e-12;
    std::ostringstream os;
    os << "clipped bias " << biased << ", unclipped " << unbiased;
    result.detail = os.str();
    return result;
}

CheckResult check_weight_agreement() {
    CheckResult result{"scan vs closed-form weights (all modes, B in {1,2,3,T,T+1})", true, ""};
    const int V = 4;
    double worst = 0.0;
    int n = 0;
    for (int s = 0; s < 200; ++s) {
        const TabularPolicy theta = random_policy(V, 2, 2, 16, derive_seed(4200, 2 * s));
        const TabularPolicy beta = random_policy(V, 2, 2, 16, derive_seed(4200, 2 * s + 1));
        auto rng = make_rng(derive_seed(4300, s));
        const int T = 1 + static_cast<int>(rng() % 12);
        Trajectory traj;
        traj.prompt = {static_cast<int>(rng() % V)};
        for (int t = 0; t < T; ++t) traj.response.push_back(static_cast<int>(rng() % V));
        traj.behavior_logprobs = beta.score_response(traj.prompt, traj.response);
        for (WeightMode mode : {WeightMode::Uniform, WeightMode::Suffix}) {
            for (int B : {1, 2, 3, T, T + 1}) {
                WeightConfig cfg;
                cfg.mode = mode;
                cfg.block_size = B;
                const WeightVector scan =
                    compute_weights(token_log_ratios(traj, theta, cfg), cfg);
                const WeightVector ref =
                    oracle::recompute_weights_reference(traj, theta, beta, cfg);
                for (int t = 0; t < T; ++t) {
                    const double err = std::abs(scan.g_hat[t] - ref.g_hat[t]) /
                                       std::max(1.0, std::abs(ref.g_hat[t]));
                    worst = std::max(worst, err);
                    ++n;
                }
            }
        }
    }
    result.passed = worst <= 1e-12;
    std::ostringstream os;
    os << "max relative deviation " << worst << " over " << n << " weights";
    result.detail = os.str();
    return result;
}

CheckResult check_return_estimator_battery() {
    CheckResult result{"return estimator MC within 4 SE of enumerated Q", true, ""};
    const int V = 2, T = 3;
    const double gammas[] = {0.5, 0.999, 1.0};
    double worst_sigma = 0.0;
    for (int s = 0; s < 10; ++s) {
        const TabularPolicy theta = random_policy(V, 2, 1, T, derive_seed(600, 2 * s));
        const TabularPolicy beta = random_policy(V, 2, 1, T, derive_seed(600, 2 * s + 1));
        oracle::EnumerationDomain domain{V, T, {0}};
        auto reward = [s](std::span<const int> response) {
            std::uint64_t h = 77 + s;
            for (int tok : response) h = mix_seed(h ^ static_cast<std::uint64_t>(tok + 1));
            return h % 2 ? 1.0 : 0.0;
        };
        const std::vector<int> prefix = {s % V};
        const oracle::ReturnCheck rc = oracle::check_return_estimator(
            theta, beta, reward, gammas[s % 3], 1, prefix, 100000, domain,
            derive_seed(31337, s));
        const double sigma =
            rc.std_err > 0 ? std::abs(rc.mc_mean - rc.exact_q) / rc.std_err : 0.0;
        worst_sigma = std::max(worst_sigma, sigma);
        if (sigma > 4.0) result.passed = false;
    }
    std::ostringstream os;
    os << "worst deviation " << worst_sigma << " SE";
    result.detail = os.str();
    return result;
}

}  // namespace

std::vector<CheckResult> run_oracle_battery() {
    return {
        check_change_of_measure_battery(),
        check_clipping_bias(),
        check_weight_agreement(),
        check_return_estimator_battery(),
    };
}

}  // namespace pear
