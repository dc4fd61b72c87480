#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "pear/policy.hpp"
#include "pear/weights.hpp"

namespace pear {
namespace oracle {

// Exhaustive enumeration domain: all vocab^horizon fixed-length sequences
// from one prompt. EOS carries no termination semantics here.
struct EnumerationDomain {
    int vocab = 2;
    int horizon = 3;
    std::vector<int> prompt;
};

using SequenceFn = std::function<double(std::span<const int> response)>;

// Checks E_{pi_theta}[phi] == E_{pi_beta}[rho_{t:T} phi] for every prefix
// position and every prefix, with unclipped ratios. Returns the maximum
// absolute discrepancy. When `clip` is given, ratios use its delta bounds
// (documents the clipping bias).
double check_change_of_measure(const TabularPolicy& theta, const TabularPolicy& beta,
                               const SequenceFn& phi, const EnumerationDomain& domain,
                               const WeightConfig* clip = nullptr);

using RewardFn = std::function<double(std::span<const int> response)>;

struct ReturnCheck {
    double exact_q = 0.0;  // enumerated under pi_theta
    double mc_mean = 0.0;  // suffix-ratio estimator over pi_beta samples
    double std_err = 0.0;
};

// Fixes the prefix response[0..t] (0-based, t tokens taken as given) and
// compares the enumerated discounted terminal-reward value under pi_theta
// with the importance-weighted Monte-Carlo estimate from pi_beta samples.
ReturnCheck check_return_estimator(const TabularPolicy& theta, const TabularPolicy& beta,
                                   const RewardFn& reward, double gamma, int t,
                                   std::span<const int> prefix, int n_samples,
                                   const EnumerationDomain& domain, std::uint64_t seed);

// Closed-form weight reference (direct products, long double), independent
// of the backward-scan implementation. Behavior log-probs come from the
// behavior policy, not the trajectory, so the two paths share no code.
WeightVector recompute_weights_reference(const Trajectory& traj, const TabularPolicy& target,
                                         const TabularPolicy& behavior,
                                         const WeightConfig& cfg);

}  // namespace oracle
}  // namespace pear
