#pragma once

#include <span>
#include <string>
#include <vector>

#include "pear/policy.hpp"
#include "pear/trajectory.hpp"

namespace pear {

enum class WeightMode { Uniform, Suffix };

WeightMode parse_weight_mode(const std::string& s);
std::string to_string(WeightMode mode);

// Clip bounds and aggregation parameters for the importance weights.
// delta bounds apply to per-token log-ratios; g bounds apply in log-domain
// to the final exponent.
struct WeightConfig {
    WeightMode mode = WeightMode::Suffix;
    int block_size = 1;
    double gamma = 0.999;
    double delta_lo = -0.08;
    double delta_hi = 0.3;
    double log_g_lo = -10.0;
    double log_g_hi = 5.0;

    // No clipping, no discount: raw likelihood ratios.
    static WeightConfig unclipped(WeightMode mode = WeightMode::Suffix, int block_size = 1);

    void validate() const;
};

// Clipped per-token log-ratios log pi_theta - log pi_beta.
struct TokenRatios {
    std::vector<double> deltas;
    int length() const { return static_cast<int>(deltas.size()); }
};

struct Block {
    int begin;  // first position, 0-based
    int end;    // one past last; e_k = end - 1
};

struct WeightVector {
    std::vector<double> g_hat;  // per-token weight, exp(log_g)
    std::vector<double> log_g;  // clamped exponent; exact at clip boundaries
    std::vector<Block> blocks;
    std::vector<double> rho;  // per-block sum of deltas
    int length() const { return static_cast<int>(g_hat.size()); }
};

TokenRatios token_log_ratios(const Trajectory& traj, const TabularPolicy& target,
                             const WeightConfig& cfg);

// Whole-sequence ratio broadcast to every position.
WeightVector weights_uniform(const TokenRatios& ratios, const WeightConfig& cfg);

// Discounted suffix ratio per block, single backward scan. block_size 1
// gives token-level weighting; block_size >= T gives an unweighted loss.
WeightVector weights_suffix(const TokenRatios& ratios, const WeightConfig& cfg);

// Sequence-level weight for a negative-labeled trajectory.
double negative_sequence_weight(const Trajectory& traj, const TabularPolicy& target,
                                const WeightConfig& cfg);

// Myopic one-step baseline: weight_t = exp(delta_t).
WeightVector single_step_weights(const TokenRatios& ratios);

WeightVector compute_weights(const TokenRatios& ratios, const WeightConfig& cfg);

// One dump-weights JSONL line: {id, mode, B, gamma, deltas, g_hat} with
// 17-significant-digit floats for reproducible golden files.
std::string weights_jsonl_line(const std::string& id, const WeightConfig& cfg,
                               const TokenRatios& ratios, const WeightVector& weights);

}  // namespace pear
