#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pear/trajectory.hpp"

namespace pear {

// Tabular autoregressive softmax policy. A context row is selected by a
// hashed prompt bucket plus the last `context_order` response tokens
// (left-padded); the highest token id is reserved as end-of-sequence.
// The logits matrix doubles as the model's single "linear module" for the
// drift metrics.
class TabularPolicy {
public:
    TabularPolicy(int vocab_size, int context_order, int num_buckets, int max_len);

    static TabularPolicy uniform(int vocab_size, int context_order = 2,
                                 int num_buckets = 8, int max_len = 16);

    int vocab_size() const { return vocab_; }
    int context_order() const { return order_; }
    int num_buckets() const { return buckets_; }
    int max_len() const { return max_len_; }
    int eos_token() const { return vocab_ - 1; }
    Eigen::Index rows() const { return logits_.rows(); }

    Eigen::MatrixXd& logits() { return logits_; }
    const Eigen::MatrixXd& logits() const { return logits_; }

    // Row selected by (bucket(prompt), last n tokens of response_prefix).
    int context_row(std::span<const int> prompt, std::span<const int> response_prefix) const;

    Eigen::VectorXd row_log_probs(int row) const;
    Eigen::VectorXd row_probs(int row) const;

    double logprob(std::span<const int> prompt, std::span<const int> response_prefix,
                   int token) const;
    double prob(std::span<const int> prompt, std::span<const int> response_prefix,
                int token) const;

    // Per-token log-probs of a full logged response.
    std::vector<double> score_response(std::span<const int> prompt,
                                       std::span<const int> response) const;

    // Autoregressive sampling until EOS or max_len; deterministic given seed.
    // behavior_logprobs are filled from this policy.
    Trajectory sample(std::span<const int> prompt, std::uint64_t seed) const;

    // Samples exactly `len` tokens, never emitting EOS (fixed-length tasks).
    Trajectory sample_fixed(std::span<const int> prompt, int len, std::uint64_t seed) const;

    void save(const std::string& path) const;
    static TabularPolicy load(const std::string& path);

private:
    int vocab_;
    int order_;
    int buckets_;
    int max_len_;
    Eigen::MatrixXd logits_;  // rows x vocab

    int sample_row(int row, std::mt19937_64& rng, bool exclude_eos, double* logprob_out) const;
};

// Accumulates sum_t weight_t * (softmax(row_t) - onehot(y_t)) into a matrix
// shaped like the logits. This is the gradient of the weighted NLL with the
// weights treated as constants.
Eigen::MatrixXd grad_weighted_nll(const TabularPolicy& policy, const Trajectory& traj,
                                  std::span<const double> weights);

}  // namespace pear
