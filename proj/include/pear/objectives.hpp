#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pear/weights.hpp"

namespace pear {

enum class ObjectiveKind {
    Nll,
    KlRegularized,
    GeneralFamily,
    TopP,
    BottomP,
    TopLogP,
    BottomLogP,
    Talr,
};

ObjectiveKind parse_objective_kind(const std::string& s);
std::string to_string(ObjectiveKind kind);

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::Nll;
    double alpha = 1.0;  // general_family exponent
    double q = 0.2;      // threshold for masked kinds
    double beta = 0.0;   // KL coefficient
    // KlRegularized: when set, the token loss is the forward-KD form
    // KL(pi_beta || pi_theta) instead of NLL + beta*KL(pi_theta || pi_ref).
    bool forward_kd = false;
    double talr_floor = 0.01;
    std::optional<double> talr_tau;  // fixed tau; unset = batch-median rule

    static ObjectiveSpec nll() { return {}; }
    static ObjectiveSpec general_family(double alpha);
    static ObjectiveSpec thresholded(ObjectiveKind kind, double q);
    static ObjectiveSpec kl_regularized(double beta, bool forward_kd = false);
    static ObjectiveSpec talr();
};

// Named beta presets for the KL-regularized objective.
std::vector<double> kl_beta_presets();  // {0.03, 0.1, 0.3, 1}

struct TokenLossRow {
    double loss = 0.0;    // >= 0
    double weight = 1.0;  // objective-side weight (mask / TALR), stop-gradient
};

// Per-token loss f(p) for the probability-family kinds. p is the model
// probability of the logged token. Talr and KlRegularized are handled by
// their dedicated entry points.
TokenLossRow token_loss(double p, const ObjectiveSpec& spec);

// TALR: tau = median over sequences of mean token NLL (unless fixed),
// w_t = max(exp(-loss_t / tau), floor). All-zero losses fall back to
// unit weights.
std::vector<std::vector<double>> talr_weights(
    const std::vector<std::vector<double>>& token_nlls, const ObjectiveSpec& spec);

// NLL of the logged token under `target` plus beta * KL(target || ref);
// with forward_kd the loss is KL(ref || target) instead.
double kl_regularized_loss(std::span<const double> target_dist,
                           std::span<const double> ref_dist, int logged_token,
                           double beta, bool forward_kd = false);

// L = sum_t G_t * w_t * l_t for positive trajectories,
// -lambda * G_neg * sum_t l_t for negative ones. G and w are constants.
double compose(std::span<const TokenLossRow> rows, const WeightVector& pear,
               double lambda_neg, Label label);

}  // namespace pear
