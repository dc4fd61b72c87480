#include "pear/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "pear/errors.hpp"

namespace pear {

ObjectiveKind parse_objective_kind(const std::string& s) {
    if (s == "nll") return ObjectiveKind::Nll;
    if (s == "kl_regularized") return ObjectiveKind::KlRegularized;
    if (s == "general_family") return ObjectiveKind::GeneralFamily;
    if (s == "top_p") return ObjectiveKind::TopP;
    if (s == "bottom_p") return ObjectiveKind::BottomP;
    if (s == "top_log_p") return ObjectiveKind::TopLogP;
    if (s == "bottom_log_p") return ObjectiveKind::BottomLogP;
    if (s == "talr") return ObjectiveKind::Talr;
    throw ParseError("unknown objective kind '" + s + "'");
}

std::string to_string(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::Nll: return "nll";
        case ObjectiveKind::KlRegularized: return "kl_regularized";
        case ObjectiveKind::GeneralFamily: return "general_family";
        case ObjectiveKind::TopP: return "top_p";
        case ObjectiveKind::BottomP: return "bottom_p";
        case ObjectiveKind::TopLogP: return "top_log_p";
        case ObjectiveKind::BottomLogP: return "bottom_log_p";
        case ObjectiveKind::Talr: return "talr";
    }
    return "?";
}

ObjectiveSpec ObjectiveSpec::general_family(double alpha) {
    if (alpha <= 0.0) throw ValidationError("general_family alpha must be > 0");
    ObjectiveSpec spec;
    spec.kind = ObjectiveKind::GeneralFamily;
    spec.alpha = alpha;
    return spec;
}

ObjectiveSpec ObjectiveSpec::thresholded(ObjectiveKind kind, double q) {
    if (kind != ObjectiveKind::TopP && kind != ObjectiveKind::BottomP &&
        kind != ObjectiveKind::TopLogP && kind != ObjectiveKind::BottomLogP)
        throw ValidationError("thresholded() requires a masked objective kind");
    if (q < 0.0 || q > 1.0) throw ValidationError("threshold q must be in [0, 1]");
    ObjectiveSpec spec;
    spec.kind = kind;
    spec.q = q;
    return spec;
}

ObjectiveSpec ObjectiveSpec::kl_regularized(double beta, bool forward_kd) {
    if (beta < 0.0) throw ValidationError("beta must be >= 0");
    ObjectiveSpec spec;
    spec.kind = ObjectiveKind::KlRegularized;
    spec.beta = beta;
    spec.forward_kd = forward_kd;
    return spec;
}

ObjectiveSpec ObjectiveSpec::talr() {
    ObjectiveSpec spec;
    spec.kind = ObjectiveKind::Talr;
    return spec;
}

std::vector<double> kl_beta_presets() { return {0.03, 0.1, 0.3, 1.0}; }

TokenLossRow token_loss(double p, const ObjectiveSpec& spec) {
    if (!(p > 0.0 && p <= 1.0))
        throw std::domain_error("token probability must be in (0, 1]");
    switch (spec.kind) {
        case ObjectiveKind::Nll:
        case ObjectiveKind::Talr:  // TALR base loss is NLL; weights come separately
            return {-std::log(p), 1.0};
        case ObjectiveKind::GeneralFamily:
            return {(1.0 - std::pow(p, spec.alpha)) / spec.alpha, 1.0};
        case ObjectiveKind::TopP:
            return {1.0 - p, p >= spec.q ? 1.0 : 0.0};
        case ObjectiveKind::BottomP:
            return {1.0 - p, p <= spec.q ? 1.0 : 0.0};
        case ObjectiveKind::TopLogP:
            return {-std::log(p), p >= spec.q ? 1.0 : 0.0};
        case ObjectiveKind::BottomLogP:
            return {-std::log(p), p <= spec.q ? 1.0 : 0.0};
        case ObjectiveKind::KlRegularized:
            throw ValidationError("kl_regularized needs full distributions; use kl_regularized_loss");
    }
    throw ValidationError("unreachable objective kind");
}

std::vector<std::vector<double>> talr_weights(
    const std::vector<std::vector<double>>& token_nlls, const ObjectiveSpec& spec) {
    double tau;
    if (spec.talr_tau.has_value()) {
        tau = *spec.talr_tau;
    } else {
        // median over sequences of the per-sequence mean token loss
        std::vector<double> means;
        means.reserve(token_nlls.size());
        for (const auto& seq : token_nlls) {
            if (seq.empty()) throw ValidationError("talr_weights: empty sequence");
            double sum = 0.0;
            for (double l : seq) sum += l;
            means.push_back(sum / static_cast<double>(seq.size()));
        }
        if (means.empty()) throw ValidationError("talr_weights: empty batch");
        std::sort(means.begin(), means.end());
        const size_t n = means.size();
        tau = n % 2 == 1 ? means[n / 2] : 0.5 * (means[n / 2 - 1] + means[n / 2]);
    }
    std::vector<std::vector<double>> weights(token_nlls.size());
    for (size_t i = 0; i < token_nlls.size(); ++i) {
        weights[i].resize(token_nlls[i].size());
        for (size_t t = 0; t < token_nlls[i].size(); ++t) {
            // tau <= 0 only when every loss is zero; exp(-0/tau) -> 1
            weights[i][t] = tau <= 0.0
                                ? 1.0
                                : std::max(std::exp(-token_nlls[i][t] / tau), spec.talr_floor);
        }
    }
    return weights;
}

double kl_regularized_loss(std::span<const double> target_dist,
                           std::span<const double> ref_dist, int logged_token,
                           double beta, bool forward_kd) {
    if (target_dist.size() != ref_dist.size())
        throw ValidationError("kl_regularized_loss: distribution size mismatch");
    double sum_t = 0.0, sum_r = 0.0;
    for (size_t i = 0; i < target_dist.size(); ++i) {
        sum_t += target_dist[i];
        sum_r += ref_dist[i];
        if ((target_dist[i] > 0.0) != (ref_dist[i] > 0.0))
            throw std::domain_error("kl_regularized_loss: support mismatch");
    }
    if (std::abs(sum_t - 1.0) > 1e-9 || std::abs(sum_r - 1.0) > 1e-9)
        throw std::domain_error("kl_regularized_loss: distributions must sum to 1");
    if (forward_kd) {
        // KD base loss: KL(ref || target)
        double kl = 0.0;
        for (size_t i = 0; i < target_dist.size(); ++i)
            if (ref_dist[i] > 0.0) kl += ref_dist[i] * std::log(ref_dist[i] / target_dist[i]);
        return kl;
    }
    if (!(target_dist[logged_token] > 0.0))
        throw std::domain_error("kl_regularized_loss: logged token has probability 0");
    double kl = 0.0;
    for (size_t i = 0; i < target_dist.size(); ++i)
        if (target_dist[i] > 0.0) kl += target_dist[i] * std::log(target_dist[i] / ref_dist[i]);
    return -std::log(target_dist[logged_token]) + beta * kl;
}

double compose(std::span<const TokenLossRow> rows, const WeightVector& pear,
               double lambda_neg, Label label) {
    if (static_cast<int>(rows.size()) != pear.length())
        throw ValidationError("compose: loss/weight length mismatch");
    if (label == Label::Negative) {
        double sum = 0.0;
        for (const TokenLossRow& row : rows) sum += row.loss;
        return -lambda_neg * pear.g_hat.front() * sum;
    }
    double total = 0.0;
    for (size_t t = 0; t < rows.size(); ++t)
        total += pear.g_hat[t] * rows[t].weight * rows[t].loss;
    return total;
}

}  // namespace pear
