#include "pear/weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "pear/errors.hpp"

namespace pear {

namespace {

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<Block> partition_blocks(int T, int B) {
    std::vector<Block> blocks;
    for (int begin = 0; begin < T; begin += B)
        blocks.push_back({begin, std::min(begin + B, T)});
    return blocks;
}

std::vector<double> block_sums(const std::vector<double>& deltas,
                               const std::vector<Block>& blocks) {
    std::vector<double> rho(blocks.size(), 0.0);
    for (size_t k = 0; k < blocks.size(); ++k)
        for (int t = blocks[k].begin; t < blocks[k].end; ++t) rho[k] += deltas[t];
    return rho;
}

}  // namespace

WeightMode parse_weight_mode(const std::string& s) {
    if (s == "uniform") return WeightMode::Uniform;
    if (s == "suffix") return WeightMode::Suffix;
    throw ParseError("unknown weight mode '" + s + "' (want uniform or suffix)");
}

std::string to_string(WeightMode mode) {
    return mode == WeightMode::Uniform ? "uniform" : "suffix";
}

WeightConfig WeightConfig::unclipped(WeightMode mode, int block_size) {
    WeightConfig cfg;
    cfg.mode = mode;
    cfg.block_size = block_size;
    cfg.gamma = 1.0;
    cfg.delta_lo = -std::numeric_limits<double>::infinity();
    cfg.delta_hi = std::numeric_limits<double>::infinity();
    cfg.log_g_lo = -std::numeric_limits<double>::infinity();
    cfg.log_g_hi = std::numeric_limits<double>::infinity();
    return cfg;
}

void WeightConfig::validate() const {
    if (block_size < 1) throw ValidationError("block_size must be >= 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must be in (0, 1]");
    if (delta_lo > delta_hi) throw ValidationError("delta clip bounds out of order");
    if (log_g_lo > log_g_hi) throw ValidationError("log weight clip bounds out of order");
}

TokenRatios token_log_ratios(const Trajectory& traj, const TabularPolicy& target,
                             const WeightConfig& cfg) {
    cfg.validate();
    if (!traj.has_behavior_logprobs())
        throw ValidationError(
            "trajectory has no behavior log-probs; run annotate_behavior first");
    const std::vector<double> target_lp = target.score_response(traj.prompt, traj.response);
    TokenRatios ratios;
    ratios.deltas.resize(target_lp.size());
    for (size_t t = 0; t < target_lp.size(); ++t)
        ratios.deltas[t] =
            clamp(target_lp[t] - traj.behavior_logprobs[t], cfg.delta_lo, cfg.delta_hi);
    return ratios;
}

WeightVector weights_uniform(const TokenRatios& ratios, const WeightConfig& cfg) {
    cfg.validate();
    const int T = ratios.length();
    WeightVector out;
    out.blocks = partition_blocks(T, cfg.block_size);
    out.rho = block_sums(ratios.deltas, out.blocks);
    double sum = 0.0;
    for (double r : out.rho) sum += r;
    const double lg = clamp(sum, cfg.log_g_lo, cfg.log_g_hi);
    out.log_g.assign(T, lg);
    out.g_hat.assign(T, std::exp(lg));
    return out;
}

WeightVector weights_suffix(const TokenRatios& ratios, const WeightConfig& cfg) {
    cfg.validate();
    const int T = ratios.length();
    WeightVector out;
    out.blocks = partition_blocks(T, cfg.block_size);
    out.rho = block_sums(ratios.deltas, out.blocks);
    out.log_g.resize(T);
    out.g_hat.resize(T);
    const double log_gamma = std::log(cfg.gamma);
    double future = 0.0;  // sum of rho over blocks after k
    for (int k = static_cast<int>(out.blocks.size()) - 1; k >= 0; --k) {
        const int e_k = out.blocks[k].end - 1;
        const double lg = clamp(static_cast<double>(T - 1 - e_k) * log_gamma + future,
                                cfg.log_g_lo, cfg.log_g_hi);
        const double g = std::exp(lg);
        for (int t = out.blocks[k].begin; t < out.blocks[k].end; ++t) {
            out.log_g[t] = lg;
            out.g_hat[t] = g;
        }
        future += out.rho[k];
    }
    return out;
}

double negative_sequence_weight(const Trajectory& traj, const TabularPolicy& target,
                                const WeightConfig& cfg) {
    if (traj.label != Label::Negative)
        throw ValidationError("negative_sequence_weight requires a negative-labeled trajectory");
    return weights_uniform(token_log_ratios(traj, target, cfg), cfg).g_hat.front();
}

WeightVector single_step_weights(const TokenRatios& ratios) {
    const int T = ratios.length();
    WeightVector out;
    out.blocks = partition_blocks(T, 1);
    out.rho = ratios.deltas;
    out.log_g = ratios.deltas;
    out.g_hat.resize(T);
    for (int t = 0; t < T; ++t) out.g_hat[t] = std::exp(ratios.deltas[t]);
    return out;
}

WeightVector compute_weights(const TokenRatios& ratios, const WeightConfig& cfg) {
    return cfg.mode == WeightMode::Uniform ? weights_uniform(ratios, cfg)
                                           : weights_suffix(ratios, cfg);
}

std::string weights_jsonl_line(const std::string& id, const WeightConfig& cfg,
                               const TokenRatios& ratios, const WeightVector& weights) {
    std::string line = "{\"id\":\"" + id + "\",\"mode\":\"" + to_string(cfg.mode) +
                       "\",\"B\":" + std::to_string(cfg.block_size) +
                       ",\"gamma\":" + fmt17(cfg.gamma) + ",\"deltas\":[";
    for (size_t i = 0; i < ratios.deltas.size(); ++i) {
        if (i) line += ',';
        line += fmt17(ratios.deltas[i]);
    }
    line += "],\"g_hat\":[";
    for (size_t i = 0; i < weights.g_hat.size(); ++i) {
        if (i) line += ',';
        line += fmt17(weights.g_hat[i]);
    }
    line += "]}";
    return line;
}

}  // namespace pear
