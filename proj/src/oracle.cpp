#include "pear/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pear/errors.hpp"
#include "pear/rng.hpp"

namespace pear {
namespace oracle {

namespace {

long double clampl(long double v, long double lo, long double hi) {
    return std::min(std::max(v, lo), hi);
}

// Enumerates all vocab^horizon responses, invoking fn(response).
template <typename Fn>
void for_each_sequence(int vocab, int horizon, Fn&& fn) {
    std::vector<int> seq(horizon, 0);
    while (true) {
        fn(std::span<const int>(seq));
        int pos = horizon - 1;
        while (pos >= 0 && ++seq[pos] == vocab) {
            seq[pos] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
}

int prefix_index(std::span<const int> seq, int len, int vocab) {
    int idx = 0;
    for (int i = 0; i < len; ++i) idx = idx * vocab + seq[i];
    return idx;
}

}  // namespace

double check_change_of_measure(const TabularPolicy& theta, const TabularPolicy& beta,
                               const SequenceFn& phi, const EnumerationDomain& domain,
                               const WeightConfig* clip) {
    const int V = domain.vocab;
    const int T = domain.horizon;
    if (V != theta.vocab_size() || V != beta.vocab_size())
        throw ValidationError("enumeration vocab must equal the policy vocabulary");
    double max_disc = 0.0;
    // For each prefix position t (1-based), condition on every prefix y_<t and
    // compare the two expectations over the suffix.
    for (int t = 1; t <= T; ++t) {
        const int n_prefixes = static_cast<int>(std::pow(V, t - 1)) ;
        std::vector<double> lhs(n_prefixes, 0.0), rhs(n_prefixes, 0.0);
        for_each_sequence(V, T, [&](std::span<const int> seq) {
            double log_theta_suffix = 0.0, log_beta_suffix = 0.0, log_ratio = 0.0;
            for (int k = t - 1; k < T; ++k) {  // positions t..T, 0-based k
                const double lt = theta.logprob(domain.prompt, seq.subspan(0, k), seq[k]);
                const double lb = beta.logprob(domain.prompt, seq.subspan(0, k), seq[k]);
                if (!std::isfinite(lb))
                    throw std::domain_error("zero-probability suffix under the behavior policy");
                log_theta_suffix += lt;
                log_beta_suffix += lb;
                double d = lt - lb;
                if (clip) d = std::clamp(d, clip->delta_lo, clip->delta_hi);
                log_ratio += d;
            }
            const double value = phi(seq);
            const int idx = prefix_index(seq, t - 1, V);
            lhs[idx] += std::exp(log_theta_suffix) * value;
            rhs[idx] += std::exp(log_beta_suffix) * std::exp(log_ratio) * value;
        });
        for (int i = 0; i < n_prefixes; ++i)
            max_disc = std::max(max_disc, std::abs(lhs[i] - rhs[i]));
    }
    return max_disc;
}

ReturnCheck check_return_estimator(const TabularPolicy& theta, const TabularPolicy& beta,
                                   const RewardFn& reward, double gamma, int t,
                                   std::span<const int> prefix, int n_samples,
                                   const EnumerationDomain& domain, std::uint64_t seed) {
    const int V = domain.vocab;
    const int T = domain.horizon;
    if (static_cast<int>(prefix.size()) != t)
        throw ValidationError("check_return_estimator: prefix length must equal t");
    if (t < 0 || t >= T) throw ValidationError("check_return_estimator: t out of range");
    if (V != theta.vocab_size() || V != beta.vocab_size())
        throw ValidationError("enumeration vocab must equal the policy vocabulary");
    const double discount = std::pow(gamma, T - t);

    ReturnCheck result;
    // Exact Q: enumerate pi_theta continuations of the remaining T - t tokens.
    for_each_sequence(V, T - t, [&](std::span<const int> cont) {
        std::vector<int> full(prefix.begin(), prefix.end());
        full.insert(full.end(), cont.begin(), cont.end());
        std::span<const int> fs(full);
        double log_theta = 0.0;
        for (int k = t; k < T; ++k)
            log_theta += theta.logprob(domain.prompt, fs.subspan(0, k), fs[k]);
        result.exact_q += std::exp(log_theta) * discount * reward(fs);
    });

    // Monte Carlo under pi_beta with the suffix importance ratio.
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double sum = 0.0, sum_sq = 0.0;
    std::vector<int> full(T);
    std::copy(prefix.begin(), prefix.end(), full.begin());
    for (int s = 0; s < n_samples; ++s) {
        std::span<const int> fs(full);
        double log_ratio = 0.0;
        for (int k = t; k < T; ++k) {
            const int row = beta.context_row(domain.prompt, fs.subspan(0, k));
            Eigen::VectorXd lp = beta.row_log_probs(row);
            const double u = unif(rng);
            double acc = 0.0;
            int tok = V - 1;
            for (int i = 0; i < V; ++i) {
                acc += std::exp(lp(i));
                if (u < acc) {
                    tok = i;
                    break;
                }
            }
            full[k] = tok;
            log_ratio += theta.logprob(domain.prompt, fs.subspan(0, k), tok) - lp(tok);
        }
        const double g = discount * reward(full) * std::exp(log_ratio);
        sum += g;
        sum_sq += g * g;
    }
    result.mc_mean = sum / n_samples;
    const double var = std::max(0.0, sum_sq / n_samples - result.mc_mean * result.mc_mean);
    result.std_err = std::sqrt(var / n_samples);
    return result;
}

WeightVector recompute_weights_reference(const Trajectory& traj, const TabularPolicy& target,
                                         const TabularPolicy& behavior,
                                         const WeightConfig& cfg) {
    cfg.validate();
    const std::vector<double> lp_theta = target.score_response(traj.prompt, traj.response);
    const std::vector<double> lp_beta = behavior.score_response(traj.prompt, traj.response);
    const int T = static_cast<int>(traj.response.size());

    std::vector<long double> delta(T);
    for (int t = 0; t < T; ++t)
        delta[t] = clampl(static_cast<long double>(lp_theta[t]) - lp_beta[t], cfg.delta_lo,
                          cfg.delta_hi);

    WeightVector out;
    for (int begin = 0; begin < T; begin += cfg.block_size)
        out.blocks.push_back({begin, std::min(begin + cfg.block_size, T)});
    out.rho.resize(out.blocks.size(), 0.0);
    std::vector<long double> block_ratio(out.blocks.size(), 1.0L);  // Delta_k^blk
    for (size_t k = 0; k < out.blocks.size(); ++k) {
        long double sum = 0.0L;
        for (int t = out.blocks[k].begin; t < out.blocks[k].end; ++t) {
            sum += delta[t];
            block_ratio[k] *= expl(delta[t]);
        }
        out.rho[k] = static_cast<double>(sum);
    }

    out.g_hat.resize(T);
    out.log_g.resize(T);
    if (cfg.mode == WeightMode::Uniform) {
        long double prod = 1.0L, sum = 0.0L;
        for (int t = 0; t < T; ++t) {
            prod *= expl(delta[t]);
            sum += delta[t];
        }
        const long double lg = clampl(sum, cfg.log_g_lo, cfg.log_g_hi);
        const long double g = clampl(prod, expl((long double)cfg.log_g_lo),
                                     expl((long double)cfg.log_g_hi));
        for (int t = 0; t < T; ++t) {
            out.g_hat[t] = static_cast<double>(g);
            out.log_g[t] = static_cast<double>(lg);
        }
    } else {
        const int K = static_cast<int>(out.blocks.size());
        for (int k = 0; k < K; ++k) {
            // literal definitions: S_k = prod_{m>k} Delta_m^blk, G = gamma^{T-e_k} S_k
            long double suffix = 1.0L, suffix_log = 0.0L;
            for (int m = k + 1; m < K; ++m) {
                suffix *= block_ratio[m];
                suffix_log += out.rho[m];
            }
            const int e_k = out.blocks[k].end;  // 1-based last index of block k
            long double g = powl((long double)cfg.gamma, T - e_k) * suffix;
            long double lg = (T - e_k) * logl((long double)cfg.gamma) + suffix_log;
            g = clampl(g, expl((long double)cfg.log_g_lo), expl((long double)cfg.log_g_hi));
            lg = clampl(lg, cfg.log_g_lo, cfg.log_g_hi);
            for (int t = out.blocks[k].begin; t < out.blocks[k].end; ++t) {
                out.g_hat[t] = static_cast<double>(g);
                out.log_g[t] = static_cast<double>(lg);
            }
        }
    }
    return out;
}

}  // namespace oracle
}  // namespace pear
