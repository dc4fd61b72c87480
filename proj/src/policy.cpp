#include "pear/policy.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "pear/errors.hpp"
#include "pear/rng.hpp"

namespace pear {

namespace {

constexpr const char* kCheckpointVersion = "tabular-policy-v1";

std::uint64_t fnv1a(const unsigned char* data, size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_prompt(std::span<const int> prompt) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int tok : prompt) {
        std::uint64_t v = static_cast<std::uint64_t>(tok);
        h = fnv1a(reinterpret_cast<const unsigned char*>(&v), sizeof(v), h);
    }
    return h;
}

int ipow(int base, int exp) {
    int r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

std::string to_hex(const unsigned char* data, size_t len) {
    static const char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (size_t i = 0; i < len; ++i) {
        out += digits[data[i] >> 4];
        out += digits[data[i] & 0xf];
    }
    return out;
}

std::vector<unsigned char> from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0) throw ParseError("odd-length hex payload");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        throw ParseError("invalid hex digit in payload");
    };
    std::vector<unsigned char> out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<unsigned char>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    return out;
}

}  // namespace

TabularPolicy::TabularPolicy(int vocab_size, int context_order, int num_buckets, int max_len)
    : vocab_(vocab_size), order_(context_order), buckets_(num_buckets), max_len_(max_len) {
    if (vocab_size < 2) throw ValidationError("vocab_size must be >= 2 (content + EOS)");
    if (context_order < 1) throw ValidationError("context_order must be >= 1");
    if (num_buckets < 1) throw ValidationError("num_buckets must be >= 1");
    if (max_len < 1) throw ValidationError("max_len must be >= 1");
    const int ctx_rows = ipow(vocab_size + 1, context_order);  // pad symbol = vocab
    logits_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_buckets) * ctx_rows, vocab_size);
}

TabularPolicy TabularPolicy::uniform(int vocab_size, int context_order, int num_buckets,
                                     int max_len) {
    return TabularPolicy(vocab_size, context_order, num_buckets, max_len);
}

int TabularPolicy::context_row(std::span<const int> prompt,
                               std::span<const int> response_prefix) const {
    const int pad = vocab_;
    const int base = vocab_ + 1;
    int ctx = 0;
    // last `order_` prefix tokens, left-padded
    for (int i = 0; i < order_; ++i) {
        const int pos = static_cast<int>(response_prefix.size()) - order_ + i;
        const int digit = pos >= 0 ? response_prefix[pos] : pad;
        ctx = ctx * base + digit;
    }
    const int bucket = static_cast<int>(hash_prompt(prompt) % static_cast<std::uint64_t>(buckets_));
    return bucket * ipow(base, order_) + ctx;
}

Eigen::VectorXd TabularPolicy::row_log_probs(int row) const {
    Eigen::VectorXd v = logits_.row(row).transpose();
    const double m = v.maxCoeff();
    const double lse = m + std::log((v.array() - m).exp().sum());
    return v.array() - lse;
}

Eigen::VectorXd TabularPolicy::row_probs(int row) const {
    return row_log_probs(row).array().exp();
}

double TabularPolicy::logprob(std::span<const int> prompt, std::span<const int> response_prefix,
                              int token) const {
    return row_log_probs(context_row(prompt, response_prefix))(token);
}

double TabularPolicy::prob(std::span<const int> prompt, std::span<const int> response_prefix,
                           int token) const {
    return std::exp(logprob(prompt, response_prefix, token));
}

std::vector<double> TabularPolicy::score_response(std::span<const int> prompt,
                                                  std::span<const int> response) const {
    std::vector<double> out(response.size());
    for (size_t t = 0; t < response.size(); ++t)
        out[t] = logprob(prompt, response.subspan(0, t), response[t]);
    return out;
}

int TabularPolicy::sample_row(int row, std::mt19937_64& rng, bool exclude_eos,
                              double* logprob_out) const {
    Eigen::VectorXd lp = row_log_probs(row);
    Eigen::VectorXd p = lp.array().exp();
    const int limit = exclude_eos ? vocab_ - 1 : vocab_;
    double total = 0.0;
    for (int i = 0; i < limit; ++i) total += p(i);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng) * total;
    double acc = 0.0;
    int token = limit - 1;
    for (int i = 0; i < limit; ++i) {
        acc += p(i);
        if (u < acc) {
            token = i;
            break;
        }
    }
    if (logprob_out) {
        *logprob_out = exclude_eos ? lp(token) - std::log(total) : lp(token);
    }
    return token;
}

Trajectory TabularPolicy::sample(std::span<const int> prompt, std::uint64_t seed) const {
    auto rng = make_rng(seed);
    Trajectory traj;
    traj.prompt.assign(prompt.begin(), prompt.end());
    for (int t = 0; t < max_len_; ++t) {
        const int row = context_row(prompt, traj.response);
        double lp = 0.0;
        const int token = sample_row(row, rng, /*exclude_eos=*/false, &lp);
        traj.response.push_back(token);
        traj.behavior_logprobs.push_back(lp);
        if (token == eos_token()) break;
    }
    return traj;
}

Trajectory TabularPolicy::sample_fixed(std::span<const int> prompt, int len,
                                       std::uint64_t seed) const {
    auto rng = make_rng(seed);
    Trajectory traj;
    traj.prompt.assign(prompt.begin(), prompt.end());
    for (int t = 0; t < len; ++t) {
        const int row = context_row(prompt, traj.response);
        double lp = 0.0;
        const int token = sample_row(row, rng, /*exclude_eos=*/true, &lp);
        traj.response.push_back(token);
        traj.behavior_logprobs.push_back(lp);
    }
    return traj;
}

void TabularPolicy::save(const std::string& path) const {
    const auto* bytes = reinterpret_cast<const unsigned char*>(logits_.data());
    const size_t nbytes = sizeof(double) * static_cast<size_t>(logits_.size());
    nlohmann::ordered_json j;
    j["version"] = kCheckpointVersion;
    j["vocab_size"] = vocab_;
    j["context_order"] = order_;
    j["num_buckets"] = buckets_;
    j["max_len"] = max_len_;
    j["rows"] = logits_.rows();
    // column-major raw doubles, hex-encoded for a bit-exact round trip
    j["logits_hex"] = to_hex(bytes, nbytes);
    j["checksum"] = fnv1a(bytes, nbytes);
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << j.dump() << '\n';
}

TabularPolicy TabularPolicy::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    const std::string version = j.value("version", "");
    if (version != kCheckpointVersion)
        throw ValidationError(path + ": checkpoint version '" + version + "' not supported (want " +
                              std::string(kCheckpointVersion) + ")");
    TabularPolicy policy(j.at("vocab_size").get<int>(), j.at("context_order").get<int>(),
                         j.at("num_buckets").get<int>(), j.at("max_len").get<int>());
    const auto bytes = from_hex(j.at("logits_hex").get<std::string>());
    const size_t expect = sizeof(double) * static_cast<size_t>(policy.logits_.size());
    if (bytes.size() != expect)
        throw ValidationError(path + ": checksum error (payload has " +
                              std::to_string(bytes.size()) + " bytes, expected " +
                              std::to_string(expect) + ")");
    if (fnv1a(bytes.data(), bytes.size()) != j.at("checksum").get<std::uint64_t>())
        throw ValidationError(path + ": checksum error (corrupt payload)");
    std::memcpy(policy.logits_.data(), bytes.data(), bytes.size());
    return policy;
}

Eigen::MatrixXd grad_weighted_nll(const TabularPolicy& policy, const Trajectory& traj,
                                  std::span<const double> weights) {
    if (weights.size() != traj.response.size())
        throw ValidationError("grad_weighted_nll: weight length mismatch");
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(policy.rows(), policy.vocab_size());
    std::span<const int> response(traj.response);
    for (size_t t = 0; t < traj.response.size(); ++t) {
        const int row = policy.context_row(traj.prompt, response.subspan(0, t));
        Eigen::VectorXd p = policy.row_probs(row);
        p(traj.response[t]) -= 1.0;
        grad.row(row) += weights[t] * p.transpose();
    }
    return grad;
}

}  // namespace pear
