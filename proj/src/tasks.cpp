#include "pear/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "pear/errors.hpp"
#include "pear/rng.hpp"

namespace pear {

namespace {

long long response_value(std::span<const int> response, int base) {
    long long v = 0;
    for (int d : response) v = v * base + d;
    return v;
}

long long pow_ll(int base, int exp) {
    long long v = 1;
    for (int i = 0; i < exp; ++i) v *= base;
    return v;
}

}  // namespace

TaskKind parse_task_kind(const std::string& s) {
    if (s == "parity") return TaskKind::Parity;
    if (s == "sorted-copy") return TaskKind::SortedCopy;
    if (s == "modular-sum") return TaskKind::ModularSum;
    throw ParseError("unknown task kind '" + s + "'");
}

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::Parity: return "parity";
        case TaskKind::SortedCopy: return "sorted-copy";
        case TaskKind::ModularSum: return "modular-sum";
    }
    return "?";
}

std::vector<int> canonical_answer(const TaskSpec& spec, std::span<const int> prompt) {
    const int base = spec.content_vocab();
    switch (spec.kind) {
        case TaskKind::Parity: {
            long long sum = 0;
            for (int tok : prompt) sum += tok;
            return std::vector<int>(spec.response_len, static_cast<int>(sum % 2));
        }
        case TaskKind::SortedCopy: {
            std::vector<int> ans(prompt.begin(), prompt.end());
            std::sort(ans.begin(), ans.end());
            return ans;
        }
        case TaskKind::ModularSum: {
            long long sum = 0;
            for (int tok : prompt) sum += tok;
            long long v = sum % pow_ll(base, spec.response_len);
            std::vector<int> ans(spec.response_len, 0);
            for (int i = spec.response_len - 1; i >= 0; --i) {
                ans[i] = static_cast<int>(v % base);
                v /= base;
            }
            return ans;
        }
    }
    throw ValidationError("unreachable task kind");
}

std::vector<TaskInstance> generate(const TaskSpec& spec, int count) {
    if (count < 1) throw ValidationError("generate: count must be >= 1");
    if (spec.kind == TaskKind::SortedCopy && spec.response_len != spec.prompt_len)
        throw ValidationError("sorted-copy needs response_len == prompt_len");
    if (spec.content_vocab() < 2)
        throw ValidationError("vocab_size must leave at least two content tokens");
    auto rng = make_rng(derive_seed(spec.seed, 0x7a51));
    std::uniform_int_distribution<int> tok(0, spec.content_vocab() - 1);
    std::set<std::vector<int>> seen;
    std::vector<TaskInstance> out;
    long long attempts = 0;
    const long long max_attempts = 1000LL * count + 10000;
    while (static_cast<int>(out.size()) < count) {
        if (++attempts > max_attempts)
            throw ValidationError("generate: not enough distinct prompts for this spec");
        std::vector<int> prompt(spec.prompt_len);
        for (int& p : prompt) p = tok(rng);
        if (!seen.insert(prompt).second) continue;
        TaskInstance inst;
        inst.hidden_answer = canonical_answer(spec, prompt);
        inst.prompt = std::move(prompt);
        out.push_back(std::move(inst));
    }
    const int n_train = std::max(1, (count * 4) / 5);
    for (int i = 0; i < count; ++i) out[i].split = i < n_train ? "train" : "test";
    return out;
}

VerifyResult verify(const TaskSpec& spec, std::span<const int> prompt,
                    std::span<const int> response) {
    if (static_cast<int>(response.size()) != spec.response_len) return {0, true};
    const int base = spec.content_vocab();
    for (int d : response)
        if (d < 0 || d >= base) return {0, false};
    switch (spec.kind) {
        case TaskKind::Parity: {
            long long sum = 0;
            for (int tok : prompt) sum += tok;
            const int parity = static_cast<int>(sum % 2);
            for (int d : response)
                if (d % 2 != parity) return {0, false};
            return {1, false};
        }
        case TaskKind::SortedCopy: {
            std::vector<int> sorted(prompt.begin(), prompt.end());
            std::sort(sorted.begin(), sorted.end());
            return {std::equal(sorted.begin(), sorted.end(), response.begin(), response.end()) ? 1
                                                                                              : 0,
                    false};
        }
        case TaskKind::ModularSum: {
            long long sum = 0;
            for (int tok : prompt) sum += tok;
            const long long want = sum % pow_ll(base, spec.response_len);
            return {response_value(response, base) == want ? 1 : 0, false};
        }
    }
    return {0, false};
}

double pass_at_k(int n, int c, int k) {
    if (k > n) throw ValidationError("pass_at_k: k must be <= n");
    if (k < 1 || c < 0 || c > n) throw ValidationError("pass_at_k: bad arguments");
    if (c == 0) return 0.0;
    if (n - c < k) return 1.0;
    // 1 - C(n-c, k) / C(n, k) in log-space
    auto log_choose = [](int a, int b) {
        return std::lgamma(a + 1.0) - std::lgamma(b + 1.0) - std::lgamma(a - b + 1.0);
    };
    return 1.0 - std::exp(log_choose(n - c, k) - log_choose(n, k));
}

EvalReport evaluate(const TabularPolicy& policy, const TaskSpec& spec,
                    const std::vector<TaskInstance>& instances,
                    std::span<const int> k_values, int samples_per_prompt,
                    std::uint64_t seed) {
    if (instances.empty()) throw ValidationError("evaluate: no instances");
    for (int k : k_values)
        if (k > samples_per_prompt)
            throw ValidationError("evaluate: k exceeds samples per prompt");
    EvalReport report;
    report.samples_per_prompt = samples_per_prompt;
    for (size_t i = 0; i < instances.size(); ++i) {
        int correct = 0;
        for (int s = 0; s < samples_per_prompt; ++s) {
            const Trajectory roll = policy.sample_fixed(
                instances[i].prompt, spec.response_len,
                derive_seed(seed, (static_cast<std::uint64_t>(i) << 20) | s));
            correct += verify(spec, instances[i].prompt, roll.response).reward;
        }
        report.correct_per_prompt.push_back(correct);
    }
    for (int k : k_values) {
        double total = 0.0;
        for (int c : report.correct_per_prompt) total += pass_at_k(samples_per_prompt, c, k);
        report.pass_at[k] = total / static_cast<double>(report.correct_per_prompt.size());
    }
    return report;
}

std::string task_jsonl_line(const TaskSpec& spec, const TaskInstance& inst) {
    std::string line = "{\"kind\":\"" + to_string(spec.kind) + "\",\"prompt\":[";
    for (size_t i = 0; i < inst.prompt.size(); ++i) {
        if (i) line += ',';
        line += std::to_string(inst.prompt[i]);
    }
    line += "],\"hidden_answer\":[";
    for (size_t i = 0; i < inst.hidden_answer.size(); ++i) {
        if (i) line += ',';
        line += std::to_string(inst.hidden_answer[i]);
    }
    line += "],\"split\":\"" + inst.split + "\"}";
    return line;
}

}  // namespace pear
