#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pear/policy.hpp"

namespace pear {

// Rule-verifiable token tasks. Content tokens are 0..vocab_size-2 (the top
// id is EOS); correct responses have exactly response_len tokens.
//   parity:      every response token t satisfies t % 2 == parity(prompt)
//   sorted-copy: response is the prompt sorted ascending
//   modular-sum: response is sum(prompt) in base (vocab_size - 1) digits,
//                reduced mod base^response_len
enum class TaskKind { Parity, SortedCopy, ModularSum };

TaskKind parse_task_kind(const std::string& s);
std::string to_string(TaskKind kind);

struct TaskSpec {
    TaskKind kind = TaskKind::Parity;
    int prompt_len = 4;
    int response_len = 6;
    int vocab_size = 4;
    std::uint64_t seed = 0;

    int content_vocab() const { return vocab_size - 1; }
};

struct TaskInstance {
    std::vector<int> prompt;
    std::vector<int> hidden_answer;  // one canonical correct response
    std::string split;               // "train" or "test"
};

// Deterministic given spec.seed; prompts are distinct and the train/test
// splits are disjoint by prompt. Roughly 80/20 split.
std::vector<TaskInstance> generate(const TaskSpec& spec, int count);

struct VerifyResult {
    int reward = 0;  // 0 or 1
    bool malformed = false;  // wrong response length (still reward 0)
};

VerifyResult verify(const TaskSpec& spec, std::span<const int> prompt,
                    std::span<const int> response);

std::vector<int> canonical_answer(const TaskSpec& spec, std::span<const int> prompt);

// Unbiased pass@k estimator 1 - C(n-c,k)/C(n,k), computed in log-space.
double pass_at_k(int n, int c, int k);

struct EvalReport {
    std::map<int, double> pass_at;   // k -> mean estimate over prompts
    int samples_per_prompt = 0;
    std::vector<int> correct_per_prompt;
};

// Samples fixed-length responses per prompt and scores pass@k.
EvalReport evaluate(const TabularPolicy& policy, const TaskSpec& spec,
                    const std::vector<TaskInstance>& instances,
                    std::span<const int> k_values, int samples_per_prompt,
                    std::uint64_t seed);

std::string task_jsonl_line(const TaskSpec& spec, const TaskInstance& inst);

}  // namespace pear
