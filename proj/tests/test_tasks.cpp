#include <doctest.h>

#include <cmath>
#include <set>

#include "pear/checks.hpp"
#include "pear/errors.hpp"
#include "pear/tasks.hpp"

using namespace pear;

namespace {

TaskSpec make_spec(TaskKind kind) {
    TaskSpec spec;
    spec.kind = kind;
    spec.prompt_len = 4;
    spec.response_len = kind == TaskKind::SortedCopy ? 4 : 3;
    spec.vocab_size = 5;
    spec.seed = 9;
    return spec;
}

}  // namespace

TEST_CASE("generation is deterministic with distinct prompts and a clean split") {
    for (TaskKind kind : {TaskKind::Parity, TaskKind::SortedCopy, TaskKind::ModularSum}) {
        const TaskSpec spec = make_spec(kind);
        const auto a = generate(spec, 30);
        const auto b = generate(spec, 30);
        REQUIRE(a.size() == 30);
        std::set<std::vector<int>> prompts;
        int n_train = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].prompt == b[i].prompt);
            CHECK(a[i].hidden_answer == b[i].hidden_answer);
            CHECK(prompts.insert(a[i].prompt).second);  // distinct
            n_train += a[i].split == "train";
            for (int tok : a[i].prompt) {
                CHECK(tok >= 0);
                CHECK(tok < spec.content_vocab());
            }
        }
        CHECK(n_train == 24);  // 80/20
    }
}

TEST_CASE("canonical answers verify and corruptions fail") {
    for (TaskKind kind : {TaskKind::Parity, TaskKind::SortedCopy, TaskKind::ModularSum}) {
        const TaskSpec spec = make_spec(kind);
        for (const TaskInstance& inst : generate(spec, 20)) {
            CHECK(verify(spec, inst.prompt, inst.hidden_answer).reward == 1);
            CHECK(canonical_answer(spec, inst.prompt) == inst.hidden_answer);
            // wrong length is malformed and scores zero
            std::vector<int> shorter(inst.hidden_answer.begin(), inst.hidden_answer.end() - 1);
            const VerifyResult vr = verify(spec, inst.prompt, shorter);
            CHECK(vr.reward == 0);
            CHECK(vr.malformed);
        }
    }
}

TEST_CASE("parity verification accepts any response with the right parity class") {
    TaskSpec spec = make_spec(TaskKind::Parity);
    const std::vector<int> even_prompt = {0, 2, 0, 2};
    const std::vector<int> all_even = {0, 2, 0}, twos = {2, 0, 2}, mixed = {0, 1, 0};
    CHECK(verify(spec, even_prompt, all_even).reward == 1);
    CHECK(verify(spec, even_prompt, twos).reward == 1);
    CHECK(verify(spec, even_prompt, mixed).reward == 0);
    const std::vector<int> odd_prompt = {1, 2, 0, 2};
    const std::vector<int> all_odd = {1, 3, 1}, odd_mixed = {1, 2, 1};
    CHECK(verify(spec, odd_prompt, all_odd).reward == 1);
    CHECK(verify(spec, odd_prompt, odd_mixed).reward == 0);
}

TEST_CASE("sorted-copy verification") {
    TaskSpec spec = make_spec(TaskKind::SortedCopy);
    const std::vector<int> prompt = {3, 1, 2, 1};
    const std::vector<int> sorted = {1, 1, 2, 3}, unsorted = {1, 2, 1, 3};
    CHECK(verify(spec, prompt, sorted).reward == 1);
    CHECK(verify(spec, prompt, unsorted).reward == 0);
}

TEST_CASE("modular-sum verification") {
    TaskSpec spec = make_spec(TaskKind::ModularSum);
    const std::vector<int> prompt = {3, 3, 2, 1};  // sum 9
    const std::vector<int> answer = canonical_answer(spec, prompt);
    REQUIRE(static_cast<int>(answer.size()) == spec.response_len);
    // decode base-(vocab-1) digits and compare
    long long value = 0;
    for (int d : answer) value = value * spec.content_vocab() + d;
    long long base_pow = 1;
    for (int i = 0; i < spec.response_len; ++i) base_pow *= spec.content_vocab();
    CHECK(value == 9 % base_pow);
    CHECK(verify(spec, prompt, answer).reward == 1);
    std::vector<int> wrong = answer;
    wrong.back() = (wrong.back() + 1) % spec.content_vocab();
    CHECK(verify(spec, prompt, wrong).reward == 0);
}

TEST_CASE("pass@k matches exhaustive subset enumeration") {
    // small spot checks; the full n <= 12 sweep runs in the acceptance suite
    auto brute = [](int n, int c, int k) {
        // fraction of k-subsets of n samples containing at least one of c successes
        int total = 0, hit = 0;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            if (__builtin_popcount(mask) != k) continue;
            ++total;
            // successes occupy the first c slots by symmetry
            hit += (mask & ((1u << c) - 1u)) != 0;
        }
        return static_cast<double>(hit) / total;
    };
    for (int n : {1, 4, 8}) {
        for (int c = 0; c <= n; ++c)
            for (int k = 1; k <= n; ++k)
                CHECK(pass_at_k(n, c, k) == doctest::Approx(brute(n, c, k)).epsilon(1e-12));
    }
}

TEST_CASE("pass@k bounds and monotonicity") {
    for (int n : {3, 7, 12}) {
        for (int c = 0; c <= n; ++c) {
            double prev = 0.0;
            for (int k = 1; k <= n; ++k) {
                const double v = pass_at_k(n, c, k);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                CHECK(v >= prev - 1e-15);  // non-decreasing in k
                prev = v;
            }
        }
    }
    CHECK(pass_at_k(10, 0, 3) == 0.0);
    CHECK(pass_at_k(10, 8, 3) == 1.0);  // n - c < k forces a success
    CHECK_THROWS_AS(pass_at_k(4, 2, 5), ValidationError);
}

TEST_CASE("evaluation is deterministic and bounded") {
    const TaskSpec spec = make_spec(TaskKind::Parity);
    const auto instances = generate(spec, 10);
    const TabularPolicy policy = random_policy(spec.vocab_size, 2, 4, spec.response_len, 77);
    const std::vector<int> ks = {1, 4};
    const EvalReport a = evaluate(policy, spec, instances, ks, 4, 5);
    const EvalReport b = evaluate(policy, spec, instances, ks, 4, 5);
    CHECK(a.correct_per_prompt == b.correct_per_prompt);
    for (int k : ks) {
        CHECK(a.pass_at.at(k) == b.pass_at.at(k));
        CHECK(a.pass_at.at(k) >= 0.0);
        CHECK(a.pass_at.at(k) <= 1.0);
    }
    CHECK(a.pass_at.at(4) >= a.pass_at.at(1) - 1e-15);
}
