#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pear/policy.hpp"

namespace pear {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Seeded policy with standard-normal logits; shared by the oracle battery
// and the tests.
TabularPolicy random_policy(int vocab, int order, int buckets, int max_len,
                            std::uint64_t seed, double scale = 1.0);

// The oracle-check battery: change-of-measure identity, clipping bias,
// differential weight agreement, return-estimator agreement.
std::vector<CheckResult> run_oracle_battery();

}  // namespace pear
