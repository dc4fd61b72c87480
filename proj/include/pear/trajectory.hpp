#pragma once

#include <optional>
#include <string>
#include <vector>

namespace pear {

class TabularPolicy;

enum class Label { Positive, Negative };

// One logged prompt-response pair with per-token behavior log-probs.
// behavior_logprobs is empty until the trajectory has been scored
// (either loaded from the log or filled by annotate_behavior).
struct Trajectory {
    std::vector<int> prompt;
    std::vector<int> response;
    std::vector<double> behavior_logprobs;
    std::optional<double> reward;
    Label label = Label::Positive;

    int length() const { return static_cast<int>(response.size()); }
    bool has_behavior_logprobs() const {
        return behavior_logprobs.size() == response.size();
    }
};

struct TrajectoryBatch {
    std::string id;
    std::vector<Trajectory> items;
};

// Validates one trajectory against the data invariants; `where` names the
// record in error messages. Throws ValidationError.
void validate_trajectory(const Trajectory& traj, const std::string& where);

// JSONL interchange: one object per line with keys
// prompt, response, behavior_logprobs, reward, label.
TrajectoryBatch load_jsonl(const std::string& path);
void write_jsonl(const TrajectoryBatch& batch, const std::string& path);

// Scores every response token under `policy` and stores the log-probs,
// overwriting any existing values. Rejects tokens the policy gives
// probability zero (impossible under the behavior policy).
TrajectoryBatch annotate_behavior(const TrajectoryBatch& batch, const TabularPolicy& policy);

}  // namespace pear
