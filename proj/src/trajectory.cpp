#include "pear/trajectory.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pear/errors.hpp"
#include "pear/policy.hpp"

namespace pear {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void append_int_array(std::string& out, const std::vector<int>& xs) {
    out += '[';
    for (size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(xs[i]);
    }
    out += ']';
}

void append_double_array(std::string& out, const std::vector<double>& xs) {
    out += '[';
    for (size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += fmt_double(xs[i]);
    }
    out += ']';
}

}  // namespace

void validate_trajectory(const Trajectory& traj, const std::string& where) {
    if (traj.response.empty())
        throw ValidationError(where + ": response must have at least one token");
    for (int tok : traj.prompt)
        if (tok < 0) throw ValidationError(where + ": negative prompt token id");
    for (int tok : traj.response)
        if (tok < 0) throw ValidationError(where + ": negative response token id");
    if (!traj.behavior_logprobs.empty()) {
        if (traj.behavior_logprobs.size() != traj.response.size())
            throw ValidationError(where + ": behavior_logprobs length " +
                                  std::to_string(traj.behavior_logprobs.size()) +
                                  " does not match response length " +
                                  std::to_string(traj.response.size()));
        for (double lp : traj.behavior_logprobs) {
            if (!std::isfinite(lp))
                throw ValidationError(where + ": non-finite behavior log-prob");
            if (lp > 0.0)
                throw ValidationError(where + ": behavior log-prob " + fmt_double(lp) +
                                      " is positive; log-probabilities must be <= 0");
        }
    }
    if (traj.label == Label::Negative && traj.reward.has_value() && *traj.reward != 0.0)
        throw ValidationError(where + ": negative-labeled trajectory carries nonzero reward");
}

TrajectoryBatch load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    TrajectoryBatch batch;
    batch.id = path;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        Trajectory traj;
        try {
            traj.prompt = rec.at("prompt").get<std::vector<int>>();
            traj.response = rec.at("response").get<std::vector<int>>();
            if (rec.contains("behavior_logprobs") && !rec["behavior_logprobs"].is_null())
                traj.behavior_logprobs = rec["behavior_logprobs"].get<std::vector<double>>();
            if (rec.contains("reward") && !rec["reward"].is_null())
                traj.reward = rec["reward"].get<double>();
            if (rec.contains("label") && !rec["label"].is_null()) {
                const std::string label = rec["label"].get<std::string>();
                if (label == "positive")
                    traj.label = Label::Positive;
                else if (label == "negative")
                    traj.label = Label::Negative;
                else
                    throw ParseError(where + ": unknown label '" + label + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        validate_trajectory(traj, where);
        batch.items.push_back(std::move(traj));
    }
    return batch;
}

void write_jsonl(const TrajectoryBatch& batch, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    // Fixed key order for golden files: prompt, response, behavior_logprobs,
    // reward, label.
    for (const Trajectory& traj : batch.items) {
        std::string line = "{\"prompt\":";
        append_int_array(line, traj.prompt);
        line += ",\"response\":";
        append_int_array(line, traj.response);
        line += ",\"behavior_logprobs\":";
        append_double_array(line, traj.behavior_logprobs);
        if (traj.reward.has_value()) {
            line += ",\"reward\":";
            line += fmt_double(*traj.reward);
        }
        line += ",\"label\":\"";
        line += traj.label == Label::Positive ? "positive" : "negative";
        line += "\"}";
        out << line << '\n';
    }
}

TrajectoryBatch annotate_behavior(const TrajectoryBatch& batch, const TabularPolicy& policy) {
    TrajectoryBatch out = batch;
    for (size_t i = 0; i < out.items.size(); ++i) {
        Trajectory& traj = out.items[i];
        const std::string where = batch.id + " record " + std::to_string(i);
        for (size_t t = 0; t < traj.response.size(); ++t) {
            if (traj.response[t] >= policy.vocab_size())
                throw ValidationError(where + " position " + std::to_string(t) +
                                      ": token " + std::to_string(traj.response[t]) +
                                      " outside vocabulary of size " +
                                      std::to_string(policy.vocab_size()));
        }
        traj.behavior_logprobs = policy.score_response(traj.prompt, traj.response);
        for (size_t t = 0; t < traj.behavior_logprobs.size(); ++t) {
            if (!std::isfinite(traj.behavior_logprobs[t]))
                throw ValidationError(where + " position " + std::to_string(t) +
                                      ": logged token has probability 0 under the "
                                      "behavior policy");
        }
    }
    return out;
}

}  // namespace pear
