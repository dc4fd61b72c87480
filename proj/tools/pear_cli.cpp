#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "pear/checks.hpp"
#include "pear/config.hpp"
#include "pear/errors.hpp"
#include "pear/metrics.hpp"
#include "pear/oracle.hpp"
#include "pear/rng.hpp"
#include "pear/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool verbose() {
    const char* env = std::getenv("PEAR_VERBOSE");
    return env && *env && std::string(env) != "0";
}

void info(const std::string& msg) {
    if (verbose()) std::cerr << "[pear] " << msg << '\n';
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw pear::ParseError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw pear::ParseError(path + ": " + e.what());
    }
    return j;
}

Eigen::MatrixXd load_matrix(const std::string& path) {
    const json j = load_json_file(path);
    const int rows = j.at("rows").get<int>();
    const int cols = j.at("cols").get<int>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<int>(data.size()) != rows * cols)
        throw pear::ValidationError(path + ": data length does not match rows*cols");
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = data[static_cast<size_t>(r) * cols + c];
    return m;
}

int cmd_weights(const std::string& input, const std::string& output,
                const std::string& target_path, const pear::WeightConfig& cfg) {
    const pear::TabularPolicy target = pear::TabularPolicy::load(target_path);
    const pear::TrajectoryBatch batch = pear::load_jsonl(input);
    std::ofstream out(output);
    if (!out) throw pear::ParseError("cannot open " + output + " for writing");
    for (size_t i = 0; i < batch.items.size(); ++i) {
        const pear::TokenRatios ratios =
            pear::token_log_ratios(batch.items[i], target, cfg);
        const pear::WeightVector weights = pear::compute_weights(ratios, cfg);
        out << pear::weights_jsonl_line(std::to_string(i), cfg, ratios, weights) << '\n';
    }
    info("wrote weights for " + std::to_string(batch.items.size()) + " trajectories");
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& output_dir_override) {
    const json j = load_json_file(config_path);
    pear::PipelineConfig cfg = pear::pipeline_config_from_json(j);
    std::string output_dir = j.value("output_dir", std::string("out"));
    if (!output_dir_override.empty()) output_dir = output_dir_override;
    if (!cfg.behavior_checkpoint.empty() && !fs::exists(cfg.behavior_checkpoint))
        throw pear::ValidationError("behavior checkpoint not found: " + cfg.behavior_checkpoint);
    fs::create_directories(output_dir);
    // capture the config into the output directory for provenance
    {
        std::ofstream cap(fs::path(output_dir) / "config.json");
        cap << j.dump(2) << '\n';
    }
    info("running " + std::to_string(cfg.arms.size()) + " arm(s)");
    const pear::PipelineResult result = pear::run_pipeline(cfg);
    ordered_json arms = ordered_json::array();
    for (const pear::ArmReport& arm : result.arms) arms.push_back(pear::arm_report_to_json(arm));
    {
        std::ofstream out(fs::path(output_dir) / "arm_reports.json");
        out << arms.dump(2) << '\n';
    }
    if (result.behavior)
        result.behavior->save((fs::path(output_dir) / "behavior.ckpt.json").string());
    for (size_t i = 0; i < result.arms.size(); ++i) {
        const std::string& name = result.arms[i].name;
        std::ofstream log(fs::path(output_dir) / (name + "_offline_steps.jsonl"));
        for (const pear::StepLog& s : result.offline_logs[i])
            log << pear::step_log_jsonl_line(s) << '\n';
        std::ofstream olog(fs::path(output_dir) / (name + "_online_steps.jsonl"));
        for (const pear::StepLog& s : result.online_logs[i])
            olog << pear::step_log_jsonl_line(s) << '\n';
        result.offline_policies[i].save(
            (fs::path(output_dir) / (name + "_offline.ckpt.json")).string());
        result.online_policies[i].save(
            (fs::path(output_dir) / (name + "_online.ckpt.json")).string());
    }
    const std::string table = pear::report_table(result.arms, cfg.eval_k);
    {
        std::ofstream out(fs::path(output_dir) / "table.tsv");
        out << table;
    }
    std::cout << table;
    return 0;
}

int cmd_oracle_check() {
    const auto results = pear::run_oracle_battery();
    bool all_ok = true;
    for (const pear::CheckResult& r : results) {
        std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.detail << ")\n";
        all_ok = all_ok && r.passed;
    }
    return all_ok ? 0 : 1;
}

int cmd_metrics(const std::string& base_path, const std::string& trained_path,
                const std::string& calibration_path, const std::string& grad_off_path,
                const std::string& grad_on_path, int k, double epsilon,
                const std::string& out_path) {
    const pear::TabularPolicy base = pear::TabularPolicy::load(base_path);
    const pear::TabularPolicy trained = pear::TabularPolicy::load(trained_path);
    if (base.rows() != trained.rows() || base.vocab_size() != trained.vocab_size())
        throw pear::ValidationError(
            "checkpoint shapes differ: " + std::to_string(base.rows()) + "x" +
            std::to_string(base.vocab_size()) + " vs " + std::to_string(trained.rows()) + "x" +
            std::to_string(trained.vocab_size()));
    pear::DriftReport report;
    report.sparsity = pear::update_sparsity(base.logits(), trained.logits(), epsilon);
    report.nss = pear::nss(base.logits(), trained.logits());
    report.mean_principal_angle = std::numeric_limits<double>::quiet_NaN();
    ordered_json j;
    if (!calibration_path.empty()) {
        const pear::TrajectoryBatch calib = pear::load_jsonl(calibration_path);
        report.forward_kl = pear::forward_kl(base, trained, calib);
        j["forward_kl"] = report.forward_kl;
    }
    j["sparsity"] = report.sparsity;
    j["sparsity_epsilon"] = epsilon;
    j["nss"] = report.nss;
    if (!grad_off_path.empty() && !grad_on_path.empty()) {
        const Eigen::MatrixXd g_off = load_matrix(grad_off_path);
        const Eigen::MatrixXd g_on = load_matrix(grad_on_path);
        const int use_k =
            std::min<int>(k, static_cast<int>(std::min(g_off.rows(), g_off.cols())));
        const pear::RotationReport rot = pear::gradient_rotation(g_off, g_on, use_k);
        report.mean_principal_angle = rot.mean_angle;
        j["mean_principal_angle"] = rot.mean_angle;
        j["cosines"] = rot.cosines;
        j["k"] = use_k;
    }
    const std::string text = j.dump(2);
    if (out_path.empty()) {
        std::cout << text << '\n';
    } else {
        std::ofstream out(out_path);
        out << text << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"importance-weighted offline fine-tuning laboratory"};
    app.require_subcommand(1);

    // weights
    auto* weights = app.add_subcommand("weights", "compute per-token loss weights");
    std::string w_input, w_output, w_target, w_mode = "suffix";
    int w_block = 1;
    double w_gamma = 0.999;
    std::vector<double> w_delta_clip = {-0.08, 0.3}, w_g_clip = {-10, 5};
    weights->add_option("input", w_input, "trajectory JSONL")->required();
    weights->add_option("output", w_output, "weights JSONL")->required();
    weights->add_option("--target", w_target, "target policy checkpoint")->required();
    weights->add_option("--mode", w_mode, "uniform or suffix");
    weights->add_option("--block-size", w_block, "block size B");
    weights->add_option("--gamma", w_gamma, "discount");
    weights->add_option("--delta-clip", w_delta_clip, "per-token log-ratio clip")->expected(2);
    weights->add_option("--g-clip-log", w_g_clip, "log weight clip")->expected(2);

    // annotate
    auto* annotate = app.add_subcommand("annotate", "fill behavior log-probs from a policy");
    std::string a_input, a_output, a_policy;
    annotate->add_option("input", a_input)->required();
    annotate->add_option("output", a_output)->required();
    annotate->add_option("--policy", a_policy, "behavior policy checkpoint")->required();

    // train-offline
    auto* toff = app.add_subcommand("train-offline", "weighted-loss offline training");
    std::string to_data, to_init, to_arm, to_out, to_log;
    toff->add_option("--data", to_data, "annotated trajectory JSONL")->required();
    toff->add_option("--init", to_init, "initial policy checkpoint")->required();
    toff->add_option("--config", to_arm, "offline arm config JSON")->required();
    toff->add_option("--out", to_out, "trained checkpoint path")->required();
    toff->add_option("--log", to_log, "step log JSONL path");

    // train-online
    auto* ton = app.add_subcommand("train-online", "group-relative policy-gradient RL");
    std::string tn_init, tn_task, tn_cfg, tn_out, tn_log;
    int tn_prompts = 40;
    ton->add_option("--init", tn_init, "initial policy checkpoint")->required();
    ton->add_option("--task", tn_task, "task spec JSON")->required();
    ton->add_option("--config", tn_cfg, "online config JSON");
    ton->add_option("--out", tn_out, "trained checkpoint path")->required();
    ton->add_option("--log", tn_log, "step log JSONL path");
    ton->add_option("--n-prompts", tn_prompts, "generated task instances");

    // run
    auto* run = app.add_subcommand("run", "full multi-arm offline+online experiment");
    std::string r_config, r_outdir;
    run->add_option("config", r_config, "experiment config JSON")->required();
    run->add_option("--output-dir", r_outdir, "overrides output_dir from the config");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "pass@k evaluation of a checkpoint");
    std::string e_policy, e_task;
    std::vector<int> e_k = {1, 8};
    int e_samples = 8, e_prompts = 40;
    std::uint64_t e_seed = 0;
    eval->add_option("--policy", e_policy)->required();
    eval->add_option("--task", e_task, "task spec JSON")->required();
    eval->add_option("--k", e_k, "k values");
    eval->add_option("--samples", e_samples, "samples per prompt");
    eval->add_option("--n-prompts", e_prompts);
    eval->add_option("--seed", e_seed);

    // oracle-check
    app.add_subcommand("oracle-check", "run the enumeration/identity oracle battery");

    // metrics
    auto* metrics = app.add_subcommand("metrics", "checkpoint-pair drift report");
    std::string m_base, m_trained, m_calib, m_goff, m_gon, m_out;
    int m_k = 128;
    double m_eps = pear::kDefaultSparsityEpsilon;
    metrics->add_option("--base", m_base)->required();
    metrics->add_option("--trained", m_trained)->required();
    metrics->add_option("--calibration", m_calib, "trajectory JSONL for forward KL");
    metrics->add_option("--grad-offline", m_goff, "gradient dump JSON");
    metrics->add_option("--grad-online", m_gon, "gradient dump JSON");
    metrics->add_option("--k", m_k, "subspace rank for rotation");
    metrics->add_option("--epsilon", m_eps, "sparsity threshold");
    metrics->add_option("--out", m_out, "write report here instead of stdout");

    // report
    auto* report = app.add_subcommand("report", "print the arm comparison table");
    std::string rep_input;
    std::vector<int> rep_k = {1, 8};
    report->add_option("input", rep_input, "arm_reports.json")->required();
    report->add_option("--k", rep_k, "k columns");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (weights->parsed()) {
            pear::WeightConfig cfg;
            cfg.mode = pear::parse_weight_mode(w_mode);
            cfg.block_size = w_block;
            cfg.gamma = w_gamma;
            cfg.delta_lo = w_delta_clip[0];
            cfg.delta_hi = w_delta_clip[1];
            cfg.log_g_lo = w_g_clip[0];
            cfg.log_g_hi = w_g_clip[1];
            cfg.validate();
            return cmd_weights(w_input, w_output, w_target, cfg);
        }
        if (annotate->parsed()) {
            const pear::TabularPolicy policy = pear::TabularPolicy::load(a_policy);
            pear::write_jsonl(pear::annotate_behavior(pear::load_jsonl(a_input), policy),
                              a_output);
            return 0;
        }
        if (toff->parsed()) {
            const pear::TabularPolicy init = pear::TabularPolicy::load(to_init);
            const pear::OfflineConfig cfg =
                pear::offline_config_from_json(load_json_file(to_arm));
            const pear::OfflineResult result =
                pear::train_offline(init, pear::load_jsonl(to_data), cfg);
            result.policy.save(to_out);
            if (!to_log.empty()) {
                std::ofstream log(to_log);
                for (const pear::StepLog& s : result.steps)
                    log << pear::step_log_jsonl_line(s) << '\n';
            }
            return 0;
        }
        if (ton->parsed()) {
            const pear::TabularPolicy init = pear::TabularPolicy::load(tn_init);
            const pear::TaskSpec task = pear::task_spec_from_json(load_json_file(tn_task));
            pear::OnlineConfig cfg;
            if (!tn_cfg.empty()) cfg = pear::online_config_from_json(load_json_file(tn_cfg));
            auto instances = pear::generate(task, tn_prompts);
            std::vector<pear::TaskInstance> train;
            for (auto& inst : instances)
                if (inst.split == "train") train.push_back(std::move(inst));
            const pear::OnlineResult result = pear::train_online(init, task, train, cfg);
            result.policy.save(tn_out);
            if (!tn_log.empty()) {
                std::ofstream log(tn_log);
                for (const pear::StepLog& s : result.steps)
                    log << pear::step_log_jsonl_line(s) << '\n';
            }
            return 0;
        }
        if (run->parsed()) return cmd_run(r_config, r_outdir);
        if (eval->parsed()) {
            const pear::TabularPolicy policy = pear::TabularPolicy::load(e_policy);
            const pear::TaskSpec task = pear::task_spec_from_json(load_json_file(e_task));
            auto instances = pear::generate(task, e_prompts);
            std::vector<pear::TaskInstance> test;
            for (auto& inst : instances)
                if (inst.split == "test") test.push_back(std::move(inst));
            const pear::EvalReport rep =
                pear::evaluate(policy, task, test, e_k, e_samples, e_seed);
            ordered_json j;
            for (const auto& [k, v] : rep.pass_at) j["pass_at_" + std::to_string(k)] = v;
            j["samples_per_prompt"] = rep.samples_per_prompt;
            j["correct_per_prompt"] = rep.correct_per_prompt;
            std::cout << j.dump(2) << '\n';
            return 0;
        }
        if (app.get_subcommand("oracle-check")->parsed()) return cmd_oracle_check();
        if (metrics->parsed())
            return cmd_metrics(m_base, m_trained, m_calib, m_goff, m_gon, m_k, m_eps, m_out);
        if (report->parsed()) {
            const json arms_json = load_json_file(rep_input);
            std::vector<pear::ArmReport> arms;
            for (const auto& a : arms_json) arms.push_back(pear::arm_report_from_json(a));
            std::cout << pear::report_table(arms, rep_k);
            return 0;
        }
    } catch (const pear::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
