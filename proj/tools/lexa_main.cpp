#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lexa/agent.hpp"
#include "lexa/checkpoint.hpp"
#include "lexa/envs.hpp"
#include "lexa/export.hpp"
#include "lexa/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace lexa;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

int cmd_train(const std::string& config_path, int64_t seed_override, bool has_seed, const std::string& outdir) {
    TrainConfig cfg;
    try {
        cfg = TrainConfig::from_json_file(config_path);
        if (has_seed) cfg.seed = static_cast<uint64_t>(seed_override);
        cfg.validate();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error%s%s: %s\n", e.field.empty() ? "" : " in field ",
                     e.field.empty() ? "" : e.field.c_str(), e.what());
        return kExitUsage;
    }
    try {
        Trainer trainer(cfg, outdir);
        trainer.run();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "training failed: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& goals_path, int episodes_per_goal,
             const std::string& csv_path, uint64_t seed) {
    std::vector<GoalSpec> goals;
    TrainConfig cfg;
    try {
        goals = load_goals_json(goals_path);
        if (goals.empty()) throw std::runtime_error("goal file holds no goals");

        // The checkpoint's meta carries the config it was trained with.
        auto meta = nlohmann::json::parse(read_checkpoint_meta(ckpt_path));
        cfg = TrainConfig::from_json_string(meta.at("config").dump());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "eval setup failed: %s\n", e.what());
        return kExitUsage;
    }

    if (cfg.env_kind() != goals.front().env) {
        std::fprintf(stderr, "environment mismatch: checkpoint is %s but goals target %s\n", cfg.env.c_str(),
                     env_name(goals.front().env).c_str());
        return kExitUsage;
    }

    try {
        LexaAgent agent(cfg);
        load_checkpoint(ckpt_path, agent.params());
        Env env(cfg.env_kind());
        auto table = evaluate(agent, env, goals, episodes_per_goal, seed);

        std::printf("%-16s %-14s %s\n", "goal_id", "success_rate", "episodes");
        for (const auto& row : table.rows)
            std::printf("%-16s %-14.3f %d\n", row.goal_id.c_str(), row.success_rate, row.episodes);
        std::printf("%-16s %-14.3f %d\n", "mean", table.mean_success, episodes_per_goal);

        std::ofstream csv(csv_path, std::ios::trunc);
        csv << "goal_id,success_rate,episodes\n";
        for (const auto& row : table.rows)
            csv << row.goal_id << "," << row.success_rate << "," << row.episodes << "\n";
    } catch (const std::exception& e) {
        std::fprintf(stderr, "eval failed: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}

int cmd_export(const std::string& run_dir, const std::string& what, const std::string& out_dir) {
    try {
        ExportResult res;
        if (what == "curves") {
            res = export_curves(run_dir, out_dir);
        } else if (what == "heatmap") {
            res = export_heatmap(run_dir, out_dir);
        } else if (what == "coincidental") {
            res = export_coincidental(run_dir, out_dir);
        } else {
            std::fprintf(stderr, "unknown --what value \"%s\" (expected curves|heatmap|coincidental)\n", what.c_str());
            return kExitUsage;
        }
        for (const auto& f : res.files) std::printf("wrote %s\n", f.c_str());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "export failed: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}

int cmd_goals(const std::string& env, const std::string& out) {
    try {
        save_goals_json(out, benchmark_goals(env_from_name(env)));
        std::printf("wrote %s\n", out.c_str());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "goals failed: %s\n", e.what());
        return kExitUsage;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LEXA: unsupervised goal-reaching agent on toy pixel environments"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "run unsupervised training");
    std::string config_path, outdir = "lexa_run";
    int64_t seed = 0;
    train->add_option("--config", config_path, "training config JSON")->required();
    auto* seed_opt = train->add_option("--seed", seed, "seed override");
    train->add_option("--outdir", outdir, "run directory");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a goal set");
    std::string ckpt_path, goals_path, csv_path = "eval_results.csv";
    int episodes_per_goal = 10;
    uint64_t eval_seed = 1234;
    eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    eval->add_option("--goals", goals_path, "goal set JSON")->required();
    eval->add_option("--episodes-per-goal", episodes_per_goal, "episodes per goal");
    eval->add_option("--csv", csv_path, "CSV output path");
    eval->add_option("--seed", eval_seed, "evaluation seed");

    auto* exp = app.add_subcommand("export", "export metrics artifacts from a run directory");
    std::string run_dir, what, export_out = "export";
    exp->add_option("--run", run_dir, "run directory")->required();
    exp->add_option("--what", what, "curves|heatmap|coincidental")->required();
    exp->add_option("--outdir", export_out, "output directory");

    auto* goals_cmd = app.add_subcommand("goals", "write the benchmark goal set for an environment");
    std::string goals_env, goals_out = "goals.json";
    goals_cmd->add_option("--env", goals_env, "environment name")->required();
    goals_cmd->add_option("--out", goals_out, "output JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    if (train->parsed()) return cmd_train(config_path, seed, seed_opt->count() > 0, outdir);
    if (eval->parsed()) return cmd_eval(ckpt_path, goals_path, episodes_per_goal, csv_path, eval_seed);
    if (exp->parsed()) return cmd_export(run_dir, what, export_out);
    if (goals_cmd->parsed()) return cmd_goals(goals_env, goals_out);
    return kExitUsage;
}
