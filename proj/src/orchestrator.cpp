#include "lexa/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "lexa/checkpoint.hpp"

namespace fs = std::filesystem;

namespace lexa {

namespace {

int thread_budget() {
    const char* env = std::getenv("LEXA_THREADS");
    if (env == nullptr) return 1;
    const int n = std::atoi(env);
    return n < 1 ? 1 : n;
}

// One zero-shot episode: filtered posterior conditioning, mean actions.
bool run_eval_episode(LexaAgent& agent, const Env& env, const GoalSpec& goal, uint64_t seed) {
    RandomSource rng(seed);
    const auto& wm = agent.wm();
    auto goal_image = Tensor::from_data({1, env.kImageDim}, env.render(goal.target));
    auto goal_embed = wm.encode(goal_image, true).detach();

    EnvState state = env.reset(rng);
    ModelState belief = wm.initial_state(1);
    Tensor prev_action = Tensor::zeros({1, env.kActionDim});
    auto frame = Tensor::from_data({1, env.kImageDim}, env.render(state));
    belief = wm.posterior(belief, prev_action, wm.encode(frame, true), rng, true);

    for (int t = 0; t < Env::kEpisodeSteps; ++t) {
        auto input = concat<float>({agent.policy_features(belief), goal_embed}, 1);
        auto action = agent.achiever().policy().mean_action(input);
        const float ax = action.data()[0], ay = action.data()[1];
        state = env.step(state, ax, ay);
        auto obs = Tensor::from_data({1, env.kImageDim}, env.render(state));
        belief = wm.posterior(belief, action, wm.encode(obs, true), rng, true);
    }
    return success(env, state, goal);
}

}  // namespace

EvalTable evaluate(LexaAgent& agent, const Env& env, const std::vector<GoalSpec>& goals, int episodes_per_goal,
                   uint64_t base_seed) {
    EvalTable table;
    table.rows.resize(goals.size());
    const int threads = std::min(thread_budget(), episodes_per_goal * static_cast<int>(goals.size()));

    std::vector<uint8_t> hits(goals.size() * static_cast<size_t>(episodes_per_goal), 0);
    auto work = [&](int worker, int stride) {
        for (size_t g = 0; g < goals.size(); ++g)
            for (int e = worker; e < episodes_per_goal; e += stride) {
                const uint64_t seed = RandomSource::mix(RandomSource::mix(base_seed, g * 7919ull), static_cast<uint64_t>(e));
                hits[g * static_cast<size_t>(episodes_per_goal) + static_cast<size_t>(e)] =
                    run_eval_episode(agent, env, goals[g], seed) ? 1 : 0;
            }
    };
    if (threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) pool.emplace_back(work, w, threads);
        for (auto& t : pool) t.join();
    }

    double total = 0.0;
    for (size_t g = 0; g < goals.size(); ++g) {
        int ok = 0;
        for (int e = 0; e < episodes_per_goal; ++e)
            ok += hits[g * static_cast<size_t>(episodes_per_goal) + static_cast<size_t>(e)];
        table.rows[g].goal_id = goals[g].id;
        table.rows[g].episodes = episodes_per_goal;
        table.rows[g].success_rate = static_cast<double>(ok) / episodes_per_goal;
        total += table.rows[g].success_rate;
    }
    table.mean_success = goals.empty() ? 0.0 : total / static_cast<double>(goals.size());
    return table;
}

std::vector<bool> coincidental_flags(const Env& env, const std::vector<EnvState>& trajectory,
                                     const std::vector<GoalSpec>& goals) {
    std::vector<bool> flags(goals.size(), false);
    for (size_t g = 0; g < goals.size(); ++g)
        for (const auto& s : trajectory)
            if (success(env, s, goals[g])) {
                flags[g] = true;
                break;
            }
    return flags;
}

int coverage_cell(const Vec2& p, double pitch) {
    const int n = static_cast<int>(std::ceil(1.0 / pitch));
    const int ix = std::clamp(static_cast<int>(p.x / pitch), 0, n - 1);
    const int iy = std::clamp(static_cast<int>(p.y / pitch), 0, n - 1);
    return ix * n + iy;
}

Trainer::Trainer(const TrainConfig& cfg, std::string outdir)
    : cfg_(cfg),
      outdir_(std::move(outdir)),
      env_(cfg.env_kind()),
      agent_(cfg),
      loop_rng_(RandomSource::mix(cfg.seed, 0x100b)),
      bench_(benchmark_goals(cfg.env_kind())),
      coincidental_(bench_.size(), 0),
      visit_cells_(400, 0) {
    cfg_.validate();
    fs::create_directories(outdir_);
    fs::create_directories(outdir_ + "/episodes");
    fs::create_directories(outdir_ + "/checkpoints");
}

int64_t Trainer::cells_visited() const {
    int64_t n = 0;
    for (uint8_t v : visit_cells_) n += v;
    return n;
}

Trainer::Collected Trainer::collect_episode(EpisodeKind kind) {
    Collected out;
    const uint64_t episode_seed = (static_cast<uint64_t>(loop_rng_.raw()) << 32) | loop_rng_.raw();
    RandomSource env_rng(episode_seed);

    out.record.kind = kind;
    out.record.seed = episode_seed;
    out.record.index = episode_count_;
    out.record.action_dim = env_.kActionDim;

    Tensor goal_embed;
    if (kind == EpisodeKind::AchieverPractice) {
        // Practice goals come uniformly from the whole replay buffer.
        const auto [ep, t] = replay_.sample_frame(loop_rng_);
        auto goal_image = replay_.frame(ep, t);
        out.practice_goal_image = goal_image;
        goal_embed = agent_.wm().encode(Tensor::from_data({1, env_.kImageDim}, goal_image), true).detach();
        GoalSpec pg;
        pg.id = "practice_ep" + std::to_string(ep) + "_t" + std::to_string(t);
        pg.env = env_.kind();
        out.practice_goal = pg;
    }

    EnvState state = env_.reset(env_rng);
    out.states.push_back(state);
    auto frame = env_.render(state);
    out.record.append_frame(frame, nullptr);

    ModelState belief = agent_.wm().initial_state(1);
    if (kind != EpisodeKind::Random) {
        belief = agent_.wm().posterior(belief, Tensor::zeros({1, env_.kActionDim}),
                                       agent_.wm().encode(Tensor::from_data({1, env_.kImageDim}, frame), true),
                                       loop_rng_, true);
    }

    for (int t = 0; t < Env::kEpisodeSteps; ++t) {
        float act[2];
        if (kind == EpisodeKind::Random) {
            act[0] = static_cast<float>(loop_rng_.uniform(-1.0, 1.0));
            act[1] = static_cast<float>(loop_rng_.uniform(-1.0, 1.0));
        } else {
            Tensor input = agent_.policy_features(belief);
            if (kind == EpisodeKind::AchieverPractice) input = concat<float>({input, goal_embed}, 1);
            const auto& policy =
                kind == EpisodeKind::Explorer ? agent_.explorer().policy() : agent_.achiever().policy();
            auto sampled = policy.sample(input, loop_rng_);
            act[0] = sampled.action.data()[0];
            act[1] = sampled.action.data()[1];
        }
        state = env_.step(state, act[0], act[1]);
        out.states.push_back(state);
        frame = env_.render(state);
        out.record.append_frame(frame, act);
        if (kind != EpisodeKind::Random) {
            auto action = Tensor::from_data({1, 2}, {act[0], act[1]});
            belief = agent_.wm().posterior(belief, action,
                                           agent_.wm().encode(Tensor::from_data({1, env_.kImageDim}, frame), true),
                                           loop_rng_, true);
        }
    }
    return out;
}

void Trainer::append_episode(Collected&& c, EpisodeKind kind) {
    for (const auto& s : c.states) visit_cells_[static_cast<size_t>(coverage_cell(s.agent, 0.1))] = 1;
    if (kind == EpisodeKind::Explorer || kind == EpisodeKind::Random) {
        auto flags = coincidental_flags(env_, c.states, bench_);
        for (size_t g = 0; g < flags.size(); ++g)
            if (flags[g]) coincidental_[g] += 1;
    }
    save_episode(outdir_ + "/episodes/ep_" + std::to_string(episode_count_) + ".bin", c.record);
    replay_.append(std::move(c.record));
    env_step_ += Env::kEpisodeSteps;
    episode_count_ += 1;
}

void Trainer::prefill() {
    for (int i = 0; i < cfg_.prefill_episodes; ++i) append_episode(collect_episode(EpisodeKind::Random), EpisodeKind::Random);
}

void Trainer::log_eval() {
    const uint64_t eval_seed = RandomSource::mix(RandomSource::mix(cfg_.seed, 0xe7a1), static_cast<uint64_t>(env_step_));
    auto table = evaluate(agent_, env_, bench_, cfg_.eval_episodes_per_goal, eval_seed);
    std::map<std::string, double> scalars;
    scalars["eval/mean_success"] = table.mean_success;
    for (const auto& row : table.rows) scalars["eval/" + row.goal_id + "_success"] = row.success_rate;
    for (size_t g = 0; g < bench_.size(); ++g)
        scalars["explore/coincidental_" + bench_[g].id + "_count"] = static_cast<double>(coincidental_[g]);
    scalars["explore/cells_visited"] = static_cast<double>(cells_visited());
    scalars["buffer_episodes"] = static_cast<double>(replay_.size());
    metrics_.write(env_step_, scalars);
}

std::string Trainer::checkpoint_path(int64_t step) const {
    return outdir_ + "/checkpoints/step_" + std::to_string(step) + ".ckpt";
}

void Trainer::save_checkpoint_file(const std::string& path) {
    nlohmann::json meta;
    meta["config"] = nlohmann::json::parse(cfg_.to_json_string());
    meta["config_hash"] = cfg_.hash();
    meta["env_step"] = env_step_;
    meta["episode_count"] = episode_count_;
    meta["collect_toggle"] = collect_toggle_;
    meta["loop_rng"] = loop_rng_.serialize();
    meta["metrics_lines"] = metrics_.lines_written();
    meta["coincidental"] = coincidental_;
    std::string cells(visit_cells_.size(), '0');
    for (size_t i = 0; i < visit_cells_.size(); ++i) cells[i] = visit_cells_[i] ? '1' : '0';
    meta["visit_cells"] = cells;
    meta["expl_critic_steps"] = agent_.explorer().critic_steps();
    meta["achv_critic_steps"] = agent_.achiever().critic_steps();
    save_checkpoint(path, agent_.params().all(), meta.dump());
}

bool Trainer::try_resume() {
    int64_t best = -1;
    if (!fs::exists(outdir_ + "/checkpoints")) return false;
    for (const auto& entry : fs::directory_iterator(outdir_ + "/checkpoints")) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("step_", 0) == 0 && name.size() > 10) {
            const int64_t step = std::atoll(name.substr(5, name.size() - 10).c_str());
            best = std::max(best, step);
        }
    }
    if (best < 0) return false;

    const std::string meta_str = load_checkpoint(checkpoint_path(best), agent_.params());
    auto meta = nlohmann::json::parse(meta_str);
    if (meta.at("config_hash").get<uint64_t>() != cfg_.hash())
        throw ConfigError("", "checkpoint in " + outdir_ + " was produced by a different config");
    env_step_ = meta.at("env_step").get<int64_t>();
    episode_count_ = meta.at("episode_count").get<int>();
    collect_toggle_ = meta.at("collect_toggle").get<int>();
    loop_rng_.deserialize(meta.at("loop_rng").get<std::string>());
    coincidental_ = meta.at("coincidental").get<std::vector<int64_t>>();
    const std::string cells = meta.at("visit_cells").get<std::string>();
    for (size_t i = 0; i < visit_cells_.size() && i < cells.size(); ++i) visit_cells_[i] = cells[i] == '1' ? 1 : 0;

    for (int i = 0; i < episode_count_; ++i)
        replay_.append(load_episode(outdir_ + "/episodes/ep_" + std::to_string(i) + ".bin"));

    metrics_.open_truncated(outdir_ + "/metrics.jsonl", meta.at("metrics_lines").get<int64_t>());
    agent_.explorer().set_critic_steps(meta.at("expl_critic_steps").get<int64_t>());
    agent_.achiever().set_critic_steps(meta.at("achv_critic_steps").get<int64_t>());
    resumed_ = true;
    return true;
}

void Trainer::run() {
    if (!try_resume()) {
        std::ofstream cfg_os(outdir_ + "/config.json", std::ios::trunc);
        cfg_os << cfg_.to_json_string() << "\n";
        metrics_.open(outdir_ + "/metrics.jsonl");
        prefill();
    }

    const int cycles_per_episode = Env::kEpisodeSteps / cfg_.train_every;
    while (env_step_ < cfg_.total_env_steps) {
        const EpisodeKind kind = collect_toggle_ == 0 ? EpisodeKind::Explorer : EpisodeKind::AchieverPractice;
        collect_toggle_ = 1 - collect_toggle_;
        append_episode(collect_episode(kind), kind);

        const int64_t ep_start = env_step_ - Env::kEpisodeSteps;
        for (int c = 0; c < cycles_per_episode; ++c) {
            auto m = agent_.update_cycle(replay_, loop_rng_);
            metrics_.write(ep_start + static_cast<int64_t>(c + 1) * cfg_.train_every - 1, m.scalars);
        }
        if (env_step_ % cfg_.eval_every == 0) log_eval();
        if (env_step_ % cfg_.checkpoint_every == 0) save_checkpoint_file(checkpoint_path(env_step_));
    }
    if (env_step_ % cfg_.checkpoint_every != 0) save_checkpoint_file(checkpoint_path(env_step_));
}

}  // namespace lexa
