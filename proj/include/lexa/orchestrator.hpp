#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lexa/agent.hpp"
#include "lexa/envs.hpp"
#include "lexa/metrics.hpp"
#include "lexa/replay.hpp"

namespace lexa {

struct EvalRow {
    std::string goal_id;
    double success_rate = 0.0;
    int episodes = 0;
};

struct EvalTable {
    std::vector<EvalRow> rows;
    double mean_success = 0.0;
};

// Runs the achiever with mean actions from seeded resets; success is judged
// at the final step only. Threads (capped by LEXA_THREADS) fan out episodes
// on the frozen agent without changing the result.
EvalTable evaluate(LexaAgent& agent, const Env& env, const std::vector<GoalSpec>& goals, int episodes_per_goal,
                   uint64_t base_seed);

// Any-step success flags over one exploration-phase trajectory.
std::vector<bool> coincidental_flags(const Env& env, const std::vector<EnvState>& trajectory,
                                     const std::vector<GoalSpec>& goals);

// Cell index at the given pitch for coverage accounting, or -1 if out of range.
int coverage_cell(const Vec2& p, double pitch);

// The unsupervised training loop: alternating explorer / achiever-practice
// episodes, a block of update cycles per episode, periodic evaluation and
// checkpointing. Deterministic given the config; resumable from the latest
// checkpoint.
class Trainer {
  public:
    Trainer(const TrainConfig& cfg, std::string outdir);

    // Returns true on completion. Resumes automatically when the run
    // directory already holds a checkpoint for this config.
    void run();

    // Pieces, exposed for tests.
    void prefill();
    struct Collected {
        EpisodeRecord record;
        std::vector<EnvState> states;
        std::optional<GoalSpec> practice_goal;
        std::vector<float> practice_goal_image;
    };
    Collected collect_episode(EpisodeKind kind);
    CycleMetrics run_update_cycle() { return agent_.update_cycle(replay_, loop_rng_); }

    void save_checkpoint_file(const std::string& path);
    bool try_resume();

    LexaAgent& agent() { return agent_; }
    ReplayBuffer& replay() { return replay_; }
    const Env& env() const { return env_; }
    int64_t env_steps() const { return env_step_; }
    const std::string& outdir() const { return outdir_; }
    int64_t coincidental_count(size_t goal_idx) const { return coincidental_.at(goal_idx); }
    int64_t cells_visited() const;

  private:
    void append_episode(Collected&& c, EpisodeKind kind);
    void log_eval();
    std::string checkpoint_path(int64_t step) const;

    TrainConfig cfg_;
    std::string outdir_;
    Env env_;
    LexaAgent agent_;
    ReplayBuffer replay_;
    RandomSource loop_rng_;
    MetricsWriter metrics_;
    std::vector<GoalSpec> bench_;
    std::vector<int64_t> coincidental_;
    std::vector<uint8_t> visit_cells_;
    int64_t env_step_ = 0;
    int episode_count_ = 0;
    int collect_toggle_ = 0;  // 0: explorer next, 1: achiever-practice next
    bool resumed_ = false;
};

}  // namespace lexa
