#pragma once

#include <string>
#include <vector>

#include "lexa/random.hpp"

namespace lexa {

enum class EnvKind { PointRooms, PushBlock };

std::string env_name(EnvKind kind);
EnvKind env_from_name(const std::string& name);  // throws on unknown name

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct EnvState {
    Vec2 agent;
    Vec2 block;  // PushBlock only; (0,0) otherwise
};

struct WallRect {
    double x0, y0, x1, y1;
};

// An evaluation goal: target state plus which entities the success predicate
// judges. Goal images are regenerated from the target state, never stored.
struct GoalSpec {
    std::string id;
    EnvKind env = EnvKind::PointRooms;
    EnvState target;
    double tolerance = 0.08;  // L-inf per entity
    bool judge_agent = true;
    bool judge_block = false;
};

// Deterministic toy pixel environments on the unit square. Both render to
// 16x16x3 float images in [0,1]; dynamics are pure functions of the state.
//
// PointRooms: a 2x2 room layout with door gaps; the agent is a red square.
// PushBlock: an open arena with a green block the agent displaces by pushing.
class Env {
  public:
    static constexpr int kImageH = 16;
    static constexpr int kImageW = 16;
    static constexpr int kImageC = 3;
    static constexpr int kImageDim = kImageH * kImageW * kImageC;
    static constexpr int kActionDim = 2;
    static constexpr int kActionRepeat = 2;
    static constexpr int kEpisodeSteps = 100;       // agent-visible steps per episode
    static constexpr double kMaxStep = 0.06;        // per internal tick
    static constexpr double kEntityHalf = 0.0625;   // half-extent of the 2x2-pixel sprites

    explicit Env(EnvKind kind);

    EnvKind kind() const { return kind_; }
    const std::vector<WallRect>& walls() const { return walls_; }
    bool has_block() const { return kind_ == EnvKind::PushBlock; }

    // Collision-free placement, uniform over free space; deterministic given
    // the rng state.
    EnvState reset(RandomSource& rng) const;

    // Applies the clipped action for kActionRepeat ticks with axis-separated
    // collision resolution; PushBlock transfers motion to the block on overlap
    // along the push axis.
    EnvState step(const EnvState& state, float ax, float ay) const;

    void render(const EnvState& state, float* out) const;
    std::vector<float> render(const EnvState& state) const;

    bool agent_position_free(const Vec2& p) const;

    double block_lo() const { return block_lo_; }
    double block_hi() const { return block_hi_; }

  private:
    void tick(EnvState& s, double dx, double dy) const;
    void move_axis(EnvState& s, int axis, double d) const;

    EnvKind kind_;
    std::vector<WallRect> walls_;
    double block_lo_ = 0.1875;  // keeps every block position pushable from all sides
    double block_hi_ = 0.8125;
};

// True iff every judged entity is within goal.tolerance (L-inf) of its target.
// Throws if the goal belongs to a different environment.
bool success(const Env& env, const EnvState& state, const GoalSpec& goal);

inline constexpr int kOracleUnreachable = -1;

// Minimum environment steps to success, from breadth-first search over the
// joint state space discretized at `pitch` under the maximal-speed action set.
int oracle_steps(const Env& env, const EnvState& from, const GoalSpec& goal, double pitch = 0.04);

// The fixed benchmark goal sets: PointRooms 8 goals (2 per room), PushBlock 8
// goals (4 block-only, 2 agent-only, 2 joint).
std::vector<GoalSpec> benchmark_goals(EnvKind kind);

std::vector<GoalSpec> load_goals_json(const std::string& path);
void save_goals_json(const std::string& path, const std::vector<GoalSpec>& goals);

}  // namespace lexa
