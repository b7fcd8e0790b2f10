#include "lexa/envs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace lexa {

namespace {

constexpr double kAgentLo = Env::kEntityHalf;
constexpr double kAgentHi = 1.0 - Env::kEntityHalf;

// Pixel-aligned 2x2-room layout: two-pixel dividing walls with two door gaps
// per wall, each four pixels wide.
std::vector<WallRect> point_rooms_walls() {
    const double w0 = 7.0 / 16.0, w1 = 9.0 / 16.0;
    const double seg0 = 2.0 / 16.0, seg1a = 6.0 / 16.0, seg1b = 10.0 / 16.0, seg2 = 14.0 / 16.0;
    return {
        {w0, 0.0, w1, seg0},    {w0, seg1a, w1, seg1b},  {w0, seg2, w1, 1.0},   // vertical divider
        {0.0, w0, seg0, w1},    {seg1a, w0, seg1b, w1},  {seg2, w0, 1.0, w1},   // horizontal divider
    };
}

bool inside_expanded(const WallRect& r, const Vec2& p, double e) {
    return p.x > r.x0 - e && p.x < r.x1 + e && p.y > r.y0 - e && p.y < r.y1 + e;
}

uint8_t quant(double v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

// Fraction of pixel (px, py) covered by the axis-aligned square at center c.
double coverage(int px, int py, const Vec2& c, double half) {
    const double x0 = std::max(px / 16.0, c.x - half);
    const double x1 = std::min((px + 1) / 16.0, c.x + half);
    const double y0 = std::max(py / 16.0, c.y - half);
    const double y1 = std::min((py + 1) / 16.0, c.y + half);
    if (x1 <= x0 || y1 <= y0) return 0.0;
    return (x1 - x0) * (y1 - y0) * 256.0;
}

struct Rgb {
    double r, g, b;
};
constexpr Rgb kBackground{0.85, 0.85, 0.85};
constexpr Rgb kWall{0.25, 0.25, 0.27};
constexpr Rgb kAgent{0.86, 0.16, 0.16};
constexpr Rgb kBlock{0.16, 0.73, 0.25};

void splat(std::vector<Rgb>& canvas, const Vec2& center, const Rgb& color) {
    const double half = Env::kEntityHalf;
    const int px0 = std::max(0, static_cast<int>(std::floor((center.x - half) * 16.0)));
    const int px1 = std::min(15, static_cast<int>(std::floor((center.x + half) * 16.0)));
    const int py0 = std::max(0, static_cast<int>(std::floor((center.y - half) * 16.0)));
    const int py1 = std::min(15, static_cast<int>(std::floor((center.y + half) * 16.0)));
    for (int py = py0; py <= py1; ++py)
        for (int px = px0; px <= px1; ++px) {
            const double a = coverage(px, py, center, half);
            if (a <= 0.0) continue;
            Rgb& c = canvas[static_cast<size_t>(py) * 16 + px];
            c.r += (color.r - c.r) * a;
            c.g += (color.g - c.g) * a;
            c.b += (color.b - c.b) * a;
        }
}

}  // namespace

std::string env_name(EnvKind kind) { return kind == EnvKind::PointRooms ? "pointrooms" : "pushblock"; }

EnvKind env_from_name(const std::string& name) {
    if (name == "pointrooms") return EnvKind::PointRooms;
    if (name == "pushblock") return EnvKind::PushBlock;
    throw std::invalid_argument("unknown environment name: \"" + name + "\"");
}

Env::Env(EnvKind kind) : kind_(kind) {
    if (kind_ == EnvKind::PointRooms) walls_ = point_rooms_walls();
}

bool Env::agent_position_free(const Vec2& p) const {
    if (p.x < kAgentLo || p.x > kAgentHi || p.y < kAgentLo || p.y > kAgentHi) return false;
    for (const auto& w : walls_)
        if (inside_expanded(w, p, kEntityHalf)) return false;
    return true;
}

EnvState Env::reset(RandomSource& rng) const {
    EnvState s;
    do {
        s.agent.x = rng.uniform(kAgentLo, kAgentHi);
        s.agent.y = rng.uniform(kAgentLo, kAgentHi);
    } while (!agent_position_free(s.agent));
    if (has_block()) {
        do {
            s.block.x = rng.uniform(block_lo_, block_hi_);
            s.block.y = rng.uniform(block_lo_, block_hi_);
        } while (std::max(std::abs(s.block.x - s.agent.x), std::abs(s.block.y - s.agent.y)) <= 2.0 * kEntityHalf + 0.01);
    }
    return s;
}

void Env::move_axis(EnvState& s, int axis, double d) const {
    if (d == 0.0) return;
    double& a = axis == 0 ? s.agent.x : s.agent.y;
    const double a_cross = axis == 0 ? s.agent.y : s.agent.x;
    double target = std::clamp(a + d, kAgentLo, kAgentHi);

    for (const auto& w : walls_) {
        const double lo = axis == 0 ? w.x0 : w.y0;
        const double hi = axis == 0 ? w.x1 : w.y1;
        const double c_lo = axis == 0 ? w.y0 : w.x0;
        const double c_hi = axis == 0 ? w.y1 : w.x1;
        if (a_cross <= c_lo - kEntityHalf || a_cross >= c_hi + kEntityHalf) continue;
        if (d > 0.0 && a <= lo - kEntityHalf && target > lo - kEntityHalf) target = lo - kEntityHalf;
        if (d < 0.0 && a >= hi + kEntityHalf && target < hi + kEntityHalf) target = hi + kEntityHalf;
    }

    if (has_block()) {
        double& b = axis == 0 ? s.block.x : s.block.y;
        const double b_cross = axis == 0 ? s.block.y : s.block.x;
        const double gap = 2.0 * kEntityHalf;
        if (std::abs(a_cross - b_cross) < gap) {
            if (d > 0.0 && a <= b - gap && target > b - gap) {
                const double pushed = std::clamp(b + (target - (b - gap)), block_lo_, block_hi_);
                b = pushed;
                target = std::min(target, pushed - gap);
            } else if (d < 0.0 && a >= b + gap && target < b + gap) {
                const double pushed = std::clamp(b - ((b + gap) - target), block_lo_, block_hi_);
                b = pushed;
                target = std::max(target, pushed + gap);
            }
        }
    }
    a = target;
}

void Env::tick(EnvState& s, double dx, double dy) const {
    move_axis(s, 0, dx);
    move_axis(s, 1, dy);
}

EnvState Env::step(const EnvState& state, float ax, float ay) const {
    const double cx = std::clamp(static_cast<double>(ax), -1.0, 1.0) * kMaxStep;
    const double cy = std::clamp(static_cast<double>(ay), -1.0, 1.0) * kMaxStep;
    EnvState s = state;
    for (int rep = 0; rep < kActionRepeat; ++rep) tick(s, cx, cy);
    return s;
}

void Env::render(const EnvState& state, float* out) const {
    std::vector<Rgb> canvas(256, kBackground);
    for (const auto& w : walls_) {
        const int px0 = static_cast<int>(std::lround(w.x0 * 16.0));
        const int px1 = static_cast<int>(std::lround(w.x1 * 16.0));
        const int py0 = static_cast<int>(std::lround(w.y0 * 16.0));
        const int py1 = static_cast<int>(std::lround(w.y1 * 16.0));
        for (int py = py0; py < py1; ++py)
            for (int px = px0; px < px1; ++px) canvas[static_cast<size_t>(py) * 16 + px] = kWall;
    }
    if (has_block()) splat(canvas, state.block, kBlock);
    splat(canvas, state.agent, kAgent);

    // Quantize to 8-bit levels so stored frames reproduce rendered ones exactly.
    for (int i = 0; i < 256; ++i) {
        out[i * 3 + 0] = static_cast<float>(quant(canvas[static_cast<size_t>(i)].r)) / 255.0f;
        out[i * 3 + 1] = static_cast<float>(quant(canvas[static_cast<size_t>(i)].g)) / 255.0f;
        out[i * 3 + 2] = static_cast<float>(quant(canvas[static_cast<size_t>(i)].b)) / 255.0f;
    }
}

std::vector<float> Env::render(const EnvState& state) const {
    std::vector<float> out(static_cast<size_t>(kImageDim));
    render(state, out.data());
    return out;
}

bool success(const Env& env, const EnvState& state, const GoalSpec& goal) {
    if (goal.env != env.kind())
        throw std::invalid_argument("success: goal \"" + goal.id + "\" targets " + env_name(goal.env) +
                                    " but environment is " + env_name(env.kind()));
    if (goal.judge_agent) {
        if (std::max(std::abs(state.agent.x - goal.target.agent.x), std::abs(state.agent.y - goal.target.agent.y)) >
            goal.tolerance)
            return false;
    }
    if (goal.judge_block && env.has_block()) {
        if (std::max(std::abs(state.block.x - goal.target.block.x), std::abs(state.block.y - goal.target.block.y)) >
            goal.tolerance)
            return false;
    }
    return true;
}

namespace {

struct OracleGrid {
    double lo_a, lo_b, pitch;
    int na, nb;
    bool joint;

    int snap(double v, double lo, int n) const {
        int i = static_cast<int>(std::lround((v - lo) / pitch));
        return std::clamp(i, 0, n - 1);
    }
    Vec2 center_a(int ix, int iy) const { return {std::min(lo_a + ix * pitch, kAgentHi), std::min(lo_a + iy * pitch, kAgentHi)}; }
};

}  // namespace

int oracle_steps(const Env& env, const EnvState& from, const GoalSpec& goal, double pitch) {
    if (goal.env != env.kind())
        throw std::invalid_argument("oracle_steps: goal \"" + goal.id + "\" targets a different environment");

    if (success(env, from, goal)) return 0;

    OracleGrid g;
    g.pitch = pitch;
    g.lo_a = kAgentLo;
    g.na = static_cast<int>(std::ceil((kAgentHi - kAgentLo) / pitch)) + 1;
    g.joint = env.has_block();
    g.lo_b = env.block_lo();
    g.nb = g.joint ? static_cast<int>(std::ceil((env.block_hi() - env.block_lo()) / pitch)) + 1 : 1;

    auto encode = [&](const EnvState& s) -> int64_t {
        const int ax = g.snap(s.agent.x, g.lo_a, g.na);
        const int ay = g.snap(s.agent.y, g.lo_a, g.na);
        int64_t code = static_cast<int64_t>(ax) * g.na + ay;
        if (g.joint) {
            const int bx = g.snap(s.block.x, g.lo_b, g.nb);
            const int by = g.snap(s.block.y, g.lo_b, g.nb);
            code = (code * g.nb + bx) * g.nb + by;
        }
        return code;
    };
    auto decode = [&](int64_t code) -> EnvState {
        EnvState s;
        if (g.joint) {
            const int by = static_cast<int>(code % g.nb);
            code /= g.nb;
            const int bx = static_cast<int>(code % g.nb);
            code /= g.nb;
            s.block.x = std::min(g.lo_b + bx * pitch, env.block_hi());
            s.block.y = std::min(g.lo_b + by * pitch, env.block_hi());
        }
        const int ay = static_cast<int>(code % g.na);
        const int ax = static_cast<int>(code / g.na);
        s.agent = g.center_a(ax, ay);
        return s;
    };

    static constexpr float kDirs[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};

    const int64_t total = static_cast<int64_t>(g.na) * g.na * g.nb * g.nb;
    std::vector<uint8_t> visited(static_cast<size_t>(total), 0);
    std::deque<std::pair<int64_t, int>> queue;

    const int64_t start = encode(from);
    if (success(env, decode(start), goal)) return 0;
    visited[static_cast<size_t>(start)] = 1;
    queue.emplace_back(start, 0);

    while (!queue.empty()) {
        const auto [code, depth] = queue.front();
        queue.pop_front();
        const EnvState s = decode(code);
        for (const auto& d : kDirs) {
            const EnvState nxt = env.step(s, d[0], d[1]);
            const int64_t ncode = encode(nxt);
            if (visited[static_cast<size_t>(ncode)]) continue;
            visited[static_cast<size_t>(ncode)] = 1;
            if (success(env, decode(ncode), goal)) return depth + 1;
            queue.emplace_back(ncode, depth + 1);
        }
    }
    return kOracleUnreachable;
}

std::vector<GoalSpec> benchmark_goals(EnvKind kind) {
    std::vector<GoalSpec> goals;
    auto add = [&](const std::string& id, EnvState target, bool ja, bool jb) {
        GoalSpec gs;
        gs.id = id;
        gs.env = kind;
        gs.target = target;
        gs.judge_agent = ja;
        gs.judge_block = jb;
        goals.push_back(gs);
    };
    if (kind == EnvKind::PointRooms) {
        // Two goals per room.
        add("pr_tl_a", {{0.15, 0.15}, {}}, true, false);
        add("pr_tl_b", {{0.33, 0.28}, {}}, true, false);
        add("pr_tr_a", {{0.85, 0.15}, {}}, true, false);
        add("pr_tr_b", {{0.68, 0.30}, {}}, true, false);
        add("pr_bl_a", {{0.15, 0.85}, {}}, true, false);
        add("pr_bl_b", {{0.30, 0.67}, {}}, true, false);
        add("pr_br_a", {{0.85, 0.85}, {}}, true, false);
        add("pr_br_b", {{0.70, 0.70}, {}}, true, false);
    } else {
        // Block-only goals render the agent beside the block, as it would sit
        // after pushing it there.
        add("pb_block_0", {{0.30 - 0.15, 0.30}, {0.30, 0.30}}, false, true);
        add("pb_block_1", {{0.70 + 0.15, 0.30}, {0.70, 0.30}}, false, true);
        add("pb_block_2", {{0.30 - 0.15, 0.70}, {0.30, 0.70}}, false, true);
        add("pb_block_3", {{0.70 + 0.15, 0.70}, {0.70, 0.70}}, false, true);
        add("pb_agent_0", {{0.15, 0.85}, {0.50, 0.50}}, true, false);
        add("pb_agent_1", {{0.85, 0.15}, {0.50, 0.50}}, true, false);
        add("pb_joint_0", {{0.45, 0.60}, {0.60, 0.60}}, true, true);
        add("pb_joint_1", {{0.55, 0.40}, {0.40, 0.40}}, true, true);
    }
    return goals;
}

std::vector<GoalSpec> load_goals_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open goal file: " + path);
    nlohmann::json j;
    is >> j;
    std::vector<GoalSpec> goals;
    const EnvKind kind = env_from_name(j.at("env").get<std::string>());
    for (const auto& item : j.at("goals")) {
        GoalSpec gs;
        gs.env = kind;
        gs.id = item.at("id").get<std::string>();
        gs.tolerance = item.value("tolerance", 0.08);
        gs.target.agent.x = item.at("agent").at(0).get<double>();
        gs.target.agent.y = item.at("agent").at(1).get<double>();
        if (item.contains("block")) {
            gs.target.block.x = item.at("block").at(0).get<double>();
            gs.target.block.y = item.at("block").at(1).get<double>();
        }
        gs.judge_agent = item.value("judge_agent", true);
        gs.judge_block = item.value("judge_block", false);
        goals.push_back(gs);
    }
    return goals;
}

void save_goals_json(const std::string& path, const std::vector<GoalSpec>& goals) {
    if (goals.empty()) throw std::invalid_argument("save_goals_json: empty goal set");
    nlohmann::json j;
    j["env"] = env_name(goals.front().env);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& g : goals) {
        nlohmann::json item;
        item["id"] = g.id;
        item["tolerance"] = g.tolerance;
        item["agent"] = {g.target.agent.x, g.target.agent.y};
        if (g.env == EnvKind::PushBlock) item["block"] = {g.target.block.x, g.target.block.y};
        item["judge_agent"] = g.judge_agent;
        item["judge_block"] = g.judge_block;
        arr.push_back(item);
    }
    j["goals"] = arr;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write goal file: " + path);
    os << j.dump(2) << "\n";
}

}  // namespace lexa
