#include <array>
#include <cmath>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "lexa/envs.hpp"

using namespace lexa;

TEST_SUITE("envs") {

TEST_CASE("reset is deterministic and collision free") {
    Env env(EnvKind::PointRooms);
    RandomSource a(5), b(5);
    auto s1 = env.reset(a);
    auto s2 = env.reset(b);
    CHECK(s1.agent.x == s2.agent.x);
    CHECK(s1.agent.y == s2.agent.y);

    RandomSource rng(11);
    std::array<int, 4> rooms{0, 0, 0, 0};
    for (int i = 0; i < 1000; ++i) {
        auto s = env.reset(rng);
        CHECK(env.agent_position_free(s.agent));
        const int room = (s.agent.x > 0.5 ? 1 : 0) + (s.agent.y > 0.5 ? 2 : 0);
        rooms[static_cast<size_t>(room)] += 1;
    }
    for (int count : rooms) CHECK(count >= 150);  // every room gets its share of spawns
}

TEST_CASE("zero action leaves the state unchanged") {
    Env env(EnvKind::PushBlock);
    RandomSource rng(3);
    auto s = env.reset(rng);
    auto s2 = env.step(s, 0.0f, 0.0f);
    CHECK(s2.agent.x == s.agent.x);
    CHECK(s2.agent.y == s.agent.y);
    CHECK(s2.block.x == s.block.x);
    CHECK(s2.block.y == s.block.y);
}

TEST_CASE("driving right stops at the boundary, never beyond") {
    Env env(EnvKind::PointRooms);
    EnvState s;
    s.agent = {0.75, 0.75};  // a room center
    for (int i = 0; i < 20; ++i) s = env.step(s, 1.0f, 0.0f);
    CHECK(s.agent.x == doctest::Approx(1.0 - Env::kEntityHalf));
    CHECK(s.agent.y == doctest::Approx(0.75));
}

TEST_CASE("walls block movement and are never penetrated") {
    Env env(EnvKind::PointRooms);
    RandomSource rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        auto s = env.reset(rng);
        for (int t = 0; t < 50; ++t) {
            s = env.step(s, static_cast<float>(rng.uniform(-1, 1)), static_cast<float>(rng.uniform(-1, 1)));
            CHECK(env.agent_position_free(s.agent));
        }
    }
}

TEST_CASE("pushing transfers motion to the block") {
    Env env(EnvKind::PushBlock);
    EnvState s;
    s.agent = {0.4, 0.5};
    s.block = {0.55, 0.5};
    const double before = s.block.x;
    for (int i = 0; i < 3; ++i) s = env.step(s, 1.0f, 0.0f);
    CHECK(s.block.x > before);
    // contact is maintained while pushing
    CHECK(s.block.x - s.agent.x == doctest::Approx(2 * Env::kEntityHalf));

    // the block only moves when pushed
    EnvState t;
    t.agent = {0.2, 0.2};
    t.block = {0.7, 0.7};
    auto t2 = env.step(t, 1.0f, 0.0f);
    CHECK(t2.block.x == t.block.x);
    CHECK(t2.block.y == t.block.y);
}

TEST_CASE("block stays inside its clamped range") {
    Env env(EnvKind::PushBlock);
    EnvState s;
    s.agent = {0.5, 0.5};
    s.block = {0.65, 0.5};
    for (int i = 0; i < 40; ++i) s = env.step(s, 1.0f, 0.0f);
    CHECK(s.block.x == doctest::Approx(env.block_hi()));
    CHECK(s.agent.x == doctest::Approx(env.block_hi() - 2 * Env::kEntityHalf));
}

TEST_CASE("success predicate") {
    Env env(EnvKind::PushBlock);
    auto goals = benchmark_goals(EnvKind::PushBlock);
    const auto& block_goal = goals[0];
    REQUIRE(block_goal.judge_block);
    REQUIRE_FALSE(block_goal.judge_agent);

    EnvState exact = block_goal.target;
    CHECK(success(env, exact, block_goal));

    EnvState off = exact;
    off.block.x += 0.5;
    CHECK_FALSE(success(env, off, block_goal));

    // block on target, agent anywhere
    EnvState wander = exact;
    wander.agent = {0.9, 0.9};
    CHECK(success(env, wander, block_goal));

    Env wrong(EnvKind::PointRooms);
    CHECK_THROWS_AS(success(wrong, exact, block_goal), std::invalid_argument);
}

TEST_CASE("render is a pure function and stays in range") {
    Env env(EnvKind::PushBlock);
    RandomSource rng(9);
    auto s = env.reset(rng);
    auto img1 = env.render(s);
    auto img2 = env.render(s);
    CHECK(img1 == img2);
    bool has_red = false, has_green = false;
    for (size_t i = 0; i < img1.size(); i += 3) {
        CHECK(img1[i] >= 0.0f);
        CHECK(img1[i] <= 1.0f);
        if (img1[i] > 0.7f && img1[i + 1] < 0.5f) has_red = true;
        if (img1[i + 1] > 0.6f && img1[i] < 0.5f) has_green = true;
    }
    CHECK(has_red);
    CHECK(has_green);
}

TEST_CASE("oracle: satisfied goal costs zero") {
    Env env(EnvKind::PointRooms);
    GoalSpec g;
    g.id = "t";
    g.env = EnvKind::PointRooms;
    g.target.agent = {0.25, 0.25};
    EnvState s;
    s.agent = {0.26, 0.24};
    CHECK(oracle_steps(env, s, g) == 0);
}

TEST_CASE("oracle: straight-line distances") {
    Env env(EnvKind::PointRooms);
    GoalSpec g;
    g.id = "t";
    g.env = EnvKind::PointRooms;
    g.target.agent = {0.25, 0.62};
    EnvState s;
    s.agent = {0.25, 0.32};  // 0.3 apart, no wall between (through the left door column)

    // Max speed covers 0.12 per step; the 0.08 tolerance leaves 0.22 to
    // close, so two steps suffice.
    CHECK(oracle_steps(env, s, g) == 2);

    // A target 0.5 away needs ceil((0.5 - 0.08) / 0.12) = 4 steps.
    GoalSpec far = g;
    far.target.agent = {0.25, 0.82};
    CHECK(oracle_steps(env, s, far) == 4);
}

TEST_CASE("oracle symmetry on reversible point dynamics") {
    // The grid snap near walls can cost one step either way; free-space moves
    // land exactly on the lattice, so larger gaps would be a bug.
    Env env(EnvKind::PointRooms);
    RandomSource rng(23);
    for (int i = 0; i < 10; ++i) {
        auto a = env.reset(rng);
        auto b = env.reset(rng);
        GoalSpec ga, gb;
        ga.env = gb.env = EnvKind::PointRooms;
        ga.target = b;
        gb.target = a;
        const int ab = oracle_steps(env, a, ga);
        const int ba = oracle_steps(env, b, gb);
        CHECK(std::abs(ab - ba) <= 1);
    }
}

TEST_CASE("oracle crosses rooms through doors") {
    Env env(EnvKind::PointRooms);
    GoalSpec g;
    g.env = EnvKind::PointRooms;
    g.target.agent = {0.85, 0.85};
    EnvState s;
    s.agent = {0.15, 0.15};
    const int steps = oracle_steps(env, s, g);
    CHECK(steps >= 6);  // at least the wall-free lower bound
    CHECK(steps < 40);

    // Blocking line of sight is what makes it longer than the diagonal dash.
    GoalSpec same_room = g;
    same_room.target.agent = {0.3, 0.3};
    CHECK(oracle_steps(env, s, same_room) < steps);
}

TEST_CASE("benchmark goal sets have the documented structure") {
    auto pr = benchmark_goals(EnvKind::PointRooms);
    CHECK(pr.size() == 8);
    for (const auto& g : pr) CHECK(g.judge_agent);

    auto pb = benchmark_goals(EnvKind::PushBlock);
    CHECK(pb.size() == 8);
    int block_only = 0, agent_only = 0, joint = 0;
    for (const auto& g : pb) {
        if (g.judge_agent && g.judge_block) ++joint;
        else if (g.judge_block) ++block_only;
        else ++agent_only;
    }
    CHECK(block_only == 4);
    CHECK(agent_only == 2);
    CHECK(joint == 2);
}

TEST_CASE("goal json round trip") {
    auto goals = benchmark_goals(EnvKind::PushBlock);
    save_goals_json("goals_test.json", goals);
    auto loaded = load_goals_json("goals_test.json");
    REQUIRE(loaded.size() == goals.size());
    for (size_t i = 0; i < goals.size(); ++i) {
        CHECK(loaded[i].id == goals[i].id);
        CHECK(loaded[i].env == goals[i].env);
        CHECK(loaded[i].target.agent.x == doctest::Approx(goals[i].target.agent.x));
        CHECK(loaded[i].target.block.y == doctest::Approx(goals[i].target.block.y));
        CHECK(loaded[i].judge_agent == goals[i].judge_agent);
        CHECK(loaded[i].judge_block == goals[i].judge_block);
        CHECK(loaded[i].tolerance == doctest::Approx(goals[i].tolerance));
    }
}

TEST_CASE("pushblock goals are reachable from sampled resets") {
    Env env(EnvKind::PushBlock);
    RandomSource rng(31);
    auto goals = benchmark_goals(EnvKind::PushBlock);
    int total = 0, reachable = 0;
    for (int trial = 0; trial < 3; ++trial) {
        auto s = env.reset(rng);
        for (const auto& g : goals) {
            ++total;
            if (oracle_steps(env, s, g) != kOracleUnreachable) ++reachable;
        }
    }
    CHECK(reachable == total);
}

}  // TEST_SUITE
