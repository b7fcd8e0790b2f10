#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "lexa/agent.hpp"
#include "lexa/checkpoint.hpp"
#include "lexa/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace lexa;

namespace {

TrainConfig tiny_config(uint64_t seed = 1) {
    TrainConfig c = TrainConfig::defaults_for(EnvKind::PointRooms);
    c.seed = seed;
    c.total_env_steps = 1600;
    c.train_every = 25;  // 4 cycles per episode
    c.batch_size = 4;
    c.seq_len = 8;
    c.horizon = 5;
    c.imagination_starts = 4;
    c.prefill_episodes = 2;
    c.eval_every = 800;
    c.eval_episodes_per_goal = 1;
    c.checkpoint_every = 800;
    c.deter_dim = 16;
    c.stoch_dim = 8;
    c.embed_dim = 12;
    c.enc_hidden = 32;
    c.dec_hidden = 32;
    c.gru_input_dim = 16;
    c.stat_hidden = 16;
    c.ensemble_heads = 3;
    c.ensemble_hidden = 16;
    c.ensemble_train_pairs = 16;
    c.ac_hidden = 24;
    c.dist_hidden = 16;
    c.emb_regression_rows = 16;
    c.target_interval = 10;
    return c;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("orchestrator") {

TEST_CASE("replay: window sampling zeroes the first action slot") {
    ReplayBuffer buf;
    EpisodeRecord ep;
    ep.action_dim = 2;
    ep.image_h = 2;
    ep.image_w = 2;
    ep.image_c = 3;
    std::vector<float> frame(12, 0.5f);
    ep.append_frame(frame, nullptr);
    for (int t = 1; t < 10; ++t) {
        float act[2] = {0.25f * static_cast<float>(t % 4), -0.5f};
        ep.append_frame(frame, act);
    }
    buf.append(std::move(ep));
    CHECK(buf.total_env_steps() == 9);

    RandomSource rng(2);
    auto sb = buf.sample_sequences(3, 4, rng);
    for (int b = 0; b < 3; ++b)
        for (int d = 0; d < 2; ++d) CHECK(sb.actions[static_cast<size_t>(b) * 2 + static_cast<size_t>(d)] == 0.0f);
}

TEST_CASE("episode file round trip") {
    Env env(EnvKind::PushBlock);
    RandomSource rng(3);
    EpisodeRecord ep;
    ep.kind = EpisodeKind::Explorer;
    auto s = env.reset(rng);
    ep.append_frame(env.render(s), nullptr);
    for (int t = 0; t < 5; ++t) {
        float act[2] = {static_cast<float>(rng.uniform(-1, 1)), static_cast<float>(rng.uniform(-1, 1))};
        s = env.step(s, act[0], act[1]);
        ep.append_frame(env.render(s), act);
    }
    save_episode("ep_test.bin", ep);
    auto back = load_episode("ep_test.bin");
    CHECK(back.steps == ep.steps);
    CHECK(back.kind == ep.kind);
    CHECK(back.images == ep.images);
    CHECK(back.actions == ep.actions);
}

TEST_CASE("goal frame sampling is uniform over the batch (chi-squared)") {
    TrainConfig cfg = tiny_config();
    LexaAgent agent(cfg);
    SequenceBatch sb;
    sb.batch = 4;
    sb.steps = 8;
    sb.image_dim = 768;
    sb.action_dim = 2;
    sb.images.assign(static_cast<size_t>(4) * 8 * 768, 0.0f);
    sb.actions.assign(static_cast<size_t>(4) * 8 * 2, 0.0f);

    const int bins = 32;
    RandomSource rng(5);
    std::vector<int> counts(bins, 0);
    const int draws = 10000;
    auto picks = agent.sample_goal_frame_indices(sb, draws, rng);
    for (int p : picks) counts[static_cast<size_t>(p)] += 1;

    const double expected = static_cast<double>(draws) / bins;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // Wilson-Hilferty critical value at p = 0.01 for df = 31.
    const double df = bins - 1;
    const double z = 2.326347874;
    const double crit = df * std::pow(1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df)), 3.0);
    CHECK(chi2 < crit);
}

TEST_CASE("collect episode: length, practice goal membership") {
    TrainConfig cfg = tiny_config();
    Trainer trainer(cfg, "trainer_collect_test");
    trainer.prefill();
    CHECK(trainer.replay().size() == 2);
    CHECK(trainer.env_steps() == 200);

    auto c = trainer.collect_episode(EpisodeKind::AchieverPractice);
    CHECK(c.record.env_steps() == 100);
    CHECK(c.record.steps == 101);
    REQUIRE(c.practice_goal.has_value());

    // The practice goal image must be byte-identical to a stored replay frame.
    bool found = false;
    for (size_t e = 0; e < trainer.replay().size() && !found; ++e)
        for (int t = 0; t < trainer.replay().episode(e).steps && !found; ++t)
            if (trainer.replay().frame(static_cast<int>(e), t) == c.practice_goal_image) found = true;
    CHECK(found);
}

TEST_CASE("update cycle keeps module parameters isolated") {
    TrainConfig cfg = tiny_config();
    Trainer trainer(cfg, "trainer_iso_test");
    trainer.prefill();
    auto& agent = trainer.agent();

    auto expl_hash = param_bytes_hash(agent.params().with_prefix("expl/"));
    auto achv_hash = param_bytes_hash(agent.params().with_prefix("achv/"));
    auto wm_hash = param_bytes_hash(agent.params().with_prefix("wm/"));

    RandomSource rng(7);
    auto batch = trainer.replay().sample_sequences(cfg.batch_size, cfg.seq_len, rng);
    auto obs = agent.wm().observe_and_train(batch, rng);
    CHECK(param_bytes_hash(agent.params().with_prefix("expl/")) == expl_hash);
    CHECK(param_bytes_hash(agent.params().with_prefix("achv/")) == achv_hash);

    // Ensemble training touches neither the world model nor the policies.
    wm_hash = param_bytes_hash(agent.params().with_prefix("wm/"));
    std::vector<float> in(static_cast<size_t>(8) * (cfg.deter_dim + cfg.stoch_dim + 2), 0.1f);
    std::vector<float> tg(static_cast<size_t>(8) * cfg.stoch_dim, 0.2f);
    agent.ensemble().train_step(Tensor::from_data({8, cfg.deter_dim + cfg.stoch_dim + 2}, in),
                                Tensor::from_data({8, cfg.stoch_dim}, tg));
    CHECK(param_bytes_hash(agent.params().with_prefix("wm/")) == wm_hash);
    CHECK(param_bytes_hash(agent.params().with_prefix("expl/")) == expl_hash);
    CHECK(param_bytes_hash(agent.params().with_prefix("achv/")) == achv_hash);

    // Explorer and achiever updates do not touch each other.
    auto e = agent.explorer_update(obs.states, rng);
    CHECK(e.ac.stepped);
    CHECK(param_bytes_hash(agent.params().with_prefix("achv/")) == achv_hash);
    expl_hash = param_bytes_hash(agent.params().with_prefix("expl/"));
    auto goals = agent.sample_training_goals(batch, cfg.imagination_starts, rng);
    auto a = agent.achiever_update(obs.states, goals, rng);
    CHECK(a.ac.stepped);
    CHECK(param_bytes_hash(agent.params().with_prefix("expl/")) == expl_hash);
}

TEST_CASE("achiever value depends on the goal embedding") {
    TrainConfig cfg = tiny_config();
    LexaAgent agent(cfg);
    RandomSource rng(9);
    auto state = agent.wm().initial_state(1);
    auto feat = agent.policy_features(state);
    int changed = 0;
    for (int probe = 0; probe < 100; ++probe) {
        std::vector<float> ga(static_cast<size_t>(cfg.embed_dim)), gb(static_cast<size_t>(cfg.embed_dim));
        for (auto& v : ga) v = static_cast<float>(rng.uniform(-1, 1));
        gb = ga;
        gb[static_cast<size_t>(probe) % gb.size()] += 0.5f;
        auto va = agent.achiever().value().value(concat<float>({feat, Tensor::from_data({1, cfg.embed_dim}, ga)}, 1));
        auto vb = agent.achiever().value().value(concat<float>({feat, Tensor::from_data({1, cfg.embed_dim}, gb)}, 1));
        if (va.data()[0] != vb.data()[0]) ++changed;
    }
    CHECK(changed >= 95);
}

TEST_CASE("full tiny run: determinism, alternation, bookkeeping") {
    TrainConfig cfg = tiny_config(21);
    fs::remove_all("run_det_a");
    fs::remove_all("run_det_b");
    {
        Trainer t(cfg, "run_det_a");
        t.run();
    }
    {
        Trainer t(cfg, "run_det_b");
        t.run();
    }
    const auto ma = read_file("run_det_a/metrics.jsonl");
    CHECK(!ma.empty());
    CHECK(ma == read_file("run_det_b/metrics.jsonl"));

    // Buffer bookkeeping: total steps / 100 episodes, prefill included.
    int episodes = 0;
    int explorer = 0, practice = 0;
    for (const auto& entry : fs::directory_iterator("run_det_a/episodes")) {
        (void)entry;
        ++episodes;
    }
    CHECK(episodes == cfg.total_env_steps / 100);
    for (int i = 0; i < episodes; ++i) {
        auto ep = load_episode("run_det_a/episodes/ep_" + std::to_string(i) + ".bin");
        if (ep.kind == EpisodeKind::Explorer) ++explorer;
        if (ep.kind == EpisodeKind::AchieverPractice) ++practice;
    }
    CHECK(std::abs(explorer - practice) <= 1);  // alternation invariant
    CHECK(explorer + practice + cfg.prefill_episodes == episodes);

    // metrics env_step strictly increasing
    std::ifstream is("run_det_a/metrics.jsonl");
    std::string line;
    int64_t prev = -1;
    while (std::getline(is, line)) {
        const auto pos = line.find("\"env_step\":");
        REQUIRE(pos != std::string::npos);
        const int64_t step = std::atoll(line.c_str() + pos + 11);
        CHECK(step > prev);
        prev = step;
    }
}

TEST_CASE("checkpoint resume continues bit-exactly") {
    TrainConfig cfg = tiny_config(33);
    fs::remove_all("run_resume_full");
    fs::remove_all("run_resume_cut");
    {
        Trainer t(cfg, "run_resume_full");
        t.run();
    }
    // Simulate an interruption: keep only the artifacts that existed when the
    // mid-run checkpoint at step 800 was written.
    fs::create_directories("run_resume_cut/episodes");
    fs::create_directories("run_resume_cut/checkpoints");
    fs::copy_file("run_resume_full/config.json", "run_resume_cut/config.json");
    fs::copy_file("run_resume_full/checkpoints/step_800.ckpt", "run_resume_cut/checkpoints/step_800.ckpt");
    for (int i = 0; i < 8; ++i)
        fs::copy_file("run_resume_full/episodes/ep_" + std::to_string(i) + ".bin",
                      "run_resume_cut/episodes/ep_" + std::to_string(i) + ".bin");
    // Rebuild the metrics prefix the checkpoint recorded (24 cycle lines + 1 eval).
    {
        std::ifstream full("run_resume_full/metrics.jsonl");
        std::ofstream cut("run_resume_cut/metrics.jsonl");
        std::string line;
        for (int i = 0; i < 25 && std::getline(full, line); ++i) cut << line << "\n";
    }
    {
        Trainer t(cfg, "run_resume_cut");
        t.run();
    }
    CHECK(read_file("run_resume_cut/metrics.jsonl") == read_file("run_resume_full/metrics.jsonl"));
    CHECK(read_file("run_resume_cut/checkpoints/step_1600.ckpt") ==
          read_file("run_resume_full/checkpoints/step_1600.ckpt"));
}

TEST_CASE("evaluate returns sane per-goal rows for an untrained agent") {
    TrainConfig cfg = tiny_config(4);
    LexaAgent agent(cfg);
    Env env(EnvKind::PointRooms);
    auto goals = benchmark_goals(EnvKind::PointRooms);
    auto table = evaluate(agent, env, goals, 2, 99);
    CHECK(table.rows.size() == goals.size());
    for (const auto& row : table.rows) {
        CHECK(row.success_rate >= 0.0);
        CHECK(row.success_rate <= 1.0);
        CHECK(row.episodes == 2);
    }
    CHECK(table.mean_success <= 1.0);
}

TEST_CASE("coincidental flags: any-step success, empty goal set") {
    Env env(EnvKind::PointRooms);
    auto goals = benchmark_goals(EnvKind::PointRooms);
    std::vector<EnvState> traj(5);
    for (auto& s : traj) s.agent = {goals[0].target.agent.x, goals[0].target.agent.y};
    auto flags = coincidental_flags(env, traj, goals);
    CHECK(flags[0]);
    CHECK(coincidental_flags(env, traj, {}).empty());
}

TEST_CASE("config validation reports the offending field") {
    CHECK_THROWS_AS(TrainConfig::from_json_string("{}"), ConfigError);
    try {
        TrainConfig::from_json_string("{}");
    } catch (const ConfigError& e) {
        CHECK(e.field == "env");
    }
    try {
        TrainConfig::from_json_string(R"({"env":"pointrooms","reward":"nope"})");
    } catch (const ConfigError& e) {
        CHECK(e.field == "reward");
    }
    try {
        TrainConfig::from_json_string(R"({"env":"pointrooms","rewardd":"cosine"})");
    } catch (const ConfigError& e) {
        CHECK(e.field == "rewardd");
    }
}

}  // TEST_SUITE
