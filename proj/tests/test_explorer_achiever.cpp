#include <cmath>
#include <set>

#include "doctest.h"
#include "lexa/achiever.hpp"
#include "lexa/explorer.hpp"

using namespace lexa;

namespace {

EnsembleConfig tiny_ens_config() {
    EnsembleConfig c;
    c.heads = 3;
    c.hidden = 12;
    c.input_dim = 8;
    c.output_dim = 4;
    return c;
}

void copy_params(const std::vector<ParamPtr>& from, const std::vector<ParamPtr>& to) {
    for (size_t i = 0; i < from.size(); ++i) {
        auto src = from[i]->value.data();
        auto dst = to[i]->value.mutable_data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

}  // namespace

TEST_SUITE("explorer") {

TEST_CASE("copied heads give exactly zero disagreement") {
    ParamSet ps;
    RandomSource rng(1);
    Ensemble ens(ps, "ens", tiny_ens_config(), rng);
    for (int k = 1; k < ens.heads(); ++k) copy_params(ens.head_groups()[0], ens.head_groups()[static_cast<size_t>(k)]);
    auto feats = Tensor::from_data({5, 6}, std::vector<float>(30, 0.3f));
    auto actions = Tensor::from_data({5, 2}, std::vector<float>(10, -0.2f));
    auto r = ens.disagreement(feats, actions);
    for (float v : r.data()) CHECK(v == 0.0f);
}

TEST_CASE("hand variance case: predictions (0,0) and (2,0) give reward 0.5") {
    ParamSet ps;
    RandomSource rng(2);
    EnsembleConfig cfg = tiny_ens_config();
    cfg.heads = 2;
    cfg.output_dim = 2;
    Ensemble ens(ps, "ens", cfg, rng);
    // Zero every weight, then pin the output biases to the two predictions.
    for (const auto& p : ps.all())
        for (auto& v : p->value.mutable_data()) v = 0.0f;
    auto out_bias_1 = ps.find("ens/h1/l2/b");
    REQUIRE(out_bias_1 != nullptr);
    out_bias_1->value.mutable_data()[0] = 2.0f;

    auto feats = Tensor::from_data({1, 6}, std::vector<float>(6, 0.1f));
    auto actions = Tensor::from_data({1, 2}, std::vector<float>(2, 0.1f));
    auto r = ens.disagreement(feats, actions);
    CHECK(r.data()[0] == doctest::Approx(0.5f));
}

TEST_CASE("disagreement is invariant under head permutation") {
    ParamSet ps;
    RandomSource rng(3);
    Ensemble ens(ps, "ens", tiny_ens_config(), rng);
    auto feats = Tensor::from_data({4, 6}, std::vector<float>(24, 0.4f));
    auto actions = Tensor::from_data({4, 2}, std::vector<float>(8, 0.2f));
    auto before = ens.disagreement(feats, actions);

    // Swap the parameters of heads 0 and 2.
    std::vector<std::vector<float>> saved;
    for (const auto& p : ens.head_groups()[0]) saved.emplace_back(p->value.data().begin(), p->value.data().end());
    copy_params(ens.head_groups()[2], ens.head_groups()[0]);
    for (size_t i = 0; i < saved.size(); ++i)
        std::copy(saved[i].begin(), saved[i].end(), ens.head_groups()[2][i]->value.mutable_data().begin());

    auto after = ens.disagreement(feats, actions);
    for (int i = 0; i < before.numel(); ++i) CHECK(before.data()[i] == doctest::Approx(after.data()[i]));
}

TEST_CASE("random initialization yields positive reward before training") {
    ParamSet ps;
    RandomSource rng(4);
    Ensemble ens(ps, "ens", tiny_ens_config(), rng);
    auto feats = Tensor::from_data({3, 6}, std::vector<float>(18, 0.5f));
    auto actions = Tensor::from_data({3, 2}, std::vector<float>(6, 0.0f));
    auto reward = ens.disagreement(feats, actions);
    for (float v : reward.data()) CHECK(v > 0.0f);
}

TEST_CASE("ensemble training reduces the loss on a fixed batch") {
    ParamSet ps;
    RandomSource rng(5);
    Ensemble ens(ps, "ens", tiny_ens_config(), rng);
    RandomSource data(6);
    std::vector<float> in(40 * 8), tg(40 * 4);
    for (auto& v : in) v = static_cast<float>(data.uniform(-1, 1));
    for (auto& v : tg) v = static_cast<float>(data.uniform(-1, 1));
    auto inputs = Tensor::from_data({40, 8}, in);
    auto targets = Tensor::from_data({40, 4}, tg);
    const float first = ens.train_step(inputs, targets).loss;
    float last = first;
    for (int i = 0; i < 500; ++i) last = ens.train_step(inputs, targets).loss;
    CHECK(last < first);
    for (int i = 0; i < 1500; ++i) last = ens.train_step(inputs, targets).loss;
    CHECK(last < 0.5f * first);
}

TEST_CASE("trained ensemble disagrees more outside the training hull") {
    // Deterministic synthetic dynamics z' = A z; train on inputs inside
    // [-1,1], probe far outside.
    ParamSet ps;
    RandomSource rng(7);
    EnsembleConfig cfg = tiny_ens_config();
    cfg.input_dim = 4;  // treat (feat=2, action=2)
    cfg.output_dim = 2;
    cfg.lr = 1e-3f;
    Ensemble ens(ps, "ens", cfg, rng);

    RandomSource data(8);
    const float a00 = 0.8f, a01 = -0.3f, a10 = 0.2f, a11 = 0.6f;
    std::vector<float> in, tg;
    for (int i = 0; i < 256; ++i) {
        const float z0 = static_cast<float>(data.uniform(-1, 1));
        const float z1 = static_cast<float>(data.uniform(-1, 1));
        const float u0 = static_cast<float>(data.uniform(-1, 1));
        const float u1 = static_cast<float>(data.uniform(-1, 1));
        in.insert(in.end(), {z0, z1, u0, u1});
        tg.insert(tg.end(), {a00 * z0 + a01 * z1, a10 * z0 + a11 * z1});
    }
    auto inputs = Tensor::from_data({256, 4}, in);
    auto targets = Tensor::from_data({256, 2}, tg);
    float loss = 1.0f;
    for (int i = 0; i < 1500 && loss > 1e-3f; ++i) loss = ens.train_step(inputs, targets).loss / cfg.heads;
    CHECK(loss < 5e-3f);

    double in_hull = 0.0, out_hull = 0.0;
    RandomSource probe(9);
    for (int i = 0; i < 100; ++i) {
        std::vector<float> p_in(4), p_out(4);
        for (auto& v : p_in) v = static_cast<float>(probe.uniform(-1, 1));
        for (auto& v : p_out) v = static_cast<float>(probe.uniform(-1, 1)) * 10.0f;
        in_hull += ens.disagreement(Tensor::from_data({1, 2}, {p_in[0], p_in[1]}),
                                    Tensor::from_data({1, 2}, {p_in[2], p_in[3]}))
                       .data()[0];
        out_hull += ens.disagreement(Tensor::from_data({1, 2}, {p_out[0], p_out[1]}),
                                     Tensor::from_data({1, 2}, {p_out[2], p_out[3]}))
                        .data()[0];
    }
    CHECK(out_hull > 2.0 * in_hull);
}

}  // TEST_SUITE

TEST_SUITE("achiever") {

TEST_CASE("cosine reward: identical, antipodal, hand case, scale invariance") {
    auto a = Tensor::from_data({1, 4}, {1.0f, 0.0f, 0.0f, 0.0f});
    auto g = Tensor::from_data({1, 4}, {1.0f, 1.0f, 0.0f, 0.0f});
    CHECK(cosine_reward(a, a).data()[0] == doctest::Approx(1.0f));
    CHECK(cosine_reward(a, mul_scalar(a, -1.0f)).data()[0] == doctest::Approx(-1.0f));
    CHECK(cosine_reward(a, g).data()[0] == doctest::Approx(1.0f / std::sqrt(2.0f)));

    RandomSource rng(11);
    std::vector<float> f(8);
    for (auto& v : f) v = static_cast<float>(rng.uniform(-1, 1));
    auto x = Tensor::from_data({1, 8}, f);
    auto goal = Tensor::from_data({1, 8}, std::vector<float>(8, 0.3f));
    const float base = cosine_reward(x, goal).data()[0];
    for (float alpha : {0.5f, 3.0f, 42.0f})
        CHECK(std::abs(cosine_reward(mul_scalar(x, alpha), goal).data()[0] - base) < 1e-6f);
}

TEST_CASE("cosine reward: zero-norm vector gives reward 0") {
    auto z = Tensor::zeros({1, 4});
    auto g = Tensor::from_data({1, 4}, {1.0f, 0.0f, 0.0f, 0.0f});
    const int64_t events = cosine_zero_norm_events();
    CHECK(cosine_reward(z, g).data()[0] == 0.0f);
    CHECK(cosine_zero_norm_events() == events + 1);
}

TEST_CASE("distance net output lies in [0,1]; temporal reward in [-1,0]") {
    ParamSet ps;
    RandomSource rng(13);
    DistanceNet dist(ps, "dist", 6, 10, 2, rng);
    EmbeddingPredictor emb(ps, "emb", 8, 6, 10, 2, rng);
    RandomSource data(14);
    for (int i = 0; i < 50; ++i) {
        std::vector<float> ea(6), eb(6), feats(8);
        for (auto& v : ea) v = static_cast<float>(data.uniform(-10, 10));
        for (auto& v : eb) v = static_cast<float>(data.uniform(-10, 10));
        for (auto& v : feats) v = static_cast<float>(data.uniform(-10, 10));
        const float d = dist(Tensor::from_data({1, 6}, ea), Tensor::from_data({1, 6}, eb)).data()[0];
        CHECK(d >= 0.0f);
        CHECK(d <= 1.0f);
        const float r = temporal_reward(emb, dist, Tensor::from_data({1, 8}, feats),
                                        Tensor::from_data({1, 6}, eb))
                            .data()[0];
        CHECK(r <= 0.0f);
        CHECK(r >= -1.0f);
    }
}

TEST_CASE("distance pair construction follows the sampling contract") {
    DistanceTrainConfig cfg;
    cfg.anchors_per_trajectory = 4;

    SUBCASE("p_neg = 0 never crosses trajectories; targets are k/H") {
        cfg.p_neg = 0.0f;
        RandomSource rng(15);
        bool saw_zero = false, saw_full = false;
        for (int rep = 0; rep < 200; ++rep) {
            auto pairs = build_distance_pairs(6, 10, cfg, rng);
            for (const auto& p : pairs) {
                CHECK(p.traj_a == p.traj_b);
                CHECK_FALSE(p.negative);
                CHECK(p.target == doctest::Approx(static_cast<float>(p.t_b - p.t_a) / 10.0f));
                if (p.t_b == p.t_a) {
                    CHECK(p.target == 0.0f);  // k = 0
                    saw_zero = true;
                }
                if (p.t_b - p.t_a == 10) {
                    CHECK(p.target == 1.0f);  // k = H
                    saw_full = true;
                }
            }
        }
        CHECK(saw_zero);
        CHECK(saw_full);
    }

    SUBCASE("negatives cross trajectories with target exactly 1") {
        cfg.p_neg = 1.0f;
        RandomSource rng(16);
        auto pairs = build_distance_pairs(6, 10, cfg, rng);
        for (const auto& p : pairs) {
            CHECK(p.negative);
            CHECK(p.traj_a != p.traj_b);
            CHECK(p.target == 1.0f);
        }
    }

    SUBCASE("single trajectory with p_neg > 0 skips negatives") {
        cfg.p_neg = 1.0f;
        RandomSource rng(17);
        bool skipped = false;
        auto pairs = build_distance_pairs(1, 10, cfg, rng, &skipped);
        CHECK(skipped);
        for (const auto& p : pairs) CHECK_FALSE(p.negative);
    }
}

TEST_CASE("distance training drives d(e,e) toward zero") {
    ParamSet ps;
    RandomSource rng(18);
    const int feat_dim = 8, embed_dim = 6, horizon = 5, n_traj = 4;
    DistanceNet dist(ps, "dist", embed_dim, 12, 2, rng);
    EmbeddingPredictor emb(ps, "emb", feat_dim, embed_dim, 12, 2, rng);

    RandomSource data(19);
    std::vector<Tensor> feats;
    for (int t = 0; t <= horizon; ++t) {
        std::vector<float> rows(static_cast<size_t>(n_traj) * feat_dim);
        for (auto& v : rows) v = static_cast<float>(data.uniform(-1, 1));
        feats.push_back(Tensor::from_data({n_traj, feat_dim}, rows));
    }
    // Replay regression rows that agree with the predictor keep the probe
    // focused on the distance head.
    std::vector<float> rf(16 * feat_dim);
    for (auto& v : rf) v = static_cast<float>(data.uniform(-1, 1));
    auto replay_feats = Tensor::from_data({16, feat_dim}, rf);
    auto replay_embeds = emb(replay_feats).detach();

    DistanceTrainConfig cfg;
    cfg.p_neg = 0.1f;
    RandomSource train_rng(20);
    for (int i = 0; i < 12000; ++i)
        distance_train(dist, emb, feats, replay_feats, replay_embeds, cfg, train_rng);

    // d(e, e) should now be small on the training embeddings.
    double acc = 0.0;
    for (int t = 0; t <= horizon; ++t) {
        auto e = emb(feats[static_cast<size_t>(t)]);
        auto d = dist(e, e);
        for (float v : d.data()) acc += v;
    }
    acc /= (horizon + 1) * n_traj;
    CHECK(acc < 0.1);
}

TEST_CASE("distance training with p_neg and a single trajectory warns but proceeds") {
    ParamSet ps;
    RandomSource rng(21);
    DistanceNet dist(ps, "dist", 4, 8, 1, rng);
    EmbeddingPredictor emb(ps, "emb", 6, 4, 8, 1, rng);
    std::vector<Tensor> feats;
    for (int t = 0; t <= 3; ++t) feats.push_back(Tensor::full({1, 6}, 0.1f * static_cast<float>(t)));
    DistanceTrainConfig cfg;
    cfg.p_neg = 1.0f;
    auto out = distance_train(dist, emb, feats, Tensor::full({4, 6}, 0.2f), Tensor::full({4, 4}, 0.1f), cfg, rng);
    CHECK(out.negatives_skipped);
    CHECK(out.stepped);
}

}  // TEST_SUITE
