#include "lexa/achiever.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace lexa {

namespace {
std::atomic<int64_t> g_zero_norm_events{0};
}

DistanceNet::DistanceNet(ParamSet& ps, const std::string& prefix, int embed_dim, int hidden, int layers,
                         RandomSource& rng) {
    const size_t before = ps.all().size();
    std::vector<int> dims{2 * embed_dim};
    for (int i = 0; i < layers; ++i) dims.push_back(hidden);
    dims.push_back(1);
    net_ = Mlp(ps, prefix, dims, rng);
    group_.assign(ps.all().begin() + static_cast<long>(before), ps.all().end());
}

Tensor DistanceNet::operator()(const Tensor& e_a, const Tensor& e_b, bool frozen) const {
    auto raw = net_(concat<float>({e_a, e_b}, 1), frozen);
    return reshape(sigmoid(raw), {e_a.dim(0)});
}

EmbeddingPredictor::EmbeddingPredictor(ParamSet& ps, const std::string& prefix, int feature_dim, int embed_dim,
                                       int hidden, int layers, RandomSource& rng) {
    const size_t before = ps.all().size();
    std::vector<int> dims{feature_dim};
    for (int i = 0; i < layers; ++i) dims.push_back(hidden);
    dims.push_back(embed_dim);
    net_ = Mlp(ps, prefix, dims, rng);
    group_.assign(ps.all().begin() + static_cast<long>(before), ps.all().end());
}

Tensor EmbeddingPredictor::operator()(const Tensor& features, bool frozen) const { return net_(features, frozen); }

int64_t cosine_zero_norm_events() { return g_zero_norm_events.load(); }

namespace {

Tensor l2_normalize_rows(const Tensor& x) {
    auto sq_norm = sum(square(x), 1);  // [S]
    for (float v : sq_norm.data())
        if (v <= 1e-16f) {
            g_zero_norm_events.fetch_add(1);
            fprintf(stderr, "[lexa] cosine_reward: zero-norm feature vector, reward 0\n");
            break;
        }
    auto inv = divide(Tensor::full({x.dim(0)}, 1.0f), sqrt(clamp_min(sq_norm, 1e-16f)));
    return scale_rows(x, inv);
}

}  // namespace

Tensor cosine_reward(const Tensor& feats, const Tensor& goal_feats) {
    if (feats.shape() != goal_feats.shape())
        throw std::invalid_argument("cosine_reward: feature shapes differ: " + shape_str(feats.shape()) + " vs " +
                                    shape_str(goal_feats.shape()));
    return sum(mul(l2_normalize_rows(feats), l2_normalize_rows(goal_feats)), 1);
}

ModelState infer_goal_state(const WorldModel& wm, const Tensor& goal_embeds) {
    const int n = goal_embeds.dim(0);
    auto zero_action = Tensor::zeros({n, wm.config().action_dim});
    return wm.posterior_mean(wm.initial_state(n), zero_action, goal_embeds, /*frozen=*/true);
}

Tensor temporal_reward(const EmbeddingPredictor& emb, const DistanceNet& dist, const Tensor& feats,
                       const Tensor& goal_embeds) {
    return neg(dist(emb(feats, /*frozen=*/true), goal_embeds, /*frozen=*/true));
}

std::vector<DistancePair> build_distance_pairs(int n_traj, int horizon, const DistanceTrainConfig& cfg,
                                               RandomSource& rng, bool* negatives_skipped) {
    std::vector<DistancePair> pairs;
    bool warned_single = false;
    for (int s = 0; s < n_traj; ++s) {
        for (int a = 0; a < cfg.anchors_per_trajectory; ++a) {
            DistancePair p;
            p.traj_a = s;
            p.t_a = rng.uniform_int(0, horizon);
            const int k = rng.uniform_int(0, horizon - p.t_a);
            p.traj_b = s;
            p.t_b = p.t_a + k;
            p.target = static_cast<float>(k) / static_cast<float>(horizon);
            const bool want_negative = cfg.p_neg > 0.0f && rng.uniform() < cfg.p_neg;
            if (want_negative) {
                if (n_traj < 2) {
                    if (!warned_single) {
                        fprintf(stderr, "[lexa] distance_train: single-trajectory batch, negatives skipped\n");
                        warned_single = true;
                        if (negatives_skipped != nullptr) *negatives_skipped = true;
                    }
                } else {
                    p.traj_b = rng.uniform_int(0, n_traj - 2);
                    if (p.traj_b >= s) ++p.traj_b;  // any trajectory but this one
                    p.t_b = rng.uniform_int(0, horizon);
                    p.target = 1.0f;  // maximum possible distance
                    p.negative = true;
                }
            }
            pairs.push_back(p);
        }
    }
    return pairs;
}

DistanceTrainOut distance_train(DistanceNet& dist, EmbeddingPredictor& emb, const std::vector<Tensor>& rollout_feats,
                                const Tensor& replay_feats, const Tensor& replay_embeds,
                                const DistanceTrainConfig& cfg, RandomSource& rng) {
    DistanceTrainOut out;
    if (rollout_feats.size() < 2) throw std::invalid_argument("distance_train: need at least a 1-step rollout");
    const int horizon = static_cast<int>(rollout_feats.size()) - 1;
    const int n_traj = rollout_feats.front().dim(0);
    const int feat_dim = rollout_feats.front().dim(1);

    const auto pairs = build_distance_pairs(n_traj, horizon, cfg, rng, &out.negatives_skipped);

    // Assemble pair rows on the host; inputs are detached leaves.
    std::vector<float> a_rows, b_rows, targets;
    for (const auto& p : pairs) {
        auto anchor = rollout_feats[static_cast<size_t>(p.t_a)].data();
        auto partner = rollout_feats[static_cast<size_t>(p.t_b)].data();
        a_rows.insert(a_rows.end(), anchor.begin() + static_cast<long>(p.traj_a) * feat_dim,
                      anchor.begin() + static_cast<long>(p.traj_a + 1) * feat_dim);
        b_rows.insert(b_rows.end(), partner.begin() + static_cast<long>(p.traj_b) * feat_dim,
                      partner.begin() + static_cast<long>(p.traj_b + 1) * feat_dim);
        targets.push_back(p.target);
    }
    const int n_pairs = static_cast<int>(targets.size());

    Tape tape;
    {
        TapeScope scope(tape);
        auto ea = emb(Tensor::from_data({n_pairs, feat_dim}, a_rows));
        auto eb = emb(Tensor::from_data({n_pairs, feat_dim}, b_rows));
        auto pred = dist(ea, eb);
        auto dist_loss = mean(square(sub(pred, Tensor::from_data({n_pairs}, targets))));

        auto pred_emb = emb(replay_feats);
        auto emb_loss = mean(square(sub(pred_emb, replay_embeds)));

        auto loss = add(dist_loss, emb_loss);
        out.dist_loss = dist_loss.item();
        out.loss = loss.item();
        if (!std::isfinite(out.loss)) {
            fprintf(stderr, "[lexa] distance_train: non-finite loss, step skipped\n");
            tape.clear();
            return out;
        }
        zero_grad(dist.param_group());
        zero_grad(emb.param_group());
        tape.backward(loss);
    }
    AdamConfig opt;
    opt.lr = cfg.lr;
    opt.clip_norm = cfg.clip_norm;
    const bool d_ok = adam_step(dist.param_group(), opt);
    const bool e_ok = adam_step(emb.param_group(), opt);
    if (!d_ok || !e_ok) fprintf(stderr, "[lexa] distance_train: non-finite gradients, step skipped\n");
    out.stepped = d_ok && e_ok;
    return out;
}

}  // namespace lexa
