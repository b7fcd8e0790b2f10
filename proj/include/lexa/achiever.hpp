#pragma once

#include "lexa/imagination.hpp"
#include "lexa/world_model.hpp"

namespace lexa {

// d_omega(e_i, e_j) in [0,1] via a terminal sigmoid; approximates the number
// of policy steps between the two embeddings, normalized by the horizon.
class DistanceNet {
  public:
    DistanceNet() = default;
    DistanceNet(ParamSet& ps, const std::string& prefix, int embed_dim, int hidden, int layers, RandomSource& rng);

    Tensor operator()(const Tensor& e_a, const Tensor& e_b, bool frozen = false) const;  // [S]
    const std::vector<ParamPtr>& param_group() const { return group_; }

  private:
    Mlp net_;
    std::vector<ParamPtr> group_;
};

// emb(s) ~= e: predicts the encoder embedding from model-state features,
// removing the recurrent information before distances are measured.
class EmbeddingPredictor {
  public:
    EmbeddingPredictor() = default;
    EmbeddingPredictor(ParamSet& ps, const std::string& prefix, int feature_dim, int embed_dim, int hidden, int layers,
                       RandomSource& rng);

    Tensor operator()(const Tensor& features, bool frozen = false) const;  // [S, De]
    const std::vector<ParamPtr>& param_group() const { return group_; }

  private:
    Mlp net_;
    std::vector<ParamPtr> group_;
};

// Dot product of L2-normalized feature vectors; [-1, 1]. Zero-norm rows give
// reward 0 (and bump the shared counter so callers can log the event).
Tensor cosine_reward(const Tensor& feats, const Tensor& goal_feats);
int64_t cosine_zero_norm_events();

// One posterior step from the zero state with zero action and the goal
// embedding; z taken at its mean for reward stability.
ModelState infer_goal_state(const WorldModel& wm, const Tensor& goal_embeds);

// -d_omega(emb(s), e_g); range [-1, 0]. All parameters frozen (the reward is
// differentiated only through the state features).
Tensor temporal_reward(const EmbeddingPredictor& emb, const DistanceNet& dist, const Tensor& feats,
                       const Tensor& goal_embeds);

struct DistanceTrainConfig {
    float lr = 3e-4f;
    float clip_norm = 100.0f;
    int anchors_per_trajectory = 4;
    float p_neg = 0.1f;
    int replay_regression_rows = 128;
};

struct DistanceTrainOut {
    float loss = 0.0f;       // distance MSE + embedding regression MSE
    float dist_loss = 0.0f;  // distance MSE alone
    bool stepped = false;
    bool negatives_skipped = false;  // single-trajectory batch with p_neg > 0
};

// One training pair for the distance head. Positive pairs stay within a
// trajectory with target k/H; negatives cross trajectories with target 1.
struct DistancePair {
    int traj_a = 0, t_a = 0;
    int traj_b = 0, t_b = 0;
    float target = 0.0f;
    bool negative = false;
};

std::vector<DistancePair> build_distance_pairs(int n_traj, int horizon, const DistanceTrainConfig& cfg,
                                               RandomSource& rng, bool* negatives_skipped = nullptr);

// Samples (t, t+k) pairs from the achiever's imagined trajectories with
// target k/H, replaces the partner with one from another trajectory (target
// 1.0) with probability p_neg, and regresses emb toward the detached encoder
// embeddings of the replay-aligned states. One Adam step on d_omega and one
// on the predictor.
DistanceTrainOut distance_train(DistanceNet& dist, EmbeddingPredictor& emb,
                                const std::vector<Tensor>& rollout_feats,  // H+1 x [S, feat], detached
                                const Tensor& replay_feats, const Tensor& replay_embeds,
                                const DistanceTrainConfig& cfg, RandomSource& rng);

}  // namespace lexa
