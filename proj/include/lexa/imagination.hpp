#pragma once

#include <functional>
#include <vector>

#include "lexa/world_model.hpp"

namespace lexa {

struct PolicyConfig {
    int input_dim = 0;  // features (+ goal embedding for the achiever)
    int action_dim = 2;
    int hidden = 200;
    int layers = 2;
    float min_std = 0.01f;
    float max_std = 1.0f;
};

// Tanh-squashed diagonal Gaussian policy; std is bounded to
// [min_std, max_std] by a scaled sigmoid.
class PolicyHead {
  public:
    PolicyHead() = default;
    PolicyHead(ParamSet& ps, const std::string& prefix, const PolicyConfig& cfg, RandomSource& rng);

    struct Sampled {
        Tensor action;   // [S, A], squashed to [-1, 1]
        Tensor entropy;  // [S], entropy of the pre-squash Gaussian
    };
    Sampled sample(const Tensor& input, RandomSource& rng) const;
    Tensor mean_action(const Tensor& input) const;  // tanh(mu)

  private:
    std::pair<Tensor, Tensor> stats(const Tensor& input) const;
    Mlp net_;
    PolicyConfig cfg_;
};

// Scalar state value with a hard-copied target snapshot. The snapshot lives
// in the parameter registry (suffix _target) so checkpoints carry it, but it
// never joins an optimizer group.
class ValueHead {
  public:
    ValueHead() = default;
    ValueHead(ParamSet& ps, const std::string& prefix, int input_dim, int hidden, int layers, RandomSource& rng);

    Tensor value(const Tensor& input, bool frozen = false) const;  // [S]
    Tensor target_value(const Tensor& input) const;                // [S], never tracked
    void refresh_target();
    bool target_matches_online() const;
    const std::vector<ParamPtr>& online_group() const { return online_; }

  private:
    Mlp net_;
    std::vector<ParamPtr> online_;
    std::vector<ParamPtr> target_;  // same order as online_
};

// Latent trajectories imagined under the prior. states[0] is the detached
// replay-derived start; everything after stays on the gradient path of the
// tape the rollout owns (the actor update extends and then consumes it).
struct ImaginedRollout {
    std::shared_ptr<Tape> tape;
    std::vector<ModelState> states;   // H+1
    std::vector<Tensor> feats;        // H+1, [S, feat] on-graph
    std::vector<Tensor> actions;      // H,   [S, A] on-graph
    std::vector<Tensor> entropies;    // H,   [S]
    std::vector<Tensor> goal_embed;   // empty, or single [S, De] policy conditioning
    int horizon = 0;
    int starts = 0;

    // Detached feature copies, usable after the actor update consumed the tape.
    std::vector<Tensor> feats_detached() const;
};

// Samples a_t ~ policy(features(s_t) [, e_g]) and s_{t+1} ~ prior(s_t, a_t)
// for `horizon` steps. World-model parameters stay frozen; policy parameters
// stay live so the actor gradient can flow.
ImaginedRollout rollout(const WorldModel& wm, const PolicyHead& policy, const ModelState& starts,
                        const Tensor& goal_embed, int horizon, RandomSource& rng);

// V_t = r_t + gamma * ((1-lambda) * v_{t+1} + lambda * V_{t+1}), bootstrapped
// with V_H = v_H; computed by backward recursion. rewards: H x [S],
// values: (H+1) x [S]. Differentiable through both inputs.
std::vector<Tensor> lambda_return(const std::vector<Tensor>& rewards, const std::vector<Tensor>& values, float gamma,
                                  float lambda);

// Matrix form matching the H x S / (H+1) x S layout.
Tensor lambda_return_matrix(const Tensor& rewards, const Tensor& values, float gamma, float lambda);

struct ActorCriticConfig {
    int horizon = 15;
    float gamma = 0.99f;
    float lambda = 0.95f;
    float entropy_coef = 1e-4f;
    float actor_lr = 8e-5f;
    float critic_lr = 8e-5f;
    float clip_norm = 100.0f;
    int target_interval = 100;
    int hidden = 200;
    int layers = 2;
};

// Rewards for each imagined transition, on the gradient path. Index t pairs
// with the step from states[t] to states[t+1].
using RewardFn = std::function<std::vector<Tensor>(const ImaginedRollout&)>;

struct AcUpdate {
    float actor_loss = 0.0f;
    float critic_loss = 0.0f;
    float reward_mean = 0.0f;
    bool stepped = false;
};

// Dreamer-style trainer shared by the explorer and the achiever: the actor
// maximizes lambda-returns by backpropagation through the frozen dynamics and
// reward function; the critic regresses onto detached returns computed with
// the target network.
class ActorCritic {
  public:
    ActorCritic() = default;
    ActorCritic(ParamSet& ps, const std::string& prefix, const PolicyConfig& pcfg, const ActorCriticConfig& cfg,
                RandomSource& rng);

    const PolicyHead& policy() const { return policy_; }
    ValueHead& value() { return value_; }
    const ActorCriticConfig& config() const { return cfg_; }
    int64_t critic_steps() const { return critic_steps_; }
    void set_critic_steps(int64_t n) { critic_steps_ = n; }

    AcUpdate update(ImaginedRollout& ro, const RewardFn& reward_fn);

  private:
    PolicyHead policy_;
    ValueHead value_;
    std::vector<ParamPtr> actor_group_;
    std::vector<ParamPtr> critic_group_;
    ActorCriticConfig cfg_;
    int64_t critic_steps_ = 0;
};

}  // namespace lexa
