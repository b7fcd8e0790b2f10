#pragma once

#include "lexa/imagination.hpp"

namespace lexa {

struct EnsembleConfig {
    int heads = 8;
    int hidden = 200;
    int layers = 2;
    int input_dim = 0;   // features + action
    int output_dim = 0;  // stochastic latent size
    float lr = 3e-4f;
    float clip_norm = 100.0f;
};

// K independently initialized one-step predictors of the next stochastic
// latent; their disagreement is the exploration reward.
class Ensemble {
  public:
    Ensemble() = default;
    Ensemble(ParamSet& ps, const std::string& prefix, const EnsembleConfig& cfg, RandomSource& rng);

    int heads() const { return static_cast<int>(nets_.size()); }
    const EnsembleConfig& config() const { return cfg_; }
    const std::vector<std::vector<ParamPtr>>& head_groups() const { return groups_; }

    // Population variance across heads, per output dimension, averaged over
    // the output dimensions. [S] result; always >= 0.
    Tensor disagreement(const Tensor& feats, const Tensor& actions, bool frozen = false) const;

    // One Adam step per head toward the detached next latents. Returns the
    // summed per-head MSE (or NaN-skip count via stepped flags in metrics).
    struct TrainOut {
        float loss = 0.0f;
        bool stepped = false;
    };
    TrainOut train_step(const Tensor& inputs, const Tensor& targets);

  private:
    std::vector<Mlp> nets_;
    std::vector<std::vector<ParamPtr>> groups_;
    EnsembleConfig cfg_;
};

}  // namespace lexa
