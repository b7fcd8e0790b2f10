#pragma once

#include <vector>

#include "lexa/nn.hpp"

namespace lexa {

// RSSM latent: deterministic recurrent h plus stochastic Gaussian z. All
// members are batched [B, dim]; z_std is strictly positive by construction.
struct ModelState {
    Tensor h;
    Tensor z;
    Tensor z_mean;
    Tensor z_std;

    ModelState detached() const { return {h.detach(), z.detach(), z_mean.detach(), z_std.detach()}; }
    int batch() const { return h.dim(0); }
};

struct WorldModelLosses {
    float recon_nll = 0.0f;
    float kl = 0.0f;  // the KL term as it enters the objective (free-nats clipped)
    float total = 0.0f;
    float kl_raw = 0.0f;
    float pixel_mse = 0.0f;
};

// Training batch of replayed subsequences, stored time-major so per-step rows
// are contiguous. actions[t] is the action executed between images[t-1] and
// images[t]; the slot at t=0 is zero.
struct SequenceBatch {
    int batch = 0;
    int steps = 0;
    int image_dim = 0;
    int action_dim = 0;
    std::vector<float> images;   // [T][B][image_dim]
    std::vector<float> actions;  // [T][B][action_dim]
};

struct WorldModelConfig {
    int image_dim = 768;
    int embed_dim = 64;     // De
    int deter_dim = 128;    // Dh
    int stoch_dim = 32;     // Dz
    int action_dim = 2;
    int enc_hidden = 256;
    int dec_hidden = 256;
    int gru_input_dim = 128;
    int stat_hidden = 128;
    float std_floor = 0.01f;
    float beta = 1.0f;
    float free_nats = 1.0f;
    float lr = 3e-4f;
    float clip_norm = 100.0f;
    int feature_dim() const { return deter_dim + stoch_dim; }
};

struct ObserveResult {
    std::vector<ModelState> states;  // T detached posterior states
    std::vector<Tensor> embeds;      // T detached encoder embeddings [B, De]
    WorldModelLosses losses;
    bool stepped = false;  // false when the update was skipped (non-finite loss)
};

// The recurrent state-space world model: MLP encoder, shared GRU core,
// posterior and prior latent heads, MLP image decoder. Trained end to end on
// replayed sequences with a reconstruction plus KL objective.
class WorldModel {
  public:
    WorldModel(ParamSet& params, const WorldModelConfig& cfg, RandomSource& init_rng);

    const WorldModelConfig& config() const { return cfg_; }
    const std::vector<ParamPtr>& param_group() const { return group_; }

    // images01: [N, image_dim], pixel values in [0,1] (rejected otherwise).
    Tensor encode(const Tensor& images01, bool frozen = false) const;

    ModelState initial_state(int batch) const;

    ModelState posterior(const ModelState& prev, const Tensor& action, const Tensor& embed, RandomSource& rng,
                         bool frozen = false) const;
    ModelState prior(const ModelState& prev, const Tensor& action, RandomSource& rng, bool frozen = false) const;

    // Posterior with z taken at its mean; used for goal-state inference.
    ModelState posterior_mean(const ModelState& prev, const Tensor& action, const Tensor& embed,
                              bool frozen = false) const;

    Tensor decode(const ModelState& state, bool frozen = false) const;
    Tensor decode_features(const Tensor& features, bool frozen = false) const;
    Tensor features(const ModelState& state) const { return concat<float>({state.h, state.z}, 1); }

    // Unrolls the posterior over the batch, evaluates the prior at every step,
    // applies one optimizer step on the combined objective.
    ObserveResult observe_and_train(const SequenceBatch& batch, RandomSource& rng);

    // Loss evaluation without any gradient work (for held-out measurements).
    WorldModelLosses evaluate_loss(const SequenceBatch& batch, RandomSource& rng) const;

  private:
    Tensor deter_step(const ModelState& prev, const Tensor& action, bool frozen) const;
    std::pair<Tensor, Tensor> stat_split(const Tensor& raw) const;

    struct Unrolled;
    Unrolled unroll(const SequenceBatch& batch, RandomSource& rng, bool frozen) const;

    WorldModelConfig cfg_;
    Affine gru_in_;
    GruCell gru_;
    Mlp encoder_;
    Mlp decoder_;
    Mlp post_stat_;
    Mlp prior_stat_;
    std::vector<ParamPtr> group_;
    AdamConfig opt_;
};

}  // namespace lexa
