#pragma once

#include <map>
#include <optional>
#include <string>

#include "lexa/achiever.hpp"
#include "lexa/explorer.hpp"
#include "lexa/imagination.hpp"
#include "lexa/replay.hpp"
#include "lexa/world_model.hpp"

#include "lexa/envs.hpp"

namespace lexa {

struct ConfigError : std::runtime_error {
    std::string field;
    ConfigError(std::string f, const std::string& msg) : std::runtime_error(msg), field(std::move(f)) {}
};

// Every knob of a run. Serialized verbatim into the run directory.
struct TrainConfig {
    std::string env = "pointrooms";
    std::string reward = "cosine";  // cosine | temporal
    int64_t total_env_steps = 200000;
    uint64_t seed = 0;
    int train_every = 5;
    int batch_size = 16;
    int seq_len = 32;
    int horizon = 15;
    int imagination_starts = 16;
    int prefill_episodes = 10;
    int64_t eval_every = 5000;
    int eval_episodes_per_goal = 10;
    int64_t checkpoint_every = 10000;

    // world model
    int deter_dim = 128;
    int stoch_dim = 32;
    int embed_dim = 64;
    int enc_hidden = 256;
    int dec_hidden = 256;
    int gru_input_dim = 128;
    int stat_hidden = 128;
    float wm_lr = 3e-4f;
    float beta = 1.0f;
    float free_nats = 1.0f;
    float std_floor = 0.01f;

    // ensemble
    int ensemble_heads = 8;
    int ensemble_hidden = 200;
    int ensemble_layers = 2;
    float ensemble_lr = 3e-4f;
    int ensemble_train_pairs = 192;

    // actor-critic (shared by explorer and achiever)
    int ac_hidden = 200;
    int ac_layers = 2;
    float actor_lr = 8e-5f;
    float critic_lr = 8e-5f;
    float entropy_coef = 1e-4f;
    float gamma = 0.99f;
    float lambda = 0.95f;
    int target_interval = 100;

    // temporal distance
    float dist_lr = 3e-4f;
    int dist_hidden = 200;
    int dist_layers = 2;
    int dist_anchors = 4;
    float p_neg = 0.1f;
    int emb_regression_rows = 128;

    float clip_norm = 100.0f;

    EnvKind env_kind() const { return env_from_name(env); }
    bool temporal_mode() const { return reward == "temporal"; }
    void validate() const;  // throws ConfigError naming the offending field
    uint64_t hash() const;
    std::string to_json_string() const;
    static TrainConfig from_json_string(const std::string& text);
    static TrainConfig from_json_file(const std::string& path);
    static TrainConfig defaults_for(EnvKind kind);
};

struct CycleMetrics {
    std::map<std::string, double> scalars;
};

// The full LEXA agent: world model, disagreement ensemble, explorer and
// goal-conditioned achiever actor-critics, temporal distance and embedding
// predictor. Parameter names are prefixed wm/, ens/, expl/, achv/, dist/,
// emb/ in registration order.
class LexaAgent {
  public:
    explicit LexaAgent(const TrainConfig& cfg);

    const TrainConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    WorldModel& wm() { return *wm_; }
    const WorldModel& wm() const { return *wm_; }
    Ensemble& ensemble() { return *ensemble_; }
    ActorCritic& explorer() { return *explorer_; }
    ActorCritic& achiever() { return *achiever_; }
    DistanceNet& dist() { return *dist_; }
    EmbeddingPredictor& emb() { return *emb_; }

    // One training cycle: world-model step, ensemble step, one explorer and
    // one achiever imagination update from the same batch's detached
    // posterior states, and (temporal mode) one distance step on the
    // achiever's fresh rollouts.
    CycleMetrics update_cycle(const ReplayBuffer& replay, RandomSource& rng);

    // Pieces, exposed for tests and for the evaluation loop.
    struct ExplorerOut {
        AcUpdate ac;
    };
    ExplorerOut explorer_update(const std::vector<ModelState>& replay_states, RandomSource& rng);

    struct AchieverOut {
        AcUpdate ac;
        std::vector<Tensor> rollout_feats;  // detached, for distance training
    };
    AchieverOut achiever_update(const std::vector<ModelState>& replay_states, const Tensor& goal_images,
                                RandomSource& rng);

    // Uniform goal-frame picks over every frame of the sampled batch.
    Tensor sample_training_goals(const SequenceBatch& batch, int count, RandomSource& rng) const;
    std::vector<int> sample_goal_frame_indices(const SequenceBatch& batch, int count, RandomSource& rng) const;

    // Gathers `count` rows uniformly from the T x B grid of detached states.
    ModelState gather_starts(const std::vector<ModelState>& states, int count, RandomSource& rng) const;

    // Action selection during environment interaction.
    Tensor policy_features(const ModelState& state) const { return wm_->features(state); }

  private:
    TrainConfig cfg_;
    ParamSet params_;
    RandomSource init_rng_;
    std::optional<WorldModel> wm_;
    std::optional<Ensemble> ensemble_;
    std::optional<ActorCritic> explorer_;
    std::optional<ActorCritic> achiever_;
    std::optional<DistanceNet> dist_;
    std::optional<EmbeddingPredictor> emb_;
};

}  // namespace lexa
