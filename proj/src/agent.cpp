#include "lexa/agent.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace lexa {

using nlohmann::json;

namespace {

const char* kFields[] = {
    "env", "reward", "total_env_steps", "seed", "train_every", "batch_size", "seq_len", "horizon",
    "imagination_starts", "prefill_episodes", "eval_every", "eval_episodes_per_goal", "checkpoint_every",
    "deter_dim", "stoch_dim", "embed_dim", "enc_hidden", "dec_hidden", "gru_input_dim", "stat_hidden", "wm_lr",
    "beta", "free_nats", "std_floor", "ensemble_heads", "ensemble_hidden", "ensemble_layers", "ensemble_lr",
    "ensemble_train_pairs", "ac_hidden", "ac_layers", "actor_lr", "critic_lr", "entropy_coef", "gamma", "lambda",
    "target_interval", "dist_lr", "dist_hidden", "dist_layers", "dist_anchors", "p_neg", "emb_regression_rows",
    "clip_norm"};

json config_to_json(const TrainConfig& c) {
    json j;
    j["env"] = c.env;
    j["reward"] = c.reward;
    j["total_env_steps"] = c.total_env_steps;
    j["seed"] = c.seed;
    j["train_every"] = c.train_every;
    j["batch_size"] = c.batch_size;
    j["seq_len"] = c.seq_len;
    j["horizon"] = c.horizon;
    j["imagination_starts"] = c.imagination_starts;
    j["prefill_episodes"] = c.prefill_episodes;
    j["eval_every"] = c.eval_every;
    j["eval_episodes_per_goal"] = c.eval_episodes_per_goal;
    j["checkpoint_every"] = c.checkpoint_every;
    j["deter_dim"] = c.deter_dim;
    j["stoch_dim"] = c.stoch_dim;
    j["embed_dim"] = c.embed_dim;
    j["enc_hidden"] = c.enc_hidden;
    j["dec_hidden"] = c.dec_hidden;
    j["gru_input_dim"] = c.gru_input_dim;
    j["stat_hidden"] = c.stat_hidden;
    j["wm_lr"] = c.wm_lr;
    j["beta"] = c.beta;
    j["free_nats"] = c.free_nats;
    j["std_floor"] = c.std_floor;
    j["ensemble_heads"] = c.ensemble_heads;
    j["ensemble_hidden"] = c.ensemble_hidden;
    j["ensemble_layers"] = c.ensemble_layers;
    j["ensemble_lr"] = c.ensemble_lr;
    j["ensemble_train_pairs"] = c.ensemble_train_pairs;
    j["ac_hidden"] = c.ac_hidden;
    j["ac_layers"] = c.ac_layers;
    j["actor_lr"] = c.actor_lr;
    j["critic_lr"] = c.critic_lr;
    j["entropy_coef"] = c.entropy_coef;
    j["gamma"] = c.gamma;
    j["lambda"] = c.lambda;
    j["target_interval"] = c.target_interval;
    j["dist_lr"] = c.dist_lr;
    j["dist_hidden"] = c.dist_hidden;
    j["dist_layers"] = c.dist_layers;
    j["dist_anchors"] = c.dist_anchors;
    j["p_neg"] = c.p_neg;
    j["emb_regression_rows"] = c.emb_regression_rows;
    j["clip_norm"] = c.clip_norm;
    return j;
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const std::exception&) {
        throw ConfigError(key, std::string("config field \"") + key + "\" has the wrong type");
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (env.empty()) throw ConfigError("env", "config field \"env\" is required");
    try {
        (void)env_from_name(env);
    } catch (const std::exception&) {
        throw ConfigError("env", "config field \"env\" must be \"pointrooms\" or \"pushblock\", got \"" + env + "\"");
    }
    if (reward != "cosine" && reward != "temporal")
        throw ConfigError("reward", "config field \"reward\" must be \"cosine\" or \"temporal\", got \"" + reward + "\"");
    if (total_env_steps <= 0) throw ConfigError("total_env_steps", "config field \"total_env_steps\" must be positive");
    if (train_every <= 0 || train_every > 100)
        throw ConfigError("train_every", "config field \"train_every\" must be in [1, 100]");
    if (batch_size <= 0) throw ConfigError("batch_size", "config field \"batch_size\" must be positive");
    if (seq_len < 2 || seq_len > 101) throw ConfigError("seq_len", "config field \"seq_len\" must be in [2, 101]");
    if (horizon < 1) throw ConfigError("horizon", "config field \"horizon\" must be >= 1");
    if (imagination_starts < 1)
        throw ConfigError("imagination_starts", "config field \"imagination_starts\" must be >= 1");
    if (prefill_episodes < 1) throw ConfigError("prefill_episodes", "config field \"prefill_episodes\" must be >= 1");
    if (eval_every <= 0 || eval_every % 100 != 0)
        throw ConfigError("eval_every", "config field \"eval_every\" must be a positive multiple of 100");
    if (checkpoint_every <= 0 || checkpoint_every % 100 != 0)
        throw ConfigError("checkpoint_every", "config field \"checkpoint_every\" must be a positive multiple of 100");
    if (eval_episodes_per_goal < 1)
        throw ConfigError("eval_episodes_per_goal", "config field \"eval_episodes_per_goal\" must be >= 1");
    if (p_neg < 0.0f || p_neg > 1.0f) throw ConfigError("p_neg", "config field \"p_neg\" must be in [0, 1]");
    if (gamma < 0.0f || gamma > 1.0f) throw ConfigError("gamma", "config field \"gamma\" must be in [0, 1]");
    if (lambda < 0.0f || lambda > 1.0f) throw ConfigError("lambda", "config field \"lambda\" must be in [0, 1]");
    if (ensemble_heads < 2) throw ConfigError("ensemble_heads", "config field \"ensemble_heads\" must be >= 2");
}

uint64_t TrainConfig::hash() const {
    const std::string s = to_json_string();
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string TrainConfig::to_json_string() const { return config_to_json(*this).dump(2); }

TrainConfig TrainConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* f : kFields)
            if (it.key() == f) known = true;
        if (!known) throw ConfigError(it.key(), "unknown config field \"" + it.key() + "\"");
    }
    TrainConfig c;
    if (!j.contains("env")) throw ConfigError("env", "config field \"env\" is required");
    read_field(j, "env", c.env);
    read_field(j, "reward", c.reward);
    read_field(j, "total_env_steps", c.total_env_steps);
    read_field(j, "seed", c.seed);
    read_field(j, "train_every", c.train_every);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "seq_len", c.seq_len);
    read_field(j, "horizon", c.horizon);
    read_field(j, "imagination_starts", c.imagination_starts);
    read_field(j, "prefill_episodes", c.prefill_episodes);
    read_field(j, "eval_every", c.eval_every);
    read_field(j, "eval_episodes_per_goal", c.eval_episodes_per_goal);
    read_field(j, "checkpoint_every", c.checkpoint_every);
    read_field(j, "deter_dim", c.deter_dim);
    read_field(j, "stoch_dim", c.stoch_dim);
    read_field(j, "embed_dim", c.embed_dim);
    read_field(j, "enc_hidden", c.enc_hidden);
    read_field(j, "dec_hidden", c.dec_hidden);
    read_field(j, "gru_input_dim", c.gru_input_dim);
    read_field(j, "stat_hidden", c.stat_hidden);
    read_field(j, "wm_lr", c.wm_lr);
    read_field(j, "beta", c.beta);
    read_field(j, "free_nats", c.free_nats);
    read_field(j, "std_floor", c.std_floor);
    read_field(j, "ensemble_heads", c.ensemble_heads);
    read_field(j, "ensemble_hidden", c.ensemble_hidden);
    read_field(j, "ensemble_layers", c.ensemble_layers);
    read_field(j, "ensemble_lr", c.ensemble_lr);
    read_field(j, "ensemble_train_pairs", c.ensemble_train_pairs);
    read_field(j, "ac_hidden", c.ac_hidden);
    read_field(j, "ac_layers", c.ac_layers);
    read_field(j, "actor_lr", c.actor_lr);
    read_field(j, "critic_lr", c.critic_lr);
    read_field(j, "entropy_coef", c.entropy_coef);
    read_field(j, "gamma", c.gamma);
    read_field(j, "lambda", c.lambda);
    read_field(j, "target_interval", c.target_interval);
    read_field(j, "dist_lr", c.dist_lr);
    read_field(j, "dist_hidden", c.dist_hidden);
    read_field(j, "dist_layers", c.dist_layers);
    read_field(j, "dist_anchors", c.dist_anchors);
    read_field(j, "p_neg", c.p_neg);
    read_field(j, "emb_regression_rows", c.emb_regression_rows);
    read_field(j, "clip_norm", c.clip_norm);
    c.validate();
    return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("", "cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json_string(text);
}

TrainConfig TrainConfig::defaults_for(EnvKind kind) {
    TrainConfig c;
    c.env = env_name(kind);
    c.total_env_steps = kind == EnvKind::PushBlock ? 400000 : 200000;
    return c;
}

LexaAgent::LexaAgent(const TrainConfig& cfg)
    : cfg_(cfg), init_rng_(RandomSource::mix(cfg.seed, 0x1e8a11)) {
    cfg_.validate();
    WorldModelConfig wc;
    wc.deter_dim = cfg.deter_dim;
    wc.stoch_dim = cfg.stoch_dim;
    wc.embed_dim = cfg.embed_dim;
    wc.enc_hidden = cfg.enc_hidden;
    wc.dec_hidden = cfg.dec_hidden;
    wc.gru_input_dim = cfg.gru_input_dim;
    wc.stat_hidden = cfg.stat_hidden;
    wc.std_floor = cfg.std_floor;
    wc.beta = cfg.beta;
    wc.free_nats = cfg.free_nats;
    wc.lr = cfg.wm_lr;
    wc.clip_norm = cfg.clip_norm;
    wm_.emplace(params_, wc, init_rng_);

    EnsembleConfig ec;
    ec.heads = cfg.ensemble_heads;
    ec.hidden = cfg.ensemble_hidden;
    ec.layers = cfg.ensemble_layers;
    ec.input_dim = wc.feature_dim() + wc.action_dim;
    ec.output_dim = wc.stoch_dim;
    ec.lr = cfg.ensemble_lr;
    ec.clip_norm = cfg.clip_norm;
    ensemble_.emplace(params_, "ens", ec, init_rng_);

    ActorCriticConfig ac;
    ac.horizon = cfg.horizon;
    ac.gamma = cfg.gamma;
    ac.lambda = cfg.lambda;
    ac.entropy_coef = cfg.entropy_coef;
    ac.actor_lr = cfg.actor_lr;
    ac.critic_lr = cfg.critic_lr;
    ac.clip_norm = cfg.clip_norm;
    ac.target_interval = cfg.target_interval;
    ac.hidden = cfg.ac_hidden;
    ac.layers = cfg.ac_layers;

    PolicyConfig pe;
    pe.input_dim = wc.feature_dim();
    explorer_.emplace(params_, "expl", pe, ac, init_rng_);

    PolicyConfig pg;
    pg.input_dim = wc.feature_dim() + cfg.embed_dim;  // goal-conditioned
    achiever_.emplace(params_, "achv", pg, ac, init_rng_);

    dist_.emplace(params_, "dist", cfg.embed_dim, cfg.dist_hidden, cfg.dist_layers, init_rng_);
    emb_.emplace(params_, "emb", wc.feature_dim(), cfg.embed_dim, cfg.dist_hidden, cfg.dist_layers, init_rng_);
}

ModelState LexaAgent::gather_starts(const std::vector<ModelState>& states, int count, RandomSource& rng) const {
    const int t_len = static_cast<int>(states.size());
    const int b = states.front().batch();
    const int dh = states.front().h.dim(1);
    const int dz = states.front().z.dim(1);
    std::vector<float> h_rows, z_rows, m_rows, s_rows;
    for (int i = 0; i < count; ++i) {
        const int t = rng.uniform_int(0, t_len - 1);
        const int row = rng.uniform_int(0, b - 1);
        const auto& st = states[static_cast<size_t>(t)];
        auto copy_row = [&](const Tensor& src, std::vector<float>& dst, int dim) {
            auto d = src.data();
            dst.insert(dst.end(), d.begin() + static_cast<long>(row) * dim, d.begin() + static_cast<long>(row + 1) * dim);
        };
        copy_row(st.h, h_rows, dh);
        copy_row(st.z, z_rows, dz);
        copy_row(st.z_mean, m_rows, dz);
        copy_row(st.z_std, s_rows, dz);
    }
    ModelState out;
    out.h = Tensor::from_data({count, dh}, h_rows);
    out.z = Tensor::from_data({count, dz}, z_rows);
    out.z_mean = Tensor::from_data({count, dz}, m_rows);
    out.z_std = Tensor::from_data({count, dz}, s_rows);
    return out;
}

std::vector<int> LexaAgent::sample_goal_frame_indices(const SequenceBatch& batch, int count, RandomSource& rng) const {
    if (batch.batch * batch.steps <= 0) throw std::invalid_argument("sample_training_goals: empty batch");
    std::vector<int> picks(static_cast<size_t>(count));
    for (auto& p : picks) p = rng.uniform_int(0, batch.batch * batch.steps - 1);  // uniform over every frame
    return picks;
}

Tensor LexaAgent::sample_training_goals(const SequenceBatch& batch, int count, RandomSource& rng) const {
    std::vector<float> rows;
    rows.reserve(static_cast<size_t>(count) * batch.image_dim);
    for (int pick : sample_goal_frame_indices(batch, count, rng)) {
        const int t = pick / batch.batch;
        const int b = pick % batch.batch;
        const float* src = batch.images.data() + (static_cast<size_t>(t) * batch.batch + b) * batch.image_dim;
        rows.insert(rows.end(), src, src + batch.image_dim);
    }
    return Tensor::from_data({count, batch.image_dim}, rows);
}

LexaAgent::ExplorerOut LexaAgent::explorer_update(const std::vector<ModelState>& replay_states, RandomSource& rng) {
    ExplorerOut out;
    auto starts = gather_starts(replay_states, cfg_.imagination_starts, rng);
    auto ro = rollout(*wm_, explorer_->policy(), starts, Tensor{}, cfg_.horizon, rng);
    RewardFn reward = [this](const ImaginedRollout& r) {
        std::vector<Tensor> rewards;
        for (int t = 0; t < r.horizon; ++t)
            rewards.push_back(ensemble_->disagreement(r.feats[static_cast<size_t>(t)], r.actions[static_cast<size_t>(t)],
                                                      /*frozen=*/true));
        return rewards;
    };
    out.ac = explorer_->update(ro, reward);
    return out;
}

LexaAgent::AchieverOut LexaAgent::achiever_update(const std::vector<ModelState>& replay_states,
                                                  const Tensor& goal_images, RandomSource& rng) {
    AchieverOut out;
    const int count = goal_images.dim(0);
    if (count != cfg_.imagination_starts)
        throw std::invalid_argument("achiever_update: goal count must match imagination starts");

    // Goal context is constant within the update: embeddings (and the inferred
    // goal state for the cosine reward) are computed outside the tape.
    auto goal_embeds = wm_->encode(goal_images, /*frozen=*/true).detach();
    Tensor goal_feats;
    if (!cfg_.temporal_mode()) {
        auto goal_state = infer_goal_state(*wm_, goal_embeds);
        goal_feats = wm_->features(goal_state).detach();
    }

    auto starts = gather_starts(replay_states, cfg_.imagination_starts, rng);
    auto ro = rollout(*wm_, achiever_->policy(), starts, goal_embeds, cfg_.horizon, rng);
    RewardFn reward = [&](const ImaginedRollout& r) {
        std::vector<Tensor> rewards;
        for (int t = 0; t < r.horizon; ++t) {
            const auto& next_feat = r.feats[static_cast<size_t>(t) + 1];
            rewards.push_back(cfg_.temporal_mode() ? temporal_reward(*emb_, *dist_, next_feat, goal_embeds)
                                                   : cosine_reward(next_feat, goal_feats));
        }
        return rewards;
    };
    out.ac = achiever_->update(ro, reward);
    out.rollout_feats = ro.feats_detached();
    return out;
}

CycleMetrics LexaAgent::update_cycle(const ReplayBuffer& replay, RandomSource& rng) {
    CycleMetrics m;
    auto batch = replay.sample_sequences(cfg_.batch_size, cfg_.seq_len, rng);
    auto obs = wm_->observe_and_train(batch, rng);
    m.scalars["wm_loss"] = obs.losses.total;
    m.scalars["kl"] = obs.losses.kl;
    m.scalars["kl_raw"] = obs.losses.kl_raw;
    m.scalars["recon_nll"] = obs.losses.recon_nll;
    m.scalars["pixel_mse"] = obs.losses.pixel_mse;

    // Ensemble step on consecutive posterior pairs from the same unroll.
    {
        const int t_len = static_cast<int>(obs.states.size());
        const int b = cfg_.batch_size;
        const int feat_dim = wm_->config().feature_dim();
        const int in_dim = feat_dim + wm_->config().action_dim;
        const int total = (t_len - 1) * b;
        const int n = std::min(cfg_.ensemble_train_pairs, total);
        std::vector<float> inputs, targets;
        inputs.reserve(static_cast<size_t>(n) * in_dim);
        targets.reserve(static_cast<size_t>(n) * wm_->config().stoch_dim);
        for (int i = 0; i < n; ++i) {
            const int pick = rng.uniform_int(0, total - 1);
            const int t = pick / b;
            const int row = pick % b;
            const auto& st = obs.states[static_cast<size_t>(t)];
            auto h = st.h.data();
            auto z = st.z.data();
            inputs.insert(inputs.end(), h.begin() + static_cast<long>(row) * cfg_.deter_dim,
                          h.begin() + static_cast<long>(row + 1) * cfg_.deter_dim);
            inputs.insert(inputs.end(), z.begin() + static_cast<long>(row) * cfg_.stoch_dim,
                          z.begin() + static_cast<long>(row + 1) * cfg_.stoch_dim);
            // action leading into state t+1
            const float* act = batch.actions.data() + (static_cast<size_t>(t + 1) * b + row) * batch.action_dim;
            inputs.insert(inputs.end(), act, act + batch.action_dim);
            auto zn = obs.states[static_cast<size_t>(t) + 1].z.data();
            targets.insert(targets.end(), zn.begin() + static_cast<long>(row) * cfg_.stoch_dim,
                           zn.begin() + static_cast<long>(row + 1) * cfg_.stoch_dim);
        }
        auto ens = ensemble_->train_step(Tensor::from_data({n, in_dim}, inputs),
                                         Tensor::from_data({n, wm_->config().stoch_dim}, targets));
        m.scalars["ens_loss"] = ens.loss;
    }

    auto expl = explorer_update(obs.states, rng);
    m.scalars["expl_reward_mean"] = expl.ac.reward_mean;
    m.scalars["expl_actor_loss"] = expl.ac.actor_loss;
    m.scalars["expl_critic_loss"] = expl.ac.critic_loss;

    auto goals = sample_training_goals(batch, cfg_.imagination_starts, rng);
    auto achv = achiever_update(obs.states, goals, rng);
    m.scalars["achv_reward_mean"] = achv.ac.reward_mean;
    m.scalars["achv_actor_loss"] = achv.ac.actor_loss;
    m.scalars["achv_critic_loss"] = achv.ac.critic_loss;

    if (cfg_.temporal_mode()) {
        // Replay-aligned regression rows keep the predicted embeddings tied to
        // the encoder's.
        const int t_len = static_cast<int>(obs.states.size());
        const int b = cfg_.batch_size;
        const int feat_dim = wm_->config().feature_dim();
        const int total = t_len * b;
        const int n = std::min(cfg_.emb_regression_rows, total);
        std::vector<float> feat_rows, emb_rows;
        for (int i = 0; i < n; ++i) {
            const int pick = rng.uniform_int(0, total - 1);
            const int t = pick / b;
            const int row = pick % b;
            const auto& st = obs.states[static_cast<size_t>(t)];
            auto h = st.h.data();
            auto z = st.z.data();
            feat_rows.insert(feat_rows.end(), h.begin() + static_cast<long>(row) * cfg_.deter_dim,
                             h.begin() + static_cast<long>(row + 1) * cfg_.deter_dim);
            feat_rows.insert(feat_rows.end(), z.begin() + static_cast<long>(row) * cfg_.stoch_dim,
                             z.begin() + static_cast<long>(row + 1) * cfg_.stoch_dim);
            auto e = obs.embeds[static_cast<size_t>(t)].data();
            emb_rows.insert(emb_rows.end(), e.begin() + static_cast<long>(row) * cfg_.embed_dim,
                            e.begin() + static_cast<long>(row + 1) * cfg_.embed_dim);
        }
        DistanceTrainConfig dc;
        dc.lr = cfg_.dist_lr;
        dc.clip_norm = cfg_.clip_norm;
        dc.anchors_per_trajectory = cfg_.dist_anchors;
        dc.p_neg = cfg_.p_neg;
        auto d = distance_train(*dist_, *emb_, achv.rollout_feats, Tensor::from_data({n, feat_dim}, feat_rows),
                                Tensor::from_data({n, cfg_.embed_dim}, emb_rows), dc, rng);
        m.scalars["dist_loss"] = d.dist_loss;
        m.scalars["dist_total_loss"] = d.loss;
    }
    return m;
}

}  // namespace lexa
