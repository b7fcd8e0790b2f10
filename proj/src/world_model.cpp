#include "lexa/world_model.hpp"

#include <cmath>
#include <stdexcept>

namespace lexa {

WorldModel::WorldModel(ParamSet& params, const WorldModelConfig& cfg, RandomSource& init_rng) : cfg_(cfg) {
    const size_t before = params.all().size();
    encoder_ = Mlp(params, "wm/enc", {cfg.image_dim, cfg.enc_hidden, cfg.embed_dim}, init_rng);
    gru_in_ = Affine(params, "wm/gru_in", cfg.stoch_dim + cfg.action_dim, cfg.gru_input_dim, init_rng);
    gru_ = GruCell(params, "wm/gru", cfg.gru_input_dim, cfg.deter_dim, init_rng);
    post_stat_ = Mlp(params, "wm/post", {cfg.deter_dim + cfg.embed_dim, cfg.stat_hidden, 2 * cfg.stoch_dim}, init_rng);
    prior_stat_ = Mlp(params, "wm/prior", {cfg.deter_dim, cfg.stat_hidden, 2 * cfg.stoch_dim}, init_rng);
    decoder_ = Mlp(params, "wm/dec", {cfg.feature_dim(), cfg.dec_hidden, cfg.image_dim}, init_rng);
    group_.assign(params.all().begin() + static_cast<long>(before), params.all().end());
    opt_.lr = cfg.lr;
    opt_.clip_norm = cfg.clip_norm;
}

Tensor WorldModel::encode(const Tensor& images01, bool frozen) const {
    for (float v : images01.data())
        if (v < 0.0f || v > 1.0f)
            throw std::invalid_argument("encode: pixel value " + std::to_string(v) + " outside [0,1]");
    return encoder_(images01, frozen);
}

ModelState WorldModel::initial_state(int batch) const {
    ModelState s;
    s.h = Tensor::zeros({batch, cfg_.deter_dim});
    s.z = Tensor::zeros({batch, cfg_.stoch_dim});
    s.z_mean = Tensor::zeros({batch, cfg_.stoch_dim});
    s.z_std = Tensor::full({batch, cfg_.stoch_dim}, 1.0f);
    return s;
}

Tensor WorldModel::deter_step(const ModelState& prev, const Tensor& action, bool frozen) const {
    auto x = elu(gru_in_(concat<float>({prev.z, action}, 1), frozen));
    return gru_(prev.h, x, frozen);
}

std::pair<Tensor, Tensor> WorldModel::stat_split(const Tensor& raw) const {
    auto mean = slice(raw, 1, 0, cfg_.stoch_dim);
    auto std = add_scalar(softplus(slice(raw, 1, cfg_.stoch_dim, cfg_.stoch_dim)), cfg_.std_floor);
    return {mean, std};
}

ModelState WorldModel::posterior(const ModelState& prev, const Tensor& action, const Tensor& embed, RandomSource& rng,
                                 bool frozen) const {
    ModelState out;
    out.h = deter_step(prev, action, frozen);
    auto [mean, std] = stat_split(post_stat_(concat<float>({out.h, embed}, 1), frozen));
    out.z_mean = mean;
    out.z_std = std;
    out.z = gaussian_sample(mean, std, rng);
    return out;
}

ModelState WorldModel::posterior_mean(const ModelState& prev, const Tensor& action, const Tensor& embed,
                                      bool frozen) const {
    ModelState out;
    out.h = deter_step(prev, action, frozen);
    auto [mean, std] = stat_split(post_stat_(concat<float>({out.h, embed}, 1), frozen));
    out.z_mean = mean;
    out.z_std = std;
    out.z = mean;
    return out;
}

ModelState WorldModel::prior(const ModelState& prev, const Tensor& action, RandomSource& rng, bool frozen) const {
    ModelState out;
    out.h = deter_step(prev, action, frozen);
    auto [mean, std] = stat_split(prior_stat_(out.h, frozen));
    out.z_mean = mean;
    out.z_std = std;
    out.z = gaussian_sample(mean, std, rng);
    return out;
}

Tensor WorldModel::decode(const ModelState& state, bool frozen) const { return decoder_(features(state), frozen); }

Tensor WorldModel::decode_features(const Tensor& features, bool frozen) const { return decoder_(features, frozen); }

struct WorldModel::Unrolled {
    std::vector<ModelState> states;
    std::vector<Tensor> embeds;  // per-step slices of the encoder output
    Tensor nll;                  // scalar
    Tensor kl_obj;               // scalar, free-nats clipped
    Tensor total;                // nll + beta * kl_obj
    float kl_raw = 0.0f;
    float pixel_mse = 0.0f;
};

WorldModel::Unrolled WorldModel::unroll(const SequenceBatch& batch, RandomSource& rng, bool frozen) const {
    const int b = batch.batch, t_len = batch.steps;
    if (static_cast<int>(batch.images.size()) != b * t_len * cfg_.image_dim ||
        static_cast<int>(batch.actions.size()) != b * t_len * cfg_.action_dim)
        throw std::invalid_argument("observe: batch buffers do not match declared dims");

    Unrolled u;
    auto images = Tensor::from_data({t_len * b, cfg_.image_dim}, batch.images);
    auto embeds_all = encode(images, frozen);

    ModelState state = initial_state(b);
    std::vector<Tensor> feats;
    std::vector<Tensor> kls;
    feats.reserve(static_cast<size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
        auto embed = slice(embeds_all, 0, t * b, b);
        auto action = Tensor::from_data({b, cfg_.action_dim},
                                        std::vector<float>(batch.actions.begin() + static_cast<long>(t) * b * cfg_.action_dim,
                                                           batch.actions.begin() + static_cast<long>(t + 1) * b * cfg_.action_dim));
        auto h = deter_step(state, action, frozen);
        auto [post_mean, post_std] = stat_split(post_stat_(concat<float>({h, embed}, 1), frozen));
        auto [prior_mean, prior_std] = stat_split(prior_stat_(h, frozen));
        ModelState post{h, gaussian_sample(post_mean, post_std, rng), post_mean, post_std};
        kls.push_back(kl_diag_gauss(post_mean, post_std, prior_mean, prior_std));  // [B]
        feats.push_back(features(post));
        u.states.push_back(post);
        u.embeds.push_back(embed);
        state = post;
    }

    auto feats_all = concat<float>(feats, 0);                       // [T*B, feat]
    auto recon = decoder_(feats_all, frozen);                       // [T*B, image_dim]
    auto err = sub(recon, images);
    auto sq = square(err);
    u.nll = mul_scalar(sum(sq), 0.5f / static_cast<float>(b));      // mean batch, sum time and pixels

    auto kl_all = concat<float>(kls, 0);                            // [T*B]
    u.kl_raw = sum(kl_all).item() / static_cast<float>(b);
    u.kl_obj = mul_scalar(sum(clamp_min(kl_all, cfg_.free_nats)), 1.0f / static_cast<float>(b));
    u.total = add(u.nll, mul_scalar(u.kl_obj, cfg_.beta));
    u.pixel_mse = sum(sq).item() / static_cast<float>(sq.numel());
    return u;
}

ObserveResult WorldModel::observe_and_train(const SequenceBatch& batch, RandomSource& rng) {
    Tape tape;
    ObserveResult out;
    {
        TapeScope scope(tape);
        Unrolled u = unroll(batch, rng, false);
        out.losses.recon_nll = u.nll.item();
        out.losses.kl = u.kl_obj.item();
        out.losses.total = u.total.item();
        out.losses.kl_raw = u.kl_raw;
        out.losses.pixel_mse = u.pixel_mse;
        for (auto& s : u.states) out.states.push_back(s.detached());
        for (auto& e : u.embeds) out.embeds.push_back(e.detach());

        if (!std::isfinite(out.losses.total)) {
            fprintf(stderr, "[lexa] world model: non-finite loss, update skipped\n");
            tape.clear();
            return out;
        }
        zero_grad(group_);
        tape.backward(u.total);
    }
    out.stepped = adam_step(group_, opt_);
    if (!out.stepped) fprintf(stderr, "[lexa] world model: non-finite gradients, step skipped\n");
    return out;
}

WorldModelLosses WorldModel::evaluate_loss(const SequenceBatch& batch, RandomSource& rng) const {
    Unrolled u = unroll(batch, rng, true);
    WorldModelLosses l;
    l.recon_nll = u.nll.item();
    l.kl = u.kl_obj.item();
    l.total = u.total.item();
    l.kl_raw = u.kl_raw;
    l.pixel_mse = u.pixel_mse;
    return l;
}

}  // namespace lexa
