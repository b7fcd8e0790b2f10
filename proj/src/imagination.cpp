#include "lexa/imagination.hpp"

#include <cmath>
#include <stdexcept>

namespace lexa {

PolicyHead::PolicyHead(ParamSet& ps, const std::string& prefix, const PolicyConfig& cfg, RandomSource& rng) : cfg_(cfg) {
    std::vector<int> dims{cfg.input_dim};
    for (int i = 0; i < cfg.layers; ++i) dims.push_back(cfg.hidden);
    dims.push_back(2 * cfg.action_dim);
    net_ = Mlp(ps, prefix, dims, rng);
}

std::pair<Tensor, Tensor> PolicyHead::stats(const Tensor& input) const {
    auto raw = net_(input);
    auto mean = slice(raw, 1, 0, cfg_.action_dim);
    auto std_raw = slice(raw, 1, cfg_.action_dim, cfg_.action_dim);
    auto std = add_scalar(mul_scalar(sigmoid(std_raw), cfg_.max_std - cfg_.min_std), cfg_.min_std);
    return {mean, std};
}

PolicyHead::Sampled PolicyHead::sample(const Tensor& input, RandomSource& rng) const {
    auto [mean, std] = stats(input);
    auto pre = gaussian_sample(mean, std, rng);
    Sampled out;
    out.action = tanh(pre);
    // Diagonal Gaussian entropy: sum_d (0.5 * (1 + log 2pi) + log sigma_d).
    const float c = 0.5f * (1.0f + std::log(2.0f * 3.14159265358979323846f));
    out.entropy = add_scalar(sum(log(std), 1), c * static_cast<float>(cfg_.action_dim));
    return out;
}

Tensor PolicyHead::mean_action(const Tensor& input) const {
    auto [mean, std] = stats(input);
    (void)std;
    return tanh(mean);
}

ValueHead::ValueHead(ParamSet& ps, const std::string& prefix, int input_dim, int hidden, int layers,
                     RandomSource& rng) {
    const size_t before = ps.all().size();
    std::vector<int> dims{input_dim};
    for (int i = 0; i < layers; ++i) dims.push_back(hidden);
    dims.push_back(1);
    net_ = Mlp(ps, prefix, dims, rng);
    online_.assign(ps.all().begin() + static_cast<long>(before), ps.all().end());
    for (const auto& p : online_) {
        std::vector<float> copy(p->value.data().begin(), p->value.data().end());
        target_.push_back(ps.create(p->name + "_target", p->value.shape(), std::move(copy)));
    }
}

Tensor ValueHead::value(const Tensor& input, bool frozen) const {
    auto v = net_(input, frozen);
    return reshape(v, {input.dim(0)});
}

Tensor ValueHead::target_value(const Tensor& input) const {
    // Evaluate the snapshot weights directly; never on any tape.
    Tensor h = input;
    const size_t n_layers = target_.size() / 2;
    for (size_t i = 0; i < n_layers; ++i) {
        h = affine(h, target_[2 * i]->value.frozen(), target_[2 * i + 1]->value.frozen());
        if (i + 1 < n_layers) h = elu(h);
    }
    return reshape(h, {input.dim(0)});
}

void ValueHead::refresh_target() {
    for (size_t i = 0; i < online_.size(); ++i) {
        auto src = online_[i]->value.data();
        auto dst = target_[i]->value.mutable_data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

bool ValueHead::target_matches_online() const {
    for (size_t i = 0; i < online_.size(); ++i) {
        auto a = online_[i]->value.data();
        auto b = target_[i]->value.data();
        for (size_t j = 0; j < a.size(); ++j)
            if (a[j] != b[j]) return false;
    }
    return true;
}

std::vector<Tensor> ImaginedRollout::feats_detached() const {
    std::vector<Tensor> out;
    out.reserve(feats.size());
    for (const auto& f : feats) out.push_back(f.detach());
    return out;
}

ImaginedRollout rollout(const WorldModel& wm, const PolicyHead& policy, const ModelState& starts,
                        const Tensor& goal_embed, int horizon, RandomSource& rng) {
    if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
    ImaginedRollout ro;
    ro.tape = std::make_shared<Tape>();
    ro.horizon = horizon;
    ro.starts = starts.batch();
    if (goal_embed.defined()) ro.goal_embed.push_back(goal_embed);

    TapeScope scope(*ro.tape);
    ModelState s = starts;
    ro.states.push_back(s);
    ro.feats.push_back(wm.features(s));
    for (int t = 0; t < horizon; ++t) {
        Tensor pin = goal_embed.defined() ? concat<float>({ro.feats.back(), goal_embed}, 1) : ro.feats.back();
        auto act = policy.sample(pin, rng);
        ro.actions.push_back(act.action);
        ro.entropies.push_back(act.entropy);
        s = wm.prior(s, act.action, rng, /*frozen=*/true);
        ro.states.push_back(s);
        ro.feats.push_back(wm.features(s));
    }
    return ro;
}

std::vector<Tensor> lambda_return(const std::vector<Tensor>& rewards, const std::vector<Tensor>& values, float gamma,
                                  float lambda) {
    if (values.size() != rewards.size() + 1)
        throw std::invalid_argument("lambda_return: need H rewards and H+1 values");
    if (gamma < 0.0f || gamma > 1.0f || lambda < 0.0f || lambda > 1.0f)
        throw std::invalid_argument("lambda_return: gamma and lambda must lie in [0,1]");
    const int h = static_cast<int>(rewards.size());
    std::vector<Tensor> returns(static_cast<size_t>(h));
    Tensor next = values.back();  // bootstrap tail
    for (int t = h - 1; t >= 0; --t) {
        auto blend = add(mul_scalar(values[static_cast<size_t>(t) + 1], 1.0f - lambda),
                         mul_scalar(next, lambda));
        returns[static_cast<size_t>(t)] = add(rewards[static_cast<size_t>(t)], mul_scalar(blend, gamma));
        next = returns[static_cast<size_t>(t)];
    }
    return returns;
}

Tensor lambda_return_matrix(const Tensor& rewards, const Tensor& values, float gamma, float lambda) {
    if (rewards.rank() != 2 || values.rank() != 2 || values.dim(0) != rewards.dim(0) + 1 ||
        values.dim(1) != rewards.dim(1))
        throw std::invalid_argument("lambda_return: rewards must be [H,S] and values [H+1,S], got " +
                                    shape_str(rewards.shape()) + " and " + shape_str(values.shape()));
    const int h = rewards.dim(0);
    std::vector<Tensor> r, v;
    for (int t = 0; t < h; ++t) r.push_back(reshape(slice(rewards, 0, t, 1), {rewards.dim(1)}));
    for (int t = 0; t <= h; ++t) v.push_back(reshape(slice(values, 0, t, 1), {values.dim(1)}));
    auto rets = lambda_return(r, v, gamma, lambda);
    std::vector<Tensor> rows;
    for (auto& row : rets) rows.push_back(reshape(row, {1, rewards.dim(1)}));
    return concat<float>(rows, 0);
}

ActorCritic::ActorCritic(ParamSet& ps, const std::string& prefix, const PolicyConfig& pcfg,
                         const ActorCriticConfig& cfg, RandomSource& rng)
    : cfg_(cfg) {
    const size_t before = ps.all().size();
    policy_ = PolicyHead(ps, prefix + "/pi", pcfg, rng);
    actor_group_.assign(ps.all().begin() + static_cast<long>(before), ps.all().end());
    value_ = ValueHead(ps, prefix + "/v", pcfg.input_dim, cfg.hidden, cfg.layers, rng);
    critic_group_ = value_.online_group();
}

AcUpdate ActorCritic::update(ImaginedRollout& ro, const RewardFn& reward_fn) {
    AcUpdate out;
    const int h = ro.horizon;

    auto policy_input = [&](const Tensor& feat) {
        return ro.goal_embed.empty() ? feat : concat<float>({feat, ro.goal_embed.front()}, 1);
    };

    // ---- actor: returns re-derived through the live graph; value weights are
    // frozen so no gradient reaches the critic parameters. Continues recording
    // on the rollout's own tape so the dynamics and action path participate.
    if (ro.tape == nullptr) throw std::invalid_argument("actor_critic: rollout has no tape (already consumed?)");
    Tape& actor_tape = *ro.tape;
    std::vector<Tensor> rewards;
    {
        TapeScope scope(actor_tape);
        rewards = reward_fn(ro);
        if (static_cast<int>(rewards.size()) != h)
            throw std::invalid_argument("actor_critic: reward_fn must produce one reward per imagined step");
        std::vector<Tensor> values;
        for (int t = 0; t <= h; ++t) values.push_back(value_.value(policy_input(ro.feats[static_cast<size_t>(t)]), true));
        auto returns = lambda_return(rewards, values, cfg_.gamma, cfg_.lambda);
        auto returns_all = concat<float>(returns, 0);
        auto entropy_all = concat<float>(ro.entropies, 0);
        auto actor_loss = sub(neg(mean(returns_all)), mul_scalar(mean(entropy_all), cfg_.entropy_coef));

        out.actor_loss = actor_loss.item();
        out.reward_mean = mean(concat<float>(rewards, 0)).item();
        if (!std::isfinite(out.actor_loss)) {
            fprintf(stderr, "[lexa] actor: non-finite loss, update skipped\n");
            actor_tape.clear();
            return out;
        }
        zero_grad(actor_group_);
        actor_tape.backward(actor_loss);
    }
    AdamConfig actor_opt;
    actor_opt.lr = cfg_.actor_lr;
    actor_opt.clip_norm = cfg_.clip_norm;
    const bool actor_ok = adam_step(actor_group_, actor_opt);
    if (!actor_ok) fprintf(stderr, "[lexa] actor: non-finite gradients, step skipped\n");

    // ---- critic: regression on detached returns computed with the target
    // network.
    auto feats_d = ro.feats_detached();
    std::vector<Tensor> target_values;
    std::vector<Tensor> rewards_d;
    for (int t = 0; t <= h; ++t) target_values.push_back(value_.target_value(policy_input(feats_d[static_cast<size_t>(t)])));
    for (auto& r : rewards) rewards_d.push_back(r.detach());
    auto targets = lambda_return(rewards_d, target_values, cfg_.gamma, cfg_.lambda);

    Tape critic_tape;
    {
        TapeScope scope(critic_tape);
        std::vector<Tensor> errs;
        for (int t = 0; t < h; ++t) {
            auto pred = value_.value(policy_input(feats_d[static_cast<size_t>(t)]));
            errs.push_back(square(sub(pred, targets[static_cast<size_t>(t)])));
        }
        auto critic_loss = mean(concat<float>(errs, 0));
        out.critic_loss = critic_loss.item();
        if (!std::isfinite(out.critic_loss)) {
            fprintf(stderr, "[lexa] critic: non-finite loss, update skipped\n");
            critic_tape.clear();
            return out;
        }
        zero_grad(critic_group_);
        critic_tape.backward(critic_loss);
    }
    AdamConfig critic_opt;
    critic_opt.lr = cfg_.critic_lr;
    critic_opt.clip_norm = cfg_.clip_norm;
    const bool critic_ok = adam_step(critic_group_, critic_opt);
    if (!critic_ok) fprintf(stderr, "[lexa] critic: non-finite gradients, step skipped\n");
    if (critic_ok) {
        critic_steps_ += 1;
        if (critic_steps_ % cfg_.target_interval == 0) value_.refresh_target();
    }
    out.stepped = actor_ok && critic_ok;
    return out;
}

}  // namespace lexa
