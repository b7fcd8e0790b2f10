#include "lexa/explorer.hpp"

#include <cmath>
#include <stdexcept>

namespace lexa {

Ensemble::Ensemble(ParamSet& ps, const std::string& prefix, const EnsembleConfig& cfg, RandomSource& rng) : cfg_(cfg) {
    std::vector<int> dims{cfg.input_dim};
    for (int i = 0; i < cfg.layers; ++i) dims.push_back(cfg.hidden);
    dims.push_back(cfg.output_dim);
    for (int k = 0; k < cfg.heads; ++k) {
        const size_t before = ps.all().size();
        nets_.emplace_back(ps, prefix + "/h" + std::to_string(k), dims, rng);
        groups_.emplace_back(ps.all().begin() + static_cast<long>(before), ps.all().end());
    }
}

Tensor Ensemble::disagreement(const Tensor& feats, const Tensor& actions, bool frozen) const {
    auto input = concat<float>({feats, actions}, 1);
    std::vector<Tensor> preds;
    preds.reserve(nets_.size());
    for (const auto& net : nets_) preds.push_back(net(input, frozen));

    // Population variance via pairwise differences,
    // (1/K^2) * sum_{i<j} (p_i - p_j)^2, which is exactly zero when every
    // head agrees.
    const int k = static_cast<int>(preds.size());
    Tensor acc;
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) {
            auto d = square(sub(preds[static_cast<size_t>(i)], preds[static_cast<size_t>(j)]));
            acc = acc.defined() ? add(acc, d) : d;
        }
    auto var = mul_scalar(acc, 1.0f / static_cast<float>(k * k));
    return mean(var, 1);  // average across the predictor output dimensions
}

Ensemble::TrainOut Ensemble::train_step(const Tensor& inputs, const Tensor& targets) {
    TrainOut out;
    out.stepped = true;
    AdamConfig opt;
    opt.lr = cfg_.lr;
    opt.clip_norm = cfg_.clip_norm;
    for (size_t k = 0; k < nets_.size(); ++k) {
        Tape tape;
        {
            TapeScope scope(tape);
            auto pred = nets_[k](inputs);
            auto loss = mean(square(sub(pred, targets)));
            const float lval = loss.item();
            out.loss += lval;
            if (!std::isfinite(lval)) {
                fprintf(stderr, "[lexa] ensemble head %zu: non-finite loss, step skipped\n", k);
                out.stepped = false;
                tape.clear();
                continue;
            }
            zero_grad(groups_[k]);
            tape.backward(loss);
        }
        if (!adam_step(groups_[k], opt)) {
            fprintf(stderr, "[lexa] ensemble head %zu: non-finite gradients, step skipped\n", k);
            out.stepped = false;
        }
    }
    return out;
}

}  // namespace lexa
