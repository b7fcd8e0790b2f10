#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lexa/tensor.hpp"

namespace lexa {

// A learnable tensor plus its Adam state. step_count advances by exactly one
// per optimizer step applied to it.
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<float> adam_m;
    std::vector<float> adam_v;
    int64_t step_count = 0;

    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        value.set_requires_grad(true);
        adam_m.assign(static_cast<size_t>(value.numel()), 0.0f);
        adam_v.assign(static_cast<size_t>(value.numel()), 0.0f);
    }
};

using ParamPtr = std::shared_ptr<Parameter>;

// Ordered registry of uniquely named parameters; the ordering defines the
// checkpoint layout.
class ParamSet {
  public:
    ParamPtr create(const std::string& name, Shape shape, std::vector<float> values);
    ParamPtr find(const std::string& name) const;  // nullptr if absent
    const std::vector<ParamPtr>& all() const { return params_; }
    std::vector<ParamPtr> with_prefix(const std::string& prefix) const;

  private:
    std::vector<ParamPtr> params_;
};

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float clip_norm = 100.0f;  // global-norm gradient clip across the group
};

void zero_grad(std::span<const ParamPtr> params);
double global_grad_norm(std::span<const ParamPtr> params);

// Bias-corrected Adam over one parameter group, with global-norm clipping
// applied first. Returns false (and leaves everything untouched) when any
// gradient entry is non-finite; the caller is expected to log the event.
bool adam_step(std::span<const ParamPtr> params, const AdamConfig& cfg);

uint64_t param_bytes_hash(std::span<const ParamPtr> params);

// ---- initializers -----------------------------------------------------------

std::vector<float> xavier_uniform(int fan_in, int fan_out, int count, RandomSource& rng);

// ---- functional layers (templated so the gradient checker can run them in
// double precision) -------------------------------------------------------------

template <typename S>
TensorT<S> affine(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    return add(matmul(x, w), b);
}

// Standard GRU update. wx: [Dx, 3*Dh], wh: [Dh, 3*Dh], b: [3*Dh], gate order
// (reset, update, candidate).
template <typename S>
TensorT<S> gru_cell(const TensorT<S>& h, const TensorT<S>& x, const TensorT<S>& wx, const TensorT<S>& wh,
                    const TensorT<S>& b) {
    const int dh = h.dim(1);
    auto gx = add(matmul(x, wx), b);
    auto gh = matmul(h, wh);
    auto r = sigmoid(add(slice(gx, 1, 0, dh), slice(gh, 1, 0, dh)));
    auto u = sigmoid(add(slice(gx, 1, dh, dh), slice(gh, 1, dh, dh)));
    auto cand = tanh(add(slice(gx, 1, 2 * dh, dh), mul(r, slice(gh, 1, 2 * dh, dh))));
    // h' = (1 - u) * h + u * cand
    return add(h, mul(u, sub(cand, h)));
}

// ---- module wrappers ----------------------------------------------------------

class Affine {
  public:
    Affine() = default;
    Affine(ParamSet& ps, const std::string& prefix, int in_dim, int out_dim, RandomSource& rng);
    Tensor operator()(const Tensor& x, bool frozen = false) const;
    int in_dim() const { return w_->value.dim(0); }
    int out_dim() const { return w_->value.dim(1); }

  private:
    ParamPtr w_, b_;
};

// MLP with ELU on hidden layers and a linear output.
class Mlp {
  public:
    Mlp() = default;
    Mlp(ParamSet& ps, const std::string& prefix, const std::vector<int>& dims, RandomSource& rng);
    Tensor operator()(const Tensor& x, bool frozen = false) const;
    int out_dim() const { return layers_.back().out_dim(); }

  private:
    std::vector<Affine> layers_;
};

class GruCell {
  public:
    GruCell() = default;
    GruCell(ParamSet& ps, const std::string& prefix, int input_dim, int hidden_dim, RandomSource& rng);
    Tensor operator()(const Tensor& h, const Tensor& x, bool frozen = false) const;
    int hidden_dim() const { return hidden_; }

  private:
    ParamPtr wx_, wh_, b_;
    int hidden_ = 0;
};

// ---- gradient checking ----------------------------------------------------------

// Compares the tape gradient of a scalar-valued function against central
// finite differences. Returns the max over coordinates of
// |analytic - fd| / max(|analytic|, |fd|, 1e-8). Throws if f(x) is not finite.
template <typename S>
double grad_check(const std::function<TensorT<S>(const TensorT<S>&)>& f, TensorT<S> x, double eps);

}  // namespace lexa
