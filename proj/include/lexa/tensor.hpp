#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lexa/random.hpp"

namespace lexa {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int shape_numel(const Shape& s);

template <typename S>
struct TensorNode {
    Shape shape;
    std::shared_ptr<std::vector<S>> data;
    std::vector<S> grad;  // allocated lazily; nonempty iff gradients flowed here
    bool requires_grad = false;

    bool has_grad() const { return !grad.empty(); }
    std::vector<S>& ensure_grad() {
        if (grad.empty()) grad.assign(data->size(), S(0));
        return grad;
    }
};

template <typename S>
class TapeT;

// Dense row-major tensor. Value-semantic handle to a shared node; values are
// immutable once produced by an op. Gradients accumulate on the node.
template <typename S>
class TensorT {
  public:
    TensorT() = default;

    static TensorT zeros(Shape shape);
    static TensorT full(Shape shape, S v);
    static TensorT from_data(Shape shape, std::vector<S> values);
    static TensorT scalar(S v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int numel() const { return static_cast<int>(node_->data->size()); }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int axis) const { return node_->shape[static_cast<size_t>(axis)]; }

    std::span<const S> data() const { return {node_->data->data(), node_->data->size()}; }
    std::span<S> mutable_data() { return {node_->data->data(), node_->data->size()}; }
    std::span<const S> grad() const { return {node_->grad.data(), node_->grad.size()}; }
    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->has_grad(); }
    S item() const;

    TensorT& set_requires_grad(bool on);
    void zero_grad();

    // Fresh node with copied data, detached from any gradient flow.
    TensorT detach() const;
    // Shares the data buffer but never participates in gradients. Used to
    // evaluate a network with frozen parameters.
    TensorT frozen() const;

    std::shared_ptr<TensorNode<S>>& node() { return node_; }
    const std::shared_ptr<TensorNode<S>>& node() const { return node_; }

  private:
    std::shared_ptr<TensorNode<S>> node_;
};

// Records backward rules for one training step. Ops record only while a
// TapeScopeT for the matching scalar type is alive.
template <typename S>
class TapeT {
  public:
    size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

    // loss must be scalar. Runs recorded rules in reverse order, accumulating
    // into .grad of every participating node, then clears the tape.
    void backward(const TensorT<S>& loss);

    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

  private:
    std::vector<std::function<void()>> ops_;
};

template <typename S>
TapeT<S>* active_tape();

template <typename S>
class TapeScopeT {
  public:
    explicit TapeScopeT(TapeT<S>& tape);
    ~TapeScopeT();
    TapeScopeT(const TapeScopeT&) = delete;
    TapeScopeT& operator=(const TapeScopeT&) = delete;

  private:
    TapeT<S>* prev_;
};

// ---- ops ------------------------------------------------------------------
// Binary elementwise ops accept equal shapes, or one operand whose shape is a
// trailing suffix of the other's (broadcast over the leading batch dims).

template <typename S> TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> divide(const TensorT<S>& a, const TensorT<S>& b);

template <typename S> TensorT<S> add_scalar(const TensorT<S>& a, S c);
template <typename S> TensorT<S> mul_scalar(const TensorT<S>& a, S c);
template <typename S> TensorT<S> clamp_min(const TensorT<S>& a, S c);

template <typename S> TensorT<S> neg(const TensorT<S>& a);
template <typename S> TensorT<S> tanh(const TensorT<S>& a);
template <typename S> TensorT<S> sigmoid(const TensorT<S>& a);
template <typename S> TensorT<S> elu(const TensorT<S>& a);
template <typename S> TensorT<S> exp(const TensorT<S>& a);
template <typename S> TensorT<S> log(const TensorT<S>& a);
template <typename S> TensorT<S> softplus(const TensorT<S>& a);
template <typename S> TensorT<S> square(const TensorT<S>& a);
template <typename S> TensorT<S> sqrt(const TensorT<S>& a);

template <typename S> TensorT<S> sum(const TensorT<S>& a);             // all elements -> rank-0
template <typename S> TensorT<S> sum(const TensorT<S>& a, int axis);
template <typename S> TensorT<S> mean(const TensorT<S>& a);
template <typename S> TensorT<S> mean(const TensorT<S>& a, int axis);

template <typename S> TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis);
template <typename S> TensorT<S> slice(const TensorT<S>& a, int axis, int start, int len);
template <typename S> TensorT<S> reshape(const TensorT<S>& a, Shape shape);

// y[i, :] = x[i, :] * v[i]   (x rank 2, v rank 1 matching rows)
template <typename S> TensorT<S> scale_rows(const TensorT<S>& x, const TensorT<S>& v);

// Reparameterized diagonal Gaussian: mean + std * eps, eps ~ N(0, I).
// Gradients flow to both mean and std. std must be strictly positive.
template <typename S> TensorT<S> gaussian_sample(const TensorT<S>& mean, const TensorT<S>& std, RandomSource& rng);

// Closed-form KL(q || p) of diagonal Gaussians, summed over the last axis.
// All std inputs must be strictly positive.
template <typename S> TensorT<S> kl_diag_gauss(const TensorT<S>& mean_q, const TensorT<S>& std_q,
                                               const TensorT<S>& mean_p, const TensorT<S>& std_p);

template <typename S> TensorT<S> operator+(const TensorT<S>& a, const TensorT<S>& b) { return add(a, b); }
template <typename S> TensorT<S> operator-(const TensorT<S>& a, const TensorT<S>& b) { return sub(a, b); }
template <typename S> TensorT<S> operator*(const TensorT<S>& a, const TensorT<S>& b) { return mul(a, b); }
template <typename S> TensorT<S> operator/(const TensorT<S>& a, const TensorT<S>& b) { return divide(a, b); }
template <typename S> TensorT<S> operator-(const TensorT<S>& a) { return neg(a); }

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using TapeScope = TapeScopeT<float>;

}  // namespace lexa
