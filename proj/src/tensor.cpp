#include "lexa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lexa {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

int shape_numel(const Shape& s) {
    int n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

namespace {

template <typename S>
std::shared_ptr<TensorNode<S>> make_node(Shape shape, std::vector<S> values) {
    auto node = std::make_shared<TensorNode<S>>();
    node->shape = std::move(shape);
    node->data = std::make_shared<std::vector<S>>(std::move(values));
    return node;
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

// Suffix broadcast: returns true if small is a trailing suffix of big.
bool is_suffix(const Shape& big, const Shape& small) {
    if (small.size() > big.size()) return false;
    const size_t off = big.size() - small.size();
    for (size_t i = 0; i < small.size(); ++i)
        if (big[off + i] != small[i]) return false;
    return true;
}

// Row-major matmul kernel, C[M,N] += A[M,K] * B[K,N]. Four-row blocking keeps
// the streamed B row hot while the j loop vectorizes; wider blocks trip the
// compiler's alias-versioning limit and devectorize.
template <typename S>
void mm_acc(const S* __restrict__ a, const S* __restrict__ b, S* __restrict__ c, int m, int k, int n) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        const S* a0 = a + static_cast<size_t>(i) * k;
        const S* a1 = a0 + k;
        const S* a2 = a1 + k;
        const S* a3 = a2 + k;
        S* c0 = c + static_cast<size_t>(i) * n;
        S* c1 = c0 + n;
        S* c2 = c1 + n;
        S* c3 = c2 + n;
        for (int kk = 0; kk < k; ++kk) {
            const S v0 = a0[kk], v1 = a1[kk], v2 = a2[kk], v3 = a3[kk];
            const S* __restrict__ br = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) {
                const S bj = br[j];
                c0[j] += v0 * bj;
                c1[j] += v1 * bj;
                c2[j] += v2 * bj;
                c3[j] += v3 * bj;
            }
        }
    }
    for (; i < m; ++i) {
        const S* ar = a + static_cast<size_t>(i) * k;
        S* cr = c + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const S v = ar[kk];
            const S* __restrict__ br = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) cr[j] += v * br[j];
        }
    }
}

template <typename S>
std::vector<S> transpose(const S* a, int rows, int cols) {
    std::vector<S> t(static_cast<size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) t[static_cast<size_t>(j) * rows + i] = a[static_cast<size_t>(i) * cols + j];
    return t;
}

template <typename S>
S stable_sigmoid(S x) {
    if (x >= S(0)) {
        const S e = std::exp(-x);
        return S(1) / (S(1) + e);
    }
    const S e = std::exp(x);
    return e / (S(1) + e);
}

template <typename S>
S stable_softplus(S x) {
    const S ax = x < S(0) ? -x : x;
    return std::max(x, S(0)) + std::log1p(std::exp(-ax));
}

}  // namespace

// ---- TensorT --------------------------------------------------------------

template <typename S>
TensorT<S> TensorT<S>::zeros(Shape shape) {
    const int n = shape_numel(shape);
    TensorT t;
    t.node_ = make_node<S>(std::move(shape), std::vector<S>(static_cast<size_t>(n), S(0)));
    return t;
}

template <typename S>
TensorT<S> TensorT<S>::full(Shape shape, S v) {
    const int n = shape_numel(shape);
    TensorT t;
    t.node_ = make_node<S>(std::move(shape), std::vector<S>(static_cast<size_t>(n), v));
    return t;
}

template <typename S>
TensorT<S> TensorT<S>::from_data(Shape shape, std::vector<S> values) {
    if (static_cast<size_t>(shape_numel(shape)) != values.size())
        throw std::invalid_argument("from_data: shape " + shape_str(shape) + " does not match value count " +
                                    std::to_string(values.size()));
    TensorT t;
    t.node_ = make_node<S>(std::move(shape), std::move(values));
    return t;
}

template <typename S>
TensorT<S> TensorT<S>::scalar(S v) {
    TensorT t;
    t.node_ = make_node<S>(Shape{}, std::vector<S>{v});
    return t;
}

template <typename S>
S TensorT<S>::item() const {
    if (numel() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(numel()) + " elements");
    return (*node_->data)[0];
}

template <typename S>
TensorT<S>& TensorT<S>::set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (on) node_->ensure_grad();
    return *this;
}

template <typename S>
void TensorT<S>::zero_grad() {
    if (node_->requires_grad) {
        node_->grad.assign(node_->data->size(), S(0));
    } else {
        node_->grad.clear();
    }
}

template <typename S>
TensorT<S> TensorT<S>::detach() const {
    TensorT t;
    t.node_ = make_node<S>(node_->shape, *node_->data);
    return t;
}

template <typename S>
TensorT<S> TensorT<S>::frozen() const {
    TensorT t;
    t.node_ = std::make_shared<TensorNode<S>>();
    t.node_->shape = node_->shape;
    t.node_->data = node_->data;
    return t;
}

// ---- Tape -----------------------------------------------------------------

template <typename S>
TapeT<S>*& active_tape_slot() {
    thread_local TapeT<S>* slot = nullptr;
    return slot;
}

template <typename S>
TapeT<S>* active_tape() {
    return active_tape_slot<S>();
}

template <typename S>
TapeScopeT<S>::TapeScopeT(TapeT<S>& tape) {
    prev_ = active_tape_slot<S>();
    active_tape_slot<S>() = &tape;
}

template <typename S>
TapeScopeT<S>::~TapeScopeT() {
    active_tape_slot<S>() = prev_;
}

template <typename S>
void TapeT<S>::backward(const TensorT<S>& loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;  // constant loss: nothing reaches parameters
    loss.node()->ensure_grad()[0] += S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
}

namespace {

template <typename S>
TensorT<S> make_result(Shape shape, std::vector<S> values) {
    return TensorT<S>::from_data(std::move(shape), std::move(values));
}

template <typename S>
bool wants_grad(const TensorT<S>& t) {
    return t.requires_grad() && active_tape<S>() != nullptr;
}

}  // namespace

// ---- binary elementwise ----------------------------------------------------

namespace {

enum class BinOp { Add, Sub, Mul, Div };

template <typename S>
TensorT<S> binary_op(const char* name, BinOp op, const TensorT<S>& a, const TensorT<S>& b) {
    const bool a_big = a.numel() >= b.numel();
    const TensorT<S>& big = a_big ? a : b;
    const TensorT<S>& small = a_big ? b : a;
    if (!is_suffix(big.shape(), small.shape())) shape_fail(name, a.shape(), b.shape());
    const int cols = small.numel();
    const int rows = cols == 0 ? 0 : big.numel() / cols;

    std::vector<S> out(static_cast<size_t>(big.numel()));
    const S* pa = a.data().data();
    const S* pb = b.data().data();
    S* po = out.data();
    for (int r = 0; r < rows; ++r) {
        const S* ra = a_big ? pa + static_cast<size_t>(r) * cols : pa;
        const S* rb = a_big ? pb : pb + static_cast<size_t>(r) * cols;
        S* ro = po + static_cast<size_t>(r) * cols;
        switch (op) {
            case BinOp::Add:
                for (int j = 0; j < cols; ++j) ro[j] = ra[j] + rb[j];
                break;
            case BinOp::Sub:
                for (int j = 0; j < cols; ++j) ro[j] = ra[j] - rb[j];
                break;
            case BinOp::Mul:
                for (int j = 0; j < cols; ++j) ro[j] = ra[j] * rb[j];
                break;
            case BinOp::Div:
                for (int j = 0; j < cols; ++j) ro[j] = ra[j] / rb[j];
                break;
        }
    }

    auto an = a.node();
    auto bn = b.node();
    const bool track = wants_grad(a) || wants_grad(b);
    auto out_t = make_result<S>(big.shape(), std::move(out));
    if (!track) return out_t;
    out_t.node()->requires_grad = true;
    auto on = out_t.node();
    active_tape<S>()->record([=]() {
        if (!on->has_grad()) return;
        const S* g = on->grad.data();
        const S* da = an->data->data();
        const S* db = bn->data->data();
        const bool ga = an->requires_grad;
        const bool gb = bn->requires_grad;
        S* agrad = ga ? an->ensure_grad().data() : nullptr;
        S* bgrad = gb ? bn->ensure_grad().data() : nullptr;
        for (int r = 0; r < rows; ++r) {
            const size_t off = static_cast<size_t>(r) * cols;
            const S* gr = g + off;
            const size_t aoff = a_big ? off : 0;
            const size_t boff = a_big ? 0 : off;
            switch (op) {
                case BinOp::Add:
                    if (ga)
                        for (int j = 0; j < cols; ++j) agrad[aoff + j] += gr[j];
                    if (gb)
                        for (int j = 0; j < cols; ++j) bgrad[boff + j] += gr[j];
                    break;
                case BinOp::Sub:
                    if (ga)
                        for (int j = 0; j < cols; ++j) agrad[aoff + j] += gr[j];
                    if (gb)
                        for (int j = 0; j < cols; ++j) bgrad[boff + j] -= gr[j];
                    break;
                case BinOp::Mul:
                    if (ga)
                        for (int j = 0; j < cols; ++j) agrad[aoff + j] += gr[j] * db[boff + j];
                    if (gb)
                        for (int j = 0; j < cols; ++j) bgrad[boff + j] += gr[j] * da[aoff + j];
                    break;
                case BinOp::Div:
                    if (ga)
                        for (int j = 0; j < cols; ++j) agrad[aoff + j] += gr[j] / db[boff + j];
                    if (gb)
                        for (int j = 0; j < cols; ++j) {
                            const S bv = db[boff + j];
                            bgrad[boff + j] -= gr[j] * da[aoff + j] / (bv * bv);
                        }
                    break;
            }
        }
    });
    return out_t;
}

}  // namespace

template <typename S> TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) { return binary_op("add", BinOp::Add, a, b); }
template <typename S> TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) { return binary_op("sub", BinOp::Sub, a, b); }
template <typename S> TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) { return binary_op("mul", BinOp::Mul, a, b); }
template <typename S> TensorT<S> divide(const TensorT<S>& a, const TensorT<S>& b) { return binary_op("divide", BinOp::Div, a, b); }

// ---- matmul -----------------------------------------------------------------

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() != 2 || b.rank() != 2) shape_fail("matmul", a.shape(), b.shape());
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw std::invalid_argument("matmul: inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    std::vector<S> out(static_cast<size_t>(m) * n, S(0));
    mm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);

    auto an = a.node();
    auto bn = b.node();
    const bool track = wants_grad(a) || wants_grad(b);
    auto out_t = make_result<S>(Shape{m, n}, std::move(out));
    if (track) {
        out_t.node()->requires_grad = true;
        auto on = out_t.node();
        active_tape<S>()->record([=]() {
            if (!on->has_grad()) return;
            const S* g = on->grad.data();
            if (an->requires_grad) {
                // dA += g * B^T
                auto bt = transpose(bn->data->data(), k, n);
                mm_acc(g, bt.data(), an->ensure_grad().data(), m, n, k);
            }
            if (bn->requires_grad) {
                // dB += A^T * g
                auto at = transpose(an->data->data(), m, k);
                mm_acc(at.data(), g, bn->ensure_grad().data(), k, m, n);
            }
        });
    }
    return out_t;
}

// ---- unary ops --------------------------------------------------------------

namespace {

template <typename S, typename F, typename B>
TensorT<S> unary_op(const TensorT<S>& a, F fwd, B bwd_factor) {
    std::vector<S> out(static_cast<size_t>(a.numel()));
    const S* pa = a.data().data();
    for (int i = 0; i < a.numel(); ++i) out[static_cast<size_t>(i)] = fwd(pa[i]);

    auto an = a.node();
    const bool track = wants_grad(a);
    auto out_t = make_result<S>(a.shape(), std::move(out));
    if (track) {
        out_t.node()->requires_grad = true;
        auto on = out_t.node();
        active_tape<S>()->record([=]() {
            if (!on->has_grad() || !an->requires_grad) return;
            const S* g = on->grad.data();
            const S* x = an->data->data();
            const S* y = on->data->data();
            S* agrad = an->ensure_grad().data();
            const int n = static_cast<int>(on->data->size());
            for (int i = 0; i < n; ++i) agrad[i] += g[i] * bwd_factor(x[i], y[i]);
        });
    }
    return out_t;
}

}  // namespace

template <typename S>
TensorT<S> neg(const TensorT<S>& a) {
    return unary_op<S>(a, [](S x) { return -x; }, [](S, S) { return S(-1); });
}

template <typename S>
TensorT<S> tanh(const TensorT<S>& a) {
    return unary_op<S>(a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& a) {
    return unary_op<S>(a, [](S x) { return stable_sigmoid(x); }, [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
TensorT<S> elu(const TensorT<S>& a) {
    return unary_op<S>(
        a, [](S x) { return x > S(0) ? x : std::expm1(x); }, [](S x, S y) { return x > S(0) ? S(1) : y + S(1); });
}

template <typename S>
TensorT<S> exp(const TensorT<S>& a) {
    return unary_op<S>(a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <typename S>
TensorT<S> log(const TensorT<S>& a) {
    for (S v : a.data())
        if (v < S(0)) throw std::domain_error("log: negative input " + std::to_string(static_cast<double>(v)));
    return unary_op<S>(a, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

template <typename S>
TensorT<S> softplus(const TensorT<S>& a) {
    return unary_op<S>(a, [](S x) { return stable_softplus(x); }, [](S x, S) { return stable_sigmoid(x); });
}

template <typename S>
TensorT<S> square(const TensorT<S>& a) {
    return unary_op<S>(a, [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}

template <typename S>
TensorT<S> sqrt(const TensorT<S>& a) {
    for (S v : a.data())
        if (v < S(0)) throw std::domain_error("sqrt: negative input " + std::to_string(static_cast<double>(v)));
    return unary_op<S>(a, [](S x) { return std::sqrt(x); }, [](S, S y) { return y > S(0) ? S(1) / (S(2) * y) : S(0); });
}

template <typename S>
TensorT<S> add_scalar(const TensorT<S>& a, S c) {
    return unary_op<S>(a, [c](S x) { return x + c; }, [](S, S) { return S(1); });
}

template <typename S>
TensorT<S> mul_scalar(const TensorT<S>& a, S c) {
    return unary_op<S>(a, [c](S x) { return x * c; }, [c](S, S) { return c; });
}

template <typename S>
TensorT<S> clamp_min(const TensorT<S>& a, S c) {
    return unary_op<S>(a, [c](S x) { return x < c ? c : x; }, [c](S x, S) { return x < c ? S(0) : S(1); });
}

// ---- reductions -------------------------------------------------------------

template <typename S>
TensorT<S> sum(const TensorT<S>& a) {
    S acc = S(0);
    for (S v : a.data()) acc += v;
    auto an = a.node();
    const bool track = wants_grad(a);
    auto out_t = make_result<S>(Shape{}, std::vector<S>{acc});
    if (track) {
        out_t.node()->requires_grad = true;
        auto on = out_t.node();
        active_tape<S>()->record([=]() {
            if (!on->has_grad() || !an->requires_grad) return;
            const S g = on->grad[0];
            S* agrad = an->ensure_grad().data();
            const int n = static_cast<int>(an->data->size());
            for (int i = 0; i < n; ++i) agrad[i] += g;
        });
    }
    return out_t;
}

template <typename S>
TensorT<S> mean(const TensorT<S>& a) {
    return mul_scalar(sum(a), S(1) / static_cast<S>(a.numel()));
}

namespace {

// Decomposes a shape around an axis as [outer, extent, inner].
struct AxisSplit {
    int outer, extent, inner;
};

AxisSplit split_axis(const Shape& s, int axis) {
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    AxisSplit sp{1, s[static_cast<size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) sp.outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) sp.inner *= s[i];
    return sp;
}

Shape drop_axis(const Shape& s, int axis) {
    Shape out;
    for (int i = 0; i < static_cast<int>(s.size()); ++i)
        if (i != axis) out.push_back(s[static_cast<size_t>(i)]);
    return out;
}

}  // namespace

template <typename S>
TensorT<S> sum(const TensorT<S>& a, int axis) {
    const AxisSplit sp = split_axis(a.shape(), axis);
    std::vector<S> out(static_cast<size_t>(sp.outer) * sp.inner, S(0));
    const S* pa = a.data().data();
    for (int o = 0; o < sp.outer; ++o)
        for (int e = 0; e < sp.extent; ++e) {
            const S* row = pa + (static_cast<size_t>(o) * sp.extent + e) * sp.inner;
            S* dst = out.data() + static_cast<size_t>(o) * sp.inner;
            for (int i = 0; i < sp.inner; ++i) dst[i] += row[i];
        }

    auto an = a.node();
    const bool track = wants_grad(a);
    auto out_t = make_result<S>(drop_axis(a.shape(), axis), std::move(out));
    if (track) {
        out_t.node()->requires_grad = true;
        auto on = out_t.node();
        active_tape<S>()->record([=]() {
            if (!on->has_grad() || !an->requires_grad) return;
            const S* g = on->grad.data();
            S* agrad = an->ensure_grad().data();
            for (int o = 0; o < sp.outer; ++o)
                for (int e = 0; e < sp.extent; ++e) {
                    S* dst = agrad + (static_cast<size_t>(o) * sp.extent + e) * sp.inner;
                    const S* src = g + static_cast<size_t>(o) * sp.inner;
                    for (int i = 0; i < sp.inner; ++i) dst[i] += src[i];
                }
        });
    }
    return out_t;
}

template <typename S>
TensorT<S> mean(const TensorT<S>& a, int axis) {
    const int extent = a.shape()[static_cast<size_t>(axis)];
    return mul_scalar(sum(a, axis), S(1) / static_cast<S>(extent));
}

// ---- concat / slice / reshape ------------------------------------------------

template <typename S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& ref = parts[0].shape();
    int total_extent = 0;
    for (const auto& p : parts) {
        if (p.rank() != static_cast<int>(ref.size())) shape_fail("concat", ref, p.shape());
        for (int i = 0; i < p.rank(); ++i)
            if (i != axis && p.shape()[static_cast<size_t>(i)] != ref[static_cast<size_t>(i)])
                shape_fail("concat", ref, p.shape());
        total_extent += p.shape()[static_cast<size_t>(axis)];
    }
    Shape out_shape = ref;
    out_shape[static_cast<size_t>(axis)] = total_extent;
    const AxisSplit sp = split_axis(out_shape, axis);

    std::vector<S> out(static_cast<size_t>(shape_numel(out_shape)));
    int offset = 0;
    for (const auto& p : parts) {
        const int ext = p.shape()[static_cast<size_t>(axis)];
        const S* src = p.data().data();
        for (int o = 0; o < sp.outer; ++o) {
            S* dst = out.data() + (static_cast<size_t>(o) * sp.extent + offset) * sp.inner;
            const S* s = src + static_cast<size_t>(o) * ext * sp.inner;
            std::copy(s, s + static_cast<size_t>(ext) * sp.inner, dst);
        }
        offset += ext;
    }

    bool track = false;
    for (const auto& p : parts) track = track || wants_grad(p);
    auto out_t = make_result<S>(out_shape, std::move(out));
    if (track) {
        out_t.node()->requires_grad = true;
        auto on = out_t.node();
        std::vector<std::shared_ptr<TensorNode<S>>> nodes;
        std::vector<int> extents;
        for (const auto& p : parts) {
            nodes.push_back(p.node());
            extents.push_back(p.shape()[static_cast<size_t>(axis)]);
        }
        active_tape<S>()->record([=]() {
            if (!on->has_grad()) return;
            const S* g = on->grad.data();
            int off = 0;
            for (size_t pi = 0; pi < nodes.size(); ++pi) {
                const int ext = extents[pi];
                if (nodes[pi]->requires_grad) {
                    S* agrad = nodes[pi]->ensure_grad().data();
                    for (int o = 0; o < sp.outer; ++o) {
                        const S* src = g + (static_cast<size_t>(o) * sp.extent + off) * sp.inner;
                        S* dst = agrad + static_cast<size_t>(o) * ext * sp.inner;
                        for (int i = 0; i < ext * sp.inner; ++i) dst[i] += src[i];
                    }
                }
                off += ext;
            }
        });
    }
    return out_t;
}

template <typename S>
TensorT<S> slice(const TensorT<S>& a, int axis, int start, int len) {
    const AxisSplit sp = split_axis(a.shape(), axis);
    if (start < 0 || len < 0 || start + len > sp.extent)
        throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                    ") out of bounds for axis extent " + std::to_string(sp.extent));
    Shape out_shape = a.shape();
    out_shape[static_cast<size_t>(axis)] = len;

    std::vector<S> out(static_cast<size_t>(shape_numel(out_shape)));
    const S* src = a.data().data();
    for (int o = 0; o < sp.outer; ++o) {
        const S* s = src + (static_cast<size_t>(o) * sp.extent + start) * sp.inner;
        S* dst = out.data() + static_cast<size_t>(o) * len * sp.inner;
        std::copy(s, s + static_cast<size_t>(len) * sp.inner, dst);
    }

    auto an = a.node();
    const bool track = wants_grad(a);
    auto out_t = make_result<S>(out_shape, std::move(out));
    if (track) {
        out_t.node()->requires_grad = true;
        auto on = out_t.node();
        active_tape<S>()->record([=]() {
            if (!on->has_grad() || !an->requires_grad) return;
            const S* g = on->grad.data();
            S* agrad = an->ensure_grad().data();
            for (int o = 0; o < sp.outer; ++o) {
                S* dst = agrad + (static_cast<size_t>(o) * sp.extent + start) * sp.inner;
                const S* s = g + static_cast<size_t>(o) * len * sp.inner;
                for (int i = 0; i < len * sp.inner; ++i) dst[i] += s[i];
            }
        });
    }
    return out_t;
}

template <typename S>
TensorT<S> reshape(const TensorT<S>& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    std::vector<S> out(a.data().begin(), a.data().end());
    auto an = a.node();
    const bool track = wants_grad(a);
    auto out_t = make_result<S>(std::move(shape), std::move(out));
    if (track) {
        out_t.node()->requires_grad = true;
        auto on = out_t.node();
        active_tape<S>()->record([=]() {
            if (!on->has_grad() || !an->requires_grad) return;
            const S* g = on->grad.data();
            S* agrad = an->ensure_grad().data();
            const int n = static_cast<int>(an->data->size());
            for (int i = 0; i < n; ++i) agrad[i] += g[i];
        });
    }
    return out_t;
}

template <typename S>
TensorT<S> scale_rows(const TensorT<S>& x, const TensorT<S>& v) {
    if (x.rank() != 2 || v.rank() != 1 || x.dim(0) != v.dim(0)) shape_fail("scale_rows", x.shape(), v.shape());
    const int rows = x.dim(0), cols = x.dim(1);
    std::vector<S> out(static_cast<size_t>(rows) * cols);
    const S* px = x.data().data();
    const S* pv = v.data().data();
    for (int r = 0; r < rows; ++r) {
        const S s = pv[r];
        const S* xr = px + static_cast<size_t>(r) * cols;
        S* o = out.data() + static_cast<size_t>(r) * cols;
        for (int j = 0; j < cols; ++j) o[j] = xr[j] * s;
    }
    auto xn = x.node();
    auto vn = v.node();
    const bool track = wants_grad(x) || wants_grad(v);
    auto out_t = make_result<S>(x.shape(), std::move(out));
    if (track) {
        out_t.node()->requires_grad = true;
        auto on = out_t.node();
        active_tape<S>()->record([=]() {
            if (!on->has_grad()) return;
            const S* g = on->grad.data();
            const S* xd = xn->data->data();
            const S* vd = vn->data->data();
            if (xn->requires_grad) {
                S* xg = xn->ensure_grad().data();
                for (int r = 0; r < rows; ++r) {
                    const S s = vd[r];
                    for (int j = 0; j < cols; ++j) xg[static_cast<size_t>(r) * cols + j] += g[static_cast<size_t>(r) * cols + j] * s;
                }
            }
            if (vn->requires_grad) {
                S* vg = vn->ensure_grad().data();
                for (int r = 0; r < rows; ++r) {
                    S acc = S(0);
                    for (int j = 0; j < cols; ++j) acc += g[static_cast<size_t>(r) * cols + j] * xd[static_cast<size_t>(r) * cols + j];
                    vg[r] += acc;
                }
            }
        });
    }
    return out_t;
}

// ---- distributions -----------------------------------------------------------

template <typename S>
TensorT<S> gaussian_sample(const TensorT<S>& mean, const TensorT<S>& std, RandomSource& rng) {
    if (mean.shape() != std.shape()) shape_fail("gaussian_sample", mean.shape(), std.shape());
    for (S v : std.data())
        if (!(v > S(0))) throw std::domain_error("gaussian_sample: std must be strictly positive");
    const int n = mean.numel();
    auto eps = std::make_shared<std::vector<S>>(static_cast<size_t>(n));
    std::vector<S> out(static_cast<size_t>(n));
    const S* pm = mean.data().data();
    const S* ps = std.data().data();
    for (int i = 0; i < n; ++i) {
        const S e = static_cast<S>(rng.normal());
        (*eps)[static_cast<size_t>(i)] = e;
        out[static_cast<size_t>(i)] = pm[i] + ps[i] * e;
    }
    auto mn = mean.node();
    auto sn = std.node();
    const bool track = wants_grad(mean) || wants_grad(std);
    auto out_t = make_result<S>(mean.shape(), std::move(out));
    if (track) {
        out_t.node()->requires_grad = true;
        auto on = out_t.node();
        active_tape<S>()->record([=]() {
            if (!on->has_grad()) return;
            const S* g = on->grad.data();
            if (mn->requires_grad) {
                S* mg = mn->ensure_grad().data();
                for (int i = 0; i < n; ++i) mg[i] += g[i];
            }
            if (sn->requires_grad) {
                S* sg = sn->ensure_grad().data();
                for (int i = 0; i < n; ++i) sg[i] += g[i] * (*eps)[static_cast<size_t>(i)];
            }
        });
    }
    return out_t;
}

template <typename S>
TensorT<S> kl_diag_gauss(const TensorT<S>& mean_q, const TensorT<S>& std_q, const TensorT<S>& mean_p,
                         const TensorT<S>& std_p) {
    for (S v : std_q.data())
        if (!(v > S(0))) throw std::domain_error("kl_diag_gauss: std_q must be strictly positive");
    for (S v : std_p.data())
        if (!(v > S(0))) throw std::domain_error("kl_diag_gauss: std_p must be strictly positive");
    // log(sp/sq) + (sq^2 + (mq-mp)^2) / (2 sp^2) - 1/2, summed over the last axis
    auto d = sub(mean_q, mean_p);
    auto var_p = square(std_p);
    auto num = add(square(std_q), square(d));
    auto term = add(sub(log(std_p), log(std_q)), divide(num, mul_scalar(var_p, S(2))));
    auto full = add_scalar(term, S(-0.5));
    return sum(full, full.rank() - 1);
}

// ---- explicit instantiations ---------------------------------------------------

#define LEXA_INSTANTIATE(S)                                                                            \
    template class TensorT<S>;                                                                         \
    template class TapeT<S>;                                                                           \
    template class TapeScopeT<S>;                                                                      \
    template TapeT<S>* active_tape<S>();                                                               \
    template TensorT<S> matmul<S>(const TensorT<S>&, const TensorT<S>&);                               \
    template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&);                                  \
    template TensorT<S> sub<S>(const TensorT<S>&, const TensorT<S>&);                                  \
    template TensorT<S> mul<S>(const TensorT<S>&, const TensorT<S>&);                                  \
    template TensorT<S> divide<S>(const TensorT<S>&, const TensorT<S>&);                               \
    template TensorT<S> add_scalar<S>(const TensorT<S>&, S);                                           \
    template TensorT<S> mul_scalar<S>(const TensorT<S>&, S);                                           \
    template TensorT<S> clamp_min<S>(const TensorT<S>&, S);                                            \
    template TensorT<S> neg<S>(const TensorT<S>&);                                                     \
    template TensorT<S> tanh<S>(const TensorT<S>&);                                                    \
    template TensorT<S> sigmoid<S>(const TensorT<S>&);                                                 \
    template TensorT<S> elu<S>(const TensorT<S>&);                                                     \
    template TensorT<S> exp<S>(const TensorT<S>&);                                                     \
    template TensorT<S> log<S>(const TensorT<S>&);                                                     \
    template TensorT<S> softplus<S>(const TensorT<S>&);                                                \
    template TensorT<S> square<S>(const TensorT<S>&);                                                  \
    template TensorT<S> sqrt<S>(const TensorT<S>&);                                                    \
    template TensorT<S> sum<S>(const TensorT<S>&);                                                     \
    template TensorT<S> sum<S>(const TensorT<S>&, int);                                                \
    template TensorT<S> mean<S>(const TensorT<S>&);                                                    \
    template TensorT<S> mean<S>(const TensorT<S>&, int);                                               \
    template TensorT<S> concat<S>(const std::vector<TensorT<S>>&, int);                                \
    template TensorT<S> slice<S>(const TensorT<S>&, int, int, int);                                    \
    template TensorT<S> reshape<S>(const TensorT<S>&, Shape);                                          \
    template TensorT<S> scale_rows<S>(const TensorT<S>&, const TensorT<S>&);                           \
    template TensorT<S> gaussian_sample<S>(const TensorT<S>&, const TensorT<S>&, RandomSource&);       \
    template TensorT<S> kl_diag_gauss<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,      \
                                         const TensorT<S>&);

LEXA_INSTANTIATE(float)
LEXA_INSTANTIATE(double)

#undef LEXA_INSTANTIATE

}  // namespace lexa
