#include "lexa/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace lexa {

ParamPtr ParamSet::create(const std::string& name, Shape shape, std::vector<float> values) {
    if (find(name) != nullptr) throw std::invalid_argument("parameter name already registered: " + name);
    auto p = std::make_shared<Parameter>(name, Tensor::from_data(std::move(shape), std::move(values)));
    params_.push_back(p);
    return p;
}

ParamPtr ParamSet::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return p;
    return nullptr;
}

std::vector<ParamPtr> ParamSet::with_prefix(const std::string& prefix) const {
    std::vector<ParamPtr> out;
    for (const auto& p : params_)
        if (p->name.rfind(prefix, 0) == 0) out.push_back(p);
    return out;
}

void zero_grad(std::span<const ParamPtr> params) {
    for (const auto& p : params) p->value.zero_grad();
}

double global_grad_norm(std::span<const ParamPtr> params) {
    double acc = 0.0;
    for (const auto& p : params)
        for (float g : p->value.grad()) acc += static_cast<double>(g) * g;
    return std::sqrt(acc);
}

bool adam_step(std::span<const ParamPtr> params, const AdamConfig& cfg) {
    for (const auto& p : params)
        for (float g : p->value.grad())
            if (!std::isfinite(g)) return false;

    const double norm = global_grad_norm(params);
    const float scale = (cfg.clip_norm > 0.0f && norm > cfg.clip_norm) ? static_cast<float>(cfg.clip_norm / norm) : 1.0f;

    for (const auto& p : params) {
        p->step_count += 1;
        const double t = static_cast<double>(p->step_count);
        const float corr1 = 1.0f - static_cast<float>(std::pow(cfg.beta1, t));
        const float corr2 = 1.0f - static_cast<float>(std::pow(cfg.beta2, t));
        auto data = p->value.mutable_data();
        auto grad = p->value.grad();
        for (int i = 0; i < p->value.numel(); ++i) {
            const float g = grad[static_cast<size_t>(i)] * scale;
            float& m = p->adam_m[static_cast<size_t>(i)];
            float& v = p->adam_v[static_cast<size_t>(i)];
            m = cfg.beta1 * m + (1.0f - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0f - cfg.beta2) * g * g;
            const float m_hat = m / corr1;
            const float v_hat = v / corr2;
            data[static_cast<size_t>(i)] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
    return true;
}

uint64_t param_bytes_hash(std::span<const ParamPtr> params) {
    // FNV-1a over the raw value bytes.
    uint64_t h = 14695981039346656037ull;
    for (const auto& p : params) {
        const auto data = p->value.data();
        const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
        for (size_t i = 0; i < data.size() * sizeof(float); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    }
    return h;
}

std::vector<float> xavier_uniform(int fan_in, int fan_out, int count, RandomSource& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<float> out(static_cast<size_t>(count));
    for (auto& v : out) v = static_cast<float>(rng.uniform(-limit, limit));
    return out;
}

Affine::Affine(ParamSet& ps, const std::string& prefix, int in_dim, int out_dim, RandomSource& rng) {
    w_ = ps.create(prefix + "/W", {in_dim, out_dim}, xavier_uniform(in_dim, out_dim, in_dim * out_dim, rng));
    b_ = ps.create(prefix + "/b", {out_dim}, std::vector<float>(static_cast<size_t>(out_dim), 0.0f));
}

Tensor Affine::operator()(const Tensor& x, bool frozen) const {
    if (x.rank() != 2 || x.dim(1) != w_->value.dim(0))
        throw std::invalid_argument("affine " + w_->name + ": input " + shape_str(x.shape()) +
                                    " does not match weight " + shape_str(w_->value.shape()));
    if (frozen) return affine(x, w_->value.frozen(), b_->value.frozen());
    return affine(x, w_->value, b_->value);
}

Mlp::Mlp(ParamSet& ps, const std::string& prefix, const std::vector<int>& dims, RandomSource& rng) {
    if (dims.size() < 2) throw std::invalid_argument("mlp needs at least input and output dims");
    for (size_t i = 0; i + 1 < dims.size(); ++i)
        layers_.emplace_back(ps, prefix + "/l" + std::to_string(i), dims[i], dims[i + 1], rng);
}

Tensor Mlp::operator()(const Tensor& x, bool frozen) const {
    Tensor h = x;
    for (size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i](h, frozen);
        if (i + 1 < layers_.size()) h = elu(h);
    }
    return h;
}

GruCell::GruCell(ParamSet& ps, const std::string& prefix, int input_dim, int hidden_dim, RandomSource& rng)
    : hidden_(hidden_dim) {
    wx_ = ps.create(prefix + "/Wx", {input_dim, 3 * hidden_dim},
                    xavier_uniform(input_dim, hidden_dim, input_dim * 3 * hidden_dim, rng));
    wh_ = ps.create(prefix + "/Wh", {hidden_dim, 3 * hidden_dim},
                    xavier_uniform(hidden_dim, hidden_dim, hidden_dim * 3 * hidden_dim, rng));
    b_ = ps.create(prefix + "/b", {3 * hidden_dim}, std::vector<float>(static_cast<size_t>(3 * hidden_dim), 0.0f));
}

Tensor GruCell::operator()(const Tensor& h, const Tensor& x, bool frozen) const {
    if (h.dim(0) != x.dim(0))
        throw std::invalid_argument("gru_cell: batch dims differ: " + shape_str(h.shape()) + " vs " +
                                    shape_str(x.shape()));
    if (h.dim(1) != hidden_ || x.dim(1) != wx_->value.dim(0))
        throw std::invalid_argument("gru_cell: input dims do not match parameters: h " + shape_str(h.shape()) +
                                    ", x " + shape_str(x.shape()) + ", Wx " + shape_str(wx_->value.shape()));
    if (frozen) return gru_cell(h, x, wx_->value.frozen(), wh_->value.frozen(), b_->value.frozen());
    return gru_cell(h, x, wx_->value, wh_->value, b_->value);
}

template <typename S>
double grad_check(const std::function<TensorT<S>(const TensorT<S>&)>& f, TensorT<S> x, double eps) {
    if (!(eps > 0.0) || eps > 1e-2) throw std::invalid_argument("grad_check: eps must be in (0, 1e-2]");

    x.set_requires_grad(true);
    TapeT<S> tape;
    std::vector<S> analytic;
    {
        TapeScopeT<S> scope(tape);
        auto y = f(x);
        if (y.numel() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
        if (!std::isfinite(static_cast<double>(y.item()))) throw std::domain_error("grad_check: f(x) is not finite");
        x.zero_grad();
        tape.backward(y);
        analytic.assign(x.grad().begin(), x.grad().end());
    }

    double max_rel = 0.0;
    auto data = x.mutable_data();
    for (int i = 0; i < x.numel(); ++i) {
        const S orig = data[static_cast<size_t>(i)];
        data[static_cast<size_t>(i)] = orig + static_cast<S>(eps);
        const double fp = static_cast<double>(f(x).item());
        data[static_cast<size_t>(i)] = orig - static_cast<S>(eps);
        const double fm = static_cast<double>(f(x).item());
        data[static_cast<size_t>(i)] = orig;
        const double fd = (fp - fm) / (2.0 * eps);
        const double a = static_cast<double>(analytic[static_cast<size_t>(i)]);
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - fd) / denom);
    }
    return max_rel;
}

template double grad_check<float>(const std::function<TensorT<float>(const TensorT<float>&)>&, TensorT<float>, double);
template double grad_check<double>(const std::function<TensorT<double>(const TensorT<double>&)>&, TensorT<double>,
                                   double);

}  // namespace lexa
