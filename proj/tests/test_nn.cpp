#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "lexa/checkpoint.hpp"
#include "lexa/nn.hpp"

using namespace lexa;

namespace {

// Builds a random composed graph out of the primitive op set, packing all
// parameters into a single flat input so grad_check can sweep them.
template <typename S>
TensorT<S> random_graph(const TensorT<S>& x, int variant) {
    auto a = slice(x, 0, 0, x.dim(0) / 2);
    auto b = slice(x, 0, x.dim(0) / 2, x.dim(0) - x.dim(0) / 2);
    switch (variant % 5) {
        case 0:
            return mean(mul(tanh(a), sigmoid(slice(b, 0, 0, a.dim(0)))));
        case 1:
            return mean(softplus(sub(a, mul_scalar(square(slice(b, 0, 0, a.dim(0))), S(0.5)))));
        case 2:
            return mean(elu(add(mul_scalar(a, S(1.3)), slice(b, 0, 0, a.dim(0)))));
        case 3:
            return mean(divide(a, add_scalar(square(slice(b, 0, 0, a.dim(0))), S(1))));
        case 4:
        default:
            return mean(log(add_scalar(square(b), S(0.1)))) + mean(sqrt(add_scalar(square(a), S(0.2))));
    }
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("grad_check on composed primitive graphs (double)") {
    RandomSource rng(5);
    for (int variant = 0; variant < 10; ++variant) {
        std::vector<double> vals(16);
        for (auto& v : vals) v = rng.uniform(-1, 1);
        auto x = TensorT<double>::from_data({16}, vals);
        std::function<TensorT<double>(const TensorT<double>&)> f = [&](const TensorT<double>& in) {
            return random_graph<double>(in, variant);
        };
        CHECK(grad_check<double>(f, x, 1e-4) < 1e-3);
    }
}

TEST_CASE("grad_check on a linear function is near machine precision") {
    std::function<TensorT<double>(const TensorT<double>&)> f = [](const TensorT<double>& in) {
        return sum(mul_scalar(in, 3.0));
    };
    auto x = TensorT<double>::from_data({5}, {0.1, -0.4, 2.0, 1.5, -0.9});
    CHECK(grad_check<double>(f, x, 1e-4) < 1e-9);
}

TEST_CASE("grad_check sum of squares, x random in [-1,1]^10") {
    RandomSource rng(11);
    std::vector<double> vals(10);
    for (auto& v : vals) v = rng.uniform(-1, 1);
    std::function<TensorT<double>(const TensorT<double>&)> f = [](const TensorT<double>& in) {
        return sum(mul(in, in));
    };
    CHECK(grad_check<double>(f, TensorT<double>::from_data({10}, vals), 1e-4) < 1e-3);

    // Single-precision forward passes add ~|f|*2^-24/eps of finite-difference
    // noise, so the float instantiation only supports a coarser bound.
    std::vector<float> fvals(vals.begin(), vals.end());
    std::function<Tensor(const Tensor&)> ff = [](const Tensor& in) { return sum(mul(in, in)); };
    CHECK(grad_check<float>(ff, Tensor::from_data({10}, fvals), 1e-4) < 0.05);
}

TEST_CASE("grad_check rejects bad eps and non-finite f") {
    std::function<TensorT<double>(const TensorT<double>&)> f = [](const TensorT<double>& in) { return sum(in); };
    auto x = TensorT<double>::from_data({2}, {1.0, 2.0});
    CHECK_THROWS_AS(grad_check<double>(f, x, 0.5), std::invalid_argument);
    std::function<TensorT<double>(const TensorT<double>&)> g = [](const TensorT<double>& in) {
        return divide(sum(in), TensorT<double>::scalar(0.0));
    };
    CHECK_THROWS_AS(grad_check<double>(g, x, 1e-4), std::domain_error);
}

TEST_CASE("gru cell with zero parameters halves the state") {
    auto h = Tensor::from_data({1, 3}, {2.0f, -4.0f, 6.0f});
    auto x = Tensor::from_data({1, 2}, {0.7f, -0.3f});
    auto wx = Tensor::zeros({2, 9});
    auto wh = Tensor::zeros({3, 9});
    auto b = Tensor::zeros({9});
    auto h2 = gru_cell(h, x, wx, wh, b);
    for (int i = 0; i < 3; ++i) CHECK(h2.data()[i] == doctest::Approx(0.5f * h.data()[i]));

    auto zero_h = gru_cell(Tensor::zeros({1, 3}), Tensor::zeros({1, 2}), wx, wh, b);
    for (int i = 0; i < 3; ++i) CHECK(zero_h.data()[i] == 0.0f);
}

TEST_CASE("gru cell module keeps state shape and validates dims") {
    ParamSet ps;
    RandomSource rng(3);
    GruCell cell(ps, "gru", 4, 6, rng);
    auto h = Tensor::zeros({5, 6});
    auto x = Tensor::zeros({5, 4});
    CHECK(cell(h, x).shape() == Shape{5, 6});
    CHECK_THROWS_AS(cell(Tensor::zeros({5, 7}), x), std::invalid_argument);
    CHECK_THROWS_AS(cell(h, Tensor::zeros({4, 4})), std::invalid_argument);
}

TEST_CASE("grad_check through a GRU cell plus affine head (double)") {
    // All weights live in the flat input vector; inputs are fixed constants.
    const int dx = 3, dh = 4;
    const int n_wx = dx * 3 * dh, n_wh = dh * 3 * dh, n_b = 3 * dh, n_head = dh;
    const int total = n_wx + n_wh + n_b + n_head;
    RandomSource rng(17);
    std::vector<double> vals(static_cast<size_t>(total));
    for (auto& v : vals) v = rng.uniform(-0.5, 0.5);

    std::vector<double> hv(2 * dh), xv(2 * dx);
    for (auto& v : hv) v = rng.uniform(-1, 1);
    for (auto& v : xv) v = rng.uniform(-1, 1);
    auto h0 = TensorT<double>::from_data({2, dh}, hv);
    auto x0 = TensorT<double>::from_data({2, dx}, xv);

    std::function<TensorT<double>(const TensorT<double>&)> f = [&](const TensorT<double>& flat) {
        int off = 0;
        auto wx = reshape(slice(flat, 0, off, n_wx), {dx, 3 * dh});
        off += n_wx;
        auto wh = reshape(slice(flat, 0, off, n_wh), {dh, 3 * dh});
        off += n_wh;
        auto b = slice(flat, 0, off, n_b);
        off += n_b;
        auto head = reshape(slice(flat, 0, off, n_head), {dh, 1});
        auto h1 = gru_cell(h0, x0, wx, wh, b);
        auto h2 = gru_cell(h1, x0, wx, wh, b);
        return mean(matmul(h2, head));
    };
    CHECK(grad_check<double>(f, TensorT<double>::from_data({total}, vals), 1e-4) < 1e-3);
}

TEST_CASE("adam first step magnitude and zero-grad no-op") {
    ParamSet ps;
    auto p = ps.create("w", {1}, {0.5f});
    AdamConfig cfg;
    cfg.lr = 1e-3f;

    SUBCASE("zero grad leaves parameter untouched") {
        zero_grad(ps.all());
        CHECK(adam_step(ps.all(), cfg));
        CHECK(p->value.data()[0] == 0.5f);
        CHECK(p->step_count == 1);
    }

    SUBCASE("unit grad moves by about -lr after bias correction") {
        p->value.zero_grad();
        p->value.node()->grad[0] = 1.0f;
        CHECK(adam_step(ps.all(), cfg));
        CHECK(p->value.data()[0] == doctest::Approx(0.5f - 1e-3f).epsilon(1e-4));
    }
}

TEST_CASE("adam clips the global gradient norm") {
    ParamSet ps;
    auto p = ps.create("w", {1}, {0.0f});
    AdamConfig cfg;
    cfg.lr = 1.0f;
    cfg.clip_norm = 100.0f;
    p->value.zero_grad();
    p->value.node()->grad[0] = 200.0f;
    // After halving, the first-step bias-corrected direction is still unit.
    CHECK(adam_step(ps.all(), cfg));
    CHECK(p->adam_m[0] == doctest::Approx(0.1f * 100.0f));
}

TEST_CASE("adam skips the step on non-finite grads") {
    ParamSet ps;
    auto p = ps.create("w", {2}, {1.0f, 2.0f});
    p->value.zero_grad();
    p->value.node()->grad[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(adam_step(ps.all(), AdamConfig{}));
    CHECK(p->value.data()[0] == 1.0f);
    CHECK(p->step_count == 0);
}

TEST_CASE("checkpoint round trip is bit exact") {
    ParamSet ps;
    RandomSource rng(21);
    Mlp net(ps, "wm/enc", {7, 5, 3}, rng);
    GruCell cell(ps, "wm/gru", 3, 4, rng);
    (void)net;
    (void)cell;

    // Dirty the Adam state so the sibling section carries real content.
    for (const auto& p : ps.all()) {
        p->value.zero_grad();
        for (auto& g : p->value.node()->grad) g = static_cast<float>(rng.uniform(-1, 1));
    }
    AdamConfig cfg;
    adam_step(ps.all(), cfg);

    save_checkpoint("ckpt_test.bin", ps.all(), "{\"k\":1}");

    ParamSet ps2;
    RandomSource rng2(22);
    Mlp net2(ps2, "wm/enc", {7, 5, 3}, rng2);
    GruCell cell2(ps2, "wm/gru", 3, 4, rng2);
    (void)net2;
    (void)cell2;
    const std::string meta = load_checkpoint("ckpt_test.bin", ps2);
    CHECK(meta == "{\"k\":1}");

    REQUIRE(ps.all().size() == ps2.all().size());
    for (size_t i = 0; i < ps.all().size(); ++i) {
        const auto& a = ps.all()[i];
        const auto& b = ps2.all()[i];
        CHECK(a->name == b->name);
        CHECK(a->step_count == b->step_count);
        for (int j = 0; j < a->value.numel(); ++j) {
            CHECK(a->value.data()[j] == b->value.data()[j]);
            CHECK(a->adam_m[static_cast<size_t>(j)] == b->adam_m[static_cast<size_t>(j)]);
            CHECK(a->adam_v[static_cast<size_t>(j)] == b->adam_v[static_cast<size_t>(j)]);
        }
    }
    CHECK(param_bytes_hash(ps.all()) == param_bytes_hash(ps2.all()));
}

TEST_CASE("mlp rejects mismatched input width") {
    ParamSet ps;
    RandomSource rng(2);
    Mlp net(ps, "m", {4, 8, 2}, rng);
    CHECK_THROWS_AS(net(Tensor::zeros({3, 5})), std::invalid_argument);
    CHECK(net(Tensor::zeros({3, 4})).shape() == Shape{3, 2});
}

}  // TEST_SUITE
