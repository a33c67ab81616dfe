#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "cts/nn.hpp"

using cts::Rng;
using cts::Tensor;

namespace {

Tensor<double> random_tensor(Eigen::Index n, Eigen::Index c, Eigen::Index h, Eigen::Index w, Rng& rng,
                             double scale = 1.0) {
    Tensor<double> t(n, c, h, w);
    cts::fill_normal(t, rng, scale);
    return t;
}

double rel_diff(double a, double b) {
    const double denom = std::max({1e-8, std::abs(a), std::abs(b)});
    return std::abs(a - b) / denom;
}

// Central finite differences on sampled coordinates of `param` against the
// analytic gradient accumulated in `grad`. `loss` must re-run the forward
// pass from scratch.
void fd_check_param(Tensor<double>& param, const Tensor<double>& grad, const std::function<double()>& loss,
                    Rng& rng, double h = 1e-5, double tol = 1e-5) {
    const Eigen::Index count = std::min<Eigen::Index>(param.numel(), 8);
    for (Eigen::Index pick = 0; pick < count; ++pick) {
        const Eigen::Index idx =
            count == param.numel() ? pick : static_cast<Eigen::Index>(rng.uniform_int(0, param.numel() - 1));
        const double orig = param.v[idx];
        param.v[idx] = orig + h;
        const double up = loss();
        param.v[idx] = orig - h;
        const double down = loss();
        param.v[idx] = orig;
        const double fd = (up - down) / (2 * h);
        const double an = grad.v[idx];
        INFO("idx=", idx, " fd=", fd, " analytic=", an);
        CHECK((rel_diff(fd, an) < tol || std::abs(fd - an) < 1e-7));
    }
}

// direct convolution oracle (stride 1, zero pad k/2)
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
    const Eigen::Index k = w.h, pad = k / 2;
    Tensor<double> y = Tensor<double>::zeros(x.n, w.n, x.h, x.w);
    for (Eigen::Index i = 0; i < x.n; ++i)
        for (Eigen::Index co = 0; co < w.n; ++co)
            for (Eigen::Index yy = 0; yy < x.h; ++yy)
                for (Eigen::Index xx = 0; xx < x.w; ++xx) {
                    double acc = b.v[co];
                    for (Eigen::Index ci = 0; ci < x.c; ++ci)
                        for (Eigen::Index ky = 0; ky < k; ++ky)
                            for (Eigen::Index kx = 0; kx < k; ++kx) {
                                const Eigen::Index sy = yy + ky - pad, sx = xx + kx - pad;
                                if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
                                acc += w(co, ci, ky, kx) * x(i, ci, sy, sx);
                            }
                    y(i, co, yy, xx) = acc;
                }
    return y;
}

} // namespace

TEST_CASE("Conv2d forward matches the direct-convolution oracle") {
    Rng rng(1);
    for (const int k : {1, 3}) {
        cts::nn::Conv2d<double> conv(3, 4, k);
        conv.init(rng);
        Tensor<double> x = random_tensor(2, 3, 5, 6, rng);
        Tensor<double> got = conv.forward(x, false);
        Tensor<double> want = conv_oracle(x, conv.weight(), conv.bias());
        CHECK(got.same_shape(want));
        CHECK(((got.v - want.v).abs() < 1e-12).all());
    }
}

TEST_CASE("Conv2d gradients pass finite differences") {
    Rng rng(2);
    cts::nn::Conv2d<double> conv(2, 3, 3);
    conv.init(rng);
    Tensor<double> x = random_tensor(2, 2, 4, 4, rng);
    Tensor<double> probe = random_tensor(2, 3, 4, 4, rng);

    auto loss = [&]() {
        Tensor<double> y = conv.forward(x, true);
        return (y.v * probe.v).sum();
    };
    loss();
    Tensor<double> grad_w = Tensor<double>::zeros(3, 2, 3, 3);
    Tensor<double> grad_b = Tensor<double>::zeros(1, 3, 1, 1);
    cts::nn::ParamList<double> params;
    conv.register_params("conv", params);
    for (auto& p : params) p.grad->set_zero();
    Tensor<double> dx = conv.backward(probe);

    fd_check_param(conv.weight(), *params[0].grad, loss, rng);
    fd_check_param(conv.bias(), *params[1].grad, loss, rng);
    fd_check_param(x, dx, loss, rng);
}

TEST_CASE("GroupNorm normalizes per group and passes finite differences") {
    Rng rng(3);
    cts::nn::GroupNorm<double> gn(4);
    gn.init(rng);
    Tensor<double> x = random_tensor(2, 4, 3, 3, rng, 2.0);
    Tensor<double> y = gn.forward(x, true);
    // gamma=1, beta=0: per-(sample, group) mean ~0 and var ~1
    for (Eigen::Index i = 0; i < 2; ++i) {
        double mean = 0, var = 0;
        for (Eigen::Index ch = 0; ch < 1; ++ch) mean += y.plane(i, ch).mean();
        CHECK(std::abs(y.plane(i, 0).mean()) < 1e-10);
        var = y.plane(i, 0).square().mean();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }

    Tensor<double> probe = random_tensor(2, 4, 3, 3, rng);
    auto loss = [&]() {
        Tensor<double> out = gn.forward(x, true);
        return (out.v * probe.v).sum();
    };
    loss();
    cts::nn::ParamList<double> params;
    gn.register_params("gn", params);
    for (auto& p : params) p.grad->set_zero();
    Tensor<double> dx = gn.backward(probe);
    fd_check_param(x, dx, loss, rng);
    fd_check_param(*params[0].value, *params[0].grad, loss, rng); // gamma
    fd_check_param(*params[1].value, *params[1].grad, loss, rng); // beta
}

TEST_CASE("Silu / pooling / upsampling gradients pass finite differences") {
    Rng rng(4);
    Tensor<double> x = random_tensor(2, 3, 4, 4, rng);

    {
        cts::nn::Silu<double> act;
        Tensor<double> probe = random_tensor(2, 3, 4, 4, rng);
        auto loss = [&]() { return (act.forward(x, true).v * probe.v).sum(); };
        loss();
        Tensor<double> dx = act.backward(probe);
        fd_check_param(x, dx, loss, rng);
    }
    {
        cts::nn::AvgPool2<double> pool;
        Tensor<double> probe = random_tensor(2, 3, 2, 2, rng);
        auto loss = [&]() { return (pool.forward(x).v * probe.v).sum(); };
        loss();
        Tensor<double> dx = pool.backward(probe);
        fd_check_param(x, dx, loss, rng);
    }
    {
        cts::nn::Upsample2<double> up;
        Tensor<double> probe = random_tensor(2, 3, 8, 8, rng);
        auto loss = [&]() { return (up.forward(x).v * probe.v).sum(); };
        loss();
        Tensor<double> dx = up.backward(probe);
        fd_check_param(x, dx, loss, rng);
    }
}

TEST_CASE("Linear gradients pass finite differences") {
    Rng rng(5);
    cts::nn::Linear<double> lin(5, 3);
    lin.init(rng);
    Tensor<double> x = random_tensor(4, 5, 1, 1, rng);
    Tensor<double> probe = random_tensor(4, 3, 1, 1, rng);
    auto loss = [&]() { return (lin.forward(x, true).v * probe.v).sum(); };
    loss();
    cts::nn::ParamList<double> params;
    lin.register_params("lin", params);
    for (auto& p : params) p.grad->set_zero();
    Tensor<double> dx = lin.backward(probe);
    fd_check_param(lin.weight(), *params[0].grad, loss, rng);
    fd_check_param(lin.bias(), *params[1].grad, loss, rng);
    fd_check_param(x, dx, loss, rng);
}

TEST_CASE("channel_attention_fuse: forced gate values give u and u + s") {
    Rng rng(6);
    cts::nn::ChannelGate<float> gate(2, 4);
    gate.init(rng);
    Tensor<float> u(1, 2, 4, 4), s(1, 2, 4, 4);
    Rng frng(7);
    cts::fill_normal(u, frng);
    cts::fill_normal(s, frng);

    // saturate the gate: zero MLP output weights, bias -> +/- 40
    gate.fc2().weight().set_zero();
    gate.fc2().bias().v.setConstant(-40.0f);
    Tensor<float> off = gate.forward(u, s, false);
    CHECK(((off.v - u.v).abs() < 1e-6f).all());

    gate.fc2().bias().v.setConstant(40.0f);
    Tensor<float> on = gate.forward(u, s, false);
    CHECK(((on.v - (u.v + s.v)).abs() < 1e-5f).all());
}

TEST_CASE("channel_attention_fuse rejects shape mismatches") {
    Rng rng(8);
    cts::nn::ChannelGate<float> gate(2, 4);
    gate.init(rng);
    Tensor<float> u = Tensor<float>::zeros(1, 2, 4, 4);
    Tensor<float> s = Tensor<float>::zeros(1, 2, 2, 2);
    CHECK_THROWS_AS(gate.forward(u, s, false), std::invalid_argument);
}

TEST_CASE("channel_attention_fuse gradients pass finite differences (2ch 4x4)") {
    Rng rng(9);
    cts::nn::ChannelGate<double> gate(2, 4);
    gate.init(rng);
    Tensor<double> u = random_tensor(1, 2, 4, 4, rng);
    Tensor<double> s = random_tensor(1, 2, 4, 4, rng);
    Tensor<double> probe = random_tensor(1, 2, 4, 4, rng);

    auto loss = [&]() { return (gate.forward(u, s, true).v * probe.v).sum(); };
    loss();
    cts::nn::ParamList<double> params;
    gate.register_params("gate", params);
    for (auto& p : params) p.grad->set_zero();
    auto [du, ds] = gate.backward(probe);

    for (auto& p : params) fd_check_param(*p.value, *p.grad, loss, rng, 1e-5, 1e-3);
    fd_check_param(u, du, loss, rng, 1e-5, 1e-3);
    fd_check_param(s, ds, loss, rng, 1e-5, 1e-3);
}

TEST_CASE("ResBlock with time conditioning passes finite differences") {
    Rng rng(10);
    cts::nn::ResBlock<double> block(2, 4, 6);
    block.init(rng);
    Tensor<double> x = random_tensor(2, 2, 4, 4, rng);
    Tensor<double> temb = random_tensor(1, 6, 1, 1, rng);
    Tensor<double> probe = random_tensor(2, 4, 4, 4, rng);

    auto loss = [&]() { return (block.forward(x, &temb, true).v * probe.v).sum(); };
    loss();
    cts::nn::ParamList<double> params;
    block.register_params("rb", params);
    for (auto& p : params) p.grad->set_zero();
    Tensor<double> d_temb = Tensor<double>::zeros(1, 6, 1, 1);
    Tensor<double> dx = block.backward(probe, &d_temb);

    for (auto& p : params) fd_check_param(*p.value, *p.grad, loss, rng);
    fd_check_param(x, dx, loss, rng);
    fd_check_param(temb, d_temb, loss, rng);
}

TEST_CASE("concat/split round trip") {
    Rng rng(11);
    Tensor<double> a = random_tensor(2, 3, 4, 4, rng);
    Tensor<double> b = random_tensor(2, 2, 4, 4, rng);
    Tensor<double> cat = cts::nn::concat_channels(a, b);
    CHECK(cat.c == 5);
    auto [a2, b2] = cts::nn::split_channels(cat, 3);
    CHECK((a2.v == a.v).all());
    CHECK((b2.v == b.v).all());
}
