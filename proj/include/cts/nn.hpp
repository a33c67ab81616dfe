#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "cts/rng.hpp"
#include "cts/tensor.hpp"

// Minimal layer set with explicit forward/backward passes. Every layer owns
// its parameters and gradient buffers and registers both under a stable name,
// so two models built from the same architecture config expose an identical
// name/shape inventory (required by the EMA target update and checkpoints).
namespace cts::nn {

template <typename S>
struct ParamRef {
    std::string name;
    Tensor<S>* value;
    Tensor<S>* grad;
};

template <typename S>
using ParamList = std::vector<ParamRef<S>>;

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>;
template <typename S>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>;

template <typename S>
inline S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

// ---------------------------------------------------------------------------
// Conv2d: stride 1, square kernel, zero padding k/2 (shape preserving).
// Forward is im2col + one GEMM per batch; backward reuses the cached column
// matrix for the weight gradient and runs col2im for the input gradient.
// ---------------------------------------------------------------------------
template <typename S>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(Eigen::Index in_c, Eigen::Index out_c, Eigen::Index k)
        : in_c_(in_c), out_c_(out_c), k_(k), pad_(k / 2) {
        weight_.resize(out_c, in_c, k, k);
        bias_.resize(1, out_c, 1, 1);
        grad_w_ = Tensor<S>::zeros(out_c, in_c, k, k);
        grad_b_ = Tensor<S>::zeros(1, out_c, 1, 1);
    }

    void init(Rng& rng) {
        const double std = std::sqrt(2.0 / static_cast<double>(in_c_ * k_ * k_));
        fill_normal(weight_, rng, std);
        bias_.set_zero();
    }

    void register_params(const std::string& prefix, ParamList<S>& out) {
        out.push_back({prefix + ".w", &weight_, &grad_w_});
        out.push_back({prefix + ".b", &bias_, &grad_b_});
    }

    Tensor<S> forward(const Tensor<S>& x, bool cache) {
        n_ = x.n; h_ = x.h; w_ = x.w;
        const Eigen::Index hw = h_ * w_, rows = x.n * hw, cols = in_c_ * k_ * k_;
        cols_buf_.resize(rows * cols);
        im2col(x, cols_buf_.data());

        Tensor<S> y(x.n, out_c_, h_, w_);
        ConstMatMap<S> kt(cols_buf_.data(), rows, cols);
        ConstMatMap<S> wt(weight_.v.data(), cols, out_c_);
        y_buf_.resize(rows * out_c_);
        MatMap<S> yt(y_buf_.data(), rows, out_c_);
        yt.noalias() = kt * wt;
        for (Eigen::Index co = 0; co < out_c_; ++co) yt.col(co).array() += bias_.v[co];
        for (Eigen::Index i = 0; i < x.n; ++i)
            for (Eigen::Index co = 0; co < out_c_; ++co)
                y.plane(i, co) =
                    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(y_buf_.data() + co * rows + i * hw, hw);
        if (!cache) cols_buf_.resize(0);
        return y;
    }

    // dy -> dx; accumulates weight/bias gradients. Pass need_dx = false for
    // layers whose input is a leaf (e.g. the stem over image data).
    Tensor<S> backward(const Tensor<S>& dy, bool need_dx = true) {
        const Eigen::Index hw = h_ * w_, rows = n_ * hw, cols = in_c_ * k_ * k_;
        dy_buf_.resize(rows * out_c_);
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index co = 0; co < out_c_; ++co)
                Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(dy_buf_.data() + co * rows + i * hw, hw) =
                    dy.plane(i, co);

        ConstMatMap<S> dyt(dy_buf_.data(), rows, out_c_);
        ConstMatMap<S> kt(cols_buf_.data(), rows, cols);
        MatMap<S> gw(grad_w_.v.data(), cols, out_c_);
        gw.noalias() += kt.transpose() * dyt;
        for (Eigen::Index co = 0; co < out_c_; ++co) grad_b_.v[co] += dyt.col(co).sum();

        Tensor<S> dx;
        if (need_dx) {
            dcols_buf_.resize(rows * cols);
            MatMap<S> dkt(dcols_buf_.data(), rows, cols);
            ConstMatMap<S> wt(weight_.v.data(), cols, out_c_);
            dkt.noalias() = dyt * wt.transpose();
            dx = Tensor<S>::zeros(n_, in_c_, h_, w_);
            col2im(dcols_buf_.data(), dx);
        }
        return dx;
    }

    Tensor<S>& weight() { return weight_; }
    Tensor<S>& bias() { return bias_; }

private:
    void im2col(const Tensor<S>& x, S* buf) const {
        const Eigen::Index hw = h_ * w_, rows = x.n * hw;
        for (Eigen::Index ci = 0; ci < in_c_; ++ci) {
            for (Eigen::Index ky = 0; ky < k_; ++ky) {
                for (Eigen::Index kx = 0; kx < k_; ++kx) {
                    const Eigen::Index q = (ci * k_ + ky) * k_ + kx;
                    const Eigen::Index dy = ky - pad_, dx = kx - pad_;
                    const Eigen::Index x0 = std::max<Eigen::Index>(0, -dx);
                    const Eigen::Index x1 = std::min<Eigen::Index>(w_, w_ - dx);
                    S* col = buf + q * rows;
                    for (Eigen::Index i = 0; i < x.n; ++i) {
                        const S* src = x.v.data() + (i * in_c_ + ci) * hw;
                        S* dst = col + i * hw;
                        for (Eigen::Index y = 0; y < h_; ++y) {
                            const Eigen::Index ys = y + dy;
                            S* row = dst + y * w_;
                            if (ys < 0 || ys >= h_ || x1 <= x0) {
                                std::fill(row, row + w_, S(0));
                                continue;
                            }
                            std::fill(row, row + x0, S(0));
                            std::copy(src + ys * w_ + x0 + dx, src + ys * w_ + x1 + dx, row + x0);
                            std::fill(row + x1, row + w_, S(0));
                        }
                    }
                }
            }
        }
    }

    void col2im(const S* buf, Tensor<S>& dx) const {
        const Eigen::Index hw = h_ * w_, rows = n_ * hw;
        for (Eigen::Index ci = 0; ci < in_c_; ++ci) {
            for (Eigen::Index ky = 0; ky < k_; ++ky) {
                for (Eigen::Index kx = 0; kx < k_; ++kx) {
                    const Eigen::Index q = (ci * k_ + ky) * k_ + kx;
                    const Eigen::Index dy = ky - pad_, dx_off = kx - pad_;
                    const Eigen::Index x0 = std::max<Eigen::Index>(0, -dx_off);
                    const Eigen::Index x1 = std::min<Eigen::Index>(w_, w_ - dx_off);
                    const S* col = buf + q * rows;
                    for (Eigen::Index i = 0; i < n_; ++i) {
                        S* dst = dx.v.data() + (i * in_c_ + ci) * hw;
                        const S* src = col + i * hw;
                        for (Eigen::Index y = 0; y < h_; ++y) {
                            const Eigen::Index ys = y + dy;
                            if (ys < 0 || ys >= h_ || x1 <= x0) continue;
                            S* drow = dst + ys * w_ + x0 + dx_off;
                            const S* srow = src + y * w_ + x0;
                            for (Eigen::Index t = 0; t < x1 - x0; ++t) drow[t] += srow[t];
                        }
                    }
                }
            }
        }
    }

    Eigen::Index in_c_ = 0, out_c_ = 0, k_ = 0, pad_ = 0;
    Eigen::Index n_ = 0, h_ = 0, w_ = 0;
    Tensor<S> weight_, bias_, grad_w_, grad_b_;
    typename Tensor<S>::Array cols_buf_, dcols_buf_, y_buf_, dy_buf_;
};

// ---------------------------------------------------------------------------
// GroupNorm with statistics computed per call (no running averages).
// ---------------------------------------------------------------------------
template <typename S>
class GroupNorm {
public:
    GroupNorm() = default;
    explicit GroupNorm(Eigen::Index channels) : c_(channels) {
        groups_ = std::min<Eigen::Index>(8, channels);
        while (channels % groups_ != 0) --groups_;
        gamma_.resize(1, channels, 1, 1);
        beta_.resize(1, channels, 1, 1);
        grad_gamma_ = Tensor<S>::zeros(1, channels, 1, 1);
        grad_beta_ = Tensor<S>::zeros(1, channels, 1, 1);
    }

    void init(Rng&) {
        gamma_.v.setOnes();
        beta_.set_zero();
    }

    void register_params(const std::string& prefix, ParamList<S>& out) {
        out.push_back({prefix + ".gamma", &gamma_, &grad_gamma_});
        out.push_back({prefix + ".beta", &beta_, &grad_beta_});
    }

    Tensor<S> forward(const Tensor<S>& x, bool cache) {
        const Eigen::Index m = (c_ / groups_) * x.h * x.w; // elements per group
        Tensor<S> y(x.n, x.c, x.h, x.w);
        xhat_.resize(x.n, x.c, x.h, x.w);
        inv_std_.resize(static_cast<std::size_t>(x.n * groups_));
        for (Eigen::Index i = 0; i < x.n; ++i) {
            for (Eigen::Index g = 0; g < groups_; ++g) {
                Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> blk(
                    x.v.data() + (i * c_ + g * (c_ / groups_)) * x.h * x.w, m);
                const S mean = blk.mean();
                const S var = (blk - mean).square().mean();
                const S inv = S(1) / std::sqrt(var + S(1e-5));
                inv_std_[static_cast<std::size_t>(i * groups_ + g)] = inv;
                Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> xh(
                    xhat_.v.data() + (i * c_ + g * (c_ / groups_)) * x.h * x.w, m);
                xh = (blk - mean) * inv;
            }
            for (Eigen::Index ch = 0; ch < c_; ++ch)
                y.plane(i, ch) = xhat_.plane(i, ch) * gamma_.v[ch] + beta_.v[ch];
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) {
        const Eigen::Index cg = c_ / groups_;
        const Eigen::Index m = cg * dy.h * dy.w;
        Tensor<S> dx(dy.n, dy.c, dy.h, dy.w);
        Tensor<S> dxhat(dy.n, dy.c, dy.h, dy.w);
        for (Eigen::Index i = 0; i < dy.n; ++i) {
            for (Eigen::Index ch = 0; ch < c_; ++ch) {
                grad_gamma_.v[ch] += (dy.plane(i, ch) * xhat_.plane(i, ch)).sum();
                grad_beta_.v[ch] += dy.plane(i, ch).sum();
                dxhat.plane(i, ch) = dy.plane(i, ch) * gamma_.v[ch];
            }
            for (Eigen::Index g = 0; g < groups_; ++g) {
                const Eigen::Index off = (i * c_ + g * cg) * dy.h * dy.w;
                Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> dxh(dxhat.v.data() + off, m);
                Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> xh(xhat_.v.data() + off, m);
                Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> out(dx.v.data() + off, m);
                const S inv = inv_std_[static_cast<std::size_t>(i * groups_ + g)];
                const S mean_dxh = dxh.mean();
                const S mean_dxh_xh = (dxh * xh).mean();
                out = inv * (dxh - mean_dxh - xh * mean_dxh_xh);
            }
        }
        return dx;
    }

private:
    Eigen::Index c_ = 0, groups_ = 1;
    Tensor<S> gamma_, beta_, grad_gamma_, grad_beta_;
    Tensor<S> xhat_;
    std::vector<S> inv_std_;
};

// ---------------------------------------------------------------------------
// SiLU activation (x * sigmoid(x)); one instance per use site so the cache
// survives until backward.
// ---------------------------------------------------------------------------
template <typename S>
class Silu {
public:
    Tensor<S> forward(const Tensor<S>& x, bool cache) {
        Tensor<S> y(x.n, x.c, x.h, x.w);
        if (cache) {
            sig_.resize(x.n, x.c, x.h, x.w);
            sig_.v = S(1) / (S(1) + (-x.v).exp());
            y.v = x.v * sig_.v;
            x_ = x;
        } else {
            y.v = x.v / (S(1) + (-x.v).exp());
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) {
        Tensor<S> dx(dy.n, dy.c, dy.h, dy.w);
        dx.v = dy.v * (sig_.v * (S(1) + x_.v * (S(1) - sig_.v)));
        return dx;
    }

private:
    Tensor<S> x_, sig_;
};

// ---------------------------------------------------------------------------
// 2x2 average pooling / nearest-neighbor 2x upsampling
// ---------------------------------------------------------------------------
template <typename S>
class AvgPool2 {
public:
    Tensor<S> forward(const Tensor<S>& x) {
        h_ = x.h; w_ = x.w;
        Tensor<S> y(x.n, x.c, x.h / 2, x.w / 2);
        for (Eigen::Index i = 0; i < x.n; ++i)
            for (Eigen::Index ch = 0; ch < x.c; ++ch)
                for (Eigen::Index yy = 0; yy < y.h; ++yy)
                    for (Eigen::Index xx = 0; xx < y.w; ++xx)
                        y(i, ch, yy, xx) = S(0.25) * (x(i, ch, 2 * yy, 2 * xx) + x(i, ch, 2 * yy, 2 * xx + 1) +
                                                      x(i, ch, 2 * yy + 1, 2 * xx) + x(i, ch, 2 * yy + 1, 2 * xx + 1));
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) {
        Tensor<S> dx(dy.n, dy.c, h_, w_);
        for (Eigen::Index i = 0; i < dy.n; ++i)
            for (Eigen::Index ch = 0; ch < dy.c; ++ch)
                for (Eigen::Index yy = 0; yy < dy.h; ++yy)
                    for (Eigen::Index xx = 0; xx < dy.w; ++xx) {
                        const S g = S(0.25) * dy(i, ch, yy, xx);
                        dx(i, ch, 2 * yy, 2 * xx) = g;
                        dx(i, ch, 2 * yy, 2 * xx + 1) = g;
                        dx(i, ch, 2 * yy + 1, 2 * xx) = g;
                        dx(i, ch, 2 * yy + 1, 2 * xx + 1) = g;
                    }
        return dx;
    }

private:
    Eigen::Index h_ = 0, w_ = 0;
};

template <typename S>
class Upsample2 {
public:
    Tensor<S> forward(const Tensor<S>& x) {
        Tensor<S> y(x.n, x.c, x.h * 2, x.w * 2);
        for (Eigen::Index i = 0; i < x.n; ++i)
            for (Eigen::Index ch = 0; ch < x.c; ++ch)
                for (Eigen::Index yy = 0; yy < x.h; ++yy)
                    for (Eigen::Index xx = 0; xx < x.w; ++xx) {
                        const S v = x(i, ch, yy, xx);
                        y(i, ch, 2 * yy, 2 * xx) = v;
                        y(i, ch, 2 * yy, 2 * xx + 1) = v;
                        y(i, ch, 2 * yy + 1, 2 * xx) = v;
                        y(i, ch, 2 * yy + 1, 2 * xx + 1) = v;
                    }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) {
        Tensor<S> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
        for (Eigen::Index i = 0; i < dy.n; ++i)
            for (Eigen::Index ch = 0; ch < dy.c; ++ch)
                for (Eigen::Index yy = 0; yy < dx.h; ++yy)
                    for (Eigen::Index xx = 0; xx < dx.w; ++xx)
                        dx(i, ch, yy, xx) = dy(i, ch, 2 * yy, 2 * xx) + dy(i, ch, 2 * yy, 2 * xx + 1) +
                                            dy(i, ch, 2 * yy + 1, 2 * xx) + dy(i, ch, 2 * yy + 1, 2 * xx + 1);
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Linear over feature vectors stored as (N, F, 1, 1) tensors.
// ---------------------------------------------------------------------------
template <typename S>
class Linear {
public:
    Linear() = default;
    Linear(Eigen::Index in_f, Eigen::Index out_f) : in_f_(in_f), out_f_(out_f) {
        weight_.resize(1, 1, in_f, out_f); // column-major (in_f x out_f) when mapped
        bias_.resize(1, out_f, 1, 1);
        grad_w_ = Tensor<S>::zeros(1, 1, in_f, out_f);
        grad_b_ = Tensor<S>::zeros(1, out_f, 1, 1);
    }

    void init(Rng& rng) {
        const double std = std::sqrt(2.0 / static_cast<double>(in_f_));
        fill_normal(weight_, rng, std);
        bias_.set_zero();
    }

    void register_params(const std::string& prefix, ParamList<S>& out) {
        out.push_back({prefix + ".w", &weight_, &grad_w_});
        out.push_back({prefix + ".b", &bias_, &grad_b_});
    }

    Tensor<S> forward(const Tensor<S>& x, bool cache) {
        n_ = x.n;
        Tensor<S> y(x.n, out_f_, 1, 1);
        ConstMatMap<S> xm(x.v.data(), in_f_, x.n);
        ConstMatMap<S> wm(weight_.v.data(), in_f_, out_f_);
        MatMap<S> ym(y.v.data(), out_f_, x.n);
        ym.noalias() = wm.transpose() * xm;
        ConstMatMap<S> bm(bias_.v.data(), out_f_, 1);
        ym.colwise() += bm.col(0);
        if (cache) x_ = x;
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) {
        Tensor<S> dx(n_, in_f_, 1, 1);
        ConstMatMap<S> dym(dy.v.data(), out_f_, n_);
        ConstMatMap<S> xm(x_.v.data(), in_f_, n_);
        ConstMatMap<S> wm(weight_.v.data(), in_f_, out_f_);
        MatMap<S> gw(grad_w_.v.data(), in_f_, out_f_);
        gw.noalias() += xm * dym.transpose();
        MatMap<S> gb(grad_b_.v.data(), out_f_, 1);
        gb.noalias() += dym.rowwise().sum();
        MatMap<S> dxm(dx.v.data(), in_f_, n_);
        dxm.noalias() = wm * dym;
        return dx;
    }

    Tensor<S>& weight() { return weight_; }
    Tensor<S>& bias() { return bias_; }

private:
    Eigen::Index in_f_ = 0, out_f_ = 0, n_ = 0;
    Tensor<S> weight_, bias_, grad_w_, grad_b_;
    Tensor<S> x_;
};

// ---------------------------------------------------------------------------
// Channel-attention fusion of a condition feature map s into a decoder map u:
//   w = sigmoid(MLP(gap(concat(u, s)))),  out = u + w (.) s
// The gate MLP is 2C -> hidden -> C with a ReLU in between.
// ---------------------------------------------------------------------------
template <typename S>
class ChannelGate {
public:
    ChannelGate() = default;
    ChannelGate(Eigen::Index channels, Eigen::Index reduction)
        : c_(channels), hidden_(std::max<Eigen::Index>(1, 2 * channels / reduction)) {
        fc1_ = Linear<S>(2 * channels, hidden_);
        fc2_ = Linear<S>(hidden_, channels);
    }

    void init(Rng& rng) {
        fc1_.init(rng);
        fc2_.init(rng);
    }

    void register_params(const std::string& prefix, ParamList<S>& out) {
        fc1_.register_params(prefix + ".fc1", out);
        fc2_.register_params(prefix + ".fc2", out);
    }

    Tensor<S> forward(const Tensor<S>& u, const Tensor<S>& s, bool cache) {
        if (!u.same_shape(s)) throw std::invalid_argument("channel_attention_fuse: u/s shape mismatch");
        const Eigen::Index hw = u.h * u.w;
        Tensor<S> pooled(u.n, 2 * c_, 1, 1);
        for (Eigen::Index i = 0; i < u.n; ++i)
            for (Eigen::Index ch = 0; ch < c_; ++ch) {
                pooled.v[i * 2 * c_ + ch] = u.plane(i, ch).mean();
                pooled.v[i * 2 * c_ + c_ + ch] = s.plane(i, ch).mean();
            }
        Tensor<S> a = fc1_.forward(pooled, cache);
        Tensor<S> z(a.n, a.c, 1, 1);
        z.v = a.v.max(S(0));
        Tensor<S> q = fc2_.forward(z, cache);
        gate_.resize(u.n, c_, 1, 1);
        for (Eigen::Index idx = 0; idx < q.numel(); ++idx) gate_.v[idx] = sigmoid(q.v[idx]);

        Tensor<S> out(u.n, u.c, u.h, u.w);
        for (Eigen::Index i = 0; i < u.n; ++i)
            for (Eigen::Index ch = 0; ch < c_; ++ch)
                out.plane(i, ch) = u.plane(i, ch) + gate_.v[i * c_ + ch] * s.plane(i, ch);
        if (cache) {
            s_ = s;
            relu_in_ = a;
            hw_ = hw;
        }
        return out;
    }

    // returns (du, ds)
    std::pair<Tensor<S>, Tensor<S>> backward(const Tensor<S>& dout) {
        const Eigen::Index hw = hw_;
        Tensor<S> du = dout;
        Tensor<S> ds(dout.n, dout.c, dout.h, dout.w);
        Tensor<S> dgate(dout.n, c_, 1, 1);
        for (Eigen::Index i = 0; i < dout.n; ++i)
            for (Eigen::Index ch = 0; ch < c_; ++ch) {
                ds.plane(i, ch) = gate_.v[i * c_ + ch] * dout.plane(i, ch);
                dgate.v[i * c_ + ch] = (dout.plane(i, ch) * s_.plane(i, ch)).sum();
            }
        Tensor<S> dq(dout.n, c_, 1, 1);
        dq.v = dgate.v * gate_.v * (S(1) - gate_.v);
        Tensor<S> dz = fc2_.backward(dq);
        Tensor<S> da(dz.n, dz.c, 1, 1);
        da.v = (relu_in_.v > S(0)).select(dz.v, S(0));
        Tensor<S> dpooled = fc1_.backward(da);
        const S inv_hw = S(1) / static_cast<S>(hw);
        for (Eigen::Index i = 0; i < dout.n; ++i)
            for (Eigen::Index ch = 0; ch < c_; ++ch) {
                du.plane(i, ch) += dpooled.v[i * 2 * c_ + ch] * inv_hw;
                ds.plane(i, ch) += dpooled.v[i * 2 * c_ + c_ + ch] * inv_hw;
            }
        return {std::move(du), std::move(ds)};
    }

    Linear<S>& fc1() { return fc1_; }
    Linear<S>& fc2() { return fc2_; }

private:
    Eigen::Index c_ = 0, hidden_ = 0, hw_ = 0;
    Linear<S> fc1_, fc2_;
    Tensor<S> gate_, s_, relu_in_;
};

// channel concat / split helpers for skip connections
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    Tensor<S> out(a.n, a.c + b.c, a.h, a.w);
    for (Eigen::Index i = 0; i < a.n; ++i) {
        for (Eigen::Index ch = 0; ch < a.c; ++ch) out.plane(i, ch) = a.plane(i, ch);
        for (Eigen::Index ch = 0; ch < b.c; ++ch) out.plane(i, a.c + ch) = b.plane(i, ch);
    }
    return out;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> split_channels(const Tensor<S>& x, Eigen::Index c_first) {
    Tensor<S> a(x.n, c_first, x.h, x.w), b(x.n, x.c - c_first, x.h, x.w);
    for (Eigen::Index i = 0; i < x.n; ++i) {
        for (Eigen::Index ch = 0; ch < c_first; ++ch) a.plane(i, ch) = x.plane(i, ch);
        for (Eigen::Index ch = 0; ch < x.c - c_first; ++ch) b.plane(i, ch) = x.plane(i, c_first + ch);
    }
    return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Residual block: GN -> SiLU -> conv, optional per-channel time-embedding
// bias, GN -> SiLU -> conv, plus identity / 1x1 skip.
// ---------------------------------------------------------------------------
template <typename S>
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(Eigen::Index in_c, Eigen::Index out_c, Eigen::Index time_dim)
        : in_c_(in_c), out_c_(out_c), time_dim_(time_dim) {
        gn1_ = GroupNorm<S>(in_c);
        conv1_ = Conv2d<S>(in_c, out_c, 3);
        gn2_ = GroupNorm<S>(out_c);
        conv2_ = Conv2d<S>(out_c, out_c, 3);
        if (time_dim > 0) tproj_ = Linear<S>(time_dim, out_c);
        if (in_c != out_c) skip_ = Conv2d<S>(in_c, out_c, 1);
    }

    void init(Rng& rng) {
        gn1_.init(rng);
        conv1_.init(rng);
        gn2_.init(rng);
        conv2_.init(rng);
        if (time_dim_ > 0) tproj_.init(rng);
        if (in_c_ != out_c_) skip_.init(rng);
    }

    void register_params(const std::string& prefix, ParamList<S>& out) {
        gn1_.register_params(prefix + ".gn1", out);
        conv1_.register_params(prefix + ".conv1", out);
        if (time_dim_ > 0) tproj_.register_params(prefix + ".tproj", out);
        gn2_.register_params(prefix + ".gn2", out);
        conv2_.register_params(prefix + ".conv2", out);
        if (in_c_ != out_c_) skip_.register_params(prefix + ".skip", out);
    }

    // temb_act: SiLU-activated shared time embedding, shape (1, time_dim, 1, 1);
    // ignored when the block is not time-conditioned.
    Tensor<S> forward(const Tensor<S>& x, const Tensor<S>* temb_act, bool cache) {
        Tensor<S> h = conv1_.forward(act1_.forward(gn1_.forward(x, cache), cache), cache);
        if (time_dim_ > 0) {
            Tensor<S> tb = tproj_.forward(*temb_act, cache); // (1, out_c)
            for (Eigen::Index i = 0; i < h.n; ++i)
                for (Eigen::Index ch = 0; ch < h.c; ++ch) h.plane(i, ch) += tb.v[ch];
        }
        Tensor<S> r = conv2_.forward(act2_.forward(gn2_.forward(h, cache), cache), cache);
        if (in_c_ != out_c_) {
            r.v += skip_.forward(x, cache).v;
        } else {
            r.v += x.v;
        }
        return r;
    }

    // returns dx; when time-conditioned also accumulates into d_temb_act
    Tensor<S> backward(const Tensor<S>& dy, Tensor<S>* d_temb_act, bool need_dx = true) {
        Tensor<S> dh = gn2_.backward(act2_.backward(conv2_.backward(dy)));
        if (time_dim_ > 0) {
            Tensor<S> dtb(1, out_c_, 1, 1);
            for (Eigen::Index ch = 0; ch < out_c_; ++ch) {
                S acc = S(0);
                for (Eigen::Index i = 0; i < dh.n; ++i) acc += dh.plane(i, ch).sum();
                dtb.v[ch] = acc;
            }
            Tensor<S> dt = tproj_.backward(dtb);
            d_temb_act->v += dt.v;
        }
        const bool dx_for_conv1 = need_dx || in_c_ == out_c_;
        Tensor<S> dx;
        if (dx_for_conv1)
            dx = gn1_.backward(act1_.backward(conv1_.backward(dh, true)));
        else
            conv1_.backward(dh, false);
        if (in_c_ != out_c_) {
            Tensor<S> dskip = skip_.backward(dy, need_dx);
            if (need_dx) dx.v += dskip.v;
        } else {
            dx.v += dy.v;
        }
        return dx;
    }

private:
    Eigen::Index in_c_ = 0, out_c_ = 0, time_dim_ = 0;
    GroupNorm<S> gn1_, gn2_;
    Conv2d<S> conv1_, conv2_, skip_;
    Linear<S> tproj_;
    Silu<S> act1_, act2_;
};

} // namespace cts::nn
