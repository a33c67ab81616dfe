#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <stdexcept>

#include "cts/rng.hpp"

namespace cts {

// Dense NCHW tensor backed by a single Eigen array. The W axis is fastest,
// so each (n, c) plane is a contiguous block of h*w scalars; that layout is
// what the im2col GEMM in nn.hpp relies on.
template <typename Scalar>
struct Tensor {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    Eigen::Index n = 0, c = 0, h = 0, w = 0;
    Array v;

    Tensor() = default;
    Tensor(Eigen::Index n_, Eigen::Index c_, Eigen::Index h_, Eigen::Index w_) { resize(n_, c_, h_, w_); }

    static Tensor zeros(Eigen::Index n, Eigen::Index c, Eigen::Index h, Eigen::Index w) {
        Tensor t(n, c, h, w);
        t.v.setZero();
        return t;
    }

    void resize(Eigen::Index n_, Eigen::Index c_, Eigen::Index h_, Eigen::Index w_) {
        n = n_; c = c_; h = h_; w = w_;
        v.resize(n * c * h * w);
    }

    Eigen::Index numel() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    std::array<Eigen::Index, 4> shape() const { return {n, c, h, w}; }

    void set_zero() { v.setZero(); }
    bool all_finite() const { return v.isFinite().all(); }

    Scalar& operator()(Eigen::Index i, Eigen::Index j, Eigen::Index y, Eigen::Index x) {
        return v[((i * c + j) * h + y) * w + x];
    }
    Scalar operator()(Eigen::Index i, Eigen::Index j, Eigen::Index y, Eigen::Index x) const {
        return v[((i * c + j) * h + y) * w + x];
    }

    // contiguous (n, c) plane of h*w scalars
    Eigen::Map<Array> plane(Eigen::Index i, Eigen::Index j) {
        return Eigen::Map<Array>(v.data() + (i * c + j) * h * w, h * w);
    }
    Eigen::Map<const Array> plane(Eigen::Index i, Eigen::Index j) const {
        return Eigen::Map<const Array>(v.data() + (i * c + j) * h * w, h * w);
    }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> t(n, c, h, w);
        t.v = v.template cast<Other>();
        return t;
    }
};

template <typename Scalar>
void fill_normal(Tensor<Scalar>& t, Rng& rng, double stddev = 1.0) {
    for (Eigen::Index i = 0; i < t.v.size(); ++i)
        t.v[i] = static_cast<Scalar>(stddev * rng.normal());
}

template <typename Scalar>
void check_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": tensor shape mismatch");
}

} // namespace cts
