#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cts {

template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Grayscale image plane (intensities) and mask plane (labels {0,1} in label
// space, reals in the [-1,1] diffusion coding).
using ImageGrid = Grid<float>;
using MaskGrid = Grid<float>;

template <typename Derived>
bool is_binary(const Eigen::ArrayBase<Derived>& m) {
    using S = typename Derived::Scalar;
    return ((m.derived() == S(0)) || (m.derived() == S(1))).all();
}

// Perona-Malik explicit scheme, 4-neighbor differences, conduction
// g(d) = exp(-(d/kappa)^2), replicate (Neumann) boundaries. gamma <= 0.25 is
// the explicit-scheme stability bound.
template <typename Derived>
Grid<typename Derived::Scalar> anisotropic_diffusion(const Eigen::ArrayBase<Derived>& img_in, int n_iter,
                                                     double kappa, double gamma) {
    using S = typename Derived::Scalar;
    if (n_iter < 0) throw std::invalid_argument("anisotropic_diffusion: n_iter must be >= 0");
    if (!(kappa > 0.0)) throw std::invalid_argument("anisotropic_diffusion: kappa must be > 0");
    if (!(gamma > 0.0 && gamma <= 0.25))
        throw std::invalid_argument("anisotropic_diffusion: gamma must be in (0, 0.25]");

    Grid<S> cur = img_in.derived();
    const Eigen::Index rows = cur.rows(), cols = cur.cols();
    Grid<S> next(rows, cols);
    const S inv_k2 = S(1.0 / (kappa * kappa));
    const S g = S(gamma);

    for (int it = 0; it < n_iter; ++it) {
        for (Eigen::Index y = 0; y < rows; ++y) {
            const Eigen::Index yn = y > 0 ? y - 1 : 0;
            const Eigen::Index ys = y < rows - 1 ? y + 1 : rows - 1;
            for (Eigen::Index x = 0; x < cols; ++x) {
                const Eigen::Index xw = x > 0 ? x - 1 : 0;
                const Eigen::Index xe = x < cols - 1 ? x + 1 : cols - 1;
                const S c = cur(y, x);
                const S dn = cur(yn, x) - c;
                const S ds = cur(ys, x) - c;
                const S dw = cur(y, xw) - c;
                const S de = cur(y, xe) - c;
                S flux = std::exp(-dn * dn * inv_k2) * dn + std::exp(-ds * ds * inv_k2) * ds +
                         std::exp(-dw * dw * inv_k2) * dw + std::exp(-de * de * inv_k2) * de;
                next(y, x) = c + g * flux;
            }
        }
        cur.swap(next);
    }
    return cur;
}

// linearly interpolated percentile, p in [0, 100]
template <typename Derived>
typename Derived::Scalar percentile(const Eigen::ArrayBase<Derived>& img, double p) {
    using S = typename Derived::Scalar;
    Grid<S> tmp = img.derived();
    std::vector<S> vals(tmp.data(), tmp.data() + tmp.size());
    std::sort(vals.begin(), vals.end());
    const double rank = p / 100.0 * static_cast<double>(vals.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = static_cast<std::size_t>(std::ceil(rank));
    const double frac = rank - static_cast<double>(lo);
    return static_cast<S>((1.0 - frac) * vals[lo] + frac * vals[hi]);
}

// Clip to the [lo, hi] percentile range, then map affinely to [-1, 1].
// A constant image maps to all zeros.
template <typename Derived>
Grid<typename Derived::Scalar> normalize_image(const Eigen::ArrayBase<Derived>& img_in, double lo_pct = 1.0,
                                               double hi_pct = 99.0) {
    using S = typename Derived::Scalar;
    if (!(lo_pct < hi_pct)) throw std::invalid_argument("normalize_image: need lo < hi");
    Grid<S> img = img_in.derived();
    const S lo = percentile(img, lo_pct);
    const S hi = percentile(img, hi_pct);
    if (!(hi > lo)) return Grid<S>::Zero(img.rows(), img.cols());
    const S scale = S(2) / (hi - lo);
    // final clamp absorbs float rounding at the endpoints
    return (((img.min(hi).max(lo) - lo) * scale - S(1)).min(S(1)).max(S(-1))).eval();
}

// {0,1} label space -> {-1,+1} diffusion space
template <typename Derived>
Grid<typename Derived::Scalar> encode_mask(const Eigen::ArrayBase<Derived>& mask) {
    using S = typename Derived::Scalar;
    if (!is_binary(mask)) throw std::invalid_argument("encode_mask: mask must be binary {0,1}");
    return (mask.derived() * S(2) - S(1)).eval();
}

// inverse affine map x -> (x+1)/2, clipped to [0, 1]
template <typename Derived>
Grid<typename Derived::Scalar> decode_mask(const Eigen::ArrayBase<Derived>& x) {
    using S = typename Derived::Scalar;
    return (((x.derived() + S(1)) * S(0.5)).min(S(1)).max(S(0))).eval();
}

template <typename Derived>
Grid<typename Derived::Scalar> binarize(const Eigen::ArrayBase<Derived>& prob, double threshold = 0.5) {
    using S = typename Derived::Scalar;
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("binarize: threshold must be in (0, 1)");
    return (prob.derived() > S(threshold)).template cast<S>().eval();
}

// sum of absolute 4-neighbor forward differences
template <typename Derived>
double total_variation(const Eigen::ArrayBase<Derived>& img_in) {
    Grid<typename Derived::Scalar> img = img_in.derived();
    double tv = 0.0;
    for (Eigen::Index y = 0; y < img.rows(); ++y)
        for (Eigen::Index x = 0; x + 1 < img.cols(); ++x)
            tv += std::abs(static_cast<double>(img(y, x + 1)) - static_cast<double>(img(y, x)));
    for (Eigen::Index y = 0; y + 1 < img.rows(); ++y)
        for (Eigen::Index x = 0; x < img.cols(); ++x)
            tv += std::abs(static_cast<double>(img(y + 1, x)) - static_cast<double>(img(y, x)));
    return tv;
}

} // namespace cts
