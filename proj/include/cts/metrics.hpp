#pragma once

#include "cts/preprocessing.hpp"

#include <stdexcept>

namespace cts {

namespace detail {
template <typename A, typename B>
void check_mask_pair(const Eigen::ArrayBase<A>& pred, const Eigen::ArrayBase<B>& gt, const char* what) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
        throw std::invalid_argument(std::string(what) + ": mask shape mismatch");
    if (!is_binary(pred) || !is_binary(gt))
        throw std::invalid_argument(std::string(what) + ": masks must be binary {0,1}");
}
} // namespace detail

// Dice = 2|P n G| / (|P| + |G|); both masks empty -> 1.0 by convention.
template <typename A, typename B>
double dice(const Eigen::ArrayBase<A>& pred, const Eigen::ArrayBase<B>& gt) {
    using S = typename A::Scalar;
    detail::check_mask_pair(pred, gt, "dice");
    const double inter = ((pred.derived() == S(1)) && (gt.derived() == S(1))).count();
    const double total = static_cast<double>((pred.derived() == S(1)).count()) +
                         static_cast<double>((gt.derived() == S(1)).count());
    if (total == 0.0) return 1.0;
    return 2.0 * inter / total;
}

// IoU = |P n G| / |P u G|; both masks empty -> 1.0 by convention.
template <typename A, typename B>
double iou(const Eigen::ArrayBase<A>& pred, const Eigen::ArrayBase<B>& gt) {
    using S = typename A::Scalar;
    detail::check_mask_pair(pred, gt, "iou");
    const double inter = ((pred.derived() == S(1)) && (gt.derived() == S(1))).count();
    const double uni = ((pred.derived() == S(1)) || (gt.derived() == S(1))).count();
    if (uni == 0.0) return 1.0;
    return inter / uni;
}

} // namespace cts
