#pragma once

// Self-supervised reconstruction losses: SSIM/L1 photometric penalty with
// per-pixel minimum over reference candidates, and edge-aware disparity
// smoothness.

#include <string>
#include <vector>

#include "poseflow/errors.hpp"
#include "poseflow/tensor.hpp"
#include "poseflow/tensor_nn.hpp"

namespace poseflow {

// Mean-over-channels SSIM map of two [3,h,w] images, 3x3 box statistics,
// C1 = 0.01^2, C2 = 0.03^2. Returns [h,w] in [-1,1]; identical inputs give
// exactly 1 everywhere.
template <typename T>
Tensor<T> ssim_map(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape() || a.rank() != 3) throw ShapeError("ssim_map: expects matching [c,h,w] images");
    const T c1 = static_cast<T>(1e-4), c2 = static_cast<T>(9e-4);
    Tensor<T> mu1 = box_filter3(a);
    Tensor<T> mu2 = box_filter3(b);
    Tensor<T> mu1_sq = mul(mu1, mu1);
    Tensor<T> mu2_sq = mul(mu2, mu2);
    Tensor<T> mu12 = mul(mu1, mu2);
    Tensor<T> sigma1 = sub(box_filter3(mul(a, a)), mu1_sq);
    Tensor<T> sigma2 = sub(box_filter3(mul(b, b)), mu2_sq);
    Tensor<T> sigma12 = sub(box_filter3(mul(a, b)), mu12);
    Tensor<T> num = mul(mu12 * T(2) + c1, sigma12 * T(2) + c2);
    Tensor<T> den = mul(add(mu1_sq, mu2_sq) + c1, add(sigma1, sigma2) + c2);
    return mean(div(num, den), 0);
}

// Per-pixel reconstruction penalty: w_ssim*(1-SSIM)/2 + w_l1*|diff|, the L1
// term averaged over channels. Returns [h,w].
template <typename T>
Tensor<T> photometric_penalty(const Tensor<T>& warped, const Tensor<T>& target, T w_ssim = T(0.85),
                              T w_l1 = T(0.15)) {
    Tensor<T> l1 = mean(abs(sub(warped, target)), 0);
    Tensor<T> dssim = (T(1) - ssim_map(warped, target)) * T(0.5);
    return add(dssim * w_ssim, l1 * w_l1);
}

// Minimum-reprojection photometric loss over one or more warped references.
// Invalid pixels of a reference are excluded from its candidacy; pixels valid
// in no reference raise a domain error (degenerate warp).
template <typename T>
Tensor<T> photometric_loss(const Tensor<T>& target, const std::vector<Tensor<T>>& warped_refs,
                           const std::vector<Tensor<T>>& masks, T w_ssim = T(0.85), T w_l1 = T(0.15)) {
    if (warped_refs.empty() || warped_refs.size() != masks.size())
        throw ArgumentError("photometric_loss: need matching warped references and masks");
    constexpr T kBig = T(1e4);
    Tensor<T> combined;
    Tensor<T> any_valid;
    for (std::size_t i = 0; i < warped_refs.size(); ++i) {
        Tensor<T> pen = photometric_penalty(warped_refs[i], target, w_ssim, w_l1);
        Tensor<T> masked = add(mul(pen, masks[i]), (T(1) - masks[i]) * kBig);
        combined = i == 0 ? masked : minimum(combined, masked);
        any_valid = i == 0 ? masks[i] : maximum(any_valid, masks[i]);
    }
    T count = T(0);
    for (T m : any_valid.values()) count += m;
    if (count == T(0)) throw DomainError("photometric_loss: no valid pixels in any reference (degenerate warp)");
    return sum_all(mul(combined, any_valid)) / count;
}

// Edge-aware smoothness of the mean-normalized disparity 1/depth: gradients
// of disparity are discounted where the image has strong gradients.
template <typename T>
Tensor<T> smoothness_loss(const Tensor<T>& depth, const Tensor<T>& image) {
    if (depth.rank() != 2 || image.rank() != 3) throw ShapeError("smoothness_loss: expects [h,w] and [3,h,w]");
    if (image.size(1) != depth.size(0) || image.size(2) != depth.size(1))
        throw ShapeError("smoothness_loss: depth/image spatial mismatch");
    Tensor<T> disp = div(Tensor<T>::full(depth.shape(), T(1)), depth);
    Tensor<T> dn = div(disp, mean_all(disp));
    Tensor<T> gx = abs(diff(dn, 1));
    Tensor<T> gy = abs(diff(dn, 0));
    Tensor<T> wx = exp(neg(mean(abs(diff(image, 2)), 0)));
    Tensor<T> wy = exp(neg(mean(abs(diff(image, 1)), 0)));
    return add(mean_all(mul(gx, wx)), mean_all(mul(gy, wy)));
}

}  // namespace poseflow
