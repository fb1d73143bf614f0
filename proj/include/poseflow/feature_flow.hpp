#pragma once

// Confidence-aware feature flow: channel-normalized cross-frame affinity
// volumes, differentiable 2D soft-argmax displacement, and a confidence map
// combining affinity magnitude with softmax peakedness.
//
// Window offsets are the d*d centered integer offsets
// {-(d-1)/2 .. +(d-1)/2}^2, so zero flow means no motion. Flow fields store
// (x,y) displacement channels, matching grid coordinates elsewhere.

#include <cmath>
#include <utility>
#include <vector>

#include "poseflow/errors.hpp"
#include "poseflow/tensor.hpp"
#include "poseflow/tensor_nn.hpp"

namespace poseflow {

template <typename T>
struct AffinityVolume {
    Tensor<T> values;  // [h,w,d,d], cosine similarities in [-1,1]
    Dim window = 0;
};

template <typename T>
struct FlowField {
    Tensor<T> flow;        // [h,w,2], (x,y) displacement in feature pixels
    Tensor<T> confidence;  // [h,w,1] in [0,1]
};

struct FlowConfig {
    Dim window = 5;
    // Sharpness applied by the composed estimator before the soft argmax.
    // Unit-normalized affinities live in [-1,1]; dividing by a small
    // temperature makes well-matched windows effectively one-hot so the
    // soft argmax tracks the true displacement at sub-pixel accuracy.
    double temperature = 0.02;
};

// Scales every spatial position's channel vector to unit L2 norm
// (denominator guarded by 1e-8; zero vectors stay zero).
template <typename T>
Tensor<T> normalize_channels(const Tensor<T>& features) {
    if (features.rank() != 3) throw ShapeError("normalize_channels: expects [c,h,w]");
    const Dim c = features.size(0);
    const std::size_t hw = static_cast<std::size_t>(features.size(1) * features.size(2));
    constexpr T kEps = T(1e-8);
    std::vector<T> out(static_cast<std::size_t>(features.numel()));
    const T* fv = features.data();
    for (std::size_t i = 0; i < hw; ++i) {
        T nsq = T(0);
        for (Dim ch = 0; ch < c; ++ch) {
            const T v = fv[static_cast<std::size_t>(ch) * hw + i];
            nsq += v * v;
        }
        const T inv = T(1) / (std::sqrt(nsq) + kEps);
        for (Dim ch = 0; ch < c; ++ch)
            out[static_cast<std::size_t>(ch) * hw + i] = fv[static_cast<std::size_t>(ch) * hw + i] * inv;
    }
    auto pf = features.node();
    return make_op<T>(features.shape(), std::move(out), {features},
                      [pf, c, hw](typename Tensor<T>::Node& self) {
                          if (!pf->requires_grad) return;
                          const T* g = self.grad.data();
                          const T* v = pf->value.data();
                          T* gf = pf->grad.data();
                          for (std::size_t i = 0; i < hw; ++i) {
                              T nsq = T(0), gdotv = T(0);
                              for (Dim ch = 0; ch < c; ++ch) {
                                  const std::size_t idx = static_cast<std::size_t>(ch) * hw + i;
                                  nsq += v[idx] * v[idx];
                                  gdotv += g[idx] * v[idx];
                              }
                              const T n = std::sqrt(nsq);
                              const T d = n + T(1e-8);
                              const T invd = T(1) / d;
                              const T scale = (n > T(1e-12)) ? gdotv / (d * d * n) : T(0);
                              for (Dim ch = 0; ch < c; ++ch) {
                                  const std::size_t idx = static_cast<std::size_t>(ch) * hw + i;
                                  gf[idx] += g[idx] * invd - v[idx] * scale;
                              }
                          }
                      });
}

// Cross-frame affinity volume. A(y,x,j,i) is the inner product between the
// normalized target feature at (y,x) and the normalized reference feature at
// (y+j-(d-1)/2, x+i-(d-1)/2); out-of-image reference positions contribute 0.
template <typename T>
AffinityVolume<T> affinity_volume(const Tensor<T>& target, const Tensor<T>& reference, Dim d) {
    if (target.rank() != 3 || reference.rank() != 3)
        throw ShapeError("affinity_volume: expects [c,h,w] feature maps");
    for (Dim ax = 0; ax < 3; ++ax)
        if (target.size(ax) != reference.size(ax))
            throw ShapeError("affinity_volume: shape mismatch at axis " + std::to_string(ax) + " (" +
                             std::to_string(target.size(ax)) + " vs " + std::to_string(reference.size(ax)) + ")");
    if (d < 1 || d % 2 == 0) throw ArgumentError("affinity_volume: window must be odd and positive");

    Tensor<T> tn = normalize_channels(target);
    Tensor<T> rn = normalize_channels(reference);
    const Dim c = target.size(0), h = target.size(1), w = target.size(2);
    const Dim r = (d - 1) / 2;
    std::vector<T> out(static_cast<std::size_t>(h * w * d * d), T(0));
    const T* tv = tn.data();
    const T* rv = rn.data();
    for (Dim ch = 0; ch < c; ++ch) {
        const T* tp = tv + ch * h * w;
        const T* rp = rv + ch * h * w;
        for (Dim y = 0; y < h; ++y)
            for (Dim j = 0; j < d; ++j) {
                const Dim yy = y + j - r;
                if (yy < 0 || yy >= h) continue;
                for (Dim x = 0; x < w; ++x) {
                    const T t = tp[y * w + x];
                    if (t == T(0)) continue;
                    T* arow = out.data() + ((y * w + x) * d + j) * d;
                    const Dim i0 = std::max<Dim>(0, r - x);
                    const Dim i1 = std::min<Dim>(d, w - x + r);
                    const T* rrow = rp + yy * w + x - r;
                    for (Dim i = i0; i < i1; ++i) arow[i] += t * rrow[i];
                }
            }
    }
    auto ptn = tn.node();
    auto prn = rn.node();
    Tensor<T> values = make_op<T>(
        Shape{h, w, d, d}, std::move(out), {tn, rn}, [ptn, prn, c, h, w, d, r](typename Tensor<T>::Node& self) {
            const T* g = self.grad.data();
            const T* tv2 = ptn->value.data();
            const T* rv2 = prn->value.data();
            for (Dim ch = 0; ch < c; ++ch) {
                const T* tp = tv2 + ch * h * w;
                const T* rp = rv2 + ch * h * w;
                T* gt = ptn->requires_grad ? ptn->grad.data() + ch * h * w : nullptr;
                T* gr = prn->requires_grad ? prn->grad.data() + ch * h * w : nullptr;
                for (Dim y = 0; y < h; ++y)
                    for (Dim j = 0; j < d; ++j) {
                        const Dim yy = y + j - r;
                        if (yy < 0 || yy >= h) continue;
                        for (Dim x = 0; x < w; ++x) {
                            const T* grow = g + ((y * w + x) * d + j) * d;
                            const Dim i0 = std::max<Dim>(0, r - x);
                            const Dim i1 = std::min<Dim>(d, w - x + r);
                            if (gt) {
                                T acc = T(0);
                                const T* rrow = rp + yy * w + x - r;
                                for (Dim i = i0; i < i1; ++i) acc += grow[i] * rrow[i];
                                gt[y * w + x] += acc;
                            }
                            if (gr) {
                                const T t = tp[y * w + x];
                                T* rrow = gr + yy * w + x - r;
                                for (Dim i = i0; i < i1; ++i) rrow[i] += grow[i] * t;
                            }
                        }
                    }
            }
        });
    return {values, d};
}

// Test oracle: non-differentiable window argmax, ties broken toward the
// smallest row-major window index. Returns (x,y) offsets from window center.
template <typename T>
Tensor<T> hard_argmax_flow(const AffinityVolume<T>& a) {
    const Dim h = a.values.size(0), w = a.values.size(1), d = a.window;
    const Dim r = (d - 1) / 2;
    std::vector<T> out(static_cast<std::size_t>(h * w * 2));
    const T* av = a.values.data();
    for (Dim y = 0; y < h; ++y)
        for (Dim x = 0; x < w; ++x) {
            const T* win = av + (y * w + x) * d * d;
            Dim best = 0;
            for (Dim p = 1; p < d * d; ++p)
                if (win[p] > win[best]) best = p;
            out[(y * w + x) * 2 + 0] = static_cast<T>(best % d - r);
            out[(y * w + x) * 2 + 1] = static_cast<T>(best / d - r);
        }
    return Tensor<T>({h, w, 2}, std::move(out), false);
}

// Differentiable displacement: softmax-probability-weighted sum of window
// offsets, relative to the window center. `temperature` divides the affinity
// values before the softmax; 1 reproduces the raw formulation.
template <typename T>
Tensor<T> soft_argmax_flow(const AffinityVolume<T>& a, double temperature = 1.0) {
    if (!(temperature > 0)) throw ArgumentError("soft_argmax_flow: temperature must be positive");
    const Dim h = a.values.size(0), w = a.values.size(1), d = a.window;
    const Dim r = (d - 1) / 2;
    Tensor<T> flat = reshape(a.values, {h, w, d * d});
    if (temperature != 1.0) flat = flat * static_cast<T>(1.0 / temperature);
    Tensor<T> sm = softmax(flat, 2);

    std::vector<T> offx(static_cast<std::size_t>(h * w * d * d));
    std::vector<T> offy(offx.size());
    for (Dim y = 0; y < h; ++y)
        for (Dim x = 0; x < w; ++x)
            for (Dim p = 0; p < d * d; ++p) {
                offx[static_cast<std::size_t>(((y * w + x) * d * d) + p)] = static_cast<T>(p % d - r);
                offy[static_cast<std::size_t>(((y * w + x) * d * d) + p)] = static_cast<T>(p / d - r);
            }
    Tensor<T> ox(Shape{h, w, d * d}, std::move(offx), false);
    Tensor<T> oy(Shape{h, w, d * d}, std::move(offy), false);
    Tensor<T> fx = reshape(sum(mul(sm, ox), 2), {h, w, 1});
    Tensor<T> fy = reshape(sum(mul(sm, oy), 2), {h, w, 1});
    return concat<T>({fx, fy}, 2);
}

// Match confidence: (clamped-at-zero) maximum affinity times the maximum
// softmax probability of the window. In [0,1] for cosine affinities.
template <typename T>
Tensor<T> confidence(const AffinityVolume<T>& a) {
    const Dim h = a.values.size(0), w = a.values.size(1), d = a.window;
    Tensor<T> flat = reshape(a.values, {h, w, d * d});
    Tensor<T> magnitude = relu(max(flat, 2));
    Tensor<T> peak = max(softmax(flat, 2), 2);
    return reshape(mul(magnitude, peak), {h, w, 1});
}

// Composed estimator over one feature-pyramid stage.
template <typename T>
FlowField<T> estimate_flow(const Tensor<T>& target_feats, const Tensor<T>& reference_feats,
                           const FlowConfig& cfg = {}) {
    AffinityVolume<T> a = affinity_volume(target_feats, reference_feats, cfg.window);
    return {soft_argmax_flow(a, cfg.temperature), confidence(a)};
}

}  // namespace poseflow
