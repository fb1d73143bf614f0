#pragma once

// Positional clue aggregation: feature flow, absolute grid positions and the
// back-projected point cloud are min-max normalized, embedded by small conv
// stacks and fused into one positional embedding per pyramid stage. The
// embedding weights for flow and absolute positions are shared; the
// confidence map gates those two terms but not the point-cloud term.

#include <string>

#include "poseflow/camera.hpp"
#include "poseflow/feature_flow.hpp"
#include "poseflow/layers.hpp"
#include "poseflow/tensor.hpp"
#include "poseflow/tensor_nn.hpp"

namespace poseflow {

template <typename T>
struct PositionalEmbedding {
    Tensor<T> values;  // [e,h,w]
};

// f(x, theta): two 3x3 convolutions with a ReLU between, lifting a 2- or
// 3-channel position map to the embedding width.
template <typename T>
struct ClueEmbedder {
    Conv<T> first;
    Conv<T> second;

    static ClueEmbedder make(Rng& rng, Dim cin, Dim mid, Dim e, bool trainable) {
        return {Conv<T>::make(rng, cin, mid, 3, 1, trainable), Conv<T>::make(rng, mid, e, 3, 1, trainable)};
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return second(relu(first(x))); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        first.collect(prefix + ".conv1", out);
        second.collect(prefix + ".conv2", out);
    }
};

template <typename T>
struct PositionalWeights {
    ClueEmbedder<T> planar;  // shared by feature flow and absolute positions
    ClueEmbedder<T> cloud;

    static PositionalWeights make(Rng& rng, Dim e, bool trainable, Dim mid = 8) {
        return {ClueEmbedder<T>::make(rng, 2, mid, e, trainable), ClueEmbedder<T>::make(rng, 3, mid, e, trainable)};
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        planar.collect(prefix + ".planar", out);
        cloud.collect(prefix + ".cloud", out);
    }
};

// Per-channel linear map onto [0,1]; constant channels go to zero.
template <typename T>
Tensor<T> normalize_unit_range(const Tensor<T>& x) {
    return minmax_normalize_channels(x);
}

// F^p = C (f(S_r, Ts) + f(S_a, Ts)) + f(P, Tp), channel-first throughout.
template <typename T>
PositionalEmbedding<T> aggregate(const FlowField<T>& flow, const Tensor<T>& abs_positions,
                                 const PointCloud<T>& cloud, const PositionalWeights<T>& weights) {
    if (abs_positions.rank() != 3 || abs_positions.size(2) != 2)
        throw ShapeError("aggregate: absolute positions must be [h,w,2]");
    if (cloud.points.rank() != 3 || cloud.points.size(2) != 3)
        throw ShapeError("aggregate: point cloud must be [h,w,3]");
    const Dim h = flow.flow.size(0), w = flow.flow.size(1);
    if (abs_positions.size(0) != h || abs_positions.size(1) != w || cloud.points.size(0) != h ||
        cloud.points.size(1) != w)
        throw ShapeError("aggregate: spatial shape mismatch between positional clues");

    Tensor<T> s_rel = normalize_unit_range(permute(flow.flow, {2, 0, 1}));
    Tensor<T> s_abs = normalize_unit_range(permute(abs_positions, {2, 0, 1}));
    Tensor<T> p_cloud = normalize_unit_range(permute(cloud.points, {2, 0, 1}));
    Tensor<T> conf = reshape(flow.confidence, {h, w});

    Tensor<T> planar = add(weights.planar(s_rel), weights.planar(s_abs));
    return {add(mul_spatial(planar, conf), weights.cloud(p_cloud))};
}

}  // namespace poseflow
