#pragma once
#include <type_traits>

// Hierarchical positional embedding injection. Per stage, the channel-reduced
// positional embedding and the semantic features are mixed by a learnable
// scalar gate g = sigmoid(logit), added to the accumulated state from the
// previous stage, and (except at the last stage) pushed through a
// conv/ReLU/downsample block toward the next stage's shape:
//
//   F_i = f_i(g_i fc(F^p_i) + (1-g_i) F^s_i + F_{i-1})   for 1 <= i < k
//   F_k =      g_k fc(F^p_k) + (1-g_k) F^s_k + F_{k-1}
//
// F_0 is all-zero with the shape of F^s_1. F_k feeds the pose MLP.

#include <string>
#include <utility>
#include <vector>

#include "poseflow/camera.hpp"
#include "poseflow/feature_flow.hpp"
#include "poseflow/layers.hpp"
#include "poseflow/networks.hpp"
#include "poseflow/positional.hpp"
#include "poseflow/tensor.hpp"
#include "poseflow/tensor_nn.hpp"

namespace poseflow {

template <typename T>
struct GateParameter {
    Tensor<T> logit;  // rank-0 leaf
    bool forced = false;
    T forced_gamma = T(0);

    static GateParameter learnable(T initial_logit = T(0)) {
        GateParameter g;
        g.logit = Tensor<T>::scalar(initial_logit, true);
        return g;
    }

    // Pins gamma to an exact constant (0 and 1 included); test/ablation use.
    static GateParameter forced_to(T gamma) {
        GateParameter g;
        g.logit = Tensor<T>::scalar(T(0), false);
        g.forced = true;
        g.forced_gamma = gamma;
        return g;
    }

    Tensor<T> gamma() const { return forced ? Tensor<T>::scalar(forced_gamma) : sigmoid(logit); }

    void collect(const std::string& prefix, ParamList<T>& out) { out.push_back({prefix + ".logit", &logit}); }
};

template <typename T>
struct StageState {
    Tensor<T> fused;
    int index = 0;  // number of injected stages so far
};

// f_c: 1x1 channel reduction from embedding width to semantic width.
template <typename T>
struct ChannelReducer {
    Conv<T> conv;

    static ChannelReducer make(Rng& rng, Dim e, Dim c, bool trainable) {
        return {Conv<T>::make(rng, e, c, 1, 1, trainable)};
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return conv(x); }

    void collect(const std::string& prefix, ParamList<T>& out) { conv.collect(prefix, out); }
};

// f_i: 3x3 conv -> ReLU -> 2x2 average-pool, mapping stage i channels and
// resolution to stage i+1.
template <typename T>
struct StageFuser {
    Conv<T> conv;

    static StageFuser make(Rng& rng, Dim c_in, Dim c_out, bool trainable) {
        return {Conv<T>::make(rng, c_in, c_out, 3, 1, trainable)};
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return avg_pool2(relu(conv(x))); }

    void collect(const std::string& prefix, ParamList<T>& out) { conv.collect(prefix, out); }
};

// The gated mix itself; exposed separately so its limit behavior is testable.
template <typename T>
Tensor<T> gated_sum(const Tensor<T>& gamma, const Tensor<T>& reduced_positional, const Tensor<T>& semantic,
                    const Tensor<T>& previous) {
    Tensor<T> one_minus = T(1) - gamma;
    return add(add(mul(reduced_positional, gamma), mul(semantic, one_minus)), previous);
}

// One stage of the recursion. `fuser` must be non-null exactly when i < k.
template <typename T>
StageState<T> inject_stage(const StageState<T>& previous, const Tensor<T>& semantic,
                           const PositionalEmbedding<T>& positional, const GateParameter<T>& gate,
                           const ChannelReducer<T>& reducer,
                           const StageFuser<std::type_identity_t<T>>* fuser, int i, int k) {
    if (i < 1 || i > k) throw ArgumentError("inject_stage: stage index out of range");
    if ((fuser == nullptr) != (i == k)) throw ArgumentError("inject_stage: fuser required exactly for i < k");
    Tensor<T> reduced = reducer(positional.values);
    for (Dim ax = 0; ax < 3; ++ax) {
        if (reduced.size(ax) != semantic.size(ax))
            throw ShapeError("inject_stage: reduced positional embedding mismatches semantic at axis " +
                             std::to_string(ax));
        if (previous.fused.size(ax) != semantic.size(ax))
            throw ShapeError("inject_stage: carried state mismatches semantic at axis " + std::to_string(ax));
    }
    Tensor<T> mix = gated_sum(gate.gamma(), reduced, semantic, previous.fused);
    return {i < k ? (*fuser)(mix) : mix, i};
}

// Global average pool + two-hidden-layer MLP to the 6-vector, scaled by 0.01
// to encode the small-motion prior between consecutive frames.
template <typename T>
struct PoseHead {
    Linear<T> l1, l2, l3;

    static PoseHead make(Rng& rng, Dim c, Dim hidden1 = 64, Dim hidden2 = 32) {
        return {Linear<T>::make(rng, c, hidden1, true), Linear<T>::make(rng, hidden1, hidden2, true),
                Linear<T>::make(rng, hidden2, 6, true, 0.1)};
    }

    Tensor<T> operator()(const Tensor<T>& features) const {
        Tensor<T> pooled = mean(mean(features, 2), 1);  // [c]
        Tensor<T> x = reshape(pooled, {pooled.size(0), 1});
        Tensor<T> h1 = relu(l1(x));
        Tensor<T> h2 = relu(l2(h1));
        return reshape(l3(h2), {6}) * static_cast<T>(0.01);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        l1.collect(prefix + ".l1", out);
        l2.collect(prefix + ".l2", out);
        l3.collect(prefix + ".l3", out);
    }
};

template <typename T>
Tensor<T> decode_pose(const StageState<T>& final_state, const PoseHead<T>& head) {
    return head(final_state.fused);
}

// The full pose network: two encoder branches, per-stage flow estimation and
// positional aggregation, gated hierarchical injection, MLP decoding.
template <typename T>
struct PoseEstimator {
    SemanticEncoder<T> semantic;
    EquivariantEncoder<T> equivariant;
    std::vector<PositionalWeights<T>> positional;  // one per stage
    std::vector<ChannelReducer<T>> reducers;       // one per stage
    std::vector<StageFuser<T>> fusers;             // stages 1..k-1
    std::vector<GateParameter<T>> gates;           // one per stage
    PoseHead<T> head;
    FlowConfig flow_cfg;

    static PoseEstimator make(Rng& rng, const std::vector<Dim>& channels = default_channel_plan(),
                              const FlowConfig& flow_cfg = {}) {
        PoseEstimator p;
        p.flow_cfg = flow_cfg;
        p.semantic = SemanticEncoder<T>::make(rng, channels);
        p.equivariant = EquivariantEncoder<T>::make(rng, channels);
        const std::size_t k = channels.size();
        for (std::size_t i = 0; i < k; ++i) {
            p.positional.push_back(PositionalWeights<T>::make(rng, channels[i], true));
            p.reducers.push_back(ChannelReducer<T>::make(rng, channels[i], channels[i], true));
            if (i + 1 < k) p.fusers.push_back(StageFuser<T>::make(rng, channels[i], channels[i + 1], true));
            p.gates.push_back(GateParameter<T>::learnable());
        }
        p.head = PoseHead<T>::make(rng, channels.back());
        return p;
    }

    int stage_count() const { return static_cast<int>(gates.size()); }

    // reference/target: [3,H,W] in [0,1]; target_depth: [H,W] full resolution.
    // Returns the relative pose 6-vector mapping target-frame points into the
    // reference frame.
    Tensor<T> forward(const Tensor<T>& reference, const Tensor<T>& target, const Tensor<T>& target_depth,
                      const CameraIntrinsics& k_full) const {
        const int k = stage_count();
        FeaturePyramid<T> sem = semantic.forward(reference, target);
        auto [ref_pyr, tgt_pyr] = equivariant.forward(reference, target);

        StageState<T> state{Tensor<T>::zeros(sem[0].shape()), 0};
        Tensor<T> depth_i = target_depth;
        for (int i = 0; i < k; ++i) {
            depth_i = avg_pool2(depth_i);  // stage i+1 resolution
            const Dim h = sem[static_cast<std::size_t>(i)].size(1);
            const Dim w = sem[static_cast<std::size_t>(i)].size(2);
            FlowField<T> field = estimate_flow(tgt_pyr[static_cast<std::size_t>(i)],
                                               ref_pyr[static_cast<std::size_t>(i)], flow_cfg);
            PointCloud<T> cloud{backproject(depth_i, k_full.scaled_down(i + 1))};
            PositionalEmbedding<T> emb =
                aggregate(field, meshgrid<T>(h, w), cloud, positional[static_cast<std::size_t>(i)]);
            state = inject_stage(state, sem[static_cast<std::size_t>(i)], emb, gates[static_cast<std::size_t>(i)],
                                 reducers[static_cast<std::size_t>(i)],
                                 i + 1 < k ? &fusers[static_cast<std::size_t>(i)] : nullptr, i + 1, k);
        }
        return decode_pose(state, head);
    }

    // Trainable parameters only; the equivariant branch stays out by contract.
    void collect_trainable(ParamList<T>& out) {
        semantic.collect("semantic", out);
        for (std::size_t i = 0; i < positional.size(); ++i)
            positional[i].collect("positional.stage" + std::to_string(i + 1), out);
        for (std::size_t i = 0; i < reducers.size(); ++i)
            reducers[i].collect("reduce.stage" + std::to_string(i + 1), out);
        for (std::size_t i = 0; i < fusers.size(); ++i)
            fusers[i].collect("fuse.stage" + std::to_string(i + 1), out);
        for (std::size_t i = 0; i < gates.size(); ++i) gates[i].collect("gate.stage" + std::to_string(i + 1), out);
        head.collect("pose_head", out);
    }

    void collect_frozen(ParamList<T>& out) { equivariant.collect("equivariant", out); }
};

}  // namespace poseflow
