#pragma once

// Feature extractors: the trainable semantic branch over the channel-wise
// concatenated frame pair, the frozen translation-equivariant branch applied
// to each frame separately with shared weights, and a small U-shaped
// DepthNet with sigmoid-to-depth decoding.

#include <string>
#include <utility>
#include <vector>

#include "poseflow/layers.hpp"
#include "poseflow/tensor.hpp"
#include "poseflow/tensor_nn.hpp"

namespace poseflow {

template <typename T>
using FeaturePyramid = std::vector<Tensor<T>>;  // stage i (1-based) at (H,W)/2^i

inline const std::vector<Dim>& default_channel_plan() {
    static const std::vector<Dim> plan{16, 32, 64, 128};
    return plan;
}

template <typename T>
struct Encoder {
    std::vector<Conv<T>> stages;  // stride-2 conv + ReLU per stage

    static Encoder make(Rng& rng, Dim in_channels, const std::vector<Dim>& channels, bool trainable) {
        Encoder e;
        Dim cin = in_channels;
        for (Dim cout : channels) {
            e.stages.push_back(trainable ? Conv<T>::make(rng, cin, cout, 3, 2, true)
                                         : Conv<T>::make_orthogonal(rng, cin, cout, 3, 2));
            cin = cout;
        }
        return e;
    }

    FeaturePyramid<T> forward(const Tensor<T>& x) const {
        FeaturePyramid<T> out;
        Tensor<T> cur = x;
        for (const auto& s : stages) {
            cur = relu(s(cur));
            out.push_back(cur);
        }
        return out;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (std::size_t i = 0; i < stages.size(); ++i)
            stages[i].collect(prefix + ".stage" + std::to_string(i + 1), out);
    }
};

// Trainable branch over the channel-wise concatenated pair (6 input channels).
template <typename T>
struct SemanticEncoder {
    Encoder<T> encoder;

    static SemanticEncoder make(Rng& rng, const std::vector<Dim>& channels) {
        return {Encoder<T>::make(rng, 6, channels, true)};
    }

    FeaturePyramid<T> forward(const Tensor<T>& reference, const Tensor<T>& target) const {
        if (reference.shape() != target.shape()) throw ShapeError("semantic branch: frame shape mismatch");
        return encoder.forward(concat<T>({reference, target}, 0));
    }

    void collect(const std::string& prefix, ParamList<T>& out) { encoder.collect(prefix, out); }
};

// Frozen branch: one 3-channel encoder applied to each frame independently,
// which realizes batch-wise concatenation followed by separation. Weights are
// fixed at seeded construction and never require gradients.
template <typename T>
struct EquivariantEncoder {
    Encoder<T> encoder;

    static EquivariantEncoder make(Rng& rng, const std::vector<Dim>& channels) {
        return {Encoder<T>::make(rng, 3, channels, false)};
    }

    std::pair<FeaturePyramid<T>, FeaturePyramid<T>> forward(const Tensor<T>& reference,
                                                            const Tensor<T>& target) const {
        if (reference.shape() != target.shape()) throw ShapeError("equivariant branch: frame shape mismatch");
        return {encoder.forward(reference), encoder.forward(target)};
    }

    FeaturePyramid<T> forward_single(const Tensor<T>& frame) const { return encoder.forward(frame); }

    void collect(const std::string& prefix, ParamList<T>& out) { encoder.collect(prefix, out); }
};

// Toy 4-down/4-up depth network with skip connections. The sigmoid output s
// decodes as depth = 1 / (s*(1/d_min - 1/d_max) + 1/d_max), so predictions
// always land in [d_min, d_max].
template <typename T>
struct DepthNet {
    std::vector<Conv<T>> enc;  // widths (16,32,64,128), stride 2
    std::vector<Conv<T>> dec;  // after bilinear upsample + skip concat
    Conv<T> head;              // -> 1 channel
    double d_min = 0.1;
    double d_max = 100.0;

    static DepthNet make(Rng& rng, const std::vector<Dim>& channels = default_channel_plan()) {
        DepthNet n;
        Dim cin = 3;
        for (Dim cout : channels) {
            n.enc.push_back(Conv<T>::make(rng, cin, cout, 3, 2, true));
            cin = cout;
        }
        const std::size_t k = channels.size();
        for (std::size_t i = 0; i + 1 < k; ++i) {
            const Dim skip = channels[k - 2 - i];
            const Dim up_in = (i == 0 ? channels[k - 1] : channels[k - 1 - i]);
            n.dec.push_back(Conv<T>::make(rng, up_in + skip, skip, 3, 1, true));
        }
        n.dec.push_back(Conv<T>::make(rng, channels[0], channels[0], 3, 1, true));
        n.head = Conv<T>::make(rng, channels[0], 1, 3, 1, true);
        return n;
    }

    // image: [3,H,W] -> depth map [H,W]
    Tensor<T> forward(const Tensor<T>& image) const {
        if (image.rank() != 3 || image.size(0) != 3) throw ShapeError("depthnet: expects [3,h,w] image");
        std::vector<Tensor<T>> skips;
        Tensor<T> cur = image;
        for (const auto& s : enc) {
            cur = relu(s(cur));
            skips.push_back(cur);
        }
        for (std::size_t i = 0; i + 1 < enc.size(); ++i) {
            Tensor<T> up = upsample_bilinear2(cur);
            cur = relu(dec[i](concat<T>({up, skips[enc.size() - 2 - i]}, 0)));
        }
        cur = relu(dec.back()(upsample_bilinear2(cur)));
        Tensor<T> sig = sigmoid(head(cur));  // [1,H,W]
        const T lo = static_cast<T>(1.0 / d_max);
        const T span = static_cast<T>(1.0 / d_min - 1.0 / d_max);
        Tensor<T> disp = sig * span + lo;
        Tensor<T> depth = div(Tensor<T>::full(disp.shape(), T(1)), disp);
        return reshape(depth, {image.size(1), image.size(2)});
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (std::size_t i = 0; i < enc.size(); ++i) enc[i].collect(prefix + ".enc" + std::to_string(i + 1), out);
        for (std::size_t i = 0; i < dec.size(); ++i) dec[i].collect(prefix + ".dec" + std::to_string(i + 1), out);
        head.collect(prefix + ".head", out);
    }
};

}  // namespace poseflow
