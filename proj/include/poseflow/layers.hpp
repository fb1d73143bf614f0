#pragma once

// Learnable layer primitives shared by the encoders, the positional
// aggregator and the injector, plus the named-parameter registry used by the
// optimizer and the checkpoint format.

#include <cmath>
#include <string>
#include <vector>

#include "poseflow/rng.hpp"
#include "poseflow/tensor.hpp"
#include "poseflow/tensor_nn.hpp"

namespace poseflow {

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* tensor;
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;

// FNV-1a over the value bytes of a parameter list; used to assert that
// frozen weights never move.
template <typename T>
std::uint64_t weight_hash(const ParamList<T>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params)
        for (T v : p.tensor->values()) {
            const auto* bytes = reinterpret_cast<const unsigned char*>(&v);
            for (std::size_t i = 0; i < sizeof(T); ++i) {
                h ^= bytes[i];
                h *= 1099511628211ULL;
            }
        }
    return h;
}

template <typename T>
struct Conv {
    Tensor<T> w;  // [co,ci,k,k]
    Tensor<T> b;  // [co]
    Dim stride = 1;
    Dim pad = 1;

    static Conv make(Rng& rng, Dim cin, Dim cout, Dim k, Dim stride, bool trainable) {
        const T std_dev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(cin * k * k)));
        Conv c;
        c.w = Tensor<T>::random_normal(rng, {cout, cin, k, k}, std_dev, trainable);
        c.b = Tensor<T>::zeros({cout}, trainable);
        c.stride = stride;
        c.pad = (k - 1) / 2;
        return c;
    }

    // Rows of the flattened kernel matrix orthonormalized (Gram-Schmidt) and
    // rescaled; used for the frozen translation-equivariant branch.
    static Conv make_orthogonal(Rng& rng, Dim cin, Dim cout, Dim k, Dim stride) {
        const Dim cols = cin * k * k;
        std::vector<std::vector<double>> rows(static_cast<std::size_t>(cout),
                                              std::vector<double>(static_cast<std::size_t>(cols)));
        for (auto& row : rows)
            for (auto& v : row) v = rng.normal();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t q = 0; q < r; ++q) {
                double d = 0;
                for (std::size_t j = 0; j < rows[r].size(); ++j) d += rows[r][j] * rows[q][j];
                for (std::size_t j = 0; j < rows[r].size(); ++j) rows[r][j] -= d * rows[q][j];
            }
            double n = 0;
            for (double v : rows[r]) n += v * v;
            n = std::sqrt(n);
            if (n < 1e-9) n = 1.0;  // rank shortfall: keep the raw direction
            const double gain = std::sqrt(2.0);
            for (auto& v : rows[r]) v = v / n * gain;
        }
        std::vector<T> wv(static_cast<std::size_t>(cout * cols));
        for (Dim r = 0; r < cout; ++r)
            for (Dim j = 0; j < cols; ++j)
                wv[static_cast<std::size_t>(r * cols + j)] =
                    static_cast<T>(rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)]);
        Conv c;
        c.w = Tensor<T>({cout, cin, k, k}, std::move(wv), false);
        c.b = Tensor<T>::zeros({cout}, false);
        c.stride = stride;
        c.pad = (k - 1) / 2;
        return c;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".w", &w});
        out.push_back({prefix + ".b", &b});
    }
};

template <typename T>
struct Linear {
    Tensor<T> w;  // [out,in]
    Tensor<T> b;  // [out,1]

    static Linear make(Rng& rng, Dim in, Dim out_dim, bool trainable, double stddev_scale = 1.0) {
        const T std_dev = static_cast<T>(stddev_scale * std::sqrt(2.0 / static_cast<double>(in)));
        Linear l;
        l.w = Tensor<T>::random_normal(rng, {out_dim, in}, std_dev, trainable);
        l.b = Tensor<T>::zeros({out_dim, 1}, trainable);
        return l;
    }

    // x: [in,1] -> [out,1]
    Tensor<T> operator()(const Tensor<T>& x) const { return add(matmul(w, x), b); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".w", &w});
        out.push_back({prefix + ".b", &b});
    }
};

}  // namespace poseflow
