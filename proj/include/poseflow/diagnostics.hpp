#pragma once

// Runnable check suites shared by the CLI (`gradcheck`, `selftest`) and the
// test binaries. Every check is deterministic for a fixed seed.

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "poseflow/gradcheck.hpp"
#include "poseflow/rng.hpp"
#include "poseflow/tensor.hpp"
#include "poseflow/tensor_nn.hpp"

namespace poseflow {

struct CheckResult {
    std::string name;
    bool pass = false;
    double metric = 0.0;  // usually a max relative error
    std::string detail;
};

namespace detail {

// Scalarizes an arbitrary-output function through a fixed random projection so
// the gradient checker can drive it.
template <typename T>
std::function<Tensor<T>(const Tensor<T>&)> project_to_scalar(std::function<Tensor<T>(const Tensor<T>&)> op,
                                                             const Tensor<T>& probe_output, Rng& rng) {
    Tensor<T> proj = Tensor<T>::random_normal(rng, probe_output.shape());
    return [op = std::move(op), proj](const Tensor<T>& x) { return sum_all(mul(op(x), proj)); };
}

}  // namespace detail

// Runs `points` finite-difference trials of one op and reports the worst
// relative error. The op must map the generated input to any tensor.
template <typename T>
CheckResult check_op_gradient(const std::string& name, std::function<Tensor<T>(const Tensor<T>&)> op,
                              std::function<Tensor<T>(Rng&)> make_input, int points, Rng rng,
                              double tolerance = 1e-3, double epsilon = 1e-5) {
    CheckResult r;
    r.name = name;
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        Tensor<T> x = make_input(rng);
        Tensor<T> probe = op(x);
        auto f = detail::project_to_scalar<T>(op, probe, rng);
        const auto rep = gradient_check<T>(f, x, epsilon);
        worst = std::max(worst, rep.max_relative_error);
    }
    r.metric = worst;
    r.pass = worst < tolerance;
    std::ostringstream os;
    os << "max relative error " << worst << " over " << points << " points";
    r.detail = os.str();
    return r;
}

// Gradient suite over the differentiable tensor operations, 64-bit mode.
// Random inputs are kept away from kinks (|x| of relu/abs operands, bilinear
// cell boundaries) so the finite-difference reference is meaningful.
inline std::vector<CheckResult> tensor_op_gradient_suite(std::uint64_t seed, int points = 100) {
    using D = double;
    std::vector<CheckResult> out;
    Rng root(seed);

    auto gauss = [](Shape shape) {
        return [shape](Rng& rng) { return TensorD::random_normal(rng, shape); };
    };
    auto positive = [](Shape shape, double lo, double hi) {
        return [shape, lo, hi](Rng& rng) { return TensorD::random_uniform(rng, shape, lo, hi); };
    };
    // Keeps every coordinate at least 0.05 away from the listed kink points
    // so central differences stay on one side of each non-smooth locus.
    auto away_from = [](Shape shape, std::vector<double> kinks) {
        return [shape, kinks](Rng& rng) {
            auto t = TensorD::random_normal(rng, shape);
            std::vector<double> v = t.values();
            for (auto& x : v)
                for (double k : kinks)
                    if (std::fabs(x - k) < 0.05) x = x < k ? k - 0.05 : k + 0.05;
            return TensorD(shape, std::move(v));
        };
    };
    auto away_from_zero = [&](Shape shape) { return away_from(shape, {0.0}); };

    auto push = [&](const std::string& name, std::function<TensorD(const TensorD&)> op,
                    std::function<TensorD(Rng&)> make_input) {
        out.push_back(check_op_gradient<D>(name, std::move(op), std::move(make_input), points, root.fork(out.size())));
    };

    const Shape s234{2, 3, 4};
    push("add", [](const TensorD& x) { return add(x, x * 0.5); }, gauss(s234));
    push("sub", [](const TensorD& x) { return sub(x * 2.0, x); }, gauss(s234));
    push("mul", [](const TensorD& x) { return mul(x, x + 1.5); }, gauss(s234));
    push("div", [](const TensorD& x) { return div(TensorD::full({2, 3, 4}, 1.0), x); }, positive(s234, 0.5, 2.0));
    push("exp", [](const TensorD& x) { return exp(x); }, gauss(s234));
    push("log", [](const TensorD& x) { return log(x); }, positive(s234, 0.2, 3.0));
    push("sqrt", [](const TensorD& x) { return sqrt(x); }, positive(s234, 0.2, 3.0));
    push("relu", [](const TensorD& x) { return relu(x); }, away_from_zero(s234));
    push("sigmoid", [](const TensorD& x) { return sigmoid(x); }, gauss(s234));
    push("abs", [](const TensorD& x) { return abs(x); }, away_from_zero(s234));
    push("clamp", [](const TensorD& x) { return clamp(x, -1.0, 1.0); }, away_from(s234, {-1.0, 1.0}));
    push("minimum", [](const TensorD& x) { return minimum(x, x * x); }, away_from(s234, {0.0, 1.0}));
    push("maximum", [](const TensorD& x) { return maximum(x, neg(x)); }, away_from_zero(s234));
    push("softmax", [](const TensorD& x) { return softmax(x, 2); }, gauss(s234));
    push("sum_axis", [](const TensorD& x) { return sum(x, 1); }, gauss(s234));
    push("mean_axis", [](const TensorD& x) { return mean(x, 2); }, gauss(s234));
    push("max_axis", [](const TensorD& x) { return max(x, 2); }, gauss(s234));
    push("min_axis", [](const TensorD& x) { return min(x, 0); }, gauss(s234));
    push("sum_all", [](const TensorD& x) { return sum_all(mul(x, x)); }, gauss(s234));
    push("mean_all", [](const TensorD& x) { return mean_all(mul(x, x)); }, gauss(s234));
    push("reshape", [](const TensorD& x) { return reshape(x, {4, 6}); }, gauss(s234));
    push("permute", [](const TensorD& x) { return permute(x, {2, 0, 1}); }, gauss(s234));
    push("concat", [](const TensorD& x) { return concat<double>({x, x * 2.0}, 1); }, gauss(s234));
    push("slice", [](const TensorD& x) { return slice(x, 2, 1, 2); }, gauss(s234));
    push("diff", [](const TensorD& x) { return diff(x, 1); }, gauss(s234));

    {
        Rng wr(seed ^ 0x5eed);
        TensorD w = TensorD::random_normal(wr, {3, 5});
        push("matmul", [w](const TensorD& x) { return matmul(x, w); }, gauss({4, 3}));
        TensorD k = TensorD::random_normal(wr, {2, 3, 3, 3});
        TensorD b = TensorD::random_normal(wr, {2});
        push("conv2d", [k, b](const TensorD& x) { return conv2d(x, k, b, 1, 1); }, gauss({3, 5, 6}));
        push("conv2d_stride2", [k, b](const TensorD& x) { return conv2d(x, k, b, 2, 1); }, gauss({3, 6, 8}));
        TensorD xfix = TensorD::random_normal(wr, {2, 4, 4});
        push("conv2d_weights", [xfix](const TensorD& w2) { return conv2d(xfix, w2, 1, 1); }, gauss({3, 2, 3, 3}));
    }
    push("avg_pool2", [](const TensorD& x) { return avg_pool2(x); }, gauss({2, 4, 6}));
    push("box_filter3", [](const TensorD& x) { return box_filter3(x); }, gauss({2, 4, 5}));
    push("upsample_nearest2", [](const TensorD& x) { return upsample_nearest2(x); }, gauss({2, 3, 4}));
    push("upsample_bilinear2", [](const TensorD& x) { return upsample_bilinear2(x); }, gauss({2, 3, 4}));
    push("unfold", [](const TensorD& x) { return unfold(x, 3); }, gauss({2, 4, 5}));
    push("mul_spatial", [](const TensorD& x) { return mul_spatial(x, max(x, 0)); }, gauss({3, 4, 5}));
    push("minmax_normalize", [](const TensorD& x) { return minmax_normalize_channels(x); }, gauss({2, 3, 4}));

    {
        // Sample coordinates strictly inside cells so floor() is FD-stable.
        Rng ir(seed ^ 0xab1e);
        TensorD img = TensorD::random_normal(ir, {2, 6, 7});
        auto coords_in = [](Rng& rng) {
            Shape cs{3, 4, 2};
            std::vector<double> v(static_cast<std::size_t>(shape_numel(cs)));
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double cell = 1 + rng.below(4);
                v[i] = cell + rng.uniform(0.15, 0.85);
            }
            return TensorD(cs, std::move(v));
        };
        push("grid_sample_coords", [img](const TensorD& c) { return grid_sample(img, c).first; }, coords_in);
        TensorD cfix = coords_in(ir);
        push("grid_sample_image", [cfix](const TensorD& im) { return grid_sample(im, cfix).first; },
             gauss({2, 6, 7}));
    }
    return out;
}

}  // namespace poseflow
