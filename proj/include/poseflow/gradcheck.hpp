#pragma once

// Central finite-difference verification of reverse-mode gradients.

#include <cmath>
#include <functional>
#include <vector>

#include "poseflow/errors.hpp"
#include "poseflow/tensor.hpp"

namespace poseflow {

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::vector<double> per_parameter_errors;
};

// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences at `point`. Relative error per parameter is
// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
template <typename T>
GradCheckReport gradient_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& point,
                               double epsilon) {
    if (!(epsilon > 0.0) || epsilon > 1e-2)
        throw ArgumentError("gradient_check: epsilon must lie in (0, 1e-2]");

    Tensor<T> x = point.as_leaf();
    Tensor<T> y = f(x);
    if (y.numel() != 1)
        throw ContractError("gradient_check: function must be scalar-valued, got " + shape_str(y.shape()));
    backward(y);
    const std::vector<T> g_ad = x.grad();

    const std::size_t n = static_cast<std::size_t>(point.numel());
    GradCheckReport report;
    report.per_parameter_errors.resize(n);
    std::vector<T> base = point.values();
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<T> lo = base, hi = base;
        hi[i] += static_cast<T>(epsilon);
        lo[i] -= static_cast<T>(epsilon);
        const double fp = static_cast<double>(f(Tensor<T>(point.shape(), std::move(hi), false)).item());
        const double fm = static_cast<double>(f(Tensor<T>(point.shape(), std::move(lo), false)).item());
        const double g_fd = (fp - fm) / (2.0 * epsilon);
        const double ga = static_cast<double>(g_ad[i]);
        const double denom = std::max({std::fabs(ga), std::fabs(g_fd), 1e-8});
        const double err = std::fabs(ga - g_fd) / denom;
        report.per_parameter_errors[i] = err;
        report.max_relative_error = std::max(report.max_relative_error, err);
    }
    return report;
}

}  // namespace poseflow
