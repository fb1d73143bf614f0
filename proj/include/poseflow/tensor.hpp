#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
// The scalar type is a template parameter: float is the deployment precision,
// double backs the finite-difference verification mode. Values are immutable
// after construction; a backward pass populates gradient buffers on every
// participating tensor that requires gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "poseflow/errors.hpp"
#include "poseflow/rng.hpp"

namespace poseflow {

using Dim = std::int64_t;
using Shape = std::vector<Dim>;

inline Dim shape_numel(const Shape& s) {
    Dim n = 1;
    for (Dim d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

template <typename T>
class Tensor {
   public:
    struct Node {
        Shape shape;
        std::vector<T> value;
        std::vector<T> grad;  // sized lazily by the backward driver
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backprop;
    };
    using NodePtr = std::shared_ptr<Node>;

    Tensor() = default;  // null handle; must be assigned before use

    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<Dim>(values.size()))
            throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
        for (Dim d : shape)
            if (d <= 0) throw ShapeError("tensor: non-positive extent in shape " + shape_str(shape));
        node_ = std::make_shared<Node>();
        node_->shape = std::move(shape);
        node_->value = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const Dim n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), T(0)), requires_grad);
    }

    static Tensor full(Shape shape, T fill, bool requires_grad = false) {
        const Dim n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), fill), requires_grad);
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return Tensor(Shape{}, std::vector<T>{v}, requires_grad);
    }

    static Tensor random_normal(Rng& rng, Shape shape, T stddev = T(1), bool requires_grad = false) {
        const Dim n = shape_numel(shape);
        std::vector<T> v(static_cast<std::size_t>(n));
        for (auto& x : v) x = static_cast<T>(rng.normal()) * stddev;
        return Tensor(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor random_uniform(Rng& rng, Shape shape, T lo, T hi, bool requires_grad = false) {
        const Dim n = shape_numel(shape);
        std::vector<T> v(static_cast<std::size_t>(n));
        for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
        return Tensor(std::move(shape), std::move(v), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    Dim rank() const { return static_cast<Dim>(node_->shape.size()); }
    Dim size(Dim axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
    Dim numel() const { return static_cast<Dim>(node_->value.size()); }
    bool requires_grad() const { return node_->requires_grad; }
    const std::vector<T>& values() const { return node_->value; }
    const T* data() const { return node_->value.data(); }

    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    const std::vector<T>& grad() const {
        if (!has_grad()) throw ContractError("tensor: gradient not populated; run backward first");
        return node_->grad;
    }

    T item() const {
        if (numel() != 1) throw ContractError("item: tensor has " + std::to_string(numel()) + " elements");
        return node_->value[0];
    }

    T at(std::initializer_list<Dim> idx) const {
        if (static_cast<Dim>(idx.size()) != rank())
            throw ArgumentError("at: index rank mismatch");
        Dim flat = 0;
        Dim axis = 0;
        for (Dim i : idx) {
            const Dim extent = node_->shape[static_cast<std::size_t>(axis)];
            if (i < 0 || i >= extent) throw ArgumentError("at: index out of range on axis " + std::to_string(axis));
            flat = flat * extent + i;
            ++axis;
        }
        return node_->value[static_cast<std::size_t>(flat)];
    }

    // Same values, no tape participation.
    Tensor detached() const { return Tensor(node_->shape, node_->value, false); }

    // Leaf copy that requires gradients; used to promote inputs in checks.
    Tensor as_leaf() const { return Tensor(node_->shape, node_->value, true); }

    const NodePtr& node() const { return node_; }

   private:
    NodePtr node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value, std::vector<Tensor<T>> parents,
                  std::function<void(typename Tensor<T>::Node&)> backprop) {
    Tensor<T> out(std::move(shape), std::move(value), false);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    if (rg) {
        auto& n = *out.node();
        n.requires_grad = true;
        n.parents.reserve(parents.size());
        for (const auto& p : parents) n.parents.push_back(p.node());
        n.backprop = std::move(backprop);
    }
    return out;
}

// Reverse pass from a scalar root. Gradients of every tensor that requires
// them and participated in the graph are (re)computed; previous contents of
// the buffers are discarded. Single-threaded by contract: one tape at a time.
template <typename T>
void backward(const Tensor<T>& root) {
    using Node = typename Tensor<T>::Node;
    if (root.numel() != 1) throw ContractError("backward: root must be scalar, got " + shape_str(root.shape()));
    Node* top = root.node().get();
    if (!top->requires_grad) {
        throw ContractError("backward: root does not depend on any tensor with requires_grad");
    }
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({top, 0});
    visited.insert(top);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.n->parents.size()) {
            Node* p = f.n->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->grad.assign(n->value.size(), T(0));
    top->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop(**it);
    }
}

// ---------------------------------------------------------------------------
// elementwise maps
// ---------------------------------------------------------------------------

namespace detail {

// Shapes must match exactly; the one permitted broadcast is a single-element
// tensor against anything (fail-loudly policy for everything else).
template <typename T>
void check_binary_shapes(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.numel() == 1 || b.numel() == 1) return;
    if (a.rank() != b.rank())
        throw ShapeError(std::string(op) + ": rank mismatch (" + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()) + ")");
    for (Dim ax = 0; ax < a.rank(); ++ax)
        if (a.size(ax) != b.size(ax))
            throw ShapeError(std::string(op) + ": shape mismatch at axis " + std::to_string(ax) + " (" +
                             std::to_string(a.size(ax)) + " vs " + std::to_string(b.size(ax)) + ")");
}

// f(x, y) -> out; dfa/dfb give d out / d x and d out / d y as functions of
// (x, y, out). Scalar operands receive summed gradient contributions.
template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary_map(const char* op, const Tensor<T>& a, const Tensor<T>& b, F f, DA dfa, DB dfb) {
    check_binary_shapes(op, a, b);
    const bool a_scalar = a.numel() == 1 && b.numel() > 1;
    const bool b_scalar = b.numel() == 1 && a.numel() > 1;
    const Tensor<T>& lead = a_scalar ? b : a;
    const std::size_t n = static_cast<std::size_t>(lead.numel());
    const T* av = a.data();
    const T* bv = b.data();
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
    auto pa = a.node();
    auto pb = b.node();
    return make_op<T>(lead.shape(), std::move(out), {a, b},
                      [pa, pb, a_scalar, b_scalar, dfa, dfb](typename Tensor<T>::Node& self) {
                          const std::size_t m = self.value.size();
                          const T* g = self.grad.data();
                          const T* x = pa->value.data();
                          const T* y = pb->value.data();
                          const T* o = self.value.data();
                          if (pa->requires_grad) {
                              T* ga = pa->grad.data();
                              for (std::size_t i = 0; i < m; ++i)
                                  ga[a_scalar ? 0 : i] += g[i] * dfa(x[a_scalar ? 0 : i], y[b_scalar ? 0 : i], o[i]);
                          }
                          if (pb->requires_grad) {
                              T* gb = pb->grad.data();
                              for (std::size_t i = 0; i < m; ++i)
                                  gb[b_scalar ? 0 : i] += g[i] * dfb(x[a_scalar ? 0 : i], y[b_scalar ? 0 : i], o[i]);
                          }
                      });
}

template <typename T, typename F, typename DF>
Tensor<T> unary_map(const Tensor<T>& a, F f, DF df) {
    const std::size_t n = static_cast<std::size_t>(a.numel());
    const T* av = a.data();
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i]);
    auto pa = a.node();
    return make_op<T>(a.shape(), std::move(out), {a}, [pa, df](typename Tensor<T>::Node& self) {
        if (!pa->requires_grad) return;
        const std::size_t m = self.value.size();
        const T* g = self.grad.data();
        const T* x = pa->value.data();
        const T* o = self.value.data();
        T* ga = pa->grad.data();
        for (std::size_t i = 0; i < m; ++i) ga[i] += g[i] * df(x[i], o[i]);
    });
}

struct AxisSplit {
    std::size_t outer, n, inner;
};

template <typename T>
AxisSplit axis_split(const Tensor<T>& t, Dim axis, const char* op) {
    if (axis < 0 || axis >= t.rank())
        throw ArgumentError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                            shape_str(t.shape()));
    AxisSplit s{1, 1, 1};
    for (Dim i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(t.size(i));
    s.n = static_cast<std::size_t>(t.size(axis));
    for (Dim i = axis + 1; i < t.rank(); ++i) s.inner *= static_cast<std::size_t>(t.size(i));
    return s;
}

inline Shape drop_axis(const Shape& s, Dim axis) {
    Shape out;
    for (Dim i = 0; i < static_cast<Dim>(s.size()); ++i)
        if (i != axis) out.push_back(s[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_map(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); },
        [](T, T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_map(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); },
        [](T, T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_map(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
        [](T x, T, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    const T* bv = b.data();
    const std::size_t nb = static_cast<std::size_t>(b.numel());
    for (std::size_t i = 0; i < nb; ++i)
        if (bv[i] == T(0)) throw DomainError("div: zero divisor at flat index " + std::to_string(i));
    return detail::binary_map(
        "div", a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
        [](T, T y, T o) { return -o / y; });
}

// Elementwise minimum/maximum; ties route the gradient to the first operand.
template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_map(
        "minimum", a, b, [](T x, T y) { return x <= y ? x : y; },
        [](T x, T y, T) { return x <= y ? T(1) : T(0); }, [](T x, T y, T) { return x <= y ? T(0) : T(1); });
}

template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_map(
        "maximum", a, b, [](T x, T y) { return x >= y ? x : y; },
        [](T x, T y, T) { return x >= y ? T(1) : T(0); }, [](T x, T y, T) { return x >= y ? T(0) : T(1); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return detail::unary_map(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    return detail::unary_map(a, [](T x) { return std::exp(x); }, [](T, T o) { return o; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    const T* av = a.data();
    const std::size_t n = static_cast<std::size_t>(a.numel());
    for (std::size_t i = 0; i < n; ++i)
        if (av[i] <= T(0)) throw DomainError("log: non-positive operand at flat index " + std::to_string(i));
    return detail::unary_map(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
    const T* av = a.data();
    const std::size_t n = static_cast<std::size_t>(a.numel());
    for (std::size_t i = 0; i < n; ++i)
        if (av[i] < T(0)) throw DomainError("sqrt: negative operand at flat index " + std::to_string(i));
    return detail::unary_map(a, [](T x) { return std::sqrt(x); },
                             [](T, T o) { return o > T(0) ? T(1) / (T(2) * o) : T(0); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return detail::unary_map(a, [](T x) { return x > T(0) ? x : T(0); },
                             [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return detail::unary_map(
        a,
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T o) { return o * (T(1) - o); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    return detail::unary_map(a, [](T x) { return x < T(0) ? -x : x; },
                             [](T x, T) { return x < T(0) ? T(-1) : T(1); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
    return detail::unary_map(a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
                             [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
    return mul(a, b);
}
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) {
    return div(a, b);
}
template <typename T>
Tensor<T> operator+(const Tensor<T>& a, T c) {
    return add(a, Tensor<T>::scalar(c));
}
template <typename T>
Tensor<T> operator+(T c, const Tensor<T>& a) {
    return add(Tensor<T>::scalar(c), a);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, T c) {
    return sub(a, Tensor<T>::scalar(c));
}
template <typename T>
Tensor<T> operator-(T c, const Tensor<T>& a) {
    return sub(Tensor<T>::scalar(c), a);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T c) {
    return mul(a, Tensor<T>::scalar(c));
}
template <typename T>
Tensor<T> operator*(T c, const Tensor<T>& a) {
    return mul(Tensor<T>::scalar(c), a);
}
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, T c) {
    return div(a, Tensor<T>::scalar(c));
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a) {
    return neg(a);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a, Dim axis) {
    const auto s = detail::axis_split(a, axis, "sum");
    std::vector<T> out(s.outer * s.inner, T(0));
    const T* av = a.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.n; ++k) {
            const T* src = av + (o * s.n + k) * s.inner;
            T* dst = out.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
    auto pa = a.node();
    return make_op<T>(detail::drop_axis(a.shape(), axis), std::move(out), {a},
                      [pa, s](typename Tensor<T>::Node& self) {
                          if (!pa->requires_grad) return;
                          const T* g = self.grad.data();
                          T* ga = pa->grad.data();
                          for (std::size_t o = 0; o < s.outer; ++o)
                              for (std::size_t k = 0; k < s.n; ++k) {
                                  T* dst = ga + (o * s.n + k) * s.inner;
                                  const T* src = g + o * s.inner;
                                  for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
                              }
                      });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, Dim axis) {
    const T inv = T(1) / static_cast<T>(a.size(axis));
    return sum(a, axis) * inv;
}

namespace detail {

template <typename T, bool kMax>
Tensor<T> extremum(const Tensor<T>& a, Dim axis, const char* op) {
    const auto s = axis_split(a, axis, op);
    std::vector<T> out(s.outer * s.inner);
    auto winner = std::make_shared<std::vector<std::size_t>>(s.outer * s.inner);
    const T* av = a.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            T best = av[(o * s.n) * s.inner + i];
            std::size_t best_k = 0;
            for (std::size_t k = 1; k < s.n; ++k) {
                const T v = av[(o * s.n + k) * s.inner + i];
                if (kMax ? (v > best) : (v < best)) {
                    best = v;
                    best_k = k;
                }
            }
            out[o * s.inner + i] = best;
            (*winner)[o * s.inner + i] = best_k;
        }
    auto pa = a.node();
    return make_op<T>(drop_axis(a.shape(), axis), std::move(out), {a},
                      [pa, s, winner](typename Tensor<T>::Node& self) {
                          if (!pa->requires_grad) return;
                          const T* g = self.grad.data();
                          T* ga = pa->grad.data();
                          for (std::size_t o = 0; o < s.outer; ++o)
                              for (std::size_t i = 0; i < s.inner; ++i) {
                                  const std::size_t k = (*winner)[o * s.inner + i];
                                  ga[(o * s.n + k) * s.inner + i] += g[o * s.inner + i];
                              }
                      });
}

}  // namespace detail

// Extremum reductions route gradient to the winning element (first on ties).
template <typename T>
Tensor<T> max(const Tensor<T>& a, Dim axis) {
    return detail::extremum<T, true>(a, axis, "max");
}

template <typename T>
Tensor<T> min(const Tensor<T>& a, Dim axis) {
    return detail::extremum<T, false>(a, axis, "min");
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    const T* av = a.data();
    const std::size_t n = static_cast<std::size_t>(a.numel());
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += av[i];
    auto pa = a.node();
    return make_op<T>(Shape{}, std::vector<T>{acc}, {a}, [pa](typename Tensor<T>::Node& self) {
        if (!pa->requires_grad) return;
        const T g = self.grad[0];
        for (auto& x : pa->grad) x += g;
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    return sum_all(a) * (T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, Dim axis) {
    const auto s = detail::axis_split(a, axis, "softmax");
    std::vector<T> out(static_cast<std::size_t>(a.numel()));
    const T* av = a.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            T m = av[(o * s.n) * s.inner + i];
            for (std::size_t k = 1; k < s.n; ++k) m = std::max(m, av[(o * s.n + k) * s.inner + i]);
            T denom = T(0);
            for (std::size_t k = 0; k < s.n; ++k) {
                const T e = std::exp(av[(o * s.n + k) * s.inner + i] - m);
                out[(o * s.n + k) * s.inner + i] = e;
                denom += e;
            }
            const T inv = T(1) / denom;
            for (std::size_t k = 0; k < s.n; ++k) out[(o * s.n + k) * s.inner + i] *= inv;
        }
    auto pa = a.node();
    return make_op<T>(a.shape(), std::move(out), {a}, [pa, s](typename Tensor<T>::Node& self) {
        if (!pa->requires_grad) return;
        const T* g = self.grad.data();
        const T* y = self.value.data();
        T* ga = pa->grad.data();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                T dot = T(0);
                for (std::size_t k = 0; k < s.n; ++k) {
                    const std::size_t idx = (o * s.n + k) * s.inner + i;
                    dot += g[idx] * y[idx];
                }
                for (std::size_t k = 0; k < s.n; ++k) {
                    const std::size_t idx = (o * s.n + k) * s.inner + i;
                    ga[idx] += y[idx] * (g[idx] - dot);
                }
            }
    });
}

// ---------------------------------------------------------------------------
// shape manipulation
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(new_shape));
    auto pa = a.node();
    return make_op<T>(std::move(new_shape), std::vector<T>(a.values()), {a},
                      [pa](typename Tensor<T>::Node& self) {
                          if (!pa->requires_grad) return;
                          const std::size_t n = self.value.size();
                          for (std::size_t i = 0; i < n; ++i) pa->grad[i] += self.grad[i];
                      });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<Dim>& order) {
    const Dim r = a.rank();
    if (static_cast<Dim>(order.size()) != r) throw ArgumentError("permute: order rank mismatch");
    std::vector<bool> seen(static_cast<std::size_t>(r), false);
    for (Dim ax : order) {
        if (ax < 0 || ax >= r || seen[static_cast<std::size_t>(ax)])
            throw ArgumentError("permute: invalid axis order");
        seen[static_cast<std::size_t>(ax)] = true;
    }
    Shape out_shape(static_cast<std::size_t>(r));
    for (Dim i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = a.size(order[static_cast<std::size_t>(i)]);

    std::vector<std::size_t> in_strides(static_cast<std::size_t>(r), 1);
    for (Dim i = r - 2; i >= 0; --i)
        in_strides[static_cast<std::size_t>(i)] =
            in_strides[static_cast<std::size_t>(i + 1)] * static_cast<std::size_t>(a.size(i + 1));
    // stride of output axis i in the input layout
    auto mapping = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(a.numel()));
    std::vector<std::size_t> strides(static_cast<std::size_t>(r));
    for (Dim i = 0; i < r; ++i)
        strides[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];

    std::vector<T> out(static_cast<std::size_t>(a.numel()));
    const T* av = a.data();
    std::vector<Dim> idx(static_cast<std::size_t>(r), 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < out.size(); ++flat) {
        out[flat] = av[src];
        (*mapping)[flat] = src;
        for (Dim ax = r - 1; ax >= 0; --ax) {
            auto uax = static_cast<std::size_t>(ax);
            if (++idx[uax] < out_shape[uax]) {
                src += strides[uax];
                break;
            }
            src -= strides[uax] * static_cast<std::size_t>(out_shape[uax] - 1);
            idx[uax] = 0;
        }
    }
    auto pa = a.node();
    return make_op<T>(std::move(out_shape), std::move(out), {a},
                      [pa, mapping](typename Tensor<T>::Node& self) {
                          if (!pa->requires_grad) return;
                          const std::size_t n = self.value.size();
                          for (std::size_t i = 0; i < n; ++i) pa->grad[(*mapping)[i]] += self.grad[i];
                      });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, Dim axis) {
    if (parts.empty()) throw ArgumentError("concat: no operands");
    const Tensor<T>& first = parts.front();
    for (const auto& p : parts) {
        if (p.rank() != first.rank()) throw ShapeError("concat: rank mismatch");
        for (Dim ax = 0; ax < first.rank(); ++ax)
            if (ax != axis && p.size(ax) != first.size(ax))
                throw ShapeError("concat: shape mismatch at axis " + std::to_string(ax));
    }
    auto s = detail::axis_split(first, axis, "concat");
    Dim total = 0;
    for (const auto& p : parts) total += p.size(axis);
    Shape out_shape = first.shape();
    out_shape[static_cast<std::size_t>(axis)] = total;

    std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
    std::size_t off = 0;
    const std::size_t tot_n = static_cast<std::size_t>(total);
    for (const auto& p : parts) {
        const std::size_t pn = static_cast<std::size_t>(p.size(axis));
        const T* pv = p.data();
        for (std::size_t o = 0; o < s.outer; ++o)
            std::copy(pv + o * pn * s.inner, pv + (o + 1) * pn * s.inner,
                      out.data() + (o * tot_n + off) * s.inner);
        off += pn;
    }
    std::vector<typename Tensor<T>::NodePtr> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    auto splits = std::make_shared<std::vector<std::size_t>>();
    for (const auto& p : parts) splits->push_back(static_cast<std::size_t>(p.size(axis)));
    return make_op<T>(std::move(out_shape), std::move(out), parts,
                      [pnodes, splits, s, tot_n](typename Tensor<T>::Node& self) {
                          std::size_t off2 = 0;
                          for (std::size_t pi = 0; pi < pnodes.size(); ++pi) {
                              const std::size_t pn = (*splits)[pi];
                              if (pnodes[pi]->requires_grad) {
                                  T* gp = pnodes[pi]->grad.data();
                                  const T* g = self.grad.data();
                                  for (std::size_t o = 0; o < s.outer; ++o)
                                      for (std::size_t j = 0; j < pn * s.inner; ++j)
                                          gp[o * pn * s.inner + j] += g[(o * tot_n + off2) * s.inner + j];
                              }
                              off2 += pn;
                          }
                      });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, Dim axis, Dim start, Dim len) {
    const auto s = detail::axis_split(a, axis, "slice");
    if (start < 0 || len <= 0 || start + len > a.size(axis))
        throw ArgumentError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                            ") out of bounds on axis " + std::to_string(axis));
    Shape out_shape = a.shape();
    out_shape[static_cast<std::size_t>(axis)] = len;
    std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
    const T* av = a.data();
    const std::size_t ln = static_cast<std::size_t>(len), st = static_cast<std::size_t>(start);
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy(av + (o * s.n + st) * s.inner, av + (o * s.n + st + ln) * s.inner,
                  out.data() + o * ln * s.inner);
    auto pa = a.node();
    return make_op<T>(std::move(out_shape), std::move(out), {a},
                      [pa, s, ln, st](typename Tensor<T>::Node& self) {
                          if (!pa->requires_grad) return;
                          const T* g = self.grad.data();
                          T* ga = pa->grad.data();
                          for (std::size_t o = 0; o < s.outer; ++o)
                              for (std::size_t j = 0; j < ln * s.inner; ++j)
                                  ga[(o * s.n + st) * s.inner + j] += g[o * ln * s.inner + j];
                      });
}

// Forward difference along an axis: out_k = a_{k+1} - a_k. Length shrinks by 1.
template <typename T>
Tensor<T> diff(const Tensor<T>& a, Dim axis) {
    if (a.size(axis) < 2) throw ArgumentError("diff: axis " + std::to_string(axis) + " too short");
    const auto s = detail::axis_split(a, axis, "diff");
    Shape out_shape = a.shape();
    out_shape[static_cast<std::size_t>(axis)] -= 1;
    std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
    const T* av = a.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k + 1 < s.n; ++k) {
            const T* hi = av + (o * s.n + k + 1) * s.inner;
            const T* lo = av + (o * s.n + k) * s.inner;
            T* dst = out.data() + (o * (s.n - 1) + k) * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] = hi[i] - lo[i];
        }
    auto pa = a.node();
    return make_op<T>(std::move(out_shape), std::move(out), {a}, [pa, s](typename Tensor<T>::Node& self) {
        if (!pa->requires_grad) return;
        const T* g = self.grad.data();
        T* ga = pa->grad.data();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t k = 0; k + 1 < s.n; ++k)
                for (std::size_t i = 0; i < s.inner; ++i) {
                    const T gv = g[(o * (s.n - 1) + k) * s.inner + i];
                    ga[(o * s.n + k + 1) * s.inner + i] += gv;
                    ga[(o * s.n + k) * s.inner + i] -= gv;
                }
    });
}

// ---------------------------------------------------------------------------
// matrix product
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: expects rank-2 operands");
    if (a.size(1) != b.size(0))
        throw ShapeError("matmul: inner dimension mismatch at axis 1 vs axis 0 (" + std::to_string(a.size(1)) +
                         " vs " + std::to_string(b.size(0)) + ")");
    const std::size_t m = static_cast<std::size_t>(a.size(0));
    const std::size_t k = static_cast<std::size_t>(a.size(1));
    const std::size_t n = static_cast<std::size_t>(b.size(1));
    std::vector<T> out(m * n, T(0));
    const T* av = a.data();
    const T* bv = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = av[i * k + p];
            const T* brow = bv + p * n;
            T* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    auto pa = a.node();
    auto pb = b.node();
    return make_op<T>(Shape{a.size(0), b.size(1)}, std::move(out), {a, b},
                      [pa, pb, m, k, n](typename Tensor<T>::Node& self) {
                          const T* g = self.grad.data();
                          if (pa->requires_grad) {
                              T* ga = pa->grad.data();
                              const T* bv2 = pb->value.data();
                              for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t p = 0; p < k; ++p) {
                                      T acc = T(0);
                                      const T* grow = g + i * n;
                                      const T* brow = bv2 + p * n;
                                      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                                      ga[i * k + p] += acc;
                                  }
                          }
                          if (pb->requires_grad) {
                              T* gb = pb->grad.data();
                              const T* av2 = pa->value.data();
                              for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t p = 0; p < k; ++p) {
                                      const T aip = av2[i * k + p];
                                      const T* grow = g + i * n;
                                      T* brow = gb + p * n;
                                      for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
                                  }
                          }
                      });
}

}  // namespace poseflow
