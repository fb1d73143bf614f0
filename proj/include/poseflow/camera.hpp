#pragma once

// Pinhole camera model, rigid transforms and the differentiable warping
// chain: back-projection, SE(3) motion, projection, bilinear sampling.
//
// Plain double-precision structs (Vec3/Mat3/PoseSE3) serve the rendering and
// evaluation paths; tensor ops carry the gradient where learning needs it.

#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "poseflow/errors.hpp"
#include "poseflow/tensor.hpp"
#include "poseflow/tensor_nn.hpp"

namespace poseflow {

// ---------------------------------------------------------------------------
// small fixed-size linear algebra
// ---------------------------------------------------------------------------

struct Vec3 {
    double x = 0, y = 0, z = 0;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

struct Mat3 {
    // row-major
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    double operator()(int r, int c) const { return m[static_cast<std::size_t>(3 * r + c)]; }
    double& operator()(int r, int c) { return m[static_cast<std::size_t>(3 * r + c)]; }

    Mat3 transposed() const {
        Mat3 t;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) t(r, c) = (*this)(c, r);
        return t;
    }

    double det() const {
        const auto& a = m;
        return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
               a[2] * (a[3] * a[7] - a[4] * a[6]);
    }
};

inline Vec3 operator*(const Mat3& a, Vec3 v) {
    return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z, a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
            a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
}

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double acc = 0;
            for (int k = 0; k < 3; ++k) acc += a(r, k) * b(k, c);
            out(r, c) = acc;
        }
    return out;
}

inline Mat3 skew(Vec3 w) {
    Mat3 s;
    s.m = {0, -w.z, w.y, w.z, 0, -w.x, -w.y, w.x, 0};
    return s;
}

// Rodrigues rotation from an axis-angle vector (plain-double path).
inline Mat3 rodrigues_matrix(Vec3 w) {
    const double theta_sq = dot(w, w);
    double s, c2;  // sin(t)/t and (1-cos(t))/t^2
    if (theta_sq < 1e-16) {
        s = 1.0 - theta_sq / 6.0;
        c2 = 0.5 - theta_sq / 24.0;
    } else {
        const double theta = std::sqrt(theta_sq);
        s = std::sin(theta) / theta;
        c2 = (1.0 - std::cos(theta)) / theta_sq;
    }
    const Mat3 a = skew(w);
    const Mat3 a2 = a * a;
    Mat3 r = Mat3::identity();
    for (std::size_t i = 0; i < 9; ++i) r.m[i] += s * a.m[i] + c2 * a2.m[i];
    return r;
}

// ---------------------------------------------------------------------------
// camera intrinsics and poses
// ---------------------------------------------------------------------------

struct CameraIntrinsics {
    double fx, fy, cx, cy;

    CameraIntrinsics(double fx_, double fy_, double cx_, double cy_) : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
        if (!(fx > 0) || !(fy > 0)) throw ArgumentError("intrinsics: focal lengths must be positive");
    }

    // Intrinsics of the same camera observed at 1/2^levels resolution.
    CameraIntrinsics scaled_down(int levels) const {
        const double f = std::pow(0.5, levels);
        return CameraIntrinsics(fx * f, fy * f, cx * f, cy * f);
    }
};

struct PoseSE3 {
    Mat3 rotation;
    Vec3 translation;

    static PoseSE3 identity() { return {}; }

    static PoseSE3 from_vector(const std::array<double, 6>& v) {
        return {rodrigues_matrix({v[0], v[1], v[2]}), {v[3], v[4], v[5]}};
    }

    double orthonormality_error() const {
        const Mat3 g = rotation.transposed() * rotation;
        double worst = 0;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) worst = std::max(worst, std::fabs(g(r, c) - (r == c ? 1.0 : 0.0)));
        return worst;
    }

    Vec3 apply(Vec3 p) const { return rotation * p + translation; }
};

inline PoseSE3 compose(const PoseSE3& a, const PoseSE3& b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline PoseSE3 invert(const PoseSE3& a) {
    const Mat3 rt = a.rotation.transposed();
    const Vec3 t = rt * a.translation;
    return {rt, {-t.x, -t.y, -t.z}};
}

// Rotation angle in radians.
inline double rotation_angle(const Mat3& r) {
    const double tr = r(0, 0) + r(1, 1) + r(2, 2);
    const double c = std::min(1.0, std::max(-1.0, (tr - 1.0) / 2.0));
    return std::acos(c);
}

// ---------------------------------------------------------------------------
// differentiable geometry ops
// ---------------------------------------------------------------------------

template <typename T>
struct PointCloud {
    Tensor<T> points;  // [h,w,3], camera-frame meters; z equals the source depth
};

// Absolute pixel positions: entry (y,x) = (x,y).
template <typename T>
Tensor<T> meshgrid(Dim h, Dim w) {
    if (h < 1 || w < 1) throw ArgumentError("meshgrid: extents must be >= 1");
    std::vector<T> v(static_cast<std::size_t>(h * w * 2));
    for (Dim y = 0; y < h; ++y)
        for (Dim x = 0; x < w; ++x) {
            v[static_cast<std::size_t>((y * w + x) * 2 + 0)] = static_cast<T>(x);
            v[static_cast<std::size_t>((y * w + x) * 2 + 1)] = static_cast<T>(y);
        }
    return Tensor<T>({h, w, 2}, std::move(v), false);
}

// Back-projection through the pinhole model: point(y,x) = depth(y,x) * K^-1 (x,y,1)^T.
template <typename T>
Tensor<T> backproject(const Tensor<T>& depth, const CameraIntrinsics& k) {
    if (depth.rank() != 2) throw ShapeError("backproject: depth must be [h,w]");
    const Dim h = depth.size(0), w = depth.size(1);
    const T* dv = depth.data();
    for (std::size_t i = 0; i < static_cast<std::size_t>(h * w); ++i)
        if (!(dv[i] > T(0)))
            throw DomainError("backproject: non-positive depth at flat index " + std::to_string(i));
    std::vector<T> out(static_cast<std::size_t>(h * w * 3));
    for (Dim y = 0; y < h; ++y)
        for (Dim x = 0; x < w; ++x) {
            const T d = dv[y * w + x];
            const T kx = static_cast<T>((static_cast<double>(x) - k.cx) / k.fx);
            const T ky = static_cast<T>((static_cast<double>(y) - k.cy) / k.fy);
            T* p = out.data() + (y * w + x) * 3;
            p[0] = d * kx;
            p[1] = d * ky;
            p[2] = d;
        }
    auto pd = depth.node();
    return make_op<T>(Shape{h, w, 3}, std::move(out), {depth},
                      [pd, h, w, k](typename Tensor<T>::Node& self) {
                          if (!pd->requires_grad) return;
                          const T* g = self.grad.data();
                          T* gd = pd->grad.data();
                          for (Dim y = 0; y < h; ++y)
                              for (Dim x = 0; x < w; ++x) {
                                  const T kx = static_cast<T>((static_cast<double>(x) - k.cx) / k.fx);
                                  const T ky = static_cast<T>((static_cast<double>(y) - k.cy) / k.fy);
                                  const T* gp = g + (y * w + x) * 3;
                                  gd[y * w + x] += gp[0] * kx + gp[1] * ky + gp[2];
                              }
                      });
}

// Rotation matrix from an axis-angle 3-vector, with the exact derivative for
// reverse mode (series fallback near zero angle).
template <typename T>
Tensor<T> rodrigues(const Tensor<T>& w) {
    if (w.rank() != 1 || w.size(0) != 3) throw ShapeError("rodrigues: expects a 3-vector");
    const Vec3 wv{static_cast<double>(w.data()[0]), static_cast<double>(w.data()[1]),
                  static_cast<double>(w.data()[2])};
    const Mat3 r = rodrigues_matrix(wv);
    std::vector<T> out(9);
    for (std::size_t i = 0; i < 9; ++i) out[i] = static_cast<T>(r.m[i]);
    auto pw = w.node();
    return make_op<T>(Shape{3, 3}, std::move(out), {w}, [pw, wv, r](typename Tensor<T>::Node& self) {
        if (!pw->requires_grad) return;
        const double theta_sq = dot(wv, wv);
        std::array<Mat3, 3> dr;  // dR/dw_i
        if (theta_sq < 1e-8) {
            // dR/dw_i ~= [e_i]x + ([e_i]x [w]x + [w]x [e_i]x) / 2
            const Mat3 wx = skew(wv);
            for (int i = 0; i < 3; ++i) {
                Vec3 e{i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0, i == 2 ? 1.0 : 0.0};
                const Mat3 ex = skew(e);
                const Mat3 a = ex * wx;
                const Mat3 b = wx * ex;
                Mat3 d = ex;
                for (std::size_t j = 0; j < 9; ++j) d.m[j] += 0.5 * (a.m[j] + b.m[j]);
                dr[static_cast<std::size_t>(i)] = d;
            }
        } else {
            // dR/dw_i = (w_i [w]x + [w x ((I - R) e_i)]x) / |w|^2 * R
            const Mat3 wx = skew(wv);
            for (int i = 0; i < 3; ++i) {
                Vec3 e{i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0, i == 2 ? 1.0 : 0.0};
                const Vec3 re{r(0, i), r(1, i), r(2, i)};
                const Vec3 ime = e - re;  // (I - R) e_i
                const Mat3 term = skew(cross(wv, ime));
                Mat3 lhs;
                const double wi = i == 0 ? wv.x : (i == 1 ? wv.y : wv.z);
                for (std::size_t j = 0; j < 9; ++j) lhs.m[j] = (wi * wx.m[j] + term.m[j]) / theta_sq;
                dr[static_cast<std::size_t>(i)] = lhs * r;
            }
        }
        const T* g = self.grad.data();
        for (int i = 0; i < 3; ++i) {
            double acc = 0;
            for (std::size_t j = 0; j < 9; ++j) acc += static_cast<double>(g[j]) * dr[static_cast<std::size_t>(i)].m[j];
            pw->grad[static_cast<std::size_t>(i)] += static_cast<T>(acc);
        }
    });
}

template <typename T>
struct PoseTensors {
    Tensor<T> rotation;     // [3,3]
    Tensor<T> translation;  // [3]
};

// Differentiable pose: rotation = Rodrigues(v[0:3]), translation = v[3:6].
template <typename T>
PoseTensors<T> pose_from_vector(const Tensor<T>& v) {
    if (v.rank() != 1 || v.size(0) != 6) throw ShapeError("pose_from_vector: expects a 6-vector");
    return {rodrigues(slice(v, 0, 0, 3)), slice(v, 0, 3, 3)};
}

// Non-differentiable evaluation of the same map.
template <typename T>
PoseSE3 pose_se3_from_vector(const Tensor<T>& v) {
    if (v.rank() != 1 || v.size(0) != 6) throw ShapeError("pose_se3_from_vector: expects a 6-vector");
    std::array<double, 6> a;
    for (int i = 0; i < 6; ++i) a[static_cast<std::size_t>(i)] = static_cast<double>(v.data()[i]);
    return PoseSE3::from_vector(a);
}

template <typename T>
PoseTensors<T> pose_tensors_from_se3(const PoseSE3& p) {
    std::vector<T> rv(9);
    for (std::size_t i = 0; i < 9; ++i) rv[i] = static_cast<T>(p.rotation.m[i]);
    return {Tensor<T>({3, 3}, std::move(rv), false),
            Tensor<T>({3}, {static_cast<T>(p.translation.x), static_cast<T>(p.translation.y),
                            static_cast<T>(p.translation.z)},
                      false)};
}

// Rigid motion of a point map: out(y,x) = R * p(y,x) + t.
template <typename T>
Tensor<T> transform_points(const Tensor<T>& points, const Tensor<T>& rot, const Tensor<T>& trans) {
    if (points.rank() != 3 || points.size(2) != 3) throw ShapeError("transform_points: points must be [h,w,3]");
    if (rot.rank() != 2 || rot.size(0) != 3 || rot.size(1) != 3)
        throw ShapeError("transform_points: rotation must be [3,3]");
    if (trans.rank() != 1 || trans.size(0) != 3) throw ShapeError("transform_points: translation must be [3]");
    const Dim h = points.size(0), w = points.size(1);
    const std::size_t n = static_cast<std::size_t>(h * w);
    std::vector<T> out(n * 3);
    const T* pv = points.data();
    const T* rv = rot.data();
    const T* tv = trans.data();
    for (std::size_t i = 0; i < n; ++i) {
        const T* p = pv + i * 3;
        T* q = out.data() + i * 3;
        for (int r = 0; r < 3; ++r)
            q[r] = rv[3 * r + 0] * p[0] + rv[3 * r + 1] * p[1] + rv[3 * r + 2] * p[2] + tv[r];
    }
    auto pp = points.node();
    auto pr = rot.node();
    auto pt = trans.node();
    return make_op<T>(points.shape(), std::move(out), {points, rot, trans},
                      [pp, pr, pt, n](typename Tensor<T>::Node& self) {
                          const T* g = self.grad.data();
                          const T* rv2 = pr->value.data();
                          const T* pv2 = pp->value.data();
                          if (pp->requires_grad) {
                              T* gp = pp->grad.data();
                              for (std::size_t i = 0; i < n; ++i) {
                                  const T* gq = g + i * 3;
                                  T* q = gp + i * 3;
                                  for (int c = 0; c < 3; ++c)
                                      q[c] += rv2[0 + c] * gq[0] + rv2[3 + c] * gq[1] + rv2[6 + c] * gq[2];
                              }
                          }
                          if (pr->requires_grad) {
                              T* gr = pr->grad.data();
                              for (std::size_t i = 0; i < n; ++i) {
                                  const T* gq = g + i * 3;
                                  const T* p = pv2 + i * 3;
                                  for (int r = 0; r < 3; ++r)
                                      for (int c = 0; c < 3; ++c) gr[3 * r + c] += gq[r] * p[c];
                              }
                          }
                          if (pt->requires_grad) {
                              T* gt = pt->grad.data();
                              for (std::size_t i = 0; i < n; ++i) {
                                  const T* gq = g + i * 3;
                                  for (int r = 0; r < 3; ++r) gt[r] += gq[r];
                              }
                          }
                      });
}

// Perspective projection of camera-frame points. Returns pixel coordinates
// [h,w,2] and a {0,1} mask of points safely in front of the camera
// (z > 1e-6); masked points project through a clamped depth and should be
// discarded by the caller via the mask.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> project(const Tensor<T>& points, const CameraIntrinsics& k) {
    if (points.rank() != 3 || points.size(2) != 3) throw ShapeError("project: points must be [h,w,3]");
    const Dim h = points.size(0), w = points.size(1);
    const std::size_t n = static_cast<std::size_t>(h * w);
    constexpr double kMinZ = 1e-6;
    std::vector<T> out(n * 2);
    std::vector<T> mask(n);
    const T* pv = points.data();
    for (std::size_t i = 0; i < n; ++i) {
        const T* p = pv + i * 3;
        const T zs = std::max(p[2], static_cast<T>(kMinZ));
        out[i * 2 + 0] = static_cast<T>(k.fx) * p[0] / zs + static_cast<T>(k.cx);
        out[i * 2 + 1] = static_cast<T>(k.fy) * p[1] / zs + static_cast<T>(k.cy);
        mask[i] = p[2] > static_cast<T>(kMinZ) ? T(1) : T(0);
    }
    auto pp = points.node();
    Tensor<T> coords = make_op<T>(
        Shape{h, w, 2}, std::move(out), {points}, [pp, n, k](typename Tensor<T>::Node& self) {
            if (!pp->requires_grad) return;
            const T* g = self.grad.data();
            const T* pv2 = pp->value.data();
            T* gp = pp->grad.data();
            for (std::size_t i = 0; i < n; ++i) {
                const T* p = pv2 + i * 3;
                const T gu = g[i * 2 + 0], gv = g[i * 2 + 1];
                const T zs = std::max(p[2], static_cast<T>(1e-6));
                const T inv = T(1) / zs;
                gp[i * 3 + 0] += gu * static_cast<T>(k.fx) * inv;
                gp[i * 3 + 1] += gv * static_cast<T>(k.fy) * inv;
                if (p[2] > static_cast<T>(1e-6))
                    gp[i * 3 + 2] -= (gu * static_cast<T>(k.fx) * p[0] + gv * static_cast<T>(k.fy) * p[1]) * inv * inv;
            }
        });
    return {coords, Tensor<T>(Shape{h, w}, std::move(mask), false)};
}

// Photometric warp: back-project target pixels through the target depth,
// move them by the relative pose, project into the reference view and sample
// the reference image there. Differentiable w.r.t. depth and pose tensors.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> warp_reference(const Tensor<T>& reference_image, const Tensor<T>& target_depth,
                                               const CameraIntrinsics& k, const Tensor<T>& rot,
                                               const Tensor<T>& trans) {
    if (reference_image.rank() != 3) throw ShapeError("warp_reference: image must be [3,h,w]");
    if (reference_image.size(1) != target_depth.size(0) || reference_image.size(2) != target_depth.size(1))
        throw ShapeError("warp_reference: image/depth spatial mismatch");
    auto cloud = backproject(target_depth, k);
    auto moved = transform_points(cloud, rot, trans);
    auto [coords, zmask] = project(moved, k);
    auto [sampled, smask] = grid_sample(reference_image, coords);
    return {sampled, mul(zmask, smask)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> warp_reference(const Tensor<T>& reference_image, const Tensor<T>& target_depth,
                                               const CameraIntrinsics& k, const PoseSE3& pose) {
    auto pt = pose_tensors_from_se3<T>(pose);
    return warp_reference(reference_image, target_depth, k, pt.rotation, pt.translation);
}

}  // namespace poseflow
