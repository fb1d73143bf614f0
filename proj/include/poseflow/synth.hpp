#pragma once

// Synthetic scene oracle: textured fronto-parallel planes rendered by exact
// ray casting, giving frames plus ground-truth depth maps and relative poses.
// Textures are procedural (sums of sinusoids over world coordinates), so any
// camera position samples them at full precision with no resampling error.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "poseflow/camera.hpp"
#include "poseflow/errors.hpp"
#include "poseflow/image_io.hpp"
#include "poseflow/rng.hpp"
#include "poseflow/tensor.hpp"

namespace poseflow {

struct TexturedPlane {
    double z = 5.0;  // world depth (plane normal +z)
    bool infinite = true;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // rect bounds when finite

    struct Wave {
        double fx, fy, phase, amp;
    };
    std::array<std::vector<Wave>, 3> waves;
    std::array<double, 3> base{0.5, 0.5, 0.5};

    bool contains(double x, double y) const {
        return infinite || (x >= x0 && x <= x1 && y >= y0 && y <= y1);
    }

    double color(int channel, double x, double y) const {
        double v = base[static_cast<std::size_t>(channel)];
        for (const auto& wv : waves[static_cast<std::size_t>(channel)])
            v += wv.amp * std::sin(6.283185307179586 * (wv.fx * x + wv.fy * y) + wv.phase);
        return std::min(0.98, std::max(0.02, v));
    }
};

struct SceneSpec {
    std::vector<TexturedPlane> planes;
    Dim height = 64, width = 192;
    CameraIntrinsics intrinsics{100, 100, 95.5, 31.5};
};

// Two camera steps: frame0 -> frame1 and frame1 -> frame2, each a 6-vector
// (axis-angle rotation, translation) of the camera moving in its own frame.
struct MotionSpec {
    std::array<double, 6> step_to_mid{};
    std::array<double, 6> step_from_mid{};
};

template <typename T>
struct Snippet {
    std::array<Tensor<T>, 3> frames;  // 8-bit quantized, [3,h,w]
    CameraIntrinsics intrinsics{100, 100, 95.5, 31.5};
    bool has_ground_truth = false;
    std::array<Tensor<T>, 3> depths;            // [h,w], full precision
    std::array<PoseSE3, 3> world_from_camera;   // per frame
    PoseSE3 target_to_prev;                     // maps target-frame points into frame 0
    PoseSE3 target_to_next;                     // maps target-frame points into frame 2
};

namespace detail {

inline void add_texture(TexturedPlane& plane, Rng& rng, double pixel_world, int octaves = 4) {
    for (int c = 0; c < 3; ++c) {
        plane.base[static_cast<std::size_t>(c)] = rng.uniform(0.35, 0.65);
        auto& waves = plane.waves[static_cast<std::size_t>(c)];
        waves.clear();
        for (int o = 0; o < octaves; ++o) {
            const double wavelength_px = rng.uniform(5.0, 28.0);
            const double f = 1.0 / (wavelength_px * pixel_world);
            const double ang = rng.uniform(0.0, 6.283185307179586);
            waves.push_back({f * std::cos(ang), f * std::sin(ang), rng.uniform(0.0, 6.283185307179586),
                             rng.uniform(0.08, 0.22)});
        }
    }
}

}  // namespace detail

// Randomized multi-plane scene: one infinite background plane and 1-3
// foreground rectangles at smaller depth, all procedurally textured.
inline SceneSpec make_scene(Rng& rng, Dim height, Dim width) {
    SceneSpec scene;
    scene.height = height;
    scene.width = width;
    const double fx = 0.75 * static_cast<double>(width);
    scene.intrinsics = CameraIntrinsics(fx, fx, static_cast<double>(width) / 2.0 - 0.5,
                                        static_cast<double>(height) / 2.0 - 0.5);

    TexturedPlane bg;
    bg.z = rng.uniform(4.0, 7.0);
    bg.infinite = true;
    detail::add_texture(bg, rng, bg.z / fx);
    scene.planes.push_back(bg);

    const int n_fg = 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < n_fg; ++i) {
        TexturedPlane fg;
        fg.z = rng.uniform(1.8, 3.5);
        fg.infinite = false;
        const double view_w = fg.z * static_cast<double>(width) / (2.0 * fx);
        const double view_h = fg.z * static_cast<double>(height) / (2.0 * fx);
        const double cx = rng.uniform(-0.6, 0.6) * view_w;
        const double cy = rng.uniform(-0.6, 0.6) * view_h;
        const double half_w = rng.uniform(0.25, 0.6) * view_w;
        const double half_h = rng.uniform(0.3, 0.8) * view_h;
        fg.x0 = cx - half_w;
        fg.x1 = cx + half_w;
        fg.y0 = cy - half_h;
        fg.y1 = cy + half_h;
        detail::add_texture(fg, rng, fg.z / fx);
        scene.planes.push_back(fg);
    }
    return scene;
}

// Exact render from a world-from-camera pose. Throws if any ray misses every
// plane (scene fully occluded or camera outside the covered volume).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> render_scene(const SceneSpec& scene, const PoseSE3& world_from_camera) {
    const Dim h = scene.height, w = scene.width;
    const auto& k = scene.intrinsics;
    std::vector<T> img(static_cast<std::size_t>(3 * h * w));
    std::vector<T> depth(static_cast<std::size_t>(h * w));
    const Mat3& rot = world_from_camera.rotation;
    const Vec3& origin = world_from_camera.translation;
    for (Dim y = 0; y < h; ++y)
        for (Dim x = 0; x < w; ++x) {
            const Vec3 ray_cam{(static_cast<double>(x) - k.cx) / k.fx, (static_cast<double>(y) - k.cy) / k.fy,
                               1.0};
            const Vec3 d = rot * ray_cam;
            double best_s = -1.0;
            const TexturedPlane* hit = nullptr;
            double hx = 0, hy = 0;
            for (const auto& plane : scene.planes) {
                if (std::fabs(d.z) < 1e-12) continue;
                const double s = (plane.z - origin.z) / d.z;
                if (s <= 1e-6) continue;
                const double px = origin.x + s * d.x;
                const double py = origin.y + s * d.y;
                if (!plane.contains(px, py)) continue;
                if (hit == nullptr || s < best_s) {
                    best_s = s;
                    hit = &plane;
                    hx = px;
                    hy = py;
                }
            }
            if (hit == nullptr)
                throw DomainError("render_scene: ray at pixel (" + std::to_string(x) + "," + std::to_string(y) +
                                  ") misses every plane");
            depth[static_cast<std::size_t>(y * w + x)] = static_cast<T>(best_s);
            for (int c = 0; c < 3; ++c)
                img[static_cast<std::size_t>((c * h + y) * w + x)] = static_cast<T>(hit->color(c, hx, hy));
        }
    return {Tensor<T>({3, h, w}, std::move(img), false), Tensor<T>({h, w}, std::move(depth), false)};
}

// Renders the three-frame snippet (t-1, t, t+1) of a seeded random scene.
// Frames are quantized to 8-bit levels, exactly matching a PPM round trip.
template <typename T>
Snippet<T> synth_scene(std::uint64_t seed, const MotionSpec& motion, Dim height = 64, Dim width = 192) {
    Rng rng(seed);
    const SceneSpec scene = make_scene(rng, height, width);

    Snippet<T> out;
    out.intrinsics = scene.intrinsics;
    out.has_ground_truth = true;
    const PoseSE3 m1 = PoseSE3::from_vector(motion.step_to_mid);
    const PoseSE3 m2 = PoseSE3::from_vector(motion.step_from_mid);
    out.world_from_camera[0] = PoseSE3::identity();
    out.world_from_camera[1] = m1;
    out.world_from_camera[2] = compose(m1, m2);
    for (int f = 0; f < 3; ++f) {
        auto [img, depth] = render_scene<T>(scene, out.world_from_camera[static_cast<std::size_t>(f)]);
        out.frames[static_cast<std::size_t>(f)] = quantize8(img);
        out.depths[static_cast<std::size_t>(f)] = depth;
    }
    out.target_to_prev = compose(invert(out.world_from_camera[0]), out.world_from_camera[1]);
    out.target_to_next = compose(invert(out.world_from_camera[2]), out.world_from_camera[1]);
    return out;
}

// Motion distribution used for toy training and its held-out evaluation:
// dominantly translational steps with a small rotational component, roughly
// constant across the two snippet steps.
inline MotionSpec random_motion(Rng& rng) {
    Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
    const double n = dir.norm() > 1e-9 ? dir.norm() : 1.0;
    const double mag = rng.uniform(0.02, 0.07);
    dir = (mag / n) * dir;
    std::array<double, 6> base{rng.uniform(-0.006, 0.006), rng.uniform(-0.006, 0.006),
                               rng.uniform(-0.006, 0.006), dir.x, dir.y, dir.z};
    MotionSpec m;
    m.step_to_mid = base;
    m.step_from_mid = base;
    for (auto& v : m.step_from_mid) v *= rng.uniform(0.9, 1.1);
    return m;
}

}  // namespace poseflow
