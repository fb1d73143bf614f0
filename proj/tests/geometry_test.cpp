#include <array>
#include <cmath>

#include <gtest/gtest.h>

#include "poseflow/camera.hpp"
#include "poseflow/gradcheck.hpp"

using namespace poseflow;

namespace {

constexpr double kPi = 3.14159265358979323846;

TensorD constant_depth(Dim h, Dim w, double z) { return TensorD::full({h, w}, z); }

TensorD ramp_image(Dim h, Dim w) {
    std::vector<double> v(static_cast<std::size_t>(3 * h * w));
    for (Dim c = 0; c < 3; ++c)
        for (Dim y = 0; y < h; ++y)
            for (Dim x = 0; x < w; ++x)
                v[static_cast<std::size_t>((c * h + y) * w + x)] = static_cast<double>(x) / static_cast<double>(w);
    return TensorD({3, h, w}, std::move(v));
}

}  // namespace

TEST(Meshgrid, SmallGrids) {
    auto g = meshgrid<double>(2, 2);
    EXPECT_DOUBLE_EQ(g.at({0, 0, 0}), 0.0);
    EXPECT_DOUBLE_EQ(g.at({0, 0, 1}), 0.0);
    EXPECT_DOUBLE_EQ(g.at({0, 1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(g.at({0, 1, 1}), 0.0);
    EXPECT_DOUBLE_EQ(g.at({1, 0, 0}), 0.0);
    EXPECT_DOUBLE_EQ(g.at({1, 0, 1}), 1.0);
    EXPECT_DOUBLE_EQ(g.at({1, 1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(g.at({1, 1, 1}), 1.0);

    auto row = meshgrid<double>(1, 3);
    for (Dim x = 0; x < 3; ++x) {
        EXPECT_DOUBLE_EQ(row.at({0, x, 0}), static_cast<double>(x));
        EXPECT_DOUBLE_EQ(row.at({0, x, 1}), 0.0);
    }

    auto big = meshgrid<double>(5, 7);
    EXPECT_DOUBLE_EQ(big.at({4, 6, 0}), 6.0);
    EXPECT_DOUBLE_EQ(big.at({4, 6, 1}), 4.0);
}

TEST(Backproject, IdentityIntrinsics) {
    CameraIntrinsics k(1, 1, 0, 0);
    auto cloud = backproject(constant_depth(2, 2, 1.0), k);
    EXPECT_DOUBLE_EQ(cloud.at({0, 0, 0}), 0.0);
    EXPECT_DOUBLE_EQ(cloud.at({0, 0, 1}), 0.0);
    EXPECT_DOUBLE_EQ(cloud.at({0, 0, 2}), 1.0);
}

TEST(Backproject, HandComputedPoint) {
    CameraIntrinsics k(2, 2, 1, 1);
    auto cloud = backproject(constant_depth(6, 5, 4.0), k);
    // pixel (x=3, y=5), depth 4 -> ((3-1)/2*4, (5-1)/2*4, 4)
    EXPECT_DOUBLE_EQ(cloud.at({5, 3, 0}), 4.0);
    EXPECT_DOUBLE_EQ(cloud.at({5, 3, 1}), 8.0);
    EXPECT_DOUBLE_EQ(cloud.at({5, 3, 2}), 4.0);
}

TEST(Backproject, LinearInDepth) {
    CameraIntrinsics k(50, 60, 10, 12);
    Rng rng(4);
    TensorD d1 = TensorD::random_uniform(rng, {4, 6}, 0.5, 3.0);
    TensorD d2 = d1 * 2.0;
    auto c1 = backproject(d1, k);
    auto c2 = backproject(d2, k);
    for (std::size_t i = 0; i < c1.values().size(); ++i)
        EXPECT_NEAR(c2.values()[i], 2.0 * c1.values()[i], 1e-12);
}

TEST(Backproject, DepthEqualsZComponent) {
    CameraIntrinsics k(37, 41, 5, 6);
    Rng rng(8);
    TensorD d = TensorD::random_uniform(rng, {3, 4}, 0.2, 9.0);
    auto cloud = backproject(d, k);
    for (Dim y = 0; y < 3; ++y)
        for (Dim x = 0; x < 4; ++x) EXPECT_DOUBLE_EQ(cloud.at({y, x, 2}), d.at({y, x}));
}

TEST(Backproject, RejectsNonPositiveDepth) {
    CameraIntrinsics k(1, 1, 0, 0);
    EXPECT_THROW(backproject(TensorD({1, 2}, {1.0, 0.0}), k), DomainError);
    EXPECT_THROW(backproject(TensorD({1, 1}, {-0.5}), k), DomainError);
}

TEST(PoseFromVector, ZeroGivesIdentity) {
    auto p = pose_se3_from_vector(TensorD::zeros({6}));
    EXPECT_DOUBLE_EQ(p.rotation(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(p.rotation(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(p.rotation(2, 2), 1.0);
    EXPECT_DOUBLE_EQ(p.translation.norm(), 0.0);
}

TEST(PoseFromVector, QuarterTurnAboutZ) {
    auto r = rodrigues(TensorD({3}, {0.0, 0.0, kPi / 2}));
    const double expected[9] = {0, -1, 0, 1, 0, 0, 0, 0, 1};
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(r.values()[i], expected[i], 1e-12);
}

TEST(PoseFromVector, SmallMotionInverseComposition) {
    // P(v) o P(-v) drifts from identity only by the rotation-translation
    // cross term, which vanishes quadratically with the motion scale.
    std::array<double, 6> v{0.03, -0.02, 0.04, 0.01, 0.02, -0.03};
    std::array<double, 6> nv;
    for (int i = 0; i < 6; ++i) nv[static_cast<std::size_t>(i)] = -v[static_cast<std::size_t>(i)];
    auto fwd = PoseSE3::from_vector(v);
    auto bwd = PoseSE3::from_vector(nv);
    auto c = compose(fwd, bwd);
    EXPECT_LT(rotation_angle(c.rotation), 1e-12);
    EXPECT_LT(c.translation.norm(), 5e-3);

    for (auto& x : v) x *= 0.1;
    for (auto& x : nv) x *= 0.1;
    auto c2 = compose(PoseSE3::from_vector(v), PoseSE3::from_vector(nv));
    EXPECT_LT(c2.translation.norm(), 5e-5);  // quadratic shrink
}

TEST(PoseOps, ComposeIdentity) {
    auto p = PoseSE3::from_vector({0.2, -0.1, 0.3, 1.0, 2.0, 3.0});
    auto q = compose(PoseSE3::identity(), p);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(q.rotation.m[i], p.rotation.m[i]);
    EXPECT_DOUBLE_EQ(q.translation.x, p.translation.x);
}

TEST(PoseOps, InverseIsInvolution) {
    auto p = PoseSE3::from_vector({0.5, 0.2, -0.7, 4.0, -1.0, 2.5});
    auto q = invert(invert(p));
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(q.rotation.m[i], p.rotation.m[i], 1e-6);
    EXPECT_NEAR((q.translation - p.translation).norm(), 0.0, 1e-6);
    auto id = compose(p, invert(p));
    EXPECT_LT(rotation_angle(id.rotation), 1e-6);
    EXPECT_LT(id.translation.norm(), 1e-6);
}

TEST(PoseOps, TranslationChainAccumulates) {
    PoseSE3 step = PoseSE3::from_vector({0, 0, 0, 1, 0, 0});
    PoseSE3 acc = PoseSE3::identity();
    const int n = 17;
    for (int i = 0; i < n; ++i) acc = compose(acc, step);
    EXPECT_NEAR(acc.translation.x, static_cast<double>(n), 1e-9);
    EXPECT_NEAR(acc.translation.y, 0.0, 1e-12);
}

TEST(PoseOps, OrthonormalityPreservedOverCompositions) {
    Rng rng(77);
    PoseSE3 acc = PoseSE3::identity();
    for (int i = 0; i < 1000; ++i) {
        std::array<double, 6> v;
        for (auto& x : v) x = rng.uniform(-0.5, 0.5);
        acc = compose(acc, PoseSE3::from_vector(v));
        ASSERT_LT(acc.orthonormality_error(), 1e-6);
    }
    EXPECT_NEAR(acc.rotation.det(), 1.0, 1e-6);
}

TEST(Project, RoundTripReproducesGrid) {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        CameraIntrinsics k(rng.uniform(20, 200), rng.uniform(20, 200), rng.uniform(-5, 30), rng.uniform(-5, 30));
        TensorD depth = TensorD::random_uniform(rng, {5, 8}, 0.3, 20.0);
        auto [coords, mask] = project(backproject(depth, k), k);
        auto grid = meshgrid<double>(5, 8);
        for (double m : mask.values()) EXPECT_DOUBLE_EQ(m, 1.0);
        for (std::size_t i = 0; i < coords.values().size(); ++i)
            EXPECT_NEAR(coords.values()[i], grid.values()[i], 1e-5);
    }
}

TEST(Warp, IdentityPoseReturnsReference) {
    Rng rng(31);
    TensorD ref = TensorD::random_uniform(rng, {3, 6, 9}, 0.0, 1.0);
    CameraIntrinsics k(40, 40, 4.5, 3.0);
    auto [warped, mask] = warp_reference(ref, constant_depth(6, 9, 2.0), k, PoseSE3::identity());
    for (double m : mask.values()) EXPECT_DOUBLE_EQ(m, 1.0);
    for (std::size_t i = 0; i < ref.values().size(); ++i) EXPECT_NEAR(warped.values()[i], ref.values()[i], 1e-9);
}

TEST(Warp, FrontoParallelTranslationShiftsSamples) {
    const Dim h = 8, w = 24;
    const double fx = 30.0, z = 2.5, tx = 0.25;  // shift = fx*tx/z = 3 px
    CameraIntrinsics k(fx, fx, w / 2.0, h / 2.0);
    TensorD ref = ramp_image(h, w);
    auto pose = PoseSE3::from_vector({0, 0, 0, tx, 0, 0});
    auto [warped, mask] = warp_reference(ref, constant_depth(h, w, z), k, pose);
    const double shift = fx * tx / z;
    int checked = 0;
    for (Dim y = 0; y < h; ++y)
        for (Dim x = 0; x < w; ++x) {
            if (mask.at({y, x}) < 0.5) continue;
            EXPECT_NEAR(warped.at({0, y, x}), (static_cast<double>(x) + shift) / w, 1e-9);
            ++checked;
        }
    EXPECT_GT(checked, static_cast<int>(h * (w - 4)));
}

TEST(Warp, YawHalfTurnEmptiesMask) {
    const Dim h = 6, w = 10;
    CameraIntrinsics k(20, 20, 5, 3);
    TensorD ref = ramp_image(h, w);
    auto pose = PoseSE3::from_vector({0, kPi, 0, 0, 0, 0});
    auto [warped, mask] = warp_reference(ref, constant_depth(h, w, 3.0), k, pose);
    double filled = 0;
    for (double m : mask.values()) filled += m;
    EXPECT_LT(filled / static_cast<double>(mask.numel()), 0.05);
}

TEST(Warp, GradientMatchesFiniteDifferences) {
    const Dim h = 6, w = 8;
    CameraIntrinsics k(25, 25, 4, 3);
    Rng rng(55);
    // Smooth low-frequency image so bilinear sampling is FD-friendly.
    std::vector<double> iv(static_cast<std::size_t>(3 * h * w));
    for (Dim c = 0; c < 3; ++c)
        for (Dim y = 0; y < h; ++y)
            for (Dim x = 0; x < w; ++x)
                iv[static_cast<std::size_t>((c * h + y) * w + x)] =
                    0.5 + 0.3 * std::sin(0.4 * x + 0.2 * c) * std::cos(0.5 * y);
    TensorD ref({3, h, w}, std::move(iv));
    TensorD target = ref.detached();
    TensorD depth = TensorD::random_uniform(rng, {h, w}, 2.0, 3.0);

    TensorD v0({6}, {0.01, -0.02, 0.015, 0.05, -0.03, 0.02});
    // Freeze the validity mask at the base pose so the finite-difference
    // probes measure the smooth part of the objective only.
    TensorD frozen_mask;
    {
        auto pt = pose_from_vector(v0);
        frozen_mask = warp_reference(ref, depth, k, pt.rotation, pt.translation).second;
    }
    auto loss_of = [&](const TensorD& v) {
        auto pt = pose_from_vector(v);
        auto [warped, mask] = warp_reference(ref, depth, k, pt.rotation, pt.translation);
        auto diffimg = sub(warped, target);
        return sum_all(mul_spatial(mul(diffimg, diffimg), frozen_mask));
    };
    auto rep = gradient_check<double>(loss_of, v0, 1e-6);
    EXPECT_LT(rep.max_relative_error, 1e-3);

    // Depth gradient on the same frozen-mask objective.
    auto loss_of_depth = [&](const TensorD& d) {
        auto pt = pose_from_vector(v0);
        auto [warped, mask] = warp_reference(ref, d, k, pt.rotation, pt.translation);
        auto diffimg = sub(warped, target);
        return sum_all(mul_spatial(mul(diffimg, diffimg), frozen_mask));
    };
    auto rep2 = gradient_check<double>(loss_of_depth, depth, 1e-5);
    EXPECT_LT(rep2.max_relative_error, 1e-3);
}

TEST(Rodrigues, GradientMatchesFiniteDifferences) {
    Rng rng(91);
    for (int trial = 0; trial < 20; ++trial) {
        TensorD w = TensorD::random_uniform(rng, {3}, -1.5, 1.5);
        TensorD proj = TensorD::random_normal(rng, {3, 3});
        auto f = [proj](const TensorD& x) { return sum_all(mul(rodrigues(x), proj)); };
        auto rep = gradient_check<double>(f, w, 1e-6);
        EXPECT_LT(rep.max_relative_error, 1e-3) << "angle trial " << trial;
    }
    // Near-zero angle branch.
    TensorD tiny({3}, {1e-6, -2e-6, 5e-7});
    TensorD proj = TensorD::random_normal(rng, {3, 3});
    auto f = [proj](const TensorD& x) { return sum_all(mul(rodrigues(x), proj)); };
    auto rep = gradient_check<double>(f, tiny, 1e-5);
    EXPECT_LT(rep.max_relative_error, 1e-3);
}

TEST(Intrinsics, Validation) {
    EXPECT_THROW(CameraIntrinsics(0, 1, 0, 0), ArgumentError);
    EXPECT_THROW(CameraIntrinsics(1, -1, 0, 0), ArgumentError);
    CameraIntrinsics k(100, 80, 32, 24);
    auto k2 = k.scaled_down(2);
    EXPECT_DOUBLE_EQ(k2.fx, 25.0);
    EXPECT_DOUBLE_EQ(k2.cy, 6.0);
}
