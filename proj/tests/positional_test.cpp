#include <cmath>

#include <gtest/gtest.h>

#include "poseflow/gradcheck.hpp"
#include "poseflow/positional.hpp"

using namespace poseflow;

namespace {

FlowField<double> make_flow_field(Rng& rng, Dim h, Dim w, double conf_value) {
    return {TensorD::random_uniform(rng, {h, w, 2}, -2.0, 2.0), TensorD::full({h, w, 1}, conf_value)};
}

}  // namespace

TEST(NormalizeUnitRange, LinearMap) {
    auto y = normalize_unit_range(TensorD({1, 1, 3}, {2.0, 4.0, 6.0}));
    EXPECT_DOUBLE_EQ(y.at({0, 0, 0}), 0.0);
    EXPECT_DOUBLE_EQ(y.at({0, 0, 1}), 0.5);
    EXPECT_DOUBLE_EQ(y.at({0, 0, 2}), 1.0);
}

TEST(NormalizeUnitRange, ConstantChannelGoesToZero) {
    auto y = normalize_unit_range(TensorD::full({2, 2, 2}, 5.0));
    for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(NormalizeUnitRange, FullRangeDataUnchanged) {
    TensorD x({1, 2, 2}, {0.0, 0.25, 0.75, 1.0});
    auto y = normalize_unit_range(x);
    for (std::size_t i = 0; i < x.values().size(); ++i) EXPECT_DOUBLE_EQ(y.values()[i], x.values()[i]);
}

TEST(NormalizeUnitRange, PerChannelIndependence) {
    TensorD x({2, 1, 2}, {0.0, 10.0, -4.0, -2.0});
    auto y = normalize_unit_range(x);
    EXPECT_DOUBLE_EQ(y.at({0, 0, 1}), 1.0);
    EXPECT_DOUBLE_EQ(y.at({1, 0, 0}), 0.0);
    EXPECT_DOUBLE_EQ(y.at({1, 0, 1}), 1.0);
}

TEST(Aggregate, ZeroConfidenceLeavesOnlyCloudTerm) {
    Rng rng(7);
    const Dim h = 4, w = 6;
    auto weights = PositionalWeights<double>::make(rng, 8, true);
    auto field = make_flow_field(rng, h, w, 0.0);
    TensorD abs_pos = meshgrid<double>(h, w);
    PointCloud<double> cloud{TensorD::random_uniform(rng, {h, w, 3}, 0.5, 4.0)};

    auto emb = aggregate(field, abs_pos, cloud, weights);
    auto cloud_only = weights.cloud(normalize_unit_range(permute(cloud.points, {2, 0, 1})));
    ASSERT_EQ(emb.values.shape(), cloud_only.shape());
    for (std::size_t i = 0; i < cloud_only.values().size(); ++i)
        EXPECT_EQ(emb.values.values()[i], cloud_only.values()[i]);
}

TEST(Aggregate, SharedWeightsDoubleIdenticalInputs) {
    Rng rng(11);
    const Dim h = 4, w = 4;
    auto weights = PositionalWeights<double>::make(rng, 8, true);
    // flow equal to the meshgrid so both planar inputs normalize identically
    FlowField<double> field{meshgrid<double>(h, w), TensorD::full({h, w, 1}, 0.7)};
    TensorD abs_pos = meshgrid<double>(h, w);
    PointCloud<double> cloud{TensorD::random_uniform(rng, {h, w, 3}, 0.5, 4.0)};

    auto emb = aggregate(field, abs_pos, cloud, weights);
    auto planar = weights.planar(normalize_unit_range(permute(abs_pos, {2, 0, 1})));
    auto expected = add(mul_spatial(planar * 2.0, TensorD::full({h, w}, 0.7)),
                        weights.cloud(normalize_unit_range(permute(cloud.points, {2, 0, 1}))));
    for (std::size_t i = 0; i < expected.values().size(); ++i)
        EXPECT_NEAR(emb.values.values()[i], expected.values()[i], 1e-13);
}

TEST(Aggregate, ZeroWeightsGiveZeroEmbedding) {
    Rng rng(13);
    const Dim h = 4, w = 4;
    PositionalWeights<double> weights{
        {Conv<double>{TensorD::zeros({4, 2, 3, 3}), TensorD::zeros({4}), 1, 1},
         Conv<double>{TensorD::zeros({8, 4, 3, 3}), TensorD::zeros({8}), 1, 1}},
        {Conv<double>{TensorD::zeros({4, 3, 3, 3}), TensorD::zeros({4}), 1, 1},
         Conv<double>{TensorD::zeros({8, 4, 3, 3}), TensorD::zeros({8}), 1, 1}}};
    auto field = make_flow_field(rng, h, w, 0.5);
    PointCloud<double> cloud{TensorD::random_uniform(rng, {h, w, 3}, 0.5, 4.0)};
    auto emb = aggregate(field, meshgrid<double>(h, w), cloud, weights);
    for (double v : emb.values.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Aggregate, ShapeContractAndMismatchError) {
    Rng rng(17);
    auto weights = PositionalWeights<double>::make(rng, 16, true);
    auto field = make_flow_field(rng, 6, 8, 0.5);
    PointCloud<double> cloud{TensorD::random_uniform(rng, {6, 8, 3}, 0.5, 4.0)};
    auto emb = aggregate(field, meshgrid<double>(6, 8), cloud, weights);
    EXPECT_EQ(emb.values.shape(), (Shape{16, 6, 8}));

    PointCloud<double> bad{TensorD::random_uniform(rng, {6, 7, 3}, 0.5, 4.0)};
    EXPECT_THROW(aggregate(field, meshgrid<double>(6, 8), bad, weights), ShapeError);
}

// Gradient w.r.t. the shared weights equals the sum of the two branch
// contributions computed in isolation.
TEST(Aggregate, SharedWeightGradientIsBranchSum) {
    Rng rng(19);
    const Dim h = 4, w = 5;
    auto weights = PositionalWeights<double>::make(rng, 6, true);
    auto field = make_flow_field(rng, h, w, 0.8);
    TensorD abs_pos = meshgrid<double>(h, w);
    PointCloud<double> cloud{TensorD::random_uniform(rng, {h, w, 3}, 0.5, 4.0)};
    TensorD proj = TensorD::random_normal(rng, {6, h, w});
    TensorD conf_map = TensorD::full({h, w}, 0.8);

    auto emb = aggregate(field, abs_pos, cloud, weights);
    backward(sum_all(mul(emb.values, proj)));
    const auto g_full = weights.planar.first.w.grad();

    auto sr = normalize_unit_range(permute(field.flow, {2, 0, 1}));
    backward(sum_all(mul(mul_spatial(weights.planar(sr), conf_map), proj)));
    const auto g_flow = weights.planar.first.w.grad();

    auto sa = normalize_unit_range(permute(abs_pos, {2, 0, 1}));
    backward(sum_all(mul(mul_spatial(weights.planar(sa), conf_map), proj)));
    const auto g_abs = weights.planar.first.w.grad();

    for (std::size_t i = 0; i < g_full.size(); ++i) EXPECT_NEAR(g_full[i], g_flow[i] + g_abs[i], 1e-9);
}

TEST(Aggregate, ZeroConfidenceBlocksPlanarGradient) {
    Rng rng(23);
    const Dim h = 4, w = 4;
    auto weights = PositionalWeights<double>::make(rng, 6, true);
    auto field = make_flow_field(rng, h, w, 0.0);
    PointCloud<double> cloud{TensorD::random_uniform(rng, {h, w, 3}, 0.5, 4.0)};
    auto emb = aggregate(field, meshgrid<double>(h, w), cloud, weights);
    backward(sum_all(emb.values));
    for (double g : weights.planar.first.w.grad()) EXPECT_DOUBLE_EQ(g, 0.0);
    for (double g : weights.planar.second.w.grad()) EXPECT_DOUBLE_EQ(g, 0.0);
    double cloud_norm = 0;
    for (double g : weights.cloud.first.w.grad()) cloud_norm += std::fabs(g);
    EXPECT_GT(cloud_norm, 0.0);
}

TEST(Aggregate, GradientMatchesFiniteDifferences) {
    Rng rng(29);
    const Dim h = 3, w = 4;
    auto weights = PositionalWeights<double>::make(rng, 4, true);
    TensorD abs_pos = meshgrid<double>(h, w);
    PointCloud<double> cloud{TensorD::random_uniform(rng, {h, w, 3}, 0.5, 4.0)};
    TensorD conf = TensorD::random_uniform(rng, {h, w, 1}, 0.2, 0.9);
    TensorD proj = TensorD::random_normal(rng, {4, h, w});

    auto f = [&](const TensorD& flow_in) {
        FlowField<double> field{flow_in, conf};
        return sum_all(mul(aggregate(field, abs_pos, cloud, weights).values, proj));
    };
    TensorD flow0 = TensorD::random_uniform(rng, {h, w, 2}, -2.0, 2.0);
    EXPECT_LT(gradient_check<double>(f, flow0, 1e-6).max_relative_error, 1e-3);
}
