#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "curvepose/errors.hpp"
#include "curvepose/metrics.hpp"
#include "curvepose/pose.hpp"
#include "gradcheck.hpp"
#include "pose_fixture.hpp"

namespace curvepose {
namespace {

using fixture::make_set;

TEST(Dlt, RecoversExactPose) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto s = make_set(rng, 12);
        const RigidPose p = pnp_dlt(s.corr, fixture::camera());
        EXPECT_LT(rotation_error(p.rotation, s.truth.rotation), 1e-6);
        EXPECT_LT(fixture::translation_gap(p, s.truth), 1e-6);
    }
}

TEST(Dlt, SixPointsSuffice) {
    std::mt19937_64 rng(2);
    const auto s = make_set(rng, 6);
    const RigidPose p = pnp_dlt(s.corr, fixture::camera());
    EXPECT_LT(rotation_error(p.rotation, s.truth.rotation), 1e-6);
}

TEST(Dlt, TooFewPointsThrow) {
    std::mt19937_64 rng(3);
    auto s = make_set(rng, 5);
    EXPECT_THROW(pnp_dlt(s.corr, fixture::camera()), DegenerateError);
}

TEST(Dlt, CollinearPointsThrow) {
    const auto K = fixture::camera();
    const RigidPose pose(Eigen::Quaterniond::Identity(), Vec3(0, 0, 5));
    std::vector<Correspondence> corr;
    for (int i = 0; i < 8; ++i) {
        const Vec3 X(0.1 * i, 0.05 * i, 0.02 * i);
        corr.push_back({X, project_point(K, transform_point(pose, X))});
    }
    EXPECT_THROW(pnp_dlt(corr, K), DegenerateError);
}

TEST(Dlt, CoplanarPointsThrow) {
    const auto K = fixture::camera();
    const RigidPose pose(euler_to_quaternion(Vec3(0.3, -0.2, 0.1)), Vec3(0.1, 0, 5));
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Correspondence> corr;
    for (int i = 0; i < 12; ++i) {
        const Vec3 X(u(rng), u(rng), 0.0);
        corr.push_back({X, project_point(K, transform_point(pose, X))});
    }
    EXPECT_THROW(pnp_dlt(corr, K), DegenerateError);
}

TEST(Reprojection, BehindCameraIsInfinite) {
    const auto K = fixture::camera();
    const RigidPose pose(Eigen::Quaterniond::Identity(), Vec3(0, 0, -5));
    const Correspondence c{Vec3::Zero(), Vec2(320, 240)};
    EXPECT_TRUE(std::isinf(reprojection_error(pose, c, K)));
    EXPECT_TRUE(std::isinf(reprojection_cost(pose, {c}, K)));
}

TEST(Lm, JacobianMatchesFiniteDifferences) {
    EXPECT_LE(gradcheck::reprojection(20, 5), 1e-4);
}

TEST(Lm, StationaryAtOptimum) {
    std::mt19937_64 rng(6);
    const auto s = make_set(rng, 30);
    const RigidPose p = refine_pose_lm(s.truth, s.corr, fixture::camera());
    EXPECT_LT(rotation_error(p.rotation, s.truth.rotation), 1e-9);
    EXPECT_LT(fixture::translation_gap(p, s.truth), 1e-9);
}

TEST(Lm, RecoversFromPerturbation) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 0.05);
    for (int trial = 0; trial < 20; ++trial) {
        const auto s = make_set(rng, 30);
        Vec6 d;
        for (int i = 0; i < 6; ++i) d[i] = n(rng);
        const RigidPose p = refine_pose_lm(apply_pose_update(s.truth, d), s.corr, fixture::camera());
        EXPECT_LT(rotation_error(p.rotation, s.truth.rotation), 1e-6);
        EXPECT_LT(fixture::translation_gap(p, s.truth), 1e-6);
    }
}

TEST(Lm, CostNeverIncreases) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 0.3);
    const auto K = fixture::camera();
    for (int trial = 0; trial < 30; ++trial) {
        const auto s = make_set(rng, 20, 4, 0.5);
        Vec6 d;
        for (int i = 0; i < 6; ++i) d[i] = n(rng);
        const RigidPose start = apply_pose_update(s.truth, d);
        const double before = reprojection_cost(start, s.corr, K);
        if (!std::isfinite(before)) continue;
        for (int iters : {1, 3, 100}) {
            const RigidPose p = refine_pose_lm(start, s.corr, K, {iters, 1e-3});
            EXPECT_LE(reprojection_cost(p, s.corr, K), before);
        }
    }
}

TEST(Lm, NonFiniteStartThrows) {
    const auto K = fixture::camera();
    const RigidPose pose(Eigen::Quaterniond::Identity(), Vec3(0, 0, -5));
    EXPECT_THROW(refine_pose_lm(pose, {{Vec3::Zero(), Vec2(1, 1)}}, K), NumericError);
}

TEST(Ransac, ExactCorrespondences) {
    std::mt19937_64 rng(9);
    const auto s = make_set(rng, 100);
    std::mt19937_64 r(1);
    const PoseEstimate e = ransac_pnp(s.corr, fixture::camera(), {}, r);
    EXPECT_EQ(e.inlier_indices.size(), 100u);
    EXPECT_LT(rotation_error(e.pose.rotation, s.truth.rotation), 1e-6);
    EXPECT_LT(fixture::translation_gap(e.pose, s.truth), 1e-6);
    EXPECT_NEAR(e.pose.rotation.norm(), 1.0, 1e-12);
}

TEST(Ransac, RejectsPlantedOutliers) {
    std::mt19937_64 rng(10);
    const RansacParams params;
    const auto s = make_set(rng, 70, 30, 0.0, 3.0 * params.inlier_threshold);
    std::mt19937_64 r(2);
    const PoseEstimate e = ransac_pnp(s.corr, fixture::camera(), params, r);
    EXPECT_EQ(e.inlier_indices.size(), 70u);
    for (int o : s.outliers) {
        EXPECT_EQ(std::count(e.inlier_indices.begin(), e.inlier_indices.end(), o), 0);
    }
    EXPECT_LT(rotation_error(e.pose.rotation, s.truth.rotation), 1e-6);
    EXPECT_LE(e.mean_reprojection_error, params.inlier_threshold);
}

TEST(Ransac, NoisyInliersStayWithinThreshold) {
    std::mt19937_64 rng(11);
    RansacParams params;
    const auto s = make_set(rng, 80, 20, 0.5, 3.0 * params.inlier_threshold);
    std::mt19937_64 r(3);
    const PoseEstimate e = ransac_pnp(s.corr, fixture::camera(), params, r);
    EXPECT_LE(e.mean_reprojection_error, params.inlier_threshold);
    EXPECT_GE(e.inlier_indices.size(), 75u);
    EXPECT_LT(rotation_error(e.pose.rotation, s.truth.rotation), 0.02);
}

TEST(Ransac, TooSmallConsensusThrows) {
    std::mt19937_64 rng(12);
    const auto s = make_set(rng, 50, 50, 0.0, 6.0);
    RansacParams params;
    params.min_inliers = 60;
    std::mt19937_64 r(4);
    EXPECT_THROW(ransac_pnp(s.corr, fixture::camera(), params, r), NoPoseError);
}

TEST(Ransac, TooFewCorrespondencesThrow) {
    std::mt19937_64 rng(13);
    const auto s = make_set(rng, 5);
    std::mt19937_64 r(5);
    EXPECT_THROW(ransac_pnp(s.corr, fixture::camera(), {}, r), NoPoseError);
}

TEST(Ransac, PermutationInvariant) {
    std::mt19937_64 rng(14);
    const auto s = make_set(rng, 60, 20, 0.3, 6.0);
    auto shuffled = s.corr;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::mt19937_64 r1(6), r2(7);
    const PoseEstimate a = ransac_pnp(s.corr, fixture::camera(), {}, r1);
    const PoseEstimate b = ransac_pnp(shuffled, fixture::camera(), {}, r2);
    EXPECT_EQ(a.inlier_indices.size(), b.inlier_indices.size());
    EXPECT_LT(rotation_error(a.pose.rotation, b.pose.rotation), 1e-6);
    EXPECT_LT(fixture::translation_gap(a.pose, b.pose), 1e-6);
}

TEST(Ransac, Deterministic) {
    std::mt19937_64 rng(15);
    const auto s = make_set(rng, 40, 20, 0.5, 6.0);
    std::mt19937_64 r1(8), r2(8);
    const PoseEstimate a = ransac_pnp(s.corr, fixture::camera(), {}, r1);
    const PoseEstimate b = ransac_pnp(s.corr, fixture::camera(), {}, r2);
    EXPECT_EQ(a.inlier_indices, b.inlier_indices);
    EXPECT_EQ(a.pose.translation, b.pose.translation);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Ransac, ParamsValidation) {
    RansacParams p;
    p.confidence = 1.0;
    EXPECT_THROW(p.validate(), ConfigError);
    p = {};
    p.inlier_threshold = 0.0;
    EXPECT_THROW(p.validate(), ConfigError);
    p = {};
    EXPECT_EQ(p.required_inliers(20), 8);
    EXPECT_EQ(p.required_inliers(100), 15);
    p.min_inliers = 30;
    EXPECT_EQ(p.required_inliers(100), 30);
}

TEST(Ransac, NonFiniteInputThrows) {
    std::mt19937_64 rng(16);
    auto s = make_set(rng, 20);
    s.corr[3].image_point.x() = std::nan("");
    std::mt19937_64 r(9);
    EXPECT_THROW(ransac_pnp(s.corr, fixture::camera(), {}, r), NumericError);
}

}  // namespace
}  // namespace curvepose
