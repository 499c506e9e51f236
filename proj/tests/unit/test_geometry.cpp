#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "curvepose/errors.hpp"
#include "curvepose/geometry.hpp"

using namespace curvepose;
using std::numbers::pi;

namespace {

CameraIntrinsics reference_camera() {
    return {2670.0, 2250.0, 0.0, 960.0, 540.0, 1920, 1080};
}

}  // namespace

TEST(LabelToCylinder, CentreMapsToFront) {
    for (const double r : {0.3, 0.75, 2.0}) {
        const CylinderModel cyl{2 * r, 1.3333, 1.0};
        const Vec3 p = label_to_cylinder({1.3333 / 2, 0.5}, cyl);
        EXPECT_NEAR(p.x(), 0.0, 1e-15);
        EXPECT_NEAR(p.y(), -r, 1e-15);
        EXPECT_NEAR(p.z(), 0.0, 1e-15);
    }
}

TEST(LabelToCylinder, QuarterTurnReachesSide) {
    const double r = 0.75;
    const double w = 3.0;
    const Vec3 p = label_to_cylinder({w / 2 + r * pi / 2, 0.5}, {2 * r, w, 1.0});
    EXPECT_NEAR(p.x(), 0.75, 1e-12);
    EXPECT_NEAR(p.y(), 0.0, 1e-12);
    EXPECT_NEAR(p.z(), 0.0, 1e-12);
}

TEST(LabelToCylinder, TopLeftCorner) {
    // Reference values evaluated at 30 significant digits.
    const Vec3 p = label_to_cylinder({0.0, 0.0}, {1.5, 1.3333, 1.0});
    EXPECT_NEAR(p.x(), -0.582268436247541597, 1e-12);
    EXPECT_NEAR(p.y(), -0.472719227607511842, 1e-12);
    EXPECT_NEAR(p.z(), 0.5, 1e-15);
}

TEST(LabelToCylinder, RejectsSelfOverlap) {
    EXPECT_THROW(label_to_cylinder({0.0, 0.0}, {0.4, 1.3333, 1.0}), InvalidModelError);
    EXPECT_THROW(label_to_cylinder({0.0, 0.0}, {1.0, 1.0, 2.0}), InvalidModelError);
    EXPECT_THROW(label_to_cylinder({0.0, 0.0}, {-1.0, 1.0, 1.0}), InvalidModelError);
}

TEST(LabelToCylinder, PointsLieOnSurfaceAndPreserveArcLength) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const double w = 0.5 + 2.0 * U(rng);
        const double d = w * (1.0 + U(rng));
        const CylinderModel cyl{d, w, 1.0};
        const double v = U(rng);
        const double u1 = w * U(rng);
        const double u2 = w * U(rng);
        const Vec3 a = label_to_cylinder({u1, v}, cyl);
        const Vec3 b = label_to_cylinder({u2, v}, cyl);
        EXPECT_NEAR(a.head<2>().squaredNorm(), cyl.radius() * cyl.radius(), 1e-9);
        const double dtheta = std::atan2(a.x() * b.y() - a.y() * b.x(), a.head<2>().dot(b.head<2>()));
        EXPECT_NEAR(cyl.radius() * std::abs(dtheta), std::abs(u1 - u2), 1e-9);
        EXPECT_DOUBLE_EQ(a.z(), b.z());
    }
}

TEST(ProjectPoint, ReferenceCamera) {
    const auto K = reference_camera();
    const Vec2 c = project_point(K, {0, 0, 1});
    EXPECT_DOUBLE_EQ(c.x(), 960.0);
    EXPECT_DOUBLE_EQ(c.y(), 540.0);
    const Vec2 p = project_point(K, {0.1, 0.2, 1});
    EXPECT_NEAR(p.x(), 1227.0, 1e-9);
    EXPECT_NEAR(p.y(), 990.0, 1e-9);
    EXPECT_THROW(project_point(K, {0, 0, -1}), BehindCameraError);
    EXPECT_THROW(project_point(K, {1, 0, 0}), BehindCameraError);
}

TEST(ProjectPoint, SkewAndHomogeneity) {
    CameraIntrinsics K = reference_camera();
    K.s = 3.0;
    const Vec3 p(0.3, -0.2, 2.5);
    const Vec2 a = project_point(K, p);
    EXPECT_NEAR(a.x(), (2670.0 * 0.3 + 3.0 * -0.2) / 2.5 + 960.0, 1e-12);
    for (const double lambda : {0.01, 0.5, 7.0, 1e4}) {
        EXPECT_NEAR((project_point(K, lambda * p) - a).norm(), 0.0, 1e-9);
    }
    const Vec3 ray = pixel_ray(K, a);
    EXPECT_NEAR(ray.z(), 1.0, 1e-15);
    EXPECT_NEAR((ray * 2.5 - p).norm(), 0.0, 1e-12);
}

TEST(Intrinsics, ValidateAndScale) {
    EXPECT_NO_THROW(reference_camera().validate());
    CameraIntrinsics bad = reference_camera();
    bad.fx = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = reference_camera();
    bad.cx = 1920;
    EXPECT_THROW(bad.validate(), ConfigError);
    const auto k = CameraIntrinsics::scaled_reference(640, 480);
    EXPECT_NEAR(k.fx, 2670.0 / 3.0, 1e-12);
    EXPECT_NEAR(k.fy, 1000.0, 1e-12);
    EXPECT_EQ(k.width, 640);
}

TEST(Transform, Basics) {
    const Vec3 p(1.0, 2.0, 3.0);
    EXPECT_EQ(transform_point(RigidPose::identity(), p), p);
    const RigidPose t(Eigen::Quaterniond::Identity(), Vec3(4, 5, 6));
    EXPECT_EQ(transform_point(t, Vec3::Zero()), Vec3(4, 5, 6));
    const RigidPose rz(Eigen::Quaterniond(Eigen::AngleAxisd(pi / 2, Vec3::UnitZ())), Vec3::Zero());
    EXPECT_NEAR((transform_point(rz, Vec3::UnitX()) - Vec3::UnitY()).norm(), 0.0, 1e-15);
}

TEST(Euler, KnownValues) {
    const auto q0 = euler_to_quaternion({0, 0, 0});
    EXPECT_DOUBLE_EQ(q0.w(), 1.0);
    const auto q = canonical(euler_to_quaternion({pi, 0, 0}));
    EXPECT_NEAR(std::abs(q.x()), 1.0, 1e-15);
    EXPECT_NEAR(q.w(), 0.0, 1e-15);
    // Intrinsic XYZ: R = Rx * Ry * Rz.
    const Vec3 e(0.3, -0.4, 0.5);
    const Mat3 R = (Eigen::AngleAxisd(e.x(), Vec3::UnitX()) * Eigen::AngleAxisd(e.y(), Vec3::UnitY()) *
                    Eigen::AngleAxisd(e.z(), Vec3::UnitZ()))
                       .toRotationMatrix();
    EXPECT_NEAR((euler_to_quaternion(e).toRotationMatrix() - R).norm(), 0.0, 1e-14);
}

TEST(Euler, RoundTrip) {
    const Vec3 sample(-1.6166, -0.1995, -0.1264);
    const auto q = euler_to_quaternion(sample);
    EXPECT_NEAR(q.norm(), 1.0, 1e-12);
    EXPECT_NEAR((quaternion_to_euler(q) - sample).norm(), 0.0, 1e-9);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> a(-pi + 1e-3, pi - 1e-3);
    std::uniform_real_distribution<double> b(-pi / 2 + 0.01, pi / 2 - 0.01);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 e(a(rng), b(rng), a(rng));
        EXPECT_NEAR((quaternion_to_euler(euler_to_quaternion(e)) - e).norm(), 0.0, 1e-9);
    }
}

TEST(Euler, GimbalLockGivesSameRotation) {
    const Vec3 e(0.4, pi / 2, 0.7);
    const auto q = euler_to_quaternion(e);
    const Vec3 back = quaternion_to_euler(q);
    EXPECT_DOUBLE_EQ(back.z(), 0.0);
    EXPECT_NEAR((euler_to_quaternion(back).toRotationMatrix() - q.toRotationMatrix()).norm(), 0.0, 1e-9);
}

TEST(RigidPose, CanonicalSign) {
    const RigidPose p(Eigen::Quaterniond(-0.5, 0.5, 0.5, 0.5), Vec3::Zero());
    EXPECT_GE(p.rotation.w(), 0.0);
    EXPECT_NEAR(p.rotation.norm(), 1.0, 1e-15);
    const RigidPose q(Eigen::Quaterniond(2.0, 0.0, 0.0, 0.0), Vec3::Zero());
    EXPECT_NEAR(q.rotation.norm(), 1.0, 1e-15);
}

TEST(RigidPose, InverseAndCompose) {
    const RigidPose id = pose_inverse(RigidPose::identity());
    EXPECT_NEAR(id.translation.norm(), 0.0, 1e-15);
    EXPECT_NEAR(id.rotation.w(), 1.0, 1e-15);

    const RigidPose px(Eigen::Quaterniond::Identity(), Vec3(1, 0, 0));
    const RigidPose mx(Eigen::Quaterniond::Identity(), Vec3(-1, 0, 0));
    EXPECT_NEAR(pose_compose(px, mx).translation.norm(), 0.0, 1e-15);

    const Eigen::Quaterniond rz90(Eigen::AngleAxisd(pi / 2, Vec3::UnitZ()));
    const RigidPose r(rz90, Vec3::Zero());
    const Mat3 expected = Eigen::AngleAxisd(pi, Vec3::UnitZ()).toRotationMatrix();
    EXPECT_NEAR((pose_compose(r, r).rotation_matrix() - expected).norm(), 0.0, 1e-12);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const RigidPose a(Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)), Vec3(n(rng), n(rng), n(rng)));
        const RigidPose c = pose_compose(a, pose_inverse(a));
        EXPECT_NEAR(c.translation.norm(), 0.0, 1e-9);
        EXPECT_NEAR(std::abs(c.rotation.w()), 1.0, 1e-9);
        const Vec3 p(n(rng), n(rng), n(rng));
        const RigidPose b(Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)), Vec3(n(rng), n(rng), n(rng)));
        EXPECT_NEAR((transform_point(pose_compose(a, b), p) - transform_point(a, transform_point(b, p))).norm(), 0.0,
                    1e-9);
    }
}

TEST(QuaternionExp, MatchesAngleAxis) {
    const Vec3 w(0.1, -0.2, 0.3);
    const Mat3 expected = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
    EXPECT_NEAR((quaternion_exp(w).toRotationMatrix() - expected).norm(), 0.0, 1e-14);
    EXPECT_NEAR(quaternion_exp(Vec3::Zero()).w(), 1.0, 1e-15);
}
