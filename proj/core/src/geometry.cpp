#include "curvepose/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "curvepose/errors.hpp"

namespace curvepose {

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw ConfigError("intrinsics: focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw ConfigError("intrinsics: image size must be positive");
    }
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
        throw ConfigError("intrinsics: principal point outside image");
    }
}

Mat3 CameraIntrinsics::matrix() const {
    Mat3 K;
    K << fx, s, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return K;
}

CameraIntrinsics CameraIntrinsics::scaled_reference(int width, int height) {
    const double sx = width / 1920.0;
    const double sy = height / 1080.0;
    return CameraIntrinsics{2670.0 * sx, 2250.0 * sy, 0.0, 0.5 * width, 0.5 * height, width, height};
}

RigidPose::RigidPose(const Eigen::Quaterniond& q, const Vec3& t) : rotation(canonical(q)), translation(t) {}

void CylinderModel::validate() const {
    if (!(diameter > 0.0) || !(label_width > 0.0)) {
        throw InvalidModelError("cylinder: diameter and label width must be positive");
    }
    if (label_height != 1.0) {
        throw InvalidModelError("cylinder: label height is the unit of length and must be 1");
    }
    if (arc_angle() > 2.0 * std::numbers::pi) {
        throw InvalidModelError("cylinder: label arc " + std::to_string(arc_angle()) +
                                " rad exceeds 2*pi, label would overlap itself");
    }
}

Vec3 label_to_cylinder(const LabelPoint& p, const CylinderModel& cyl) {
    cyl.validate();
    const double r = cyl.radius();
    const double theta = (p.u - 0.5 * cyl.label_width) / r;
    return {r * std::sin(theta), -r * std::cos(theta), 0.5 * cyl.label_height - p.v};
}

Vec2 project_point(const CameraIntrinsics& K, const Vec3& p) {
    if (!(p.z() > 0.0)) {
        throw BehindCameraError("project_point: point is not in front of the camera");
    }
    return {(K.fx * p.x() + K.s * p.y()) / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy};
}

Vec3 pixel_ray(const CameraIntrinsics& K, const Vec2& pixel) {
    const double y = (pixel.y() - K.cy) / K.fy;
    const double x = (pixel.x() - K.cx - K.s * y) / K.fx;
    return {x, y, 1.0};
}

Vec3 transform_point(const RigidPose& pose, const Vec3& p) {
    return pose.rotation * p + pose.translation;
}

Eigen::Quaterniond canonical(const Eigen::Quaterniond& q) {
    Eigen::Quaterniond n = q.normalized();
    if (n.w() < 0.0) {
        n.coeffs() = -n.coeffs();
    }
    return n;
}

Eigen::Quaterniond euler_to_quaternion(const Vec3& e) {
    const Eigen::Quaterniond q = Eigen::AngleAxisd(e.x(), Vec3::UnitX()) *
                                 Eigen::AngleAxisd(e.y(), Vec3::UnitY()) *
                                 Eigen::AngleAxisd(e.z(), Vec3::UnitZ());
    return canonical(q);
}

Vec3 quaternion_to_euler(const Eigen::Quaterniond& q) {
    // R = Rx(a) Ry(b) Rz(c):
    //   R02 = sin b, R12 = -sin a cos b, R22 = cos a cos b,
    //   R01 = -cos b sin c, R00 = cos b cos c
    const Mat3 R = q.normalized().toRotationMatrix();
    const double sb = std::clamp(R(0, 2), -1.0, 1.0);
    const double b = std::asin(sb);
    if (std::abs(sb) > 1.0 - 1e-12) {
        // Gimbal lock: only a +/- c is observable; report c = 0.
        const double a = std::atan2(R(2, 1), R(1, 1));
        return {a, b, 0.0};
    }
    const double a = std::atan2(-R(1, 2), R(2, 2));
    const double c = std::atan2(-R(0, 1), R(0, 0));
    return {a, b, c};
}

RigidPose pose_inverse(const RigidPose& pose) {
    const Eigen::Quaterniond qi = pose.rotation.conjugate();
    return RigidPose(qi, -(qi * pose.translation));
}

RigidPose pose_compose(const RigidPose& a, const RigidPose& b) {
    return RigidPose(a.rotation * b.rotation, a.rotation * b.translation + a.translation);
}

Eigen::Quaterniond quaternion_exp(const Vec3& omega) {
    const double angle = omega.norm();
    if (angle < 1e-12) {
        Eigen::Quaterniond q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
        return q.normalized();
    }
    return Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle));
}

}  // namespace curvepose
