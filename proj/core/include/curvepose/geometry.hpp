#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace curvepose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics (pixels). Skew couples y into the x pixel coordinate.
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double s = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    /// Throws ConfigError when fx/fy are not positive or the principal point
    /// lies outside the image.
    void validate() const;

    Mat3 matrix() const;

    /// Intrinsics of a 1920x1080 reference camera (fx=2670, fy=2250) scaled
    /// proportionally to the requested resolution.
    static CameraIntrinsics scaled_reference(int width, int height);

    bool operator==(const CameraIntrinsics&) const = default;
};

/// Pose of the cylinder frame expressed in the camera frame:
/// p_cam = R * p_cyl + t. The quaternion is kept normalised with w >= 0.
struct RigidPose {
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Vec3 translation = Vec3::Zero();

    RigidPose() = default;
    RigidPose(const Eigen::Quaterniond& q, const Vec3& t);

    static RigidPose identity() { return {}; }

    Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
};

/// Cylinder carrying a wrapped label. Lengths are in label heights (HoI),
/// so label_height is 1 and the curvature value equals the diameter.
struct CylinderModel {
    double diameter = 1.0;
    double label_width = 1.0;
    double label_height = 1.0;

    double radius() const { return 0.5 * diameter; }
    /// Angle subtended by the wrapped label, label_width / r.
    double arc_angle() const { return label_width / radius(); }

    /// Throws InvalidModelError for non-positive sizes, label_height != 1, or
    /// a label that would overlap itself (arc > 2*pi).
    void validate() const;
};

/// Position on the flat label in HoI; (0,0) is the top-left corner.
struct LabelPoint {
    double u = 0.0;
    double v = 0.0;
};

/// Wraps a flat label point onto the cylinder surface without stretching.
/// The label centre lands at (0, -r, 0) and +z points to the label top.
Vec3 label_to_cylinder(const LabelPoint& p, const CylinderModel& cyl);

/// Throws BehindCameraError for z <= 0.
Vec2 project_point(const CameraIntrinsics& K, const Vec3& p_cam);

/// Back-projects a pixel to a viewing direction with unit z.
Vec3 pixel_ray(const CameraIntrinsics& K, const Vec2& pixel);

Vec3 transform_point(const RigidPose& pose, const Vec3& p);

/// Intrinsic X-Y-Z Euler angles (radians): R = Rx(e0) * Ry(e1) * Rz(e2).
Eigen::Quaterniond euler_to_quaternion(const Vec3& euler);
/// Inverse of euler_to_quaternion. The middle angle lies in [-pi/2, pi/2];
/// at gimbal lock the last angle is set to 0.
Vec3 quaternion_to_euler(const Eigen::Quaterniond& q);

/// Returns q normalised with w >= 0.
Eigen::Quaterniond canonical(const Eigen::Quaterniond& q);

RigidPose pose_inverse(const RigidPose& pose);
/// compose(a, b) applies b first, then a.
RigidPose pose_compose(const RigidPose& a, const RigidPose& b);

/// Rotation exp map of an axis-angle vector.
Eigen::Quaterniond quaternion_exp(const Vec3& omega);

}  // namespace curvepose
