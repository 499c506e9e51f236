#pragma once

#include <random>
#include <vector>

#include <Eigen/Core>

#include "curvepose/geometry.hpp"

namespace curvepose {

/// 3D point on the cylinder (HoI, cylinder frame) and its pixel.
struct Correspondence {
    Vec3 object_point = Vec3::Zero();
    Vec2 image_point = Vec2::Zero();
};

struct RansacParams {
    int max_iterations = 1000;
    /// Reprojection distance (px) below which a correspondence is an inlier.
    double inlier_threshold = 2.0;
    double confidence = 0.99;
    /// 0 selects max(8, 15% of the correspondences).
    int min_inliers = 0;
    /// Run a few LM steps on each six-point hypothesis before scoring it.
    bool polish_hypotheses = true;

    void validate() const;
    int required_inliers(std::size_t n) const;
};

struct PoseEstimate {
    RigidPose pose;
    std::vector<int> inlier_indices;
    /// Mean reprojection distance over the inliers.
    double mean_reprojection_error = 0.0;
    int iterations = 0;
};

using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Linear pose from >= 6 correspondences (normalised DLT on calibrated rays).
/// Throws DegenerateError for too few points or a rank-deficient system.
RigidPose pnp_dlt(const std::vector<Correspondence>& corr, const CameraIntrinsics& K);

/// Pixel distance between the projection and the observation; infinity when
/// the point is not in front of the camera.
double reprojection_error(const RigidPose& pose, const Correspondence& c, const CameraIntrinsics& K);

/// Sum of squared reprojection residuals; infinity if any point is behind the camera.
double reprojection_cost(const RigidPose& pose, const std::vector<Correspondence>& corr, const CameraIntrinsics& K);

/// Stacked (du, dv) residuals, projection minus observation.
Eigen::VectorXd reprojection_residuals(const RigidPose& pose, const std::vector<Correspondence>& corr,
                                       const CameraIntrinsics& K);

/// Jacobian of the residuals with respect to the update of apply_pose_update
/// at zero (rotation tangent first, then translation).
Eigen::MatrixXd reprojection_jacobian(const RigidPose& pose, const std::vector<Correspondence>& corr,
                                      const CameraIntrinsics& K);

/// R <- exp(delta[0:3]) * R, t <- t + delta[3:6].
RigidPose apply_pose_update(const RigidPose& pose, const Vec6& delta);

struct LmOptions {
    int max_iterations = 100;
    double initial_lambda = 1e-3;
};

/// Levenberg-Marquardt on the reprojection cost. Never returns a pose with a
/// higher cost than `initial`. Throws NumericError for non-finite residuals.
RigidPose refine_pose_lm(const RigidPose& initial, const std::vector<Correspondence>& corr,
                         const CameraIntrinsics& K, const LmOptions& options = {});

/// Six-point RANSAC around pnp_dlt with adaptive stopping, followed by LM on
/// the consensus set. Throws NoPoseError when the consensus is too small.
PoseEstimate ransac_pnp(const std::vector<Correspondence>& corr, const CameraIntrinsics& K,
                        const RansacParams& params, std::mt19937_64& rng);

}  // namespace curvepose
