#include "curvepose/pose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "curvepose/errors.hpp"

namespace curvepose {

namespace {

constexpr int kSampleSize = 6;
constexpr double kInf = std::numeric_limits<double>::infinity();

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

// Similarity that moves the centroid to the origin and sets the mean distance to sqrt(dim).
template <int D>
Eigen::Matrix<double, D + 1, D + 1> normalizing_transform(const std::vector<Eigen::Matrix<double, D, 1>>& pts) {
    Eigen::Matrix<double, D, 1> mean = Eigen::Matrix<double, D, 1>::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    double dist = 0.0;
    for (const auto& p : pts) dist += (p - mean).norm();
    dist /= static_cast<double>(pts.size());
    const double s = dist > 0.0 ? std::sqrt(static_cast<double>(D)) / dist : 1.0;
    Eigen::Matrix<double, D + 1, D + 1> T = Eigen::Matrix<double, D + 1, D + 1>::Identity();
    T.template topLeftCorner<D, D>() *= s;
    T.template topRightCorner<D, 1>() = -s * mean;
    return T;
}

}  // namespace

void RansacParams::validate() const {
    if (!(inlier_threshold > 0.0)) {
        throw ConfigError("ransac: inlier threshold must be positive");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw ConfigError("ransac: confidence must lie in (0, 1)");
    }
    if (max_iterations < 1 || min_inliers < 0) {
        throw ConfigError("ransac: max_iterations must be >= 1 and min_inliers >= 0");
    }
}

int RansacParams::required_inliers(std::size_t n) const {
    if (min_inliers > 0) {
        return min_inliers;
    }
    return std::max(8, static_cast<int>(std::ceil(0.15 * static_cast<double>(n))));
}

RigidPose pnp_dlt(const std::vector<Correspondence>& corr, const CameraIntrinsics& K) {
    const std::size_t n = corr.size();
    if (n < kSampleSize) {
        throw DegenerateError("pnp_dlt: need at least 6 correspondences, got " + std::to_string(n));
    }
    const Mat3 Kinv = K.matrix().inverse();
    std::vector<Vec2> rays(n);
    std::vector<Vec3> obj(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 r = Kinv * corr[i].image_point.homogeneous();
        rays[i] = r.hnormalized();
        obj[i] = corr[i].object_point;
    }
    const Eigen::Matrix3d T2 = normalizing_transform<2>(rays);
    const Eigen::Matrix4d T3 = normalizing_transform<3>(obj);

    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& r : rays) {
        const Vec2 q = (T2 * r.homogeneous()).head<2>();
        cov += q * q.transpose();
    }
    const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues();
    if (!(ev(0) > 1e-12 * ev(1))) {
        throw DegenerateError("pnp_dlt: image points are collinear");
    }

    Eigen::MatrixXd A(2 * n, 12);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d x = T2 * rays[i].homogeneous();
        const Eigen::RowVector4d X = (T3 * obj[i].homogeneous()).transpose();
        const auto row = static_cast<Eigen::Index>(2 * i);
        A.row(row) << X, Eigen::RowVector4d::Zero(), -x.x() * X;
        A.row(row + 1) << Eigen::RowVector4d::Zero(), X, -x.y() * X;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (!(sv(10) > 1e-9 * sv(0))) {
        throw DegenerateError("pnp_dlt: rank-deficient system (coplanar or degenerate points)");
    }
    const Eigen::VectorXd p = svd.matrixV().col(11);
    Eigen::Matrix<double, 3, 4> Pn;
    Pn << p.segment<4>(0).transpose(), p.segment<4>(4).transpose(), p.segment<4>(8).transpose();
    Eigen::Matrix<double, 3, 4> P = T2.inverse() * Pn * T3;

    int in_front = 0;
    for (const auto& X : obj) {
        if (P.row(2).dot(X.homogeneous()) > 0.0) ++in_front;
    }
    if (2 * in_front < static_cast<int>(n)) {
        P = -P;
    }

    const Mat3 M = P.leftCols<3>();
    Eigen::JacobiSVD<Mat3> msvd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 D = Mat3::Identity();
    D(2, 2) = (msvd.matrixU() * msvd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    const Mat3 R = msvd.matrixU() * D * msvd.matrixV().transpose();
    const double scale = msvd.singularValues().mean();
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw DegenerateError("pnp_dlt: degenerate projection matrix");
    }
    const Vec3 t = P.col(3) / scale;
    return RigidPose(Eigen::Quaterniond(R), t);
}

double reprojection_error(const RigidPose& pose, const Correspondence& c, const CameraIntrinsics& K) {
    const Vec3 pc = transform_point(pose, c.object_point);
    if (!(pc.z() > 0.0)) {
        return kInf;
    }
    return (project_point(K, pc) - c.image_point).norm();
}

double reprojection_cost(const RigidPose& pose, const std::vector<Correspondence>& corr, const CameraIntrinsics& K) {
    double cost = 0.0;
    for (const auto& c : corr) {
        const double e = reprojection_error(pose, c, K);
        cost += e * e;
    }
    return cost;
}

Eigen::VectorXd reprojection_residuals(const RigidPose& pose, const std::vector<Correspondence>& corr,
                                       const CameraIntrinsics& K) {
    Eigen::VectorXd r(2 * corr.size());
    for (std::size_t i = 0; i < corr.size(); ++i) {
        r.segment<2>(2 * static_cast<Eigen::Index>(i)) =
            project_point(K, transform_point(pose, corr[i].object_point)) - corr[i].image_point;
    }
    return r;
}

Eigen::MatrixXd reprojection_jacobian(const RigidPose& pose, const std::vector<Correspondence>& corr,
                                      const CameraIntrinsics& K) {
    const Mat3 R = pose.rotation_matrix();
    Eigen::MatrixXd J(2 * corr.size(), 6);
    for (std::size_t i = 0; i < corr.size(); ++i) {
        const Vec3 rx = R * corr[i].object_point;
        const Vec3 pc = rx + pose.translation;
        const double iz = 1.0 / pc.z();
        Eigen::Matrix<double, 2, 3> dproj;
        dproj << K.fx * iz, K.s * iz, -(K.fx * pc.x() + K.s * pc.y()) * iz * iz,
                 0.0, K.fy * iz, -K.fy * pc.y() * iz * iz;
        Eigen::Matrix<double, 3, 6> dpc;
        dpc << -skew(rx), Mat3::Identity();
        J.middleRows<2>(2 * static_cast<Eigen::Index>(i)) = dproj * dpc;
    }
    return J;
}

RigidPose apply_pose_update(const RigidPose& pose, const Vec6& delta) {
    return RigidPose(quaternion_exp(delta.head<3>()) * pose.rotation, pose.translation + delta.tail<3>());
}

RigidPose refine_pose_lm(const RigidPose& initial, const std::vector<Correspondence>& corr,
                         const CameraIntrinsics& K, const LmOptions& options) {
    double cost = reprojection_cost(initial, corr, K);
    if (!std::isfinite(cost)) {
        throw NumericError("refine_pose_lm: non-finite residuals at the initial pose");
    }
    RigidPose x = initial;
    double lambda = options.initial_lambda;
    for (int it = 0; it < options.max_iterations && cost > 0.0; ++it) {
        const Eigen::VectorXd r = reprojection_residuals(x, corr, K);
        const Eigen::MatrixXd J = reprojection_jacobian(x, corr, K);
        const Eigen::Matrix<double, 6, 6> H = J.transpose() * J;
        const Vec6 g = J.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < 1e-14) {
            break;
        }
        bool accepted = false;
        while (lambda < 1e12) {
            Eigen::Matrix<double, 6, 6> A = H;
            A.diagonal() += lambda * (H.diagonal().array() + 1e-12).matrix();
            const Vec6 delta = A.ldlt().solve(-g);
            const RigidPose cand = apply_pose_update(x, delta);
            const double c = reprojection_cost(cand, corr, K);
            if (std::isfinite(c) && c < cost) {
                const double gain = cost - c;
                x = cand;
                cost = c;
                lambda = std::max(lambda * 0.1, 1e-12);
                accepted = true;
                if (gain <= 1e-14 * c || delta.lpNorm<Eigen::Infinity>() < 1e-14) {
                    return x;
                }
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            break;
        }
    }
    return x;
}

PoseEstimate ransac_pnp(const std::vector<Correspondence>& corr, const CameraIntrinsics& K,
                        const RansacParams& params, std::mt19937_64& rng) {
    params.validate();
    const std::size_t n = corr.size();
    const int required = params.required_inliers(n);
    if (n < kSampleSize) {
        throw NoPoseError("ransac_pnp: " + std::to_string(n) + " correspondences, need at least 6");
    }
    for (const auto& c : corr) {
        if (!c.object_point.allFinite() || !c.image_point.allFinite()) {
            throw NumericError("ransac_pnp: non-finite correspondence");
        }
    }

    const double thr = params.inlier_threshold;
    auto inliers_of = [&](const RigidPose& pose, double* err_sum) {
        std::vector<int> idx;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = reprojection_error(pose, corr[i], K);
            if (e < thr) {
                idx.push_back(static_cast<int>(i));
                sum += e;
            }
        }
        if (err_sum) *err_sum = sum;
        return idx;
    };

    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<Correspondence> sample(kSampleSize);
    std::array<std::size_t, kSampleSize> chosen{};
    std::vector<int> best_inliers;
    double best_err = kInf;
    RigidPose best_pose;
    long needed = params.max_iterations;
    int it = 0;
    for (; it < needed; ++it) {
        for (int k = 0; k < kSampleSize; ++k) {
            std::size_t j;
            do {
                j = pick(rng);
            } while (std::find(chosen.begin(), chosen.begin() + k, j) != chosen.begin() + k);
            chosen[k] = j;
            sample[k] = corr[j];
        }
        RigidPose hyp;
        try {
            hyp = pnp_dlt(sample, K);
            if (params.polish_hypotheses) {
                hyp = refine_pose_lm(hyp, sample, K, {.max_iterations = 10});
            }
        } catch (const DegenerateError&) {
            continue;
        } catch (const NumericError&) {
            continue;
        }
        double err = 0.0;
        auto idx = inliers_of(hyp, &err);
        if (idx.size() > best_inliers.size() || (idx.size() == best_inliers.size() && err < best_err)) {
            best_inliers = std::move(idx);
            best_err = err;
            best_pose = hyp;
            const double w = static_cast<double>(best_inliers.size()) / static_cast<double>(n);
            const double p_good = std::pow(w, kSampleSize);
            if (p_good >= 1.0) {
                needed = std::min<long>(needed, it + 1);
            } else if (p_good > 0.0) {
                const double est = std::log(1.0 - params.confidence) / std::log(1.0 - p_good);
                if (std::isfinite(est)) {
                    needed = std::min<long>(needed, static_cast<long>(std::ceil(est)));
                }
            }
        }
    }

    if (static_cast<int>(best_inliers.size()) < std::max(required, kSampleSize)) {
        throw NoPoseError("ransac_pnp: best consensus " + std::to_string(best_inliers.size()) +
                          " below the required " + std::to_string(std::max(required, kSampleSize)));
    }

    RigidPose pose = best_pose;
    std::vector<int> inliers = best_inliers;
    for (int round = 0; round < 5; ++round) {
        std::vector<Correspondence> subset;
        subset.reserve(inliers.size());
        for (const int i : inliers) subset.push_back(corr[i]);
        try {
            pose = refine_pose_lm(pose, subset, K);
        } catch (const NumericError&) {
            break;
        }
        auto next = inliers_of(pose, nullptr);
        if (next == inliers || next.size() < static_cast<std::size_t>(kSampleSize)) {
            break;
        }
        inliers = std::move(next);
    }
    double err_sum = 0.0;
    inliers = inliers_of(pose, &err_sum);
    if (static_cast<int>(inliers.size()) < std::max(required, kSampleSize)) {
        throw NoPoseError("ransac_pnp: refined consensus " + std::to_string(inliers.size()) + " below the required " +
                          std::to_string(std::max(required, kSampleSize)));
    }
    PoseEstimate est;
    est.pose = pose;
    est.mean_reprojection_error = err_sum / static_cast<double>(inliers.size());
    est.inlier_indices = std::move(inliers);
    est.iterations = it;
    return est;
}

}  // namespace curvepose
