#pragma once

#include <vector>

#include "curvepose/geometry.hpp"
#include "curvepose/image.hpp"

namespace curvepose {

/// Geodesic angle 2*acos(|<q1,q2>|) in [0, pi]. Throws NumericError when a
/// quaternion norm differs from 1 by more than 1e-6.
double rotation_error(const Eigen::Quaterniond& q1, const Eigen::Quaterniond& q2);

double translation_error(const Vec3& t1, const Vec3& t2);
double diameter_error(double d1, double d2);

/// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

struct ColumnSummary {
    double mean = 0.0;
    /// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
    double stddev = 0.0;
    std::size_t count = 0;
};

ColumnSummary summarize(const std::vector<double>& values);

double median(std::vector<double> values);

}  // namespace curvepose
