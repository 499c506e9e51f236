#include "curvepose/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "curvepose/errors.hpp"

namespace curvepose {

double rotation_error(const Eigen::Quaterniond& q1, const Eigen::Quaterniond& q2) {
    if (std::abs(q1.norm() - 1.0) > 1e-6 || std::abs(q2.norm() - 1.0) > 1e-6) {
        throw NumericError("rotation_error: quaternions must have unit norm");
    }
    const double dot = std::clamp(std::abs(q1.dot(q2)), 0.0, 1.0);
    const Eigen::Quaterniond d = q1.conjugate() * q2;
    return 2.0 * std::atan2(d.vec().norm(), dot);
}

double translation_error(const Vec3& t1, const Vec3& t2) {
    return (t1 - t2).norm();
}

double diameter_error(double d1, double d2) {
    return std::abs(d1 - d2);
}

double iou(const BBox& a, const BBox& b) {
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

ColumnSummary summarize(const std::vector<double>& values) {
    ColumnSummary s;
    s.count = values.size();
    if (values.empty()) {
        return s;
    }
    double sum = 0.0;
    for (const double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        return 0.0;
    }
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double hi = values[mid];
    if (values.size() % 2 == 1) {
        return hi;
    }
    const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

}  // namespace curvepose
