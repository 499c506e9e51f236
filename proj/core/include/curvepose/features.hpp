#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "curvepose/image.hpp"

namespace curvepose {

/// Scale-space keypoint in full-resolution pixel coordinates.
struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    /// Blur sigma of the detection level, full-resolution pixels.
    double scale = 1.0;
    /// Dominant gradient direction, [0, 2*pi), measured from +x towards +y.
    double orientation = 0.0;
    /// Interpolated DoG value at the extremum.
    double response = 0.0;
    int octave = 0;
    /// Fractional scale index inside the octave.
    double layer = 0.0;
};

using Descriptor = std::array<float, 128>;

struct Match {
    int query_index = 0;
    int train_index = 0;
    float distance = 0.0f;
    float second_distance = 0.0f;
};

struct SiftParams {
    double sigma0 = 1.6;
    int scales_per_octave = 3;
    /// 0 selects as many octaves as keep the coarsest level at >= 16 px.
    int octaves = 0;
    double contrast_threshold = 0.03;
    double edge_ratio = 10.0;
    /// Blur already present in the input image.
    double input_blur = 0.5;
};

/// Gaussian and difference-of-Gaussian pyramids. Octave o holds S+3 Gaussian
/// levels with blur sigma0 * 2^(s/S) (octave pixels) and S+2 DoG levels.
struct ScaleSpace {
    int scales_per_octave = 3;
    double sigma0 = 1.6;
    std::vector<std::vector<GrayImage>> gaussian;
    std::vector<std::vector<GrayImage>> dog;

    int octaves() const { return static_cast<int>(gaussian.size()); }
};

/// Throws ShapeError for images smaller than 32x32.
ScaleSpace build_scale_space(const GrayImage& image, int octaves, int scales_per_octave, double sigma0 = 1.6,
                             double input_blur = 0.5);
ScaleSpace build_scale_space(const GrayImage& image, const SiftParams& params = {});

/// Octave count used when SiftParams::octaves is 0.
int auto_octave_count(int width, int height);

/// Separable Gaussian blur with replicated borders.
GrayImage gaussian_blur(const GrayImage& image, double sigma);

/// DoG extrema with sub-pixel refinement, contrast and edge rejection, and a
/// single dominant orientation per keypoint.
std::vector<Keypoint> detect_keypoints(const ScaleSpace& space, const SiftParams& params = {});

/// Peak of the 36-bin gradient orientation histogram around the keypoint.
double dominant_orientation(const ScaleSpace& space, const Keypoint& kp);

struct DescriptorSet {
    std::vector<Keypoint> keypoints;
    std::vector<Descriptor> descriptors;
    /// Keypoints dropped because their window left the image.
    std::size_t skipped = 0;
};

/// 4x4 spatial cells x 8 orientation bins, clamped at 0.2 and L2-normalised.
DescriptorSet compute_descriptors(const ScaleSpace& space, const std::vector<Keypoint>& keypoints);

/// Detection plus description in one call.
DescriptorSet extract_features(const GrayImage& image, const SiftParams& params = {});

/// Exact two nearest neighbours (L2) of every query descriptor in `train`.
/// Throws ShapeError when train has fewer than two descriptors.
std::vector<Match> match_knn(const std::vector<Descriptor>& query, const std::vector<Descriptor>& train);

/// Keeps matches with distance < ratio * second_distance, preserving order.
std::vector<Match> ratio_filter(const std::vector<Match>& matches, double ratio);

}  // namespace curvepose
