#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "curvepose/curvnet.hpp"
#include "curvepose/dataset.hpp"
#include "curvepose/features.hpp"
#include "curvepose/metrics.hpp"
#include "curvepose/pose.hpp"
#include "curvepose/synth.hpp"

namespace curvepose {

/// Flat targets with their SIFT features, computed once.
class TargetLibrary {
public:
    explicit TargetLibrary(std::vector<TargetImage> targets, const SiftParams& sift = {});
    static TargetLibrary load(const std::filesystem::path& dir, const SiftParams& sift = {});

    std::size_t size() const { return targets_.size(); }
    const std::vector<TargetImage>& targets() const { return targets_; }
    const TargetImage& target(int id) const;
    const DescriptorSet& features(int id) const;

private:
    std::vector<TargetImage> targets_;
    std::vector<DescriptorSet> features_;
};

struct Detection {
    int target_id = 0;
    BBox bbox;
    /// Ratio-test survivors voting for the target.
    int score = 0;
};

struct DetectorParams {
    double ratio = 0.8;
    int min_votes = 8;
    /// Box growth on each side, as a fraction of its width/height.
    double margin = 0.1;
    SiftParams sift;
};

/// Feature-vote detector: every target collects the ratio-test survivors of
/// the image descriptors, the largest vote wins. With `gt_bbox` only
/// keypoints inside that box vote and the box is returned unchanged.
/// Throws NoDetectionError when the winner has fewer than min_votes.
Detection detect_and_classify(const RgbImage& image, const TargetLibrary& library, const DetectorParams& params = {},
                              const std::optional<BBox>& gt_bbox = std::nullopt);

struct EstimateOptions {
    double ratio = 0.95;
    /// Extra context around the detection box before feature extraction.
    double crop_margin = 0.1;
    /// Extract features from the whole image instead of the detection crop.
    bool full_image = false;
    RansacParams ransac;
    SiftParams sift;
    /// When set, replaces the network prediction.
    std::optional<double> diameter;
    std::uint64_t seed = 0;
};

struct PoseResult {
    int target_id = 0;
    RigidPose pose;
    double diameter = 0.0;
    int matches = 0;
    int inliers = 0;
    double reprojection_error = 0.0;
};

/// Curvature prediction, crop-to-target matching, lifting onto the predicted
/// cylinder and RANSAC PnP. `net` may be null when options.diameter is set.
PoseResult estimate(const RgbImage& image, const Detection& detection, const TargetLibrary& library,
                    const CurvNet* net, const CameraIntrinsics& K, const EstimateOptions& options = {});

/// Training example for the curvature regressor built from ground truth.
CropSample make_crop_sample(const SceneSample& sample, const NetConfig& cfg);

enum class Ablation { Full, GtBbox, GtAll };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);

struct EvalOptions {
    Ablation ablation = Ablation::Full;
    DetectorParams detector;
    EstimateOptions estimate;
    double success_iou = 0.5;
};

struct EvalRecord {
    std::size_t sample = 0;
    /// Detection returned with IoU >= success_iou.
    bool success = false;
    double iou = 0.0;
    double time_seconds = 0.0;
    bool detected = false;
    bool correct_target = false;
    /// Empty when no pose was recovered.
    std::optional<double> diameter_error;
    std::optional<double> rotation_error;
    std::optional<double> translation_error;
    std::string failure;
};

struct EvalSummary {
    std::size_t count = 0;
    double success_rate = 0.0;
    ColumnSummary iou;
    ColumnSummary time_seconds;
    ColumnSummary diameter_error;
    ColumnSummary rotation_error;
    ColumnSummary translation_error;
};

EvalRecord evaluate_sample(const SceneSample& sample, std::size_t index, const TargetLibrary& library,
                           const CurvNet* net, const EvalOptions& options);

std::vector<EvalRecord> evaluate(const DatasetReader& dataset, const TargetLibrary& library, const CurvNet* net,
                                 const EvalOptions& options);
std::vector<EvalRecord> evaluate(const std::vector<SceneSample>& samples, const TargetLibrary& library,
                                 const CurvNet* net, const EvalOptions& options);

EvalSummary summarize(const std::vector<EvalRecord>& records);

/// sample,success,iou,time_s,diameter_err,rotation_err_rad,translation_err
void write_eval_csv(const std::vector<EvalRecord>& records, const std::filesystem::path& path);

/// Draws the projected label outline and the cylinder rims onto `image`.
void draw_overlay(RgbImage& image, const RigidPose& pose, const CylinderModel& cyl, const CameraIntrinsics& K,
                  const std::optional<BBox>& bbox = std::nullopt);

}  // namespace curvepose
