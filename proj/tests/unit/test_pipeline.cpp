#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numbers>
#include <random>

#include "curvepose/errors.hpp"
#include "curvepose/pipeline.hpp"
#include "test_util.hpp"

namespace curvepose {
namespace {

class Pipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        std::vector<TargetImage> targets;
        for (int i = 0; i < 20; ++i) targets.push_back(make_procedural_target(i, 2024));
        library_ = new TargetLibrary(std::move(targets));
    }
    static void TearDownTestSuite() {
        delete library_;
        library_ = nullptr;
    }

    static SceneSample scene(std::size_t index, std::uint64_t seed = 77) {
        return render(generate_scene(library_->targets(), SceneDistribution{}, seed, index), library_->targets());
    }

    static SceneSample blank() {
        SceneSample s = scene(0);
        s.image = RgbImage(s.image.width(), s.image.height(), Rgb{120, 120, 120});
        return s;
    }

    static TargetLibrary* library_;
};

TargetLibrary* Pipeline::library_ = nullptr;

TEST_F(Pipeline, DetectsTheRenderedTarget) {
    const SceneSample s = scene(7);
    ASSERT_EQ(s.truth.target_id, 7);
    const Detection d = detect_and_classify(s.image, *library_);
    EXPECT_EQ(d.target_id, 7);
    EXPECT_GE(iou(d.bbox, s.truth.bbox), 0.5);
    EXPECT_GE(d.score, DetectorParams{}.min_votes);
}

TEST_F(Pipeline, BlankImageIsNotDetected) {
    EXPECT_THROW(detect_and_classify(blank().image, *library_), NoDetectionError);
}

TEST_F(Pipeline, GroundTruthBoxPassesThrough) {
    const SceneSample s = scene(3);
    const Detection d = detect_and_classify(s.image, *library_, {}, s.truth.bbox);
    EXPECT_EQ(d.bbox, s.truth.bbox);
    EXPECT_EQ(d.target_id, 3);
}

TEST_F(Pipeline, GroundTruthDiameterGivesAccuratePose) {
    for (std::size_t i : {1u, 12u}) {
        const SceneSample s = scene(i);
        const Detection d = detect_and_classify(s.image, *library_, {}, s.truth.bbox);
        EstimateOptions o;
        o.diameter = s.truth.diameter;
        const PoseResult r = estimate(s.image, d, *library_, nullptr, s.truth.intrinsics, o);
        const RigidPose gt = s.truth.pose();
        EXPECT_LT(rotation_error(r.pose.rotation, gt.rotation), 0.05);
        EXPECT_LT(translation_error(r.pose.translation, gt.translation), 0.05 * gt.translation.norm());
        EXPECT_DOUBLE_EQ(r.diameter, s.truth.diameter);
        EXPECT_GE(r.inliers, 8);
        EXPECT_LE(r.inliers, r.matches);
    }
}

TEST_F(Pipeline, EstimateIsDeterministic) {
    const SceneSample s = scene(5);
    const Detection d = detect_and_classify(s.image, *library_);
    EstimateOptions o;
    o.diameter = 1.3;
    o.seed = 9;
    const PoseResult a = estimate(s.image, d, *library_, nullptr, s.truth.intrinsics, o);
    const PoseResult b = estimate(s.image, d, *library_, nullptr, s.truth.intrinsics, o);
    EXPECT_EQ(a.pose.rotation.coeffs(), b.pose.rotation.coeffs());
    EXPECT_EQ(a.pose.translation, b.pose.translation);
    EXPECT_EQ(a.inliers, b.inliers);
}

TEST_F(Pipeline, FeaturelessCropHasNoPose) {
    const SceneSample s = blank();
    const Detection d{4, {100, 100, 200, 150}, 10};
    EstimateOptions o;
    o.diameter = 1.0;
    EXPECT_THROW(estimate(s.image, d, *library_, nullptr, s.truth.intrinsics, o), NoPoseError);
    const Detection tiny{4, {100, 100, 10, 10}, 10};
    EXPECT_THROW(estimate(s.image, tiny, *library_, nullptr, s.truth.intrinsics, o), NoPoseError);
}

TEST_F(Pipeline, EstimateNeedsNetOrDiameter) {
    const SceneSample s = scene(2);
    const Detection d{2, s.truth.bbox, 10};
    EXPECT_THROW(estimate(s.image, d, *library_, nullptr, s.truth.intrinsics, {}), ConfigError);
}

TEST_F(Pipeline, DiameterIsClampedToTheWrappableMinimum) {
    const SceneSample s = scene(4);
    const Detection d = detect_and_classify(s.image, *library_, {}, s.truth.bbox);
    EstimateOptions o;
    o.diameter = 0.01;
    try {
        const PoseResult r = estimate(s.image, d, *library_, nullptr, s.truth.intrinsics, o);
        EXPECT_GT(r.diameter, library_->target(4).aspect() / std::numbers::pi);
    } catch (const NoPoseError&) {
        SUCCEED();
    }
}

TEST_F(Pipeline, FailedSamplesLeaveEmptyCells) {
    std::vector<SceneSample> samples{blank(), blank(), blank()};
    const auto records = evaluate(samples, *library_, nullptr, {});
    const EvalSummary sum = summarize(records);
    EXPECT_EQ(sum.success_rate, 0.0);
    EXPECT_EQ(sum.rotation_error.count, 0u);
    testutil::TempDir dir("pipeline");
    write_eval_csv(records, dir.path() / "eval.csv");
    std::ifstream in(dir.path() / "eval.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "sample,success,iou,time_s,diameter_err,rotation_err_rad,translation_err");
    std::getline(in, line);
    EXPECT_EQ(line, "0,0,,,,,");
}

TEST_F(Pipeline, GroundTruthAblationHasZeroDiameterError) {
    std::vector<SceneSample> samples{scene(0), scene(6)};
    EvalOptions o;
    o.ablation = Ablation::GtAll;
    const auto records = evaluate(samples, *library_, nullptr, o);
    for (const auto& r : records) {
        EXPECT_TRUE(r.success);
        EXPECT_DOUBLE_EQ(r.iou, 1.0);
        ASSERT_TRUE(r.diameter_error.has_value());
        EXPECT_EQ(*r.diameter_error, 0.0);
        ASSERT_TRUE(r.rotation_error.has_value());
        EXPECT_LT(*r.rotation_error, 0.05);
    }
}

TEST(EvalSummary, InvariantUnderPermutation) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<EvalRecord> records(25);
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& r = records[i];
        r.sample = i;
        r.detected = u(rng) > 0.2;
        r.iou = r.detected ? u(rng) : 0.0;
        r.success = r.iou >= 0.5;
        r.time_seconds = u(rng);
        if (r.detected && u(rng) > 0.3) {
            r.diameter_error = u(rng);
            r.rotation_error = u(rng);
            r.translation_error = u(rng);
        }
    }
    const EvalSummary a = summarize(records);
    std::shuffle(records.begin(), records.end(), rng);
    const EvalSummary b = summarize(records);
    EXPECT_EQ(a.success_rate, b.success_rate);
    EXPECT_NEAR(a.rotation_error.mean, b.rotation_error.mean, 1e-12);
    EXPECT_NEAR(a.rotation_error.stddev, b.rotation_error.stddev, 1e-12);
    EXPECT_NEAR(a.iou.mean, b.iou.mean, 1e-12);
    EXPECT_EQ(a.translation_error.count, b.translation_error.count);
}

TEST(Ablation, Parsing) {
    for (Ablation a : {Ablation::Full, Ablation::GtBbox, Ablation::GtAll}) {
        EXPECT_EQ(parse_ablation(to_string(a)), a);
    }
    EXPECT_THROW(parse_ablation("none"), ConfigError);
}

TEST(TargetLibraryErrors, RejectsEmptyAndSparseIds) {
    EXPECT_THROW(TargetLibrary({}), ConfigError);
    std::vector<TargetImage> t{make_procedural_target(1, 5)};
    EXPECT_THROW(TargetLibrary(std::move(t)), ConfigError);
}

}  // namespace
}  // namespace curvepose
