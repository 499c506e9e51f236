#include "curvepose/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "curvepose/errors.hpp"
#include "curvepose/random.hpp"

namespace curvepose {

namespace {

BBox grow(const BBox& b, double margin) {
    return {b.x - margin * b.w, b.y - margin * b.h, b.w * (1.0 + 2.0 * margin), b.h * (1.0 + 2.0 * margin)};
}

bool inside(const BBox& b, double x, double y) {
    return x >= b.x && x <= b.x + b.w && y >= b.y && y <= b.y + b.h;
}

void draw_line(RgbImage& img, Vec2 a, Vec2 b, Rgb color) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(b.x() - a.x()), std::abs(b.y() - a.y())))) + 1;
    if (steps > 100000) {
        return;
    }
    for (int i = 0; i <= steps; ++i) {
        const Vec2 p = a + (b - a) * (static_cast<double>(i) / steps);
        const int x = static_cast<int>(std::lround(p.x()));
        const int y = static_cast<int>(std::lround(p.y()));
        if (x >= 0 && y >= 0 && x < img.width() && y < img.height()) {
            img.set(x, y, color);
        }
    }
}

void draw_polyline(RgbImage& img, const std::vector<std::optional<Vec2>>& pts, Rgb color, bool closed) {
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i + (closed ? 0 : 1) < n; ++i) {
        const auto& a = pts[i];
        const auto& b = pts[(i + 1) % n];
        if (a && b) {
            draw_line(img, *a, *b, color);
        }
    }
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(10) << v;
    return s.str();
}

std::string fmt(const std::optional<double>& v) {
    return v ? fmt(*v) : std::string();
}

std::vector<EvalRecord> evaluate_impl(std::size_t n, const std::function<SceneSample(std::size_t)>& load,
                                      const TargetLibrary& library, const CurvNet* net, const EvalOptions& options) {
    std::vector<EvalRecord> records;
    records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        records.push_back(evaluate_sample(load(i), i, library, net, options));
    }
    return records;
}

}  // namespace

TargetLibrary::TargetLibrary(std::vector<TargetImage> targets, const SiftParams& sift) : targets_(std::move(targets)) {
    if (targets_.empty()) {
        throw ConfigError("target library is empty");
    }
    features_.resize(targets_.size());
    for (std::size_t i = 0; i < targets_.size(); ++i) {
        if (targets_[i].id != static_cast<int>(i)) {
            throw ConfigError("target ids must be dense 0..n-1");
        }
    }
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(targets_.size()); ++i) {
        features_[i] = extract_features(to_gray(targets_[i].pixels), sift);
    }
}

TargetLibrary TargetLibrary::load(const std::filesystem::path& dir, const SiftParams& sift) {
    return TargetLibrary(load_targets(dir), sift);
}

const TargetImage& TargetLibrary::target(int id) const {
    if (id < 0 || id >= static_cast<int>(targets_.size())) {
        throw ConfigError("unknown target id " + std::to_string(id));
    }
    return targets_[id];
}

const DescriptorSet& TargetLibrary::features(int id) const {
    target(id);
    return features_[id];
}

Detection detect_and_classify(const RgbImage& image, const TargetLibrary& library, const DetectorParams& params,
                              const std::optional<BBox>& gt_bbox) {
    if (library.size() == 0) {
        throw ConfigError("detect_and_classify: empty library");
    }
    DescriptorSet feats;
    try {
        feats = extract_features(to_gray(image), params.sift);
    } catch (const ShapeError& e) {
        throw NoDetectionError(std::string("image too small for detection: ") + e.what());
    }
    if (gt_bbox) {
        DescriptorSet kept;
        for (std::size_t i = 0; i < feats.keypoints.size(); ++i) {
            if (inside(*gt_bbox, feats.keypoints[i].x, feats.keypoints[i].y)) {
                kept.keypoints.push_back(feats.keypoints[i]);
                kept.descriptors.push_back(feats.descriptors[i]);
            }
        }
        feats = std::move(kept);
    }
    if (feats.descriptors.empty()) {
        throw NoDetectionError("no features in the image");
    }

    int best_id = -1;
    std::vector<Match> best_matches;
    for (std::size_t id = 0; id < library.size(); ++id) {
        const auto& train = library.features(static_cast<int>(id)).descriptors;
        if (train.size() < 2) {
            continue;
        }
        auto m = ratio_filter(match_knn(feats.descriptors, train), params.ratio);
        if (best_id < 0 || m.size() > best_matches.size()) {
            best_id = static_cast<int>(id);
            best_matches = std::move(m);
        }
    }
    const int votes = static_cast<int>(best_matches.size());
    if (best_id < 0 || votes < params.min_votes) {
        throw NoDetectionError("best target has " + std::to_string(votes) + " votes, need " +
                               std::to_string(params.min_votes));
    }

    Detection det;
    det.target_id = best_id;
    det.score = votes;
    if (gt_bbox) {
        det.bbox = *gt_bbox;
        return det;
    }
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (const auto& m : best_matches) {
        const auto& kp = feats.keypoints[m.query_index];
        x0 = std::min(x0, kp.x);
        y0 = std::min(y0, kp.y);
        x1 = std::max(x1, kp.x);
        y1 = std::max(y1, kp.y);
    }
    det.bbox = clip_to_image(grow({x0, y0, x1 - x0, y1 - y0}, params.margin), image.width(), image.height());
    return det;
}

PoseResult estimate(const RgbImage& image, const Detection& detection, const TargetLibrary& library,
                    const CurvNet* net, const CameraIntrinsics& K, const EstimateOptions& options) {
    const TargetImage& target = library.target(detection.target_id);
    const DescriptorSet& tf = library.features(detection.target_id);

    double diameter = 0.0;
    if (options.diameter) {
        diameter = *options.diameter;
    } else if (net) {
        diameter = predict_curvature(*net, image, detection.bbox);
    } else {
        throw ConfigError("estimate: no curvature network and no diameter override");
    }
    const double min_diameter = target.aspect() / std::numbers::pi * (1.0 + 1e-9);
    if (!std::isfinite(diameter)) {
        throw NumericError("estimate: non-finite diameter");
    }
    diameter = std::max(diameter, min_diameter);
    const CylinderModel cyl{diameter, target.aspect(), 1.0};

    PixelRect rect{0, 0, image.width(), image.height()};
    if (!options.full_image) {
        rect = pixel_rect(grow(detection.bbox, options.crop_margin), image.width(), image.height());
    }
    if (rect.width() < 32 || rect.height() < 32) {
        throw NoPoseError("estimate: detection box too small for feature extraction");
    }
    const DescriptorSet feats = options.full_image ? extract_features(to_gray(image), options.sift)
                                                   : extract_features(to_gray(crop(image, rect)), options.sift);
    if (feats.descriptors.empty() || tf.descriptors.size() < 2) {
        throw NoPoseError("estimate: no features to match");
    }
    const auto matches = ratio_filter(match_knn(feats.descriptors, tf.descriptors), options.ratio);
    if (matches.size() < 6) {
        throw NoPoseError("estimate: " + std::to_string(matches.size()) + " matches survive the ratio test");
    }

    std::vector<Correspondence> corr;
    corr.reserve(matches.size());
    for (const auto& m : matches) {
        const Keypoint& tk = tf.keypoints[m.train_index];
        const Keypoint& ik = feats.keypoints[m.query_index];
        corr.push_back({label_to_cylinder(label_point_from_pixel(target, tk.x, tk.y), cyl),
                        Vec2(ik.x + rect.x0, ik.y + rect.y0)});
    }
    auto rng = make_rng(options.seed, 0);
    const PoseEstimate est = ransac_pnp(corr, K, options.ransac, rng);

    PoseResult r;
    r.target_id = detection.target_id;
    r.pose = est.pose;
    r.diameter = diameter;
    r.matches = static_cast<int>(matches.size());
    r.inliers = static_cast<int>(est.inlier_indices.size());
    r.reprojection_error = est.mean_reprojection_error;
    return r;
}

CropSample make_crop_sample(const SceneSample& sample, const NetConfig& cfg) {
    return {preprocess_crop(sample.image, sample.truth.bbox, cfg), static_cast<float>(sample.truth.diameter)};
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::GtBbox: return "gtbbox";
        case Ablation::GtAll: return "gtall";
    }
    return "full";
}

Ablation parse_ablation(const std::string& s) {
    if (s == "full") return Ablation::Full;
    if (s == "gtbbox") return Ablation::GtBbox;
    if (s == "gtall") return Ablation::GtAll;
    throw ConfigError("unknown ablation '" + s + "' (expected full|gtbbox|gtall)");
}

EvalRecord evaluate_sample(const SceneSample& sample, std::size_t index, const TargetLibrary& library,
                           const CurvNet* net, const EvalOptions& options) {
    EvalRecord rec;
    rec.sample = index;
    const GroundTruth& truth = sample.truth;
    std::optional<BBox> gt_bbox;
    if (options.ablation != Ablation::Full) {
        gt_bbox = truth.bbox;
    }
    Detection det;
    try {
        det = detect_and_classify(sample.image, library, options.detector, gt_bbox);
    } catch (const NoDetectionError& e) {
        rec.failure = e.what();
        return rec;
    }
    rec.detected = true;
    rec.iou = iou(det.bbox, truth.bbox);
    rec.success = rec.iou >= options.success_iou;
    rec.correct_target = det.target_id == truth.target_id;

    EstimateOptions eo = options.estimate;
    if (options.ablation == Ablation::GtAll) {
        eo.diameter = truth.diameter;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const PoseResult r = estimate(sample.image, det, library, net, truth.intrinsics, eo);
        rec.time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const RigidPose gt = truth.pose();
        rec.diameter_error = diameter_error(r.diameter, truth.diameter);
        rec.rotation_error = rotation_error(r.pose.rotation, gt.rotation);
        rec.translation_error = translation_error(r.pose.translation, gt.translation);
    } catch (const NoPoseError& e) {
        rec.time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.failure = e.what();
    }
    return rec;
}

std::vector<EvalRecord> evaluate(const DatasetReader& dataset, const TargetLibrary& library, const CurvNet* net,
                                 const EvalOptions& options) {
    return evaluate_impl(dataset.size(), [&](std::size_t i) { return dataset.load(i); }, library, net, options);
}

std::vector<EvalRecord> evaluate(const std::vector<SceneSample>& samples, const TargetLibrary& library,
                                 const CurvNet* net, const EvalOptions& options) {
    return evaluate_impl(samples.size(), [&](std::size_t i) { return samples[i]; }, library, net, options);
}

EvalSummary summarize(const std::vector<EvalRecord>& records) {
    EvalSummary s;
    s.count = records.size();
    std::vector<double> iou_v, time_v, dia_v, rot_v, trans_v;
    std::size_t ok = 0;
    for (const auto& r : records) {
        ok += r.success ? 1 : 0;
        if (r.detected) {
            iou_v.push_back(r.iou);
            time_v.push_back(r.time_seconds);
        }
        if (r.diameter_error) dia_v.push_back(*r.diameter_error);
        if (r.rotation_error) rot_v.push_back(*r.rotation_error);
        if (r.translation_error) trans_v.push_back(*r.translation_error);
    }
    s.success_rate = records.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(records.size());
    s.iou = summarize(iou_v);
    s.time_seconds = summarize(time_v);
    s.diameter_error = summarize(dia_v);
    s.rotation_error = summarize(rot_v);
    s.translation_error = summarize(trans_v);
    return s;
}

void write_eval_csv(const std::vector<EvalRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "sample,success,iou,time_s,diameter_err,rotation_err_rad,translation_err\n";
    for (const auto& r : records) {
        out << r.sample << ',' << (r.success ? 1 : 0) << ',' << (r.detected ? fmt(r.iou) : std::string()) << ','
            << (r.detected ? fmt(r.time_seconds) : std::string()) << ',' << fmt(r.diameter_error) << ','
            << fmt(r.rotation_error) << ',' << fmt(r.translation_error) << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

void draw_overlay(RgbImage& image, const RigidPose& pose, const CylinderModel& cyl, const CameraIntrinsics& K,
                  const std::optional<BBox>& bbox) {
    auto proj = [&](const Vec3& p) -> std::optional<Vec2> {
        const Vec3 pc = transform_point(pose, p);
        if (!(pc.z() > 1e-9)) return std::nullopt;
        return project_point(K, pc);
    };
    constexpr int kRim = 128;
    const double r = cyl.radius();
    for (const double z : {-0.5 * cyl.label_height, 0.5 * cyl.label_height}) {
        std::vector<std::optional<Vec2>> rim;
        for (int i = 0; i < kRim; ++i) {
            const double a = 2.0 * std::numbers::pi * i / kRim;
            rim.push_back(proj(Vec3(r * std::sin(a), -r * std::cos(a), z)));
        }
        draw_polyline(image, rim, {255, 60, 60}, true);
    }
    for (int i = 0; i < 8; ++i) {
        const double a = 2.0 * std::numbers::pi * i / 8;
        const Vec3 base(r * std::sin(a), -r * std::cos(a), 0.0);
        const auto p0 = proj(base - Vec3(0, 0, 0.5 * cyl.label_height));
        const auto p1 = proj(base + Vec3(0, 0, 0.5 * cyl.label_height));
        if (p0 && p1) draw_line(image, *p0, *p1, {255, 60, 60});
    }
    std::vector<std::optional<Vec2>> outline;
    for (const Vec2& p : label_outline(pose, cyl, K, 64)) outline.emplace_back(p);
    draw_polyline(image, outline, {60, 255, 60}, true);
    if (bbox) {
        const Vec2 a(bbox->x, bbox->y), b(bbox->x + bbox->w, bbox->y), c(bbox->x + bbox->w, bbox->y + bbox->h),
            d(bbox->x, bbox->y + bbox->h);
        for (const auto& [p, q] : {std::pair{a, b}, std::pair{b, c}, std::pair{c, d}, std::pair{d, a}}) {
            draw_line(image, p, q, {255, 220, 0});
        }
    }
}

}  // namespace curvepose
