#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "curvepose/geometry.hpp"
#include "curvepose/image.hpp"

namespace curvepose {

/// A flat label ("logo") as it is printed before wrapping.
struct TargetImage {
    int id = 0;
    RgbImage pixels;

    /// Width over height; equals the label width in HoI.
    double aspect() const { return static_cast<double>(pixels.width()) / pixels.height(); }
};

/// Label point (HoI) of a target pixel, pixel centres at integer coordinates.
LabelPoint label_point_from_pixel(const TargetImage& target, double px, double py);

/// Deterministic textured label made of random shapes; different (id, seed)
/// pairs give unrelated textures.
TargetImage make_procedural_target(int id, std::uint64_t seed, int width = 400, int height = 300);

/// Loads every *.png in `dir`, sorted by file name; ids are assigned 0..n-1.
std::vector<TargetImage> load_targets(const std::filesystem::path& dir);
/// Writes targets as target_NN.png.
void save_targets(const std::vector<TargetImage>& targets, const std::filesystem::path& dir);

struct Background {
    enum class Kind { Flat, Noise, Panorama };

    Kind kind = Kind::Flat;
    Rgb color{90, 110, 130};
    Rgb color2{30, 30, 40};
    std::uint64_t noise_seed = 0;
    /// Lattice spacing of the coarsest noise octave, in pixels.
    double noise_scale = 48.0;
    /// Equirectangular image sampled by camera-frame ray direction.
    std::shared_ptr<const RgbImage> panorama;
};

struct SceneConfig {
    int target_id = 0;
    double diameter = 1.0;
    double label_width = 1.0;
    /// Full cylinder height in HoI; the label is centred on it.
    double cylinder_height = 1.5;
    RigidPose pose;
    Background background;
    CameraIntrinsics intrinsics;
    Rgb body_color{205, 205, 200};
    Rgb cap_color{160, 160, 155};
    /// Samples per pixel along each axis.
    int supersample = 2;
    std::uint64_t seed = 0;

    CylinderModel cylinder() const { return {diameter, label_width, 1.0}; }
};

/// Parameters of the random scene distribution.
struct SceneDistribution {
    int width = 640;
    int height = 480;
    /// Empty means CameraIntrinsics::scaled_reference(width, height).
    std::optional<CameraIntrinsics> intrinsics;
    double diameter_min_factor = 1.0;
    double diameter_max_factor = 2.0;
    double cylinder_height = 1.5;
    double distance_min = 3.5;
    double distance_max = 6.0;
    double max_yaw = 0.5;
    double max_tilt = 0.35;
    double max_roll = 0.3;
    /// Largest angle between the label-centre normal and the direction to the camera.
    double max_grazing = 0.7;
    /// Cylinder centre placed within +/- this fraction of the image size around the centre.
    double center_offset = 0.2;
    /// Minimum distance (px) between projected label boundary and image border.
    double border_margin = 4.0;
    int supersample = 2;
    /// Relative frequency of flat, noise and panorama backgrounds.
    double flat_weight = 0.3;
    double noise_weight = 0.7;
    double panorama_weight = 0.0;
    std::vector<std::shared_ptr<const RgbImage>> panoramas;

    CameraIntrinsics camera() const;
};

/// Scene number `index` of the stream seeded by `master_seed`. Targets are
/// taken in sequence (index modulo library size). Throws ConfigError when no
/// visible configuration is found within 100 draws.
SceneConfig generate_scene(const std::vector<TargetImage>& library, const SceneDistribution& dist,
                           std::uint64_t master_seed, std::size_t index);

/// Stateful wrapper that hands out consecutive scenes.
class SceneGenerator {
public:
    SceneGenerator(const std::vector<TargetImage>& library, SceneDistribution dist, std::uint64_t seed);

    SceneConfig next();
    std::size_t count() const { return index_; }

private:
    const std::vector<TargetImage>* library_;
    SceneDistribution dist_;
    std::uint64_t seed_;
    std::size_t index_ = 0;
};

/// Checks that the whole label is in view, faces the camera and is not seen
/// at a grazing angle.
bool label_visible(const SceneConfig& scene, double max_grazing, double border_margin);

struct GroundTruth {
    Vec3 relative_position = Vec3::Zero();
    Vec3 relative_rotation_euler = Vec3::Zero();
    double diameter = 0.0;
    double label_width = 0.0;
    double label_height = 1.0;
    CameraIntrinsics intrinsics;
    BBox bbox;
    int target_id = 0;

    RigidPose pose() const { return RigidPose(euler_to_quaternion(relative_rotation_euler), relative_position); }
    CylinderModel cylinder() const { return {diameter, label_width, label_height}; }
};

struct SceneSample {
    RgbImage image;
    GroundTruth truth;
};

/// Projected label outline: `per_edge` points along each of the four edges.
std::vector<Vec2> label_outline(const RigidPose& pose, const CylinderModel& cyl, const CameraIntrinsics& K,
                                int per_edge = 256);

/// Tight box around the projected label outline, clipped to the image.
BBox label_bbox(const RigidPose& pose, const CylinderModel& cyl, const CameraIntrinsics& K);

GroundTruth make_ground_truth(const SceneConfig& scene);

/// Ray-casts the scene. Throws InvalidModelError when the camera is inside
/// the cylinder.
SceneSample render(const SceneConfig& scene, const std::vector<TargetImage>& library);

/// 1 where the ray through the pixel centre hits the label, else 0.
std::vector<std::uint8_t> render_label_mask(const SceneConfig& scene);

}  // namespace curvepose
