#include "curvepose/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>

#include "curvepose/errors.hpp"
#include "curvepose/random.hpp"

namespace curvepose {

namespace {

constexpr double kPi = std::numbers::pi;

Rgb random_color(std::mt19937_64& rng, int lo = 0, int hi = 255) {
    std::uniform_int_distribution<int> d(lo, hi);
    return {static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng))};
}

// ---------------------------------------------------------------------------
// Procedural label drawing

void fill_if(RgbImage& img, Rgb c, int x0, int y0, int x1, int y1, auto&& inside) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, img.width() - 1);
    y1 = std::min(y1, img.height() - 1);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            if (inside(x + 0.5, y + 0.5)) {
                img.set(x, y, c);
            }
        }
    }
}

void draw_shape(RgbImage& img, std::mt19937_64& rng, double size_scale) {
    const int w = img.width();
    const int h = img.height();
    std::uniform_real_distribution<double> ux(0.0, w);
    std::uniform_real_distribution<double> uy(0.0, h);
    std::uniform_real_distribution<double> usize(0.02 * h * size_scale, 0.16 * h * size_scale);
    std::uniform_real_distribution<double> uang(0.0, kPi);
    const Rgb c = random_color(rng);
    const double cx = ux(rng);
    const double cy = uy(rng);
    const double a = usize(rng);
    const double b = usize(rng);
    const int kind = std::uniform_int_distribution<int>(0, 4)(rng);
    const int r = static_cast<int>(std::ceil(std::max(a, b))) + 2;
    const int x0 = static_cast<int>(cx) - r;
    const int x1 = static_cast<int>(cx) + r;
    const int y0 = static_cast<int>(cy) - r;
    const int y1 = static_cast<int>(cy) + r;
    switch (kind) {
        case 0:  // disc
            fill_if(img, c, x0, y0, x1, y1, [&](double x, double y) {
                return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= a * a;
            });
            break;
        case 1: {  // ring
            const double inner = 0.55 * a;
            fill_if(img, c, x0, y0, x1, y1, [&](double x, double y) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                return d2 <= a * a && d2 >= inner * inner;
            });
            break;
        }
        case 2: {  // rotated rectangle
            const double ang = uang(rng);
            const double ca = std::cos(ang);
            const double sa = std::sin(ang);
            fill_if(img, c, x0, y0, x1, y1, [&](double x, double y) {
                const double lx = ca * (x - cx) + sa * (y - cy);
                const double ly = -sa * (x - cx) + ca * (y - cy);
                return std::abs(lx) <= a && std::abs(ly) <= 0.6 * b;
            });
            break;
        }
        case 3: {  // triangle
            Vec2 p[3];
            for (auto& v : p) {
                const double ang = 2.0 * kPi * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                v = Vec2(cx + a * std::cos(ang), cy + a * std::sin(ang));
            }
            const auto edge = [](const Vec2& u, const Vec2& v, double x, double y) {
                return (v.x() - u.x()) * (y - u.y()) - (v.y() - u.y()) * (x - u.x());
            };
            fill_if(img, c, x0, y0, x1, y1, [&](double x, double y) {
                const double e0 = edge(p[0], p[1], x, y);
                const double e1 = edge(p[1], p[2], x, y);
                const double e2 = edge(p[2], p[0], x, y);
                return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
            });
            break;
        }
        default: {  // thick stroke
            const double ang = uang(rng);
            const Vec2 dir(std::cos(ang), std::sin(ang));
            const double half_len = a;
            const double half_width = std::max(1.5, 0.15 * b);
            fill_if(img, c, x0, y0, x1, y1, [&](double x, double y) {
                const Vec2 d(x - cx, y - cy);
                const double along = d.dot(dir);
                const double across = std::abs(d.x() * dir.y() - d.y() * dir.x());
                return std::abs(along) <= half_len && across <= half_width;
            });
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// Background value noise

std::uint64_t hash64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
    const std::uint64_t h = hash64(seed ^ hash64(static_cast<std::uint64_t>(ix) * 0x100000001b3ULL ^
                                                 hash64(static_cast<std::uint64_t>(iy))));
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double value_noise(std::uint64_t seed, double x, double y) {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx);
    const auto iy = static_cast<std::int64_t>(fy);
    const auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
    const double tx = smooth(x - fx);
    const double ty = smooth(y - fy);
    const double a = lattice(seed, ix, iy);
    const double b = lattice(seed, ix + 1, iy);
    const double c = lattice(seed, ix, iy + 1);
    const double d = lattice(seed, ix + 1, iy + 1);
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

std::array<double, 3> background_color(const Background& bg, double px, double py, const Vec3& ray) {
    switch (bg.kind) {
        case Background::Kind::Flat:
            return {double(bg.color[0]), double(bg.color[1]), double(bg.color[2])};
        case Background::Kind::Noise: {
            double n = 0.0;
            double amp = 0.5;
            double freq = 1.0 / bg.noise_scale;
            for (int o = 0; o < 4; ++o) {
                n += amp * value_noise(bg.noise_seed + o, px * freq, py * freq);
                amp *= 0.5;
                freq *= 2.0;
            }
            n /= 0.9375;
            std::array<double, 3> out{};
            for (int c = 0; c < 3; ++c) {
                out[c] = bg.color[c] * (1.0 - n) + bg.color2[c] * n;
            }
            return out;
        }
        case Background::Kind::Panorama: {
            const Vec3 d = ray.normalized();
            const double lon = std::atan2(d.x(), d.z());
            const double lat = std::asin(std::clamp(-d.y(), -1.0, 1.0));
            const auto& pano = *bg.panorama;
            const double u = (lon / (2.0 * kPi) + 0.5) * pano.width() - 0.5;
            const double v = (0.5 - lat / kPi) * pano.height() - 0.5;
            const auto c = sample_bilinear(pano, u, v);
            return {c[0], c[1], c[2]};
        }
    }
    return {0.0, 0.0, 0.0};
}

// ---------------------------------------------------------------------------
// Ray casting

enum class Surface { None, Label, Body, Cap };

struct Hit {
    Surface surface = Surface::None;
    double u = 0.0;  // label coordinates, valid for Surface::Label
    double v = 0.0;
};

/// Geometry of one scene prepared for repeated ray queries (cylinder frame).
struct Caster {
    Mat3 rt;  // R^T
    Vec3 origin;
    double r = 1.0;
    double half_h = 0.75;
    double label_w = 1.0;

    explicit Caster(const SceneConfig& s)
        : rt(s.pose.rotation_matrix().transpose()),
          origin(-(rt * s.pose.translation)),
          r(0.5 * s.diameter),
          half_h(0.5 * s.cylinder_height),
          label_w(s.label_width) {}

    bool camera_inside() const {
        return origin.x() * origin.x() + origin.y() * origin.y() <= r * r && std::abs(origin.z()) <= half_h;
    }

    Hit cast(const Vec3& ray_cam) const {
        const Vec3 d = rt * ray_cam;
        const Vec3& o = origin;
        double best = std::numeric_limits<double>::infinity();
        Hit hit;
        const double a = d.x() * d.x() + d.y() * d.y();
        if (a > 1e-18) {
            const double b = 2.0 * (o.x() * d.x() + o.y() * d.y());
            const double c = o.x() * o.x() + o.y() * o.y() - r * r;
            const double disc = b * b - 4.0 * a * c;
            if (disc >= 0.0) {
                const double t = (-b - std::sqrt(disc)) / (2.0 * a);
                const Vec3 p = o + t * d;
                if (t > 0.0 && std::abs(p.z()) <= half_h) {
                    best = t;
                    const double theta = std::atan2(p.x(), -p.y());
                    const double u = theta * r + 0.5 * label_w;
                    const double v = 0.5 - p.z();
                    if (u >= 0.0 && u <= label_w && v >= 0.0 && v <= 1.0) {
                        hit = {Surface::Label, u, v};
                    } else {
                        hit = {Surface::Body, 0.0, 0.0};
                    }
                }
            }
        }
        if (std::abs(d.z()) > 1e-18) {
            for (const double zc : {half_h, -half_h}) {
                const double t = (zc - o.z()) / d.z();
                if (t > 0.0 && t < best) {
                    const Vec3 p = o + t * d;
                    if (p.x() * p.x() + p.y() * p.y() <= r * r) {
                        best = t;
                        hit = {Surface::Cap, 0.0, 0.0};
                    }
                }
            }
        }
        return hit;
    }
};

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

LabelPoint label_point_from_pixel(const TargetImage& target, double px, double py) {
    const double h = target.pixels.height();
    return {(px + 0.5) / h, (py + 0.5) / h};
}

TargetImage make_procedural_target(int id, std::uint64_t seed, int width, int height) {
    auto rng = make_rng(seed, 0x7a29e7ULL + static_cast<std::uint64_t>(id));
    const Rgb c0 = random_color(rng, 40, 220);
    const Rgb c1 = random_color(rng, 40, 220);
    RgbImage img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double t = (static_cast<double>(x) / width + static_cast<double>(y) / height) * 0.5;
            img.set(x, y,
                    {to_byte(c0[0] * (1 - t) + c1[0] * t), to_byte(c0[1] * (1 - t) + c1[1] * t),
                     to_byte(c0[2] * (1 - t) + c1[2] * t)});
        }
    }
    // Coarse shapes first, then progressively finer detail on top.
    for (const auto& [count, scale] : {std::pair{25, 1.6}, std::pair{70, 1.0}, std::pair{110, 0.5}}) {
        for (int i = 0; i < count; ++i) {
            draw_shape(img, rng, scale);
        }
    }
    return {id, std::move(img)};
}

std::vector<TargetImage> load_targets(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("target directory not found: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw IoError("no PNG targets in " + dir.string());
    }
    std::vector<TargetImage> out;
    out.reserve(files.size());
    for (const auto& f : files) {
        out.push_back({static_cast<int>(out.size()), read_png(f)});
    }
    return out;
}

void save_targets(const std::vector<TargetImage>& targets, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& t : targets) {
        char name[32];
        std::snprintf(name, sizeof(name), "target_%02d.png", t.id);
        write_png(t.pixels, dir / name);
    }
}

CameraIntrinsics SceneDistribution::camera() const {
    return intrinsics ? *intrinsics : CameraIntrinsics::scaled_reference(width, height);
}

SceneConfig generate_scene(const std::vector<TargetImage>& library, const SceneDistribution& dist,
                           std::uint64_t master_seed, std::size_t index) {
    if (library.empty()) {
        throw ConfigError("generate_scene: empty target library");
    }
    if (!(dist.diameter_min_factor > 0.0 && dist.diameter_min_factor <= dist.diameter_max_factor) ||
        !(dist.distance_min > 0.0 && dist.distance_min <= dist.distance_max)) {
        throw ConfigError("generate_scene: inconsistent scene distribution ranges");
    }
    auto rng = make_rng(master_seed, index);
    const auto& target = library[index % library.size()];
    const CameraIntrinsics K = dist.camera();
    K.validate();
    const double label_w = target.aspect();

    auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

    for (int attempt = 0; attempt < 100; ++attempt) {
        SceneConfig s;
        s.target_id = target.id;
        s.label_width = label_w;
        s.diameter = uniform(dist.diameter_min_factor * label_w, dist.diameter_max_factor * label_w);
        s.cylinder_height = dist.cylinder_height;
        s.intrinsics = K;
        s.supersample = dist.supersample;
        s.seed = rng();

        // Base orientation puts the cylinder axis along -y (image up) and the
        // label (cylinder -y side) towards the camera.
        const double yaw = uniform(-dist.max_yaw, dist.max_yaw);
        const double tilt = uniform(-dist.max_tilt, dist.max_tilt);
        const double roll = uniform(-dist.max_roll, dist.max_roll);
        const Eigen::Quaterniond q = Eigen::AngleAxisd(roll, Vec3::UnitZ()) * Eigen::AngleAxisd(tilt, Vec3::UnitX()) *
                                     Eigen::AngleAxisd(kPi / 2.0, Vec3::UnitX()) *
                                     Eigen::AngleAxisd(yaw, Vec3::UnitZ());
        const double px = 0.5 * K.width + uniform(-1.0, 1.0) * dist.center_offset * K.width;
        const double py = 0.5 * K.height + uniform(-1.0, 1.0) * dist.center_offset * K.height;
        const double depth = uniform(dist.distance_min, dist.distance_max);
        s.pose = RigidPose(q, depth * pixel_ray(K, Vec2(px, py)));

        const double total = dist.flat_weight + dist.noise_weight +
                             (dist.panoramas.empty() ? 0.0 : dist.panorama_weight);
        const double pick = uniform(0.0, total > 0.0 ? total : 1.0);
        s.background.color = random_color(rng, 10, 245);
        s.background.color2 = random_color(rng, 10, 245);
        s.background.noise_seed = rng();
        s.background.noise_scale = uniform(16.0, 96.0);
        if (pick < dist.flat_weight || total <= 0.0) {
            s.background.kind = Background::Kind::Flat;
        } else if (pick < dist.flat_weight + dist.noise_weight) {
            s.background.kind = Background::Kind::Noise;
        } else {
            s.background.kind = Background::Kind::Panorama;
            const auto k = std::uniform_int_distribution<std::size_t>(0, dist.panoramas.size() - 1)(rng);
            s.background.panorama = dist.panoramas[k];
        }

        if (label_visible(s, dist.max_grazing, dist.border_margin)) {
            return s;
        }
    }
    throw ConfigError("generate_scene: no visible label configuration after 100 attempts");
}

SceneGenerator::SceneGenerator(const std::vector<TargetImage>& library, SceneDistribution dist, std::uint64_t seed)
    : library_(&library), dist_(std::move(dist)), seed_(seed) {}

SceneConfig SceneGenerator::next() {
    return generate_scene(*library_, dist_, seed_, index_++);
}

bool label_visible(const SceneConfig& scene, double max_grazing, double border_margin) {
    const CylinderModel cyl = scene.cylinder();
    cyl.validate();
    const Caster caster(scene);
    if (caster.camera_inside()) {
        return false;
    }
    const Vec3& cam = caster.origin;
    const double r = cyl.radius();

    const Vec3 center(0.0, -r, 0.0);
    const Vec3 to_cam_center = (cam - center).normalized();
    if (std::acos(std::clamp(-to_cam_center.y(), -1.0, 1.0)) > max_grazing) {
        return false;
    }
    for (const double u : {0.0, cyl.label_width}) {
        for (const double v : {0.0, 1.0}) {
            const Vec3 p = label_to_cylinder({u, v}, cyl);
            const Vec3 normal(p.x() / r, p.y() / r, 0.0);
            if (normal.dot((cam - p).normalized()) < 0.2) {
                return false;
            }
        }
    }
    const auto& K = scene.intrinsics;
    for (int e = 0; e < 4; ++e) {
        for (int i = 0; i <= 32; ++i) {
            const double t = i / 32.0;
            LabelPoint lp;
            switch (e) {
                case 0: lp = {t * cyl.label_width, 0.0}; break;
                case 1: lp = {cyl.label_width, t}; break;
                case 2: lp = {t * cyl.label_width, 1.0}; break;
                default: lp = {0.0, t}; break;
            }
            const Vec3 pc = transform_point(scene.pose, label_to_cylinder(lp, cyl));
            if (pc.z() <= 1e-6) {
                return false;
            }
            const Vec2 px = project_point(K, pc);
            if (px.x() < border_margin || px.y() < border_margin || px.x() > K.width - 1 - border_margin ||
                px.y() > K.height - 1 - border_margin) {
                return false;
            }
        }
    }
    return true;
}

std::vector<Vec2> label_outline(const RigidPose& pose, const CylinderModel& cyl, const CameraIntrinsics& K,
                                int per_edge) {
    std::vector<Vec2> out;
    out.reserve(static_cast<std::size_t>(per_edge) * 4);
    for (int e = 0; e < 4; ++e) {
        for (int i = 0; i < per_edge; ++i) {
            const double t = static_cast<double>(i) / per_edge;
            LabelPoint lp;
            switch (e) {
                case 0: lp = {t * cyl.label_width, 0.0}; break;
                case 1: lp = {cyl.label_width, t}; break;
                case 2: lp = {(1.0 - t) * cyl.label_width, 1.0}; break;
                default: lp = {0.0, 1.0 - t}; break;
            }
            out.push_back(project_point(K, transform_point(pose, label_to_cylinder(lp, cyl))));
        }
    }
    return out;
}

BBox label_bbox(const RigidPose& pose, const CylinderModel& cyl, const CameraIntrinsics& K) {
    const auto pts = label_outline(pose, cyl, K, 1024);
    double x0 = std::numeric_limits<double>::infinity();
    double y0 = x0;
    double x1 = -x0;
    double y1 = -x0;
    for (const auto& p : pts) {
        x0 = std::min(x0, p.x());
        y0 = std::min(y0, p.y());
        x1 = std::max(x1, p.x());
        y1 = std::max(y1, p.y());
    }
    return clip_to_image({x0, y0, x1 - x0, y1 - y0}, K.width, K.height);
}

GroundTruth make_ground_truth(const SceneConfig& scene) {
    GroundTruth gt;
    gt.relative_position = scene.pose.translation;
    gt.relative_rotation_euler = quaternion_to_euler(scene.pose.rotation);
    gt.diameter = scene.diameter;
    gt.label_width = scene.label_width;
    gt.label_height = 1.0;
    gt.intrinsics = scene.intrinsics;
    gt.bbox = label_bbox(scene.pose, scene.cylinder(), scene.intrinsics);
    gt.target_id = scene.target_id;
    return gt;
}

SceneSample render(const SceneConfig& scene, const std::vector<TargetImage>& library) {
    scene.cylinder().validate();
    scene.intrinsics.validate();
    const Caster caster(scene);
    if (caster.camera_inside()) {
        throw InvalidModelError("render: degenerate pose, camera is inside the cylinder");
    }
    const auto it = std::find_if(library.begin(), library.end(), [&](const TargetImage& t) { return t.id == scene.target_id; });
    if (it == library.end()) {
        throw ConfigError("render: target id " + std::to_string(scene.target_id) + " not in library");
    }
    if (scene.background.kind == Background::Kind::Panorama && !scene.background.panorama) {
        throw ConfigError("render: panorama background without an image");
    }
    const RgbImage& tex = it->pixels;
    const double tex_scale = tex.height();
    const auto& K = scene.intrinsics;
    const int n = std::max(1, scene.supersample);
    const double inv = 1.0 / (n * n);

    SceneSample out;
    out.image = RgbImage(K.width, K.height);
    auto& data = out.image.data();
#pragma omp parallel for schedule(dynamic, 4)
    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (int sy = 0; sy < n; ++sy) {
                for (int sx = 0; sx < n; ++sx) {
                    const double px = x + (sx + 0.5) / n - 0.5;
                    const double py = y + (sy + 0.5) / n - 0.5;
                    const Vec3 ray = pixel_ray(K, Vec2(px, py));
                    const Hit hit = caster.cast(ray);
                    std::array<double, 3> c{};
                    switch (hit.surface) {
                        case Surface::Label: {
                            const auto t = sample_bilinear(tex, hit.u * tex_scale - 0.5, hit.v * tex_scale - 0.5);
                            c = {t[0], t[1], t[2]};
                            break;
                        }
                        case Surface::Body:
                            c = {double(scene.body_color[0]), double(scene.body_color[1]), double(scene.body_color[2])};
                            break;
                        case Surface::Cap:
                            c = {double(scene.cap_color[0]), double(scene.cap_color[1]), double(scene.cap_color[2])};
                            break;
                        case Surface::None:
                            c = background_color(scene.background, px, py, ray);
                            break;
                    }
                    acc[0] += c[0];
                    acc[1] += c[1];
                    acc[2] += c[2];
                }
            }
            const std::size_t i = (static_cast<std::size_t>(y) * K.width + x) * 3;
            data[i] = to_byte(acc[0] * inv);
            data[i + 1] = to_byte(acc[1] * inv);
            data[i + 2] = to_byte(acc[2] * inv);
        }
    }
    out.truth = make_ground_truth(scene);
    return out;
}

std::vector<std::uint8_t> render_label_mask(const SceneConfig& scene) {
    const Caster caster(scene);
    if (caster.camera_inside()) {
        throw InvalidModelError("render_label_mask: degenerate pose, camera is inside the cylinder");
    }
    const auto& K = scene.intrinsics;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(K.width) * K.height, 0);
    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            if (caster.cast(pixel_ray(K, Vec2(x, y))).surface == Surface::Label) {
                mask[static_cast<std::size_t>(y) * K.width + x] = 1;
            }
        }
    }
    return mask;
}

}  // namespace curvepose
