#include "curvepose/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "curvepose/errors.hpp"

namespace curvepose {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kOrientationBins = 36;
constexpr int kDescGrid = 4;
constexpr int kDescBins = 8;
constexpr double kDescCellWidth = 3.0;  // cell width in units of the level sigma
constexpr float kDescClamp = 0.2f;
constexpr int kMaxRefineSteps = 5;

GrayImage downsample_half(const GrayImage& in) {
    GrayImage out(in.width() / 2, in.height() / 2);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            out.at(x, y) = in.at(2 * x, 2 * y);
        }
    }
    return out;
}

GrayImage subtract(const GrayImage& a, const GrayImage& b) {
    GrayImage out(a.width(), a.height());
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        out.data()[i] = a.data()[i] - b.data()[i];
    }
    return out;
}

double wrap_angle(double a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0.0) {
        a += kTwoPi;
    }
    return a >= kTwoPi ? 0.0 : a;
}

struct Extremum {
    int octave;
    int layer;
    int x;
    int y;
};

bool is_extremum(const ScaleSpace& sp, const Extremum& e, float threshold) {
    const auto& levels = sp.dog[e.octave];
    const float v = levels[e.layer].at(e.x, e.y);
    if (std::abs(v) <= threshold) {
        return false;
    }
    const bool is_max = v > 0;
    for (int ds = -1; ds <= 1; ++ds) {
        const GrayImage& img = levels[e.layer + ds];
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                if (ds == 0 && dy == 0 && dx == 0) {
                    continue;
                }
                const float n = img.at(e.x + dx, e.y + dy);
                if (is_max ? n > v : n < v) {
                    return false;
                }
            }
        }
    }
    return true;
}

/// Quadratic refinement of a DoG extremum. Returns false when the point
/// drifts out of range, fails to converge, has low contrast or lies on an edge.
bool refine_extremum(const ScaleSpace& sp, const SiftParams& params, Extremum& e, Eigen::Vector3d& offset,
                     double& contrast, int border) {
    const int S = sp.scales_per_octave;
    const auto& levels = sp.dog[e.octave];
    const int w = levels[0].width();
    const int h = levels[0].height();
    Eigen::Vector3d g;
    Eigen::Matrix3d H;
    int step = 0;
    for (; step < kMaxRefineSteps; ++step) {
        const GrayImage& prev = levels[e.layer - 1];
        const GrayImage& cur = levels[e.layer];
        const GrayImage& next = levels[e.layer + 1];
        const int x = e.x;
        const int y = e.y;
        const double v2 = 2.0 * cur.at(x, y);
        g << 0.5 * (cur.at(x + 1, y) - cur.at(x - 1, y)), 0.5 * (cur.at(x, y + 1) - cur.at(x, y - 1)),
            0.5 * (next.at(x, y) - prev.at(x, y));
        const double dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - v2;
        const double dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - v2;
        const double dss = next.at(x, y) + prev.at(x, y) - v2;
        const double dxy = 0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) - cur.at(x + 1, y - 1) +
                                   cur.at(x - 1, y - 1));
        const double dxs = 0.25 * (next.at(x + 1, y) - next.at(x - 1, y) - prev.at(x + 1, y) + prev.at(x - 1, y));
        const double dys = 0.25 * (next.at(x, y + 1) - next.at(x, y - 1) - prev.at(x, y + 1) + prev.at(x, y - 1));
        H << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
        const Eigen::FullPivLU<Eigen::Matrix3d> lu(H);
        if (!lu.isInvertible()) {
            return false;
        }
        offset = -lu.solve(g);
        if (offset.cwiseAbs().maxCoeff() < 0.5) {
            break;
        }
        if (offset.cwiseAbs().maxCoeff() > 1e3) {
            return false;
        }
        e.x += static_cast<int>(std::lround(offset.x()));
        e.y += static_cast<int>(std::lround(offset.y()));
        e.layer += static_cast<int>(std::lround(offset.z()));
        if (e.layer < 1 || e.layer > S || e.x < border || e.x >= w - border || e.y < border || e.y >= h - border) {
            return false;
        }
    }
    if (step >= kMaxRefineSteps) {
        return false;
    }
    contrast = levels[e.layer].at(e.x, e.y) + 0.5 * g.dot(offset);
    if (std::abs(contrast) < params.contrast_threshold) {
        return false;
    }
    const double tr = H(0, 0) + H(1, 1);
    const double det = H(0, 0) * H(1, 1) - H(0, 1) * H(0, 1);
    const double r = params.edge_ratio;
    return det > 0.0 && tr * tr * r < (r + 1.0) * (r + 1.0) * det;
}

double level_sigma(const ScaleSpace& sp, double layer) {
    return sp.sigma0 * std::pow(2.0, layer / sp.scales_per_octave);
}

int level_index(const ScaleSpace& sp, const Keypoint& kp) {
    return std::clamp(static_cast<int>(std::lround(kp.layer)), 0, sp.scales_per_octave + 2);
}

}  // namespace

GrayImage gaussian_blur(const GrayImage& image, double sigma) {
    if (sigma <= 0.0) {
        return image;
    }
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
        sum += kernel[i + radius];
    }
    for (auto& k : kernel) {
        k = static_cast<float>(k / sum);
    }
    const int w = image.width();
    const int h = image.height();
    GrayImage tmp(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[i + radius] * image.at(std::clamp(x + i, 0, w - 1), y);
            }
            tmp.at(x, y) = acc;
        }
    }
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1));
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

int auto_octave_count(int width, int height) {
    int n = 1;
    int m = std::min(width, height);
    while (m / 2 >= 16) {
        m /= 2;
        ++n;
    }
    return n;
}

ScaleSpace build_scale_space(const GrayImage& image, int octaves, int scales_per_octave, double sigma0,
                             double input_blur) {
    if (image.width() < 32 || image.height() < 32) {
        throw ShapeError("build_scale_space: image must be at least 32x32");
    }
    if (scales_per_octave < 1 || !(sigma0 > 0.0)) {
        throw ConfigError("build_scale_space: invalid scale parameters");
    }
    if (octaves <= 0) {
        octaves = auto_octave_count(image.width(), image.height());
    }
    const int S = scales_per_octave;
    ScaleSpace sp;
    sp.scales_per_octave = S;
    sp.sigma0 = sigma0;

    // Incremental blur between consecutive levels of one octave.
    std::vector<double> step(S + 3, 0.0);
    for (int s = 1; s < S + 3; ++s) {
        const double prev = sigma0 * std::pow(2.0, (s - 1.0) / S);
        const double cur = sigma0 * std::pow(2.0, static_cast<double>(s) / S);
        step[s] = std::sqrt(cur * cur - prev * prev);
    }

    const double initial = std::sqrt(std::max(sigma0 * sigma0 - input_blur * input_blur, 0.01));
    GrayImage base = gaussian_blur(image, initial);
    for (int o = 0; o < octaves; ++o) {
        if (o > 0) {
            base = downsample_half(sp.gaussian[o - 1][S]);
            if (base.width() < 3 || base.height() < 3) {
                break;
            }
        }
        std::vector<GrayImage> levels;
        levels.reserve(S + 3);
        levels.push_back(base);
        for (int s = 1; s < S + 3; ++s) {
            levels.push_back(gaussian_blur(levels.back(), step[s]));
        }
        std::vector<GrayImage> dogs;
        dogs.reserve(S + 2);
        for (int s = 0; s < S + 2; ++s) {
            dogs.push_back(subtract(levels[s + 1], levels[s]));
        }
        sp.gaussian.push_back(std::move(levels));
        sp.dog.push_back(std::move(dogs));
    }
    return sp;
}

ScaleSpace build_scale_space(const GrayImage& image, const SiftParams& params) {
    return build_scale_space(image, params.octaves, params.scales_per_octave, params.sigma0, params.input_blur);
}

double dominant_orientation(const ScaleSpace& sp, const Keypoint& kp) {
    const GrayImage& img = sp.gaussian[kp.octave][level_index(sp, kp)];
    const double to_octave = std::ldexp(1.0, -kp.octave);
    const int cx = static_cast<int>(std::lround(kp.x * to_octave));
    const int cy = static_cast<int>(std::lround(kp.y * to_octave));
    const double sigma = 1.5 * level_sigma(sp, kp.layer);
    const int radius = static_cast<int>(std::lround(3.0 * sigma));
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

    std::array<double, kOrientationBins> hist{};
    for (int dy = -radius; dy <= radius; ++dy) {
        const int y = cy + dy;
        if (y <= 0 || y >= img.height() - 1) {
            continue;
        }
        for (int dx = -radius; dx <= radius; ++dx) {
            const int x = cx + dx;
            if (x <= 0 || x >= img.width() - 1) {
                continue;
            }
            const double gx = img.at(x + 1, y) - img.at(x - 1, y);
            const double gy = img.at(x, y + 1) - img.at(x, y - 1);
            const double weight = std::exp(-(dx * dx + dy * dy) * inv2s2);
            int bin = static_cast<int>(std::lround(kOrientationBins * wrap_angle(std::atan2(gy, gx)) / kTwoPi));
            bin %= kOrientationBins;
            hist[bin] += weight * std::sqrt(gx * gx + gy * gy);
        }
    }
    // [1 4 6 4 1] / 16 circular smoothing.
    std::array<double, kOrientationBins> smooth{};
    for (int i = 0; i < kOrientationBins; ++i) {
        const auto at = [&](int k) { return hist[(k + kOrientationBins) % kOrientationBins]; };
        smooth[i] = (at(i - 2) + at(i + 2)) * (1.0 / 16) + (at(i - 1) + at(i + 1)) * (4.0 / 16) + at(i) * (6.0 / 16);
    }
    const int peak = static_cast<int>(std::max_element(smooth.begin(), smooth.end()) - smooth.begin());
    const double l = smooth[(peak + kOrientationBins - 1) % kOrientationBins];
    const double c = smooth[peak];
    const double r = smooth[(peak + 1) % kOrientationBins];
    const double denom = l - 2.0 * c + r;
    const double shift = std::abs(denom) > 1e-12 ? 0.5 * (l - r) / denom : 0.0;
    return wrap_angle(kTwoPi * (peak + shift) / kOrientationBins);
}

std::vector<Keypoint> detect_keypoints(const ScaleSpace& sp, const SiftParams& params) {
    std::vector<Keypoint> out;
    const int S = sp.scales_per_octave;
    const float pre_threshold = static_cast<float>(0.5 * params.contrast_threshold);
    for (int o = 0; o < sp.octaves(); ++o) {
        const int w = sp.dog[o][0].width();
        const int h = sp.dog[o][0].height();
        const int border = std::min(5, std::max(1, std::min(w, h) / 8));
        for (int s = 1; s <= S; ++s) {
            for (int y = border; y < h - border; ++y) {
                for (int x = border; x < w - border; ++x) {
                    Extremum e{o, s, x, y};
                    if (!is_extremum(sp, e, pre_threshold)) {
                        continue;
                    }
                    Eigen::Vector3d offset;
                    double contrast = 0.0;
                    if (!refine_extremum(sp, params, e, offset, contrast, border)) {
                        continue;
                    }
                    const double scale = std::ldexp(1.0, o);
                    Keypoint kp;
                    kp.x = (e.x + offset.x()) * scale;
                    kp.y = (e.y + offset.y()) * scale;
                    kp.layer = e.layer + offset.z();
                    kp.scale = level_sigma(sp, kp.layer) * scale;
                    kp.octave = o;
                    kp.response = contrast;
                    kp.orientation = dominant_orientation(sp, kp);
                    out.push_back(kp);
                }
            }
        }
    }
    return out;
}

DescriptorSet compute_descriptors(const ScaleSpace& sp, const std::vector<Keypoint>& keypoints) {
    DescriptorSet out;
    out.keypoints.reserve(keypoints.size());
    out.descriptors.reserve(keypoints.size());
    constexpr int kCells = kDescGrid * kDescGrid * kDescBins;
    static_assert(kCells == 128);

    for (const Keypoint& kp : keypoints) {
        if (kp.octave < 0 || kp.octave >= sp.octaves()) {
            ++out.skipped;
            continue;
        }
        const GrayImage& img = sp.gaussian[kp.octave][level_index(sp, kp)];
        const double to_octave = std::ldexp(1.0, -kp.octave);
        const double xo = kp.x * to_octave;
        const double yo = kp.y * to_octave;
        const double cell = kDescCellWidth * level_sigma(sp, kp.layer);
        if (xo < cell || yo < cell || xo > img.width() - 1 - cell || yo > img.height() - 1 - cell) {
            ++out.skipped;
            continue;
        }
        const int radius = static_cast<int>(std::lround(cell * std::numbers::sqrt2 * (kDescGrid + 1) * 0.5));
        const int xi = static_cast<int>(std::lround(xo));
        const int yi = static_cast<int>(std::lround(yo));
        const double cos_t = std::cos(kp.orientation);
        const double sin_t = std::sin(kp.orientation);
        const double half = 0.5 * kDescGrid;
        const double inv_weight = 1.0 / (2.0 * half * half);

        std::array<double, kCells> hist{};
        for (int dy = -radius; dy <= radius; ++dy) {
            const int y = yi + dy;
            if (y <= 0 || y >= img.height() - 1) {
                continue;
            }
            for (int dx = -radius; dx <= radius; ++dx) {
                const int x = xi + dx;
                if (x <= 0 || x >= img.width() - 1) {
                    continue;
                }
                // Offset from the sub-pixel keypoint, rotated into its frame, in cell units.
                const double ox = x - xo;
                const double oy = y - yo;
                const double xr = (ox * cos_t + oy * sin_t) / cell;
                const double yr = (-ox * sin_t + oy * cos_t) / cell;
                const double cbin = xr + half - 0.5;
                const double rbin = yr + half - 0.5;
                if (cbin <= -1.0 || cbin >= kDescGrid || rbin <= -1.0 || rbin >= kDescGrid) {
                    continue;
                }
                const double gx = img.at(x + 1, y) - img.at(x - 1, y);
                const double gy = img.at(x, y + 1) - img.at(x, y - 1);
                const double mag = std::sqrt(gx * gx + gy * gy) * std::exp(-(xr * xr + yr * yr) * inv_weight);
                const double obin = wrap_angle(std::atan2(gy, gx) - kp.orientation) * kDescBins / kTwoPi;

                const int r0 = static_cast<int>(std::floor(rbin));
                const int c0 = static_cast<int>(std::floor(cbin));
                const int o0 = static_cast<int>(std::floor(obin));
                const double fr = rbin - r0;
                const double fc = cbin - c0;
                const double fo = obin - o0;
                for (int ir = 0; ir <= 1; ++ir) {
                    const int rr = r0 + ir;
                    if (rr < 0 || rr >= kDescGrid) {
                        continue;
                    }
                    const double wr = ir ? fr : 1.0 - fr;
                    for (int ic = 0; ic <= 1; ++ic) {
                        const int cc = c0 + ic;
                        if (cc < 0 || cc >= kDescGrid) {
                            continue;
                        }
                        const double wc = ic ? fc : 1.0 - fc;
                        for (int io = 0; io <= 1; ++io) {
                            const int oo = (o0 + io) % kDescBins;
                            const double wo = io ? fo : 1.0 - fo;
                            hist[(rr * kDescGrid + cc) * kDescBins + oo] += mag * wr * wc * wo;
                        }
                    }
                }
            }
        }

        double norm = 0.0;
        for (const double v : hist) {
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            ++out.skipped;
            continue;
        }
        Descriptor d{};
        double norm2 = 0.0;
        for (int i = 0; i < kCells; ++i) {
            d[i] = std::min(static_cast<float>(hist[i] / norm), kDescClamp);
            norm2 += static_cast<double>(d[i]) * d[i];
        }
        norm2 = std::sqrt(norm2);
        for (auto& v : d) {
            v = static_cast<float>(v / norm2);
        }
        out.keypoints.push_back(kp);
        out.descriptors.push_back(d);
    }
    return out;
}

DescriptorSet extract_features(const GrayImage& image, const SiftParams& params) {
    const ScaleSpace sp = build_scale_space(image, params);
    return compute_descriptors(sp, detect_keypoints(sp, params));
}

std::vector<Match> match_knn(const std::vector<Descriptor>& query, const std::vector<Descriptor>& train) {
    if (train.size() < 2) {
        throw ShapeError("match_knn: need at least two train descriptors");
    }
    using Vec128 = Eigen::Matrix<float, 128, 1>;
    std::vector<Match> out(query.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t qi = 0; qi < static_cast<std::ptrdiff_t>(query.size()); ++qi) {
        const Eigen::Map<const Vec128> q(query[qi].data());
        float best = std::numeric_limits<float>::infinity();
        float second = best;
        int best_idx = -1;
        for (std::size_t ti = 0; ti < train.size(); ++ti) {
            const float d2 = (q - Eigen::Map<const Vec128>(train[ti].data())).squaredNorm();
            if (d2 < best) {
                second = best;
                best = d2;
                best_idx = static_cast<int>(ti);
            } else if (d2 < second) {
                second = d2;
            }
        }
        out[qi] = {static_cast<int>(qi), best_idx, std::sqrt(best), std::sqrt(second)};
    }
    return out;
}

std::vector<Match> ratio_filter(const std::vector<Match>& matches, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw ConfigError("ratio_filter: ratio must be in (0, 1]");
    }
    std::vector<Match> out;
    for (const Match& m : matches) {
        if (m.distance < ratio * m.second_distance) {
            out.push_back(m);
        }
    }
    return out;
}

}  // namespace curvepose
