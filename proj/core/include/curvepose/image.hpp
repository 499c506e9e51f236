#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace curvepose {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB raster, row-major, channels interleaved.
class RgbImage {
public:
    RgbImage() = default;
    RgbImage(int width, int height, Rgb fill = {0, 0, 0});

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    Rgb at(int x, int y) const;
    void set(int x, int y, Rgb c);

    const std::vector<std::uint8_t>& data() const { return data_; }
    std::vector<std::uint8_t>& data() { return data_; }

    bool operator==(const RgbImage&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Single-channel float raster with intensities nominally in [0, 1].
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, float fill = 0.0f);

    int width() const { return width_; }
    int height() const { return height_; }

    float at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    float& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    /// Clamp-to-edge access.
    float at_clamped(int x, int y) const;

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

/// Axis-aligned pixel box; (x, y) is the top-left corner.
struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w > 0.0 && h > 0.0 ? w * h : 0.0; }
    bool empty() const { return !(w > 0.0 && h > 0.0); }
    bool operator==(const BBox&) const = default;
};

/// Intersection of the box with [0, width) x [0, height).
BBox clip_to_image(const BBox& box, int width, int height);

RgbImage read_png(const std::filesystem::path& path);
void write_png(const RgbImage& image, const std::filesystem::path& path);

/// ITU-R BT.601 luma, scaled to [0, 1].
GrayImage to_gray(const RgbImage& image);

/// Bilinear sample with pixel centres at integer coordinates, clamp-to-edge.
std::array<float, 3> sample_bilinear(const RgbImage& image, double x, double y);
float sample_bilinear(const GrayImage& image, double x, double y);

/// Integer pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
};

/// Smallest pixel rectangle covering `box`, clipped to the image.
PixelRect pixel_rect(const BBox& box, int width, int height);

RgbImage crop(const RgbImage& image, const PixelRect& rect);
GrayImage crop(const GrayImage& image, const PixelRect& rect);

/// Bilinear resize using pixel-centre alignment.
RgbImage resize_bilinear(const RgbImage& image, int width, int height);
GrayImage resize_bilinear(const GrayImage& image, int width, int height);

/// Region of `image` inside `box`, resampled to width x height, values in [0,1],
/// laid out channel-major (C, H, W). The box may extend past the image; those
/// samples read as black.
std::vector<float> crop_resize_chw(const RgbImage& image, const BBox& box, int width, int height);

}  // namespace curvepose
