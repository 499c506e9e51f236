#include "curvepose/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "curvepose/errors.hpp"

namespace curvepose {

RgbImage::RgbImage(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) {
        throw ShapeError("image dimensions must be non-negative");
    }
    data_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < data_.size(); i += 3) {
        data_[i] = fill[0];
        data_[i + 1] = fill[1];
        data_[i + 2] = fill[2];
    }
}

Rgb RgbImage::at(int x, int y) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
    return {data_[i], data_[i + 1], data_[i + 2]};
}

void RgbImage::set(int x, int y, Rgb c) {
    const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
    data_[i] = c[0];
    data_[i + 1] = c[1];
    data_[i + 2] = c[2];
}

GrayImage::GrayImage(int width, int height, float fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) {
        throw ShapeError("image dimensions must be non-negative");
    }
}

float GrayImage::at_clamped(int x, int y) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return at(x, y);
}

BBox clip_to_image(const BBox& box, int width, int height) {
    const double x0 = std::clamp(box.x, 0.0, static_cast<double>(width));
    const double y0 = std::clamp(box.y, 0.0, static_cast<double>(height));
    const double x1 = std::clamp(box.x + box.w, 0.0, static_cast<double>(width));
    const double y1 = std::clamp(box.y + box.h, 0.0, static_cast<double>(height));
    return {x0, y0, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
}

RgbImage read_png(const std::filesystem::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&img, path.c_str()) == 0) {
        throw IoError("cannot read PNG " + path.string() + ": " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    RgbImage out(static_cast<int>(img.width), static_cast<int>(img.height));
    if (png_image_finish_read(&img, nullptr, out.data().data(), 0, nullptr) == 0) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return out;
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width());
    img.height = static_cast<png_uint_32>(image.height());
    img.format = PNG_FORMAT_RGB;
    if (png_image_write_to_file(&img, path.c_str(), 0, image.data().data(), 0, nullptr) == 0) {
        throw IoError("cannot write PNG " + path.string() + ": " + img.message);
    }
}

GrayImage to_gray(const RgbImage& image) {
    GrayImage out(image.width(), image.height());
    const auto& d = image.data();
    auto& o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = static_cast<float>((0.299 * d[3 * i] + 0.587 * d[3 * i + 1] + 0.114 * d[3 * i + 2]) / 255.0);
    }
    return out;
}

std::array<float, 3> sample_bilinear(const RgbImage& image, double x, double y) {
    const int w = image.width();
    const int h = image.height();
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = std::min(static_cast<int>(x), w - 1);
    const int y0 = std::min(static_cast<int>(y), h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const auto& d = image.data();
    const auto idx = [w](int xx, int yy) { return (static_cast<std::size_t>(yy) * w + xx) * 3; };
    std::array<float, 3> out{};
    for (int c = 0; c < 3; ++c) {
        const double top = d[idx(x0, y0) + c] * (1.0 - fx) + d[idx(x1, y0) + c] * fx;
        const double bot = d[idx(x0, y1) + c] * (1.0 - fx) + d[idx(x1, y1) + c] * fx;
        out[c] = static_cast<float>(top * (1.0 - fy) + bot * fy);
    }
    return out;
}

float sample_bilinear(const GrayImage& image, double x, double y) {
    const int w = image.width();
    const int h = image.height();
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = std::min(static_cast<int>(x), w - 1);
    const int y0 = std::min(static_cast<int>(y), h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = image.at(x0, y0) * (1.0 - fx) + image.at(x1, y0) * fx;
    const double bot = image.at(x0, y1) * (1.0 - fx) + image.at(x1, y1) * fx;
    return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

PixelRect pixel_rect(const BBox& box, int width, int height) {
    PixelRect r;
    r.x0 = std::clamp(static_cast<int>(std::floor(box.x)), 0, width);
    r.y0 = std::clamp(static_cast<int>(std::floor(box.y)), 0, height);
    r.x1 = std::clamp(static_cast<int>(std::ceil(box.x + box.w)) + 1, r.x0, width);
    r.y1 = std::clamp(static_cast<int>(std::ceil(box.y + box.h)) + 1, r.y0, height);
    return r;
}

RgbImage crop(const RgbImage& image, const PixelRect& rect) {
    RgbImage out(rect.width(), rect.height());
    for (int y = 0; y < rect.height(); ++y) {
        const auto* src = image.data().data() + (static_cast<std::size_t>(y + rect.y0) * image.width() + rect.x0) * 3;
        std::copy(src, src + static_cast<std::size_t>(rect.width()) * 3,
                  out.data().data() + static_cast<std::size_t>(y) * rect.width() * 3);
    }
    return out;
}

GrayImage crop(const GrayImage& image, const PixelRect& rect) {
    GrayImage out(rect.width(), rect.height());
    for (int y = 0; y < rect.height(); ++y) {
        for (int x = 0; x < rect.width(); ++x) {
            out.at(x, y) = image.at(x + rect.x0, y + rect.y0);
        }
    }
    return out;
}

RgbImage resize_bilinear(const RgbImage& image, int width, int height) {
    RgbImage out(width, height);
    const double sx = static_cast<double>(image.width()) / width;
    const double sy = static_cast<double>(image.height()) / height;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const auto c = sample_bilinear(image, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
            out.set(x, y,
                    {static_cast<std::uint8_t>(std::lround(c[0])), static_cast<std::uint8_t>(std::lround(c[1])),
                     static_cast<std::uint8_t>(std::lround(c[2]))});
        }
    }
    return out;
}

GrayImage resize_bilinear(const GrayImage& image, int width, int height) {
    GrayImage out(width, height);
    const double sx = static_cast<double>(image.width()) / width;
    const double sy = static_cast<double>(image.height()) / height;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            out.at(x, y) = sample_bilinear(image, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
        }
    }
    return out;
}

std::vector<float> crop_resize_chw(const RgbImage& image, const BBox& box, int width, int height) {
    if (box.empty()) {
        throw ShapeError("crop_resize_chw: empty box");
    }
    std::vector<float> out(static_cast<std::size_t>(3) * width * height);
    const double cell_w = box.w / width;
    const double cell_h = box.h / height;
    // Average n x n bilinear taps per output pixel so downscaling does not alias.
    const int nx = std::max(1, static_cast<int>(std::ceil(cell_w)));
    const int ny = std::max(1, static_cast<int>(std::ceil(cell_h)));
    const double norm = 1.0 / (255.0 * nx * ny);
    const std::size_t plane = static_cast<std::size_t>(width) * height;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (int sy = 0; sy < ny; ++sy) {
                for (int sx = 0; sx < nx; ++sx) {
                    const double px = box.x + (x + (sx + 0.5) / nx) * cell_w;
                    const double py = box.y + (y + (sy + 0.5) / ny) * cell_h;
                    if (px < -0.5 || py < -0.5 || px > image.width() - 0.5 || py > image.height() - 0.5) {
                        continue;
                    }
                    const auto c = sample_bilinear(image, px, py);
                    acc[0] += c[0];
                    acc[1] += c[1];
                    acc[2] += c[2];
                }
            }
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            for (int c = 0; c < 3; ++c) {
                out[c * plane + i] = static_cast<float>(acc[c] * norm);
            }
        }
    }
    return out;
}

}  // namespace curvepose
