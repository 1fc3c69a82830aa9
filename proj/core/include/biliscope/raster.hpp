#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "biliscope/error.hpp"

namespace biliscope {

using Bytes = std::vector<std::uint8_t>;

/// Side length every pipeline stage after resizing works at.
inline constexpr int kWorkingSize = 512;

/// Row-major 2-D raster. Width and height are at least 1 and the buffer always
/// holds exactly width * height samples.
template <typename T>
class Raster {
public:
    using value_type = T;

    Raster(int width, int height, T fill = T{}) : width_(width), height_(height) {
        check_dims(width, height);
        data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
    }

    Raster(int width, int height, std::vector<T> data)
        : width_(width), height_(height), data_(std::move(data)) {
        check_dims(width, height);
        if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
            throw Error(ErrorKind::DimensionMismatch,
                        "raster buffer holds " + std::to_string(data_.size()) +
                            " samples, expected " + std::to_string(width) + "x" +
                            std::to_string(height));
        }
    }

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] T& operator()(int row, int col) noexcept {
        return data_[static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                     static_cast<std::size_t>(col)];
    }
    [[nodiscard]] const T& operator()(int row, int col) const noexcept {
        return data_[static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                     static_cast<std::size_t>(col)];
    }

    /// Border-replicating accessor used by every neighbourhood filter.
    [[nodiscard]] const T& clamped(int row, int col) const noexcept {
        return (*this)(std::clamp(row, 0, height_ - 1), std::clamp(col, 0, width_ - 1));
    }

    [[nodiscard]] bool contains(int row, int col) const noexcept {
        return row >= 0 && col >= 0 && row < height_ && col < width_;
    }

    [[nodiscard]] std::span<T> pixels() noexcept { return data_; }
    [[nodiscard]] std::span<const T> pixels() const noexcept { return data_; }

    [[nodiscard]] bool same_shape(const auto& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    static void check_dims(int width, int height) {
        if (width < 1 || height < 1) {
            throw Error(ErrorKind::InvalidArgument,
                        "raster dimensions must be positive, got " + std::to_string(width) + "x" +
                            std::to_string(height));
        }
    }

    int width_;
    int height_;
    std::vector<T> data_;
};

struct Rgb {
    std::uint8_t red = 0;
    std::uint8_t green = 0;
    std::uint8_t blue = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

using GrayImage = Raster<std::uint8_t>;
using RgbImage = Raster<Rgb>;
using RealImage = Raster<double>;

/// Foreground/background raster holding 0 or 1 per pixel.
class BinaryMask : public Raster<std::uint8_t> {
public:
    using Raster<std::uint8_t>::Raster;

    [[nodiscard]] bool test(int row, int col) const noexcept { return (*this)(row, col) != 0; }
    void set(int row, int col, bool on = true) noexcept { (*this)(row, col) = on ? 1 : 0; }
    [[nodiscard]] std::size_t count() const noexcept;
};

/// Round half up and saturate to the 8-bit range.
[[nodiscard]] inline std::uint8_t quantize(double value) noexcept {
    if (!(value > 0.0)) return 0;  // also maps NaN to 0
    const double rounded = std::floor(value + 0.5);
    return rounded >= 255.0 ? std::uint8_t{255} : static_cast<std::uint8_t>(rounded);
}

// --- netpbm ---------------------------------------------------------------

[[nodiscard]] GrayImage load_pgm(std::span<const std::uint8_t> bytes);
[[nodiscard]] RgbImage load_ppm(std::span<const std::uint8_t> bytes);
[[nodiscard]] Bytes save_pgm(const GrayImage& img);
[[nodiscard]] Bytes save_ppm(const RgbImage& img);

/// Accepts either a P5 graymap or a P6 pixmap.
[[nodiscard]] std::variant<GrayImage, RgbImage> decode_netpbm(std::span<const std::uint8_t> bytes);

[[nodiscard]] Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);
[[nodiscard]] std::string read_text(const std::filesystem::path& path);

// --- conversions ----------------------------------------------------------

[[nodiscard]] GrayImage to_grayscale(const RgbImage& img);
[[nodiscard]] RgbImage to_rgb(const GrayImage& img);
[[nodiscard]] RealImage to_real(const GrayImage& img, double scale = 1.0);
[[nodiscard]] GrayImage to_gray(const RealImage& img, double scale = 1.0);

/// Masks serialise as {0, 255} graymaps; reading back treats >= 128 as set.
[[nodiscard]] GrayImage mask_to_gray(const BinaryMask& mask);
[[nodiscard]] BinaryMask gray_to_mask(const GrayImage& img);

// --- point and kernel operations -------------------------------------------

/// Bilinear resampling with corner-aligned sample grids.
[[nodiscard]] GrayImage resize_bilinear(const GrayImage& img, int width, int height);
[[nodiscard]] RgbImage resize_bilinear(const RgbImage& img, int width, int height);
[[nodiscard]] GrayImage resize_to_512(const GrayImage& img);
[[nodiscard]] RgbImage resize_to_512(const RgbImage& img);

[[nodiscard]] GrayImage complement(const GrayImage& img);

/// 3x3 mean with replicated borders.
[[nodiscard]] RealImage box_blur3x3(const GrayImage& img);

/// Unsharp mask: in + amount * (in - box_blur3x3(in)), clamped.
[[nodiscard]] GrayImage sharpen(const GrayImage& img, double amount = 1.0);

}  // namespace biliscope
