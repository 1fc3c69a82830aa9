#pragma once

#include <array>
#include <cstdint>

#include "biliscope/raster.hpp"

namespace biliscope {

/// Cumulative histogram backing the equalisation lookup.
struct HistEqTable {
    static constexpr int kLevels = 256;

    std::array<std::uint64_t, kLevels> cdf{};
    std::uint64_t cdf_min = 0;
    std::uint64_t total = 0;

    [[nodiscard]] static HistEqTable from_image(const GrayImage& img);

    /// Output level for input level v; identity when the image has one level.
    [[nodiscard]] std::uint8_t map(std::uint8_t v) const noexcept;
};

[[nodiscard]] GrayImage histogram_equalize(const GrayImage& img);

struct DehazeParams {
    int patch_radius = 7;
    double omega = 0.95;
    double t_floor = 0.1;
    double airlight_fraction = 0.001;

    void validate() const;
};

/// Intermediate products of the dark-channel chain, exposed for inspection.
struct DehazeTrace {
    RealImage dark_channel{1, 1};
    double airlight = 0.0;
    RealImage transmission{1, 1};
};

/// Min filter over a (2r+1)^2 window; borders replicate.
[[nodiscard]] RealImage min_filter(const RealImage& img, int radius);

/// Mean over a (2r+1)^2 window; borders replicate.
[[nodiscard]] RealImage box_filter(const RealImage& img, int radius);

[[nodiscard]] GrayImage dehaze(const GrayImage& img, const DehazeParams& params = {},
                               DehazeTrace* trace = nullptr);

}  // namespace biliscope
