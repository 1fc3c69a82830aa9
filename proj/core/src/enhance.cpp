#include "biliscope/enhance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace biliscope {

HistEqTable HistEqTable::from_image(const GrayImage& img) {
    HistEqTable table;
    std::array<std::uint64_t, kLevels> hist{};
    for (const auto v : img.pixels()) ++hist[v];
    std::uint64_t running = 0;
    for (int v = 0; v < kLevels; ++v) {
        running += hist[static_cast<std::size_t>(v)];
        table.cdf[static_cast<std::size_t>(v)] = running;
        if (table.cdf_min == 0 && running > 0) table.cdf_min = running;
    }
    table.total = running;
    return table;
}

std::uint8_t HistEqTable::map(std::uint8_t v) const noexcept {
    if (total == cdf_min) return v;
    const double numerator = static_cast<double>(cdf[v] - std::min(cdf[v], cdf_min)) * (kLevels - 1);
    return quantize(numerator / static_cast<double>(total - cdf_min));
}

GrayImage histogram_equalize(const GrayImage& img) {
    const auto table = HistEqTable::from_image(img);
    std::array<std::uint8_t, HistEqTable::kLevels> lut{};
    for (int v = 0; v < HistEqTable::kLevels; ++v) {
        lut[static_cast<std::size_t>(v)] = table.map(static_cast<std::uint8_t>(v));
    }
    GrayImage out(img.width(), img.height());
    auto dst = out.pixels().begin();
    for (const auto v : img.pixels()) *dst++ = lut[v];
    return out;
}

void DehazeParams::validate() const {
    if (patch_radius < 0) throw Error(ErrorKind::InvalidArgument, "dehaze: patch_radius must be >= 0");
    if (!(omega > 0.0 && omega <= 1.0)) throw Error(ErrorKind::InvalidArgument, "dehaze: omega must lie in (0, 1]");
    if (!(t_floor > 0.0 && t_floor < 1.0)) throw Error(ErrorKind::InvalidArgument, "dehaze: t_floor must lie in (0, 1)");
    if (!(airlight_fraction > 0.0 && airlight_fraction <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "dehaze: airlight_fraction must lie in (0, 1]");
    }
}

namespace {

// One separable pass along rows (horizontal = true) or columns.
template <typename Reduce>
RealImage separable_pass(const RealImage& img, bool horizontal, Reduce reduce) {
    RealImage out(img.width(), img.height());
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            out(r, c) = reduce([&](int k) {
                return horizontal ? img.clamped(r, c + k) : img.clamped(r + k, c);
            });
        }
    }
    return out;
}

}  // namespace

RealImage min_filter(const RealImage& img, int radius) {
    auto reduce = [radius](auto&& at) {
        double m = at(-radius);
        for (int k = -radius + 1; k <= radius; ++k) m = std::min(m, at(k));
        return m;
    };
    return separable_pass(separable_pass(img, true, reduce), false, reduce);
}

RealImage box_filter(const RealImage& img, int radius) {
    const double norm = 1.0 / (2 * radius + 1);
    auto reduce = [radius, norm](auto&& at) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) s += at(k);
        return s * norm;
    };
    return separable_pass(separable_pass(img, true, reduce), false, reduce);
}

GrayImage dehaze(const GrayImage& img, const DehazeParams& params, DehazeTrace* trace) {
    params.validate();
    const RealImage intensity = to_real(img);
    RealImage dark = min_filter(intensity, params.patch_radius);

    // Atmospheric light: mean intensity over the brightest dark-channel pixels,
    // ties resolved by raster order.
    const std::size_t n = img.size();
    const std::size_t top = std::max<std::size_t>(
        1, static_cast<std::size_t>(params.airlight_fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto dark_px = dark.pixels();
    auto brighter = [&](std::size_t a, std::size_t b) {
        return dark_px[a] != dark_px[b] ? dark_px[a] > dark_px[b] : a < b;
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top - 1), order.end(), brighter);
    double airlight = 0.0;
    const auto in_px = intensity.pixels();
    for (std::size_t i = 0; i < top; ++i) airlight += in_px[order[i]];
    airlight /= static_cast<double>(top);

    if (airlight <= 0.0) {
        // All-black input: no haze model to invert.
        if (trace != nullptr) *trace = DehazeTrace{std::move(dark), 0.0, RealImage(img.width(), img.height(), 1.0)};
        return img;
    }

    RealImage transmission(img.width(), img.height());
    auto t_px = transmission.pixels();
    for (std::size_t i = 0; i < n; ++i) t_px[i] = 1.0 - params.omega * dark_px[i] / airlight;
    transmission = box_filter(transmission, params.patch_radius);

    GrayImage out(img.width(), img.height());
    auto out_px = out.pixels();
    t_px = transmission.pixels();
    for (std::size_t i = 0; i < n; ++i) {
        const double t = std::max(t_px[i], params.t_floor);
        out_px[i] = quantize((in_px[i] - airlight) / t + airlight);
    }
    if (trace != nullptr) *trace = DehazeTrace{std::move(dark), airlight, std::move(transmission)};
    return out;
}

}  // namespace biliscope
