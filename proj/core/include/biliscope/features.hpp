#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "biliscope/raster.hpp"

namespace biliscope {

struct PixelCoord {
    int row = 0;
    int col = 0;

    friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// Inclusive pixel bounds.
struct BoundingBox {
    int top = 0;
    int left = 0;
    int bottom = 0;
    int right = 0;

    [[nodiscard]] int width() const noexcept { return right - left + 1; }
    [[nodiscard]] int height() const noexcept { return bottom - top + 1; }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Blob {
    /// Raster-order member pixels.
    std::vector<PixelCoord> pixels;
    std::size_t area = 0;
    BoundingBox box;
    /// Exposed 4-neighbour pixel edges (background or image border).
    std::size_t perimeter = 0;
};

/// 8-connected labelling: 0 is background, labels 1..n are numbered in
/// raster order of each component's first pixel.
[[nodiscard]] Raster<int> label_components(const BinaryMask& mask);

/// Components in label order.
[[nodiscard]] std::vector<Blob> connected_components(const BinaryMask& mask);

/// Largest blob; ties go to the bounding box that starts higher, then further left.
[[nodiscard]] const Blob& bile_duct_of(const std::vector<Blob>& blobs);

struct Axes {
    int major = 0;
    int minor = 0;
};

/// Bounding-box extents: major = max(width, height), minor = min.
[[nodiscard]] Axes axes(const Blob& duct);

/// P^2 / (4 pi a).
[[nodiscard]] double compactness(const Blob& duct);
[[nodiscard]] double compactness(double perimeter, double area);

class Glcm {
public:
    Glcm(int levels, std::vector<double> probabilities);

    [[nodiscard]] int levels() const noexcept { return levels_; }
    [[nodiscard]] double operator()(int i, int j) const noexcept {
        return p_[static_cast<std::size_t>(i * levels_ + j)];
    }
    [[nodiscard]] const std::vector<double>& probabilities() const noexcept { return p_; }

private:
    int levels_;
    std::vector<double> p_;
};

/// Equal-width bin of an 8-bit intensity among `levels` bins.
[[nodiscard]] inline int quantize_level(std::uint8_t v, int levels) noexcept {
    return static_cast<int>(v) * levels / 256;
}

/// Symmetric, normalised co-occurrence of horizontal neighbour pairs whose
/// two pixels both lie in the mask. Throws DegenerateTexture without pairs.
[[nodiscard]] Glcm glcm(const GrayImage& img, const BinaryMask& mask, int levels = 8);

struct GlcmStats {
    double contrast = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    double correlation = 0.0;
    /// Zero variance: correlation is reported as 1.
    bool degenerate = false;
};

[[nodiscard]] GlcmStats glcm_stats(const Glcm& g);

inline constexpr std::size_t kFeatureCount = 10;
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "mja", "mia", "bda", "iba", "cmp", "ar", "cont", "mean", "var", "corr"};

struct FeatureVector {
    double mja = 0.0;
    double mia = 0.0;
    double bda = 0.0;
    double iba = 0.0;
    double cmp = 0.0;
    double ar = 0.0;
    double cont = 0.0;
    double mean = 0.0;
    double var = 0.0;
    double corr = 0.0;
    bool texture_degenerate = false;

    /// Values in kFeatureNames order.
    [[nodiscard]] std::array<double, kFeatureCount> values() const noexcept {
        return {mja, mia, bda, iba, cmp, ar, cont, mean, var, corr};
    }
    [[nodiscard]] static FeatureVector from_values(const std::array<double, kFeatureCount>& v) noexcept;
};

struct ExtractOptions {
    int glcm_levels = 8;
    /// Divisor for axis lengths (the working image side).
    double axis_scale = kWorkingSize;
};

/// Duct must be a subset of the tree mask; throws NoRegion on an empty tree.
[[nodiscard]] FeatureVector extract(const GrayImage& img, const BinaryMask& tree_mask, const Blob& duct,
                                    const ExtractOptions& options = {});

/// Components, duct selection and extraction in one call.
[[nodiscard]] FeatureVector extract_from_mask(const GrayImage& img, const BinaryMask& tree_mask,
                                              const ExtractOptions& options = {});

enum class FeatureMode { Reduced4, Full10 };

[[nodiscard]] std::string_view to_string(FeatureMode mode) noexcept;
[[nodiscard]] FeatureMode parse_feature_mode(std::string_view text);

/// (mja, ar, mia, cmp).
[[nodiscard]] std::array<double, 4> reduce(const FeatureVector& v) noexcept;

/// Column indices into kFeatureNames selected by the mode.
[[nodiscard]] std::vector<std::size_t> feature_columns(FeatureMode mode);
[[nodiscard]] std::vector<double> select_features(const std::array<double, kFeatureCount>& values, FeatureMode mode);

/// Per-column min-max scaling; constant columns map to 0.
struct ScalerState {
    std::vector<double> min;
    std::vector<double> max;

    [[nodiscard]] std::size_t dimension() const noexcept { return min.size(); }
};

[[nodiscard]] ScalerState fit_scaler(const std::vector<std::vector<double>>& rows);
[[nodiscard]] std::vector<double> apply_scaler(const ScalerState& scaler, const std::vector<double>& row);

}  // namespace biliscope
