#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "biliscope/classify.hpp"
#include "biliscope/raster.hpp"

namespace biliscope {

/// Rendering refinements layered on the flat two-tone phantom. All off by
/// default.
struct PhantomAppearance {
    /// Ducts narrower than this are dimmed in proportion (0 disables).
    double partial_volume_width_px = 0.0;
    /// Chord-length intensity across the duct instead of a flat fill.
    bool tube_profile = false;
    /// Gaussian blur of the rendered scene before haze and noise (0 disables).
    double psf_sigma = 0.0;
    /// Smooth intraluminal texture amplitude per pixel of width beyond the onset.
    double debris_gain = 0.0;
    double debris_onset_px = 0.0;
    double debris_scale_px = 3.0;
};

struct PhantomSpec {
    int size = kWorkingSize;
    int duct_width_px = 10;
    int branch_count = 2;
    int branch_width_px = 4;
    int fg_intensity = 220;
    int bg_intensity = 0;
    double noise_sigma = 0.0;
    /// Peak attenuation of the multiplicative low-frequency field, in [0, 1).
    double haze_strength = 0.0;
    std::uint64_t rng_seed = 1;

    /// Duct length = length_fraction * size + length_per_width * width.
    double length_fraction = 0.4;
    double length_per_width = 1.5;
    /// Sideways meander of the centreline: amplitude = ratio * width.
    double meander_ratio = 0.5;
    double meander_wavelength_px = 24.0;
    /// Branch length as a fraction of the size; rows kept clear between the
    /// duct top and the branch origins.
    double branch_length_fraction = 0.15;
    int branch_gap_px = 6;

    /// Dilated iff duct_width_px > dilation_threshold_mm * reference_px / fov_mm.
    double dilation_threshold_mm = 8.0;
    double fov_mm = 240.0;
    double reference_px = 512.0;

    PhantomAppearance appearance;

    [[nodiscard]] double dilation_threshold_px() const noexcept {
        return dilation_threshold_mm * reference_px / fov_mm;
    }
    [[nodiscard]] Label label() const noexcept {
        return duct_width_px > dilation_threshold_px() ? Label::Dilated : Label::Normal;
    }
    void validate() const;
};

struct PhantomSample {
    std::string id;
    int duct_width_px = 0;
    GrayImage image;
    BinaryMask tree_mask;
    BinaryMask duct_mask;
    Label label = Label::Normal;
};

/// Throws InvalidArgument when the geometry leaves the image.
[[nodiscard]] PhantomSample generate(const PhantomSpec& spec);

struct CorpusSpec {
    int n_per_class = 50;
    int normal_min_width = 6;
    int normal_max_width = 12;
    int dilated_min_width = 20;
    int dilated_max_width = 34;
    PhantomSpec base;
    std::uint64_t rng_seed = 2024;

    void validate() const;
};

/// Balanced, shuffled, reproducible corpus; ids are "ph0001", "ph0002", ...
[[nodiscard]] std::vector<PhantomSample> generate_corpus(const CorpusSpec& spec);

struct ManifestEntry {
    std::string id;
    Label label = Label::Normal;
    int duct_width_px = 0;
    std::filesystem::path image_path;
    std::filesystem::path tree_mask_path;
    std::filesystem::path duct_mask_path;
};

inline constexpr const char* kManifestHeader = "id,label,duct_width_px,image_path,tree_mask_path,duct_mask_path";

/// Writes images and masks as P5 files plus manifest.csv under `dir`;
/// returns the manifest path. Paths in the manifest are relative to `dir`.
std::filesystem::path write_corpus(const std::vector<PhantomSample>& samples, const std::filesystem::path& dir);

/// Relative paths resolve against the manifest's directory.
[[nodiscard]] std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace biliscope
