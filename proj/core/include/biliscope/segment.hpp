#pragma once

#include <functional>
#include <vector>

#include "biliscope/raster.hpp"

namespace biliscope {

/// Square seed of side 2*half_size+1 centred on (center_row, center_col).
struct SeedSpec {
    static constexpr int kDefaultHalfSize = 10;

    int center_row = 0;
    int center_col = 0;
    int half_size = kDefaultHalfSize;

    [[nodiscard]] int top() const noexcept { return center_row - half_size; }
    [[nodiscard]] int bottom() const noexcept { return center_row + half_size; }
    [[nodiscard]] int left() const noexcept { return center_col - half_size; }
    [[nodiscard]] int right() const noexcept { return center_col + half_size; }

    [[nodiscard]] bool fits(int width, int height) const noexcept {
        return half_size >= 0 && top() >= 0 && left() >= 0 && bottom() < height && right() < width;
    }

    /// Throws SeedOutOfBounds when the rectangle leaves the image.
    void check_fits(int width, int height) const;

    friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

/// Rows [H/2 - 10, H/2 + 10] and columns [W/2 - 10, W/2 + 10], integer division.
[[nodiscard]] SeedSpec default_seed(int width, int height);

struct ChanVeseParams {
    double mu = 0.2 * 255.0 * 255.0;
    double nu = 0.0;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double epsilon = 1.0;
    double dt = 0.5;
    int iterations = 625;
    int snapshot_every = 0;

    void validate() const;
};

/// Level-set function; the contour is its zero level, inside is phi >= 0.
using LevelSet = RealImage;

struct CvState {
    LevelSet phi;
    double c1 = 0.0;
    double c2 = 0.0;
    double energy = 0.0;
    int iteration = 0;
};

[[nodiscard]] BinaryMask seed_mask(const SeedSpec& seed, int width, int height);

/// +1 inside the seed rectangle, -1 elsewhere.
[[nodiscard]] LevelSet init_level_set(const SeedSpec& seed, int width, int height);

/// Region means from a hard split of phi; a region that is empty takes the
/// global mean.
[[nodiscard]] CvState initial_state(LevelSet phi, const GrayImage& img, const ChanVeseParams& params);

/// H_eps(phi) = 1/2 (1 + 2/pi atan(phi / eps)).
[[nodiscard]] double smoothed_heaviside(double phi, double epsilon) noexcept;
/// delta_eps(phi) = eps / (pi (eps^2 + phi^2)).
[[nodiscard]] double smoothed_delta(double phi, double epsilon) noexcept;

/// div(grad phi / |grad phi|) by central differences, replicated borders.
[[nodiscard]] RealImage curvature(const LevelSet& phi);

/// Smoothed energy: mu * sum delta|grad phi| + nu * sum H + fitting terms.
[[nodiscard]] double level_set_energy(const LevelSet& phi, const GrayImage& img, double c1, double c2,
                                      const ChanVeseParams& params);

/// Energy of a hard partition: boundary length counts 4-neighbour pixel edges
/// between regions and c1/c2 are the exact region means.
[[nodiscard]] double mask_energy(const BinaryMask& mask, const GrayImage& img, const ChanVeseParams& params);

/// One explicit gradient-descent step.
[[nodiscard]] CvState cv_step(const CvState& state, const GrayImage& img, const ChanVeseParams& params);

struct Segmentation {
    BinaryMask mask;
    /// Iteration 0 (the seed) and every snapshot_every iterations thereafter.
    std::vector<BinaryMask> snapshots;
    std::vector<int> snapshot_iterations;
    CvState final_state;
};

/// Called after each iteration, and for the seed (iteration 0) when snapshots
/// are enabled; `snapshot` is non-null when one was taken.
using SegmentObserver = std::function<void(int iteration, const BinaryMask* snapshot)>;

[[nodiscard]] BinaryMask mask_of(const LevelSet& phi);

[[nodiscard]] Segmentation run_chan_vese(const GrayImage& img, const SeedSpec& seed, const ChanVeseParams& params,
                                         const SegmentObserver& observer = {});

}  // namespace biliscope
