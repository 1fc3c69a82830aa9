#include <gtest/gtest.h>

#include <random>

#include "biliscope/segment.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace biliscope;

namespace {

constexpr int kDiskSize = 64;
constexpr double kDiskRadius = 12.0;

BinaryMask disk() { return oracle::disk_mask(kDiskSize, kDiskSize / 2, kDiskSize / 2, kDiskRadius); }

LevelSet phi_from(const BinaryMask& m) {
    LevelSet phi(m.width(), m.height(), -1.0);
    for (int r = 0; r < m.height(); ++r) {
        for (int c = 0; c < m.width(); ++c) {
            if (m.test(r, c)) phi(r, c) = 1.0;
        }
    }
    return phi;
}

}  // namespace

TEST(Seed, DefaultPlacement) {
    const SeedSpec s = default_seed(512, 512);
    EXPECT_EQ(s.top(), 246);
    EXPECT_EQ(s.bottom(), 266);
    EXPECT_EQ(s.left(), 246);
    EXPECT_EQ(s.right(), 266);
    const SeedSpec t = default_seed(100, 100);
    EXPECT_EQ(t.top(), 40);
    EXPECT_EQ(t.bottom(), 60);
    EXPECT_EQ(t.left(), 40);
    EXPECT_EQ(t.right(), 60);
    const SeedSpec odd = default_seed(31, 45);
    EXPECT_EQ(odd.center_row, 22);
    EXPECT_EQ(odd.center_col, 15);
}

TEST(Seed, TooSmallImage) {
    EXPECT_ERROR_KIND(default_seed(20, 20), ErrorKind::SeedOutOfBounds);
    EXPECT_ERROR_KIND(init_level_set(SeedSpec{5, 5, 10}, 64, 64), ErrorKind::SeedOutOfBounds);
}

TEST(LevelSet, Initialisation) {
    const SeedSpec s = default_seed(512, 512);
    const LevelSet phi = init_level_set(s, 512, 512);
    std::size_t positive = 0;
    for (const double v : phi.pixels()) {
        EXPECT_TRUE(v == 1.0 || v == -1.0);
        positive += v > 0.0 ? 1 : 0;
    }
    EXPECT_EQ(positive, 21u * 21u);
    EXPECT_EQ(phi(0, 0), -1.0);
    EXPECT_EQ(phi(256, 256), 1.0);

    const LevelSet whole = init_level_set(SeedSpec{10, 10, 10}, 21, 21);
    for (const double v : whole.pixels()) EXPECT_EQ(v, 1.0);
}

TEST(LevelSet, SmoothedFunctions) {
    EXPECT_DOUBLE_EQ(smoothed_heaviside(0.0, 1.0), 0.5);
    EXPECT_NEAR(smoothed_heaviside(1.0, 1.0), 0.75, 1e-15);
    EXPECT_NEAR(smoothed_heaviside(-1.0, 1.0), 0.25, 1e-15);
    EXPECT_NEAR(smoothed_delta(0.0, 2.0), 1.0 / (2.0 * std::numbers::pi), 1e-15);
    EXPECT_NEAR(smoothed_delta(1.0, 1.0), 1.0 / (2.0 * std::numbers::pi), 1e-15);
}

TEST(LevelSet, CurvatureOfFlatAndLinearFields) {
    LevelSet plane(9, 9);
    for (int r = 0; r < 9; ++r) {
        for (int c = 0; c < 9; ++c) plane(r, c) = 0.5 * c - 0.25 * r;
    }
    const RealImage k = curvature(plane);
    // Two pixels from the border every neighbouring normal sees the same gradient.
    for (int r = 2; r < 7; ++r) {
        for (int c = 2; c < 7; ++c) EXPECT_NEAR(k(r, c), 0.0, 1e-12);
    }
    const RealImage flat = curvature(LevelSet(5, 5, 3.0));
    for (const double v : flat.pixels()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(LevelSet, CurvatureOfConeIsInverseRadius) {
    // phi = R - |x|: level sets are circles, div(n) = -1/r for the inward normal.
    LevelSet cone(41, 41);
    for (int r = 0; r < 41; ++r) {
        for (int c = 0; c < 41; ++c) cone(r, c) = 15.0 - std::hypot(r - 20.0, c - 20.0);
    }
    const RealImage k = curvature(cone);
    EXPECT_NEAR(k(20, 30), -1.0 / 10.0, 0.01);
    EXPECT_NEAR(k(8, 20), -1.0 / 12.0, 0.01);
}

TEST(ChanVese, StationaryOnTrueSegmentation) {
    const BinaryMask m = disk();
    const GrayImage img = oracle::two_tone(m, 200, 50);
    const ChanVeseParams p;
    const CvState s0 = initial_state(phi_from(m), img, p);
    EXPECT_DOUBLE_EQ(s0.c1, 200.0);
    EXPECT_DOUBLE_EQ(s0.c2, 50.0);
    const CvState s1 = cv_step(s0, img, p);
    EXPECT_DOUBLE_EQ(s1.c1, 200.0);
    EXPECT_DOUBLE_EQ(s1.c2, 50.0);
    EXPECT_EQ(s1.iteration, 1);
    EXPECT_EQ(mask_of(s1.phi), m);
    // Away from the boundary the fit force only deepens each side.
    EXPECT_GE(s1.phi(32, 32), 1.0);
    EXPECT_LE(s1.phi(2, 2), -1.0);
}

TEST(ChanVese, ConstantImageMeans) {
    const GrayImage img(32, 32, std::uint8_t{90});
    const ChanVeseParams p;
    const CvState s = cv_step(initial_state(init_level_set(default_seed(32, 32), 32, 32), img, p), img, p);
    EXPECT_DOUBLE_EQ(s.c1, 90.0);
    EXPECT_DOUBLE_EQ(s.c2, 90.0);
}

TEST(ChanVese, EmptyRegionKeepsPreviousMean) {
    const GrayImage img(24, 24, std::uint8_t{40});
    const ChanVeseParams p;
    CvState s = initial_state(LevelSet(24, 24, -1.0), img, p);
    s.c1 = 123.0;
    const CvState next = cv_step(s, img, p);
    EXPECT_DOUBLE_EQ(next.c1, 123.0);
    EXPECT_DOUBLE_EQ(next.c2, 40.0);
}

TEST(ChanVese, MeansStayWithinImageRange) {
    std::mt19937_64 rng(1);
    const GrayImage img = oracle::random_image(32, 32, rng, 30, 170);
    ChanVeseParams p;
    p.iterations = 40;
    CvState s = initial_state(init_level_set(default_seed(32, 32), 32, 32), img, p);
    for (int k = 0; k < 40; ++k) {
        s = cv_step(s, img, p);
        EXPECT_GE(s.c1, 30.0);
        EXPECT_LE(s.c1, 170.0);
        EXPECT_GE(s.c2, 30.0);
        EXPECT_LE(s.c2, 170.0);
        for (const double v : s.phi.pixels()) ASSERT_TRUE(std::isfinite(v));
    }
}

TEST(ChanVese, DiskDiceAndEnergy) {
    const BinaryMask truth = disk();
    const GrayImage img = oracle::two_tone(truth, 200, 50);
    const SeedSpec seed = default_seed(kDiskSize, kDiskSize);
    const ChanVeseParams p;
    const Segmentation seg = run_chan_vese(img, seed, p);
    EXPECT_GE(oracle::dice(seg.mask, truth), 0.98);
    EXPECT_EQ(seg.final_state.iteration, 625);
    EXPECT_LE(mask_energy(seg.mask, img, p), mask_energy(seed_mask(seed, kDiskSize, kDiskSize), img, p));
    EXPECT_TRUE(seg.snapshots.empty());
}

TEST(ChanVese, SmoothedEnergyDecreases) {
    const BinaryMask truth = disk();
    const GrayImage img = oracle::two_tone(truth, 200, 50);
    const ChanVeseParams p;
    const CvState s0 = initial_state(init_level_set(default_seed(kDiskSize, kDiskSize), kDiskSize, kDiskSize), img, p);
    const CvState s1 = cv_step(s0, img, p);
    const Segmentation seg = run_chan_vese(img, default_seed(kDiskSize, kDiskSize), p);
    EXPECT_LE(seg.final_state.energy, s1.energy);
    EXPECT_NEAR(s1.energy, level_set_energy(s1.phi, img, s1.c1, s1.c2, p), 1e-9 * std::abs(s1.energy));
}

TEST(ChanVese, DarkDiskOnBrightBackground) {
    const BinaryMask truth = disk();
    const GrayImage img = oracle::two_tone(truth, 50, 200);
    const Segmentation seg = run_chan_vese(img, default_seed(kDiskSize, kDiskSize), ChanVeseParams{});
    EXPECT_GE(oracle::dice(seg.mask, truth), 0.98);
}

TEST(ChanVese, Deterministic) {
    std::mt19937_64 rng(2);
    GrayImage img = oracle::two_tone(disk(), 190, 60);
    for (auto& v : img.pixels()) v = quantize(v + static_cast<double>(rng() % 21) - 10.0);
    ChanVeseParams p;
    p.iterations = 100;
    const Segmentation a = run_chan_vese(img, default_seed(64, 64), p);
    const Segmentation b = run_chan_vese(img, default_seed(64, 64), p);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_EQ(a.final_state.phi, b.final_state.phi);
}

TEST(ChanVese, Snapshots) {
    const GrayImage img = oracle::two_tone(disk(), 200, 50);
    ChanVeseParams p;
    p.iterations = 100;
    p.snapshot_every = 25;
    std::vector<int> seen;
    int calls = 0;
    const Segmentation seg = run_chan_vese(img, default_seed(64, 64), p, [&](int it, const BinaryMask* snap) {
        ++calls;
        if (snap != nullptr) seen.push_back(it);
    });
    EXPECT_EQ(seg.snapshot_iterations, (std::vector<int>{0, 25, 50, 75, 100}));
    EXPECT_EQ(seen, seg.snapshot_iterations);
    EXPECT_EQ(calls, 101);
    ASSERT_EQ(seg.snapshots.size(), 5u);
    EXPECT_EQ(seg.snapshots.front(), seed_mask(default_seed(64, 64), 64, 64));
    EXPECT_EQ(seg.snapshots.back(), seg.mask);
}

TEST(ChanVese, ConstantImageKeepsSeedDerivedRegion) {
    const GrayImage img(40, 40, std::uint8_t{77});
    const Segmentation seg = run_chan_vese(img, default_seed(40, 40), ChanVeseParams{});
    const BinaryMask seed = seed_mask(default_seed(40, 40), 40, 40);
    for (int r = 0; r < 40; ++r) {
        for (int c = 0; c < 40; ++c) {
            if (seg.mask.test(r, c)) {
                EXPECT_TRUE(seed.test(r, c));
            }
        }
    }
}

TEST(ChanVese, ParamValidation) {
    const GrayImage img(32, 32);
    ChanVeseParams p;
    p.iterations = 0;
    EXPECT_ERROR_KIND(run_chan_vese(img, default_seed(32, 32), p), ErrorKind::InvalidArgument);
    p = {};
    p.dt = 0.0;
    EXPECT_ERROR_KIND(run_chan_vese(img, default_seed(32, 32), p), ErrorKind::InvalidArgument);
    p = {};
    p.epsilon = -1.0;
    EXPECT_ERROR_KIND(run_chan_vese(img, default_seed(32, 32), p), ErrorKind::InvalidArgument);
}

TEST(MaskEnergy, HandComputed) {
    // 2x2 foreground in a 4x4 image: boundary 8 edges, exact fit.
    BinaryMask m(4, 4);
    m.set(1, 1);
    m.set(1, 2);
    m.set(2, 1);
    m.set(2, 2);
    const GrayImage img = oracle::two_tone(m, 200, 50);
    ChanVeseParams p;
    p.mu = 2.0;
    p.nu = 3.0;
    EXPECT_DOUBLE_EQ(mask_energy(m, img, p), 2.0 * 8 + 3.0 * 4);
    GrayImage noisy = img;
    noisy(0, 0) = 60;  // outside mean becomes 50 + 10/12
    const double c2 = 50.0 + 10.0 / 12.0;
    const double fit = 11 * (50.0 - c2) * (50.0 - c2) + (60.0 - c2) * (60.0 - c2);
    EXPECT_NEAR(mask_energy(m, noisy, p), 16.0 + 12.0 + fit, 1e-9);
}
