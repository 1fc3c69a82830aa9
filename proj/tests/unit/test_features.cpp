#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "biliscope/features.hpp"
#include "biliscope/phantom.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace biliscope;

namespace {

BinaryMask mask_from(const std::vector<std::string>& rows) {
    BinaryMask m(static_cast<int>(rows.front().size()), static_cast<int>(rows.size()));
    for (int r = 0; r < m.height(); ++r) {
        for (int c = 0; c < m.width(); ++c) m.set(r, c, rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] == '#');
    }
    return m;
}

void expect_labels_match_flood_fill(const BinaryMask& m) {
    const Raster<int> labels = label_components(m);
    const std::vector<int> expected = oracle::flood_fill_labels(m);
    ASSERT_EQ(labels.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) ASSERT_EQ(labels.pixels()[i], expected[i]) << "pixel " << i;
}

}  // namespace

TEST(Components, PlusShape) {
    const auto blobs = connected_components(mask_from({".#.", "###", ".#."}));
    ASSERT_EQ(blobs.size(), 1u);
    EXPECT_EQ(blobs[0].area, 5u);
    EXPECT_EQ(blobs[0].perimeter, 12u);
    EXPECT_EQ(blobs[0].box, (BoundingBox{0, 0, 2, 2}));
}

TEST(Components, DiagonalTouchIsOneBlob) {
    const auto blobs = connected_components(mask_from({"#.", ".#"}));
    ASSERT_EQ(blobs.size(), 1u);
    EXPECT_EQ(blobs[0].area, 2u);
    EXPECT_EQ(blobs[0].perimeter, 8u);
}

TEST(Components, SinglePixelPerimeterAndBorder) {
    const auto blobs = connected_components(mask_from({"#"}));
    ASSERT_EQ(blobs.size(), 1u);
    EXPECT_EQ(blobs[0].perimeter, 4u);
    EXPECT_TRUE(connected_components(BinaryMask(5, 5)).empty());
}

TEST(Components, MatchFloodFillOnRandomMasks) {
    std::mt19937_64 rng(11);
    for (int k = 0; k < 100; ++k) {
        const BinaryMask m = oracle::random_mask(16, 16, 0.2 + 0.006 * k, rng);
        expect_labels_match_flood_fill(m);
    }
}

TEST(Components, BlobsPartitionForeground) {
    std::mt19937_64 rng(12);
    for (int k = 0; k < 20; ++k) {
        const BinaryMask m = oracle::random_mask(24, 19, 0.45, rng);
        const auto blobs = connected_components(m);
        BinaryMask seen(24, 19);
        std::size_t total = 0;
        for (const auto& b : blobs) {
            total += b.area;
            EXPECT_EQ(b.pixels.size(), b.area);
            EXPECT_GE(b.perimeter, 4u);
            for (const auto& p : b.pixels) {
                EXPECT_TRUE(m.test(p.row, p.col));
                EXPECT_FALSE(seen.test(p.row, p.col));
                seen.set(p.row, p.col);
            }
        }
        EXPECT_EQ(total, m.count());
    }
}

TEST(Components, PerimeterCountsExposedEdges) {
    std::mt19937_64 rng(13);
    const BinaryMask m = oracle::random_mask(20, 20, 0.5, rng);
    const auto blobs = connected_components(m);
    for (const auto& b : blobs) {
        std::size_t edges = 0;
        for (const auto& p : b.pixels) {
            const int dr[] = {-1, 1, 0, 0};
            const int dc[] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int rr = p.row + dr[k];
                const int cc = p.col + dc[k];
                if (!m.contains(rr, cc) || !m.test(rr, cc)) ++edges;
            }
        }
        EXPECT_EQ(b.perimeter, edges);
    }
}

TEST(Duct, LargestBlobAndTies) {
    std::vector<Blob> blobs(3);
    blobs[0].area = 3;
    blobs[1].area = 9;
    blobs[2].area = 1;
    EXPECT_EQ(&bile_duct_of(blobs), &blobs[1]);

    const auto tied = connected_components(mask_from({"....##", "#.....", "#....."}));
    ASSERT_EQ(tied.size(), 2u);
    EXPECT_EQ(bile_duct_of(tied).box.top, 0);
    EXPECT_EQ(bile_duct_of(tied).box.left, 4);
    EXPECT_ERROR_KIND(bile_duct_of({}), ErrorKind::NoRegion);
}

TEST(Duct, SingleBlobIsItself) {
    const auto blobs = connected_components(mask_from({"..", ".#"}));
    EXPECT_EQ(bile_duct_of(blobs).area, 1u);
}

TEST(Axes, BoundingBoxExtents) {
    BinaryMask rect(12, 6);
    for (int r = 1; r < 5; ++r) {
        for (int c = 1; c < 11; ++c) rect.set(r, c);
    }
    const Axes a = axes(connected_components(rect).front());
    EXPECT_EQ(a.major, 10);
    EXPECT_EQ(a.minor, 4);

    const Axes one = axes(connected_components(mask_from({"#"})).front());
    EXPECT_EQ(one.major, 1);
    EXPECT_EQ(one.minor, 1);

    BinaryMask ell(6, 10);
    for (int r = 0; r < 10; ++r) ell.set(r, 0);
    for (int c = 0; c < 6; ++c) ell.set(9, c);
    const Axes l = axes(connected_components(ell).front());
    EXPECT_EQ(l.major, 10);
    EXPECT_EQ(l.minor, 6);
}

TEST(Compactness, Formula) {
    const double r = 7.0;
    EXPECT_NEAR(compactness(2 * std::numbers::pi * r, std::numbers::pi * r * r), 1.0, 1e-12);
    EXPECT_NEAR(compactness(4 * 5.0, 25.0), 4.0 / std::numbers::pi, 1e-12);
    EXPECT_NEAR(4.0 / std::numbers::pi, 1.2732, 1e-4);
}

TEST(Compactness, RasterisedDisk) {
    const BinaryMask d = oracle::disk_mask(50, 25, 25, 20.0);
    const Blob b = connected_components(d).front();
    const double expected = static_cast<double>(b.perimeter * b.perimeter) / (4.0 * std::numbers::pi * static_cast<double>(b.area));
    EXPECT_DOUBLE_EQ(compactness(b), expected);
    EXPECT_GE(expected, 1.0);
    EXPECT_LE(expected, 1.8);
}

TEST(Glcm, ConstantRegion) {
    const GrayImage img(6, 6, std::uint8_t{100});
    BinaryMask m(6, 6, std::uint8_t{1});
    const Glcm g = glcm(img, m, 8);
    const int level = quantize_level(100, 8);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) EXPECT_EQ(g(i, j), (i == level && j == level) ? 1.0 : 0.0);
    }
    const GlcmStats s = glcm_stats(g);
    EXPECT_EQ(s.contrast, 0.0);
    EXPECT_EQ(s.variance, 0.0);
    EXPECT_EQ(s.correlation, 1.0);
    EXPECT_TRUE(s.degenerate);
}

TEST(Glcm, Checkerboard) {
    const GrayImage img = testutil::gray(2, 2, {0, 255, 255, 0});
    const Glcm g = glcm(img, BinaryMask(2, 2, std::uint8_t{1}), 2);
    EXPECT_EQ(g(0, 1), 0.5);
    EXPECT_EQ(g(1, 0), 0.5);
    EXPECT_EQ(g(0, 0), 0.0);
    EXPECT_EQ(g(1, 1), 0.0);
    const GlcmStats s = glcm_stats(g);
    EXPECT_DOUBLE_EQ(s.mean, 0.5);
    EXPECT_DOUBLE_EQ(s.variance, 0.25);
    EXPECT_DOUBLE_EQ(s.contrast, 1.0);
    EXPECT_DOUBLE_EQ(s.correlation, -1.0);
    EXPECT_FALSE(s.degenerate);
}

TEST(Glcm, NoPairsIsDegenerate) {
    BinaryMask m(4, 4);
    m.set(0, 0);
    m.set(2, 1);
    EXPECT_ERROR_KIND(glcm(GrayImage(4, 4), m, 8), ErrorKind::DegenerateTexture);
}

TEST(Glcm, MatchesBruteForceOracle) {
    std::mt19937_64 rng(21);
    for (int k = 0; k < 50; ++k) {
        const GrayImage img = oracle::random_image(16, 16, rng);
        const BinaryMask m = oracle::random_mask(16, 16, 0.7, rng);
        const int levels = 2 + k % 15;
        const auto ref = oracle::brute_glcm(img, m, levels);
        ASSERT_TRUE(ref.any_pair);
        const Glcm g = glcm(img, m, levels);
        double sum = 0.0;
        for (int i = 0; i < levels; ++i) {
            for (int j = 0; j < levels; ++j) {
                EXPECT_NEAR(g(i, j), ref.p[static_cast<std::size_t>(i * levels + j)], 1e-12);
                EXPECT_EQ(g(i, j), g(j, i));
                sum += g(i, j);
            }
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        const GlcmStats s = glcm_stats(g);
        EXPECT_NEAR(s.contrast, ref.contrast, 1e-9);
        EXPECT_NEAR(s.mean, ref.mean, 1e-9);
        EXPECT_NEAR(s.variance, ref.variance, 1e-9);
        EXPECT_NEAR(s.correlation, ref.correlation, 1e-9);
        EXPECT_GE(s.correlation, -1.0 - 1e-12);
        EXPECT_LE(s.correlation, 1.0 + 1e-12);
    }
}

TEST(Glcm, SymmetricMatrixHasEqualMarginalMeans) {
    std::mt19937_64 rng(22);
    const Glcm g = glcm(oracle::random_image(16, 16, rng), BinaryMask(16, 16, std::uint8_t{1}), 8);
    double row_mean = 0.0;
    double col_mean = 0.0;
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            row_mean += i * g(i, j);
            col_mean += j * g(i, j);
        }
    }
    EXPECT_NEAR(row_mean, col_mean, 1e-12);
}

TEST(Extract, AreaRatio) {
    BinaryMask tree(20, 20);
    for (int r = 0; r < 10; ++r) {
        for (int c = 0; c < 20; ++c) tree.set(r, c);
    }
    BinaryMask duct(20, 20);
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 10; ++c) duct.set(r, c);
    }
    std::mt19937_64 rng(23);
    const GrayImage img = oracle::random_image(20, 20, rng);
    const FeatureVector v = extract(img, tree, connected_components(duct).front());
    EXPECT_DOUBLE_EQ(v.bda, 50.0);
    EXPECT_DOUBLE_EQ(v.iba, 200.0);
    EXPECT_DOUBLE_EQ(v.ar, 0.25);
    EXPECT_DOUBLE_EQ(v.mja, 10.0 / 512.0);
    EXPECT_DOUBLE_EQ(v.mia, 5.0 / 512.0);
    EXPECT_DOUBLE_EQ(v.cmp, 30.0 * 30.0 / (4.0 * std::numbers::pi * 50.0));
    const auto ref = oracle::brute_glcm(img, tree, 8);
    EXPECT_NEAR(v.cont, ref.contrast, 1e-12);
    EXPECT_NEAR(v.corr, ref.correlation, 1e-12);

    const FeatureVector same = extract(img, tree, connected_components(tree).front());
    EXPECT_DOUBLE_EQ(same.ar, 1.0);
}

TEST(Extract, EmptyTree) {
    Blob b;
    b.area = 1;
    b.pixels = {{0, 0}};
    EXPECT_ERROR_KIND(extract(GrayImage(4, 4), BinaryMask(4, 4), b), ErrorKind::NoRegion);
    EXPECT_ERROR_KIND(extract_from_mask(GrayImage(4, 4), BinaryMask(4, 4)), ErrorKind::NoRegion);
}

TEST(Extract, WideDuctDominatesNarrow) {
    PhantomSpec narrow;
    narrow.duct_width_px = 8;
    narrow.rng_seed = 5;
    PhantomSpec wide = narrow;
    wide.duct_width_px = 24;
    const PhantomSample a = generate(narrow);
    const PhantomSample b = generate(wide);
    const FeatureVector va = extract(a.image, a.tree_mask, connected_components(a.duct_mask).front());
    const FeatureVector vb = extract(b.image, b.tree_mask, connected_components(b.duct_mask).front());
    EXPECT_GT(vb.mja, va.mja);
    EXPECT_GT(vb.mia, va.mia);
    EXPECT_GT(vb.ar, va.ar);
}

TEST(Extract, InvariantsOnRandomTrees) {
    std::mt19937_64 rng(24);
    for (int k = 0; k < 20; ++k) {
        const BinaryMask tree = oracle::random_mask(24, 24, 0.6, rng);
        const GrayImage img = oracle::random_image(24, 24, rng);
        const FeatureVector v = extract_from_mask(img, tree);
        EXPECT_GT(v.ar, 0.0);
        EXPECT_LE(v.ar, 1.0);
        EXPECT_GE(v.mja, v.mia);
        EXPECT_GE(v.corr, -1.0 - 1e-12);
        EXPECT_LE(v.corr, 1.0 + 1e-12);
    }
}

TEST(Scaler, MinMax) {
    const std::vector<std::vector<double>> rows = {{4.0, 1.0, 7.0}, {18.0, 3.0, 7.0}, {9.78, 2.0, 7.0}};
    const ScalerState s = fit_scaler(rows);
    EXPECT_EQ(apply_scaler(s, rows[0]), (std::vector<double>{0.0, 0.0, 0.0}));
    EXPECT_EQ(apply_scaler(s, rows[1]), (std::vector<double>{1.0, 1.0, 0.0}));
    EXPECT_NEAR(apply_scaler(s, rows[2])[0], 0.4129, 5e-5);
    EXPECT_DOUBLE_EQ(apply_scaler(s, rows[2])[0], 5.78 / 14.0);
    EXPECT_EQ(apply_scaler(s, rows[2])[2], 0.0);
    EXPECT_ERROR_KIND(apply_scaler(s, {1.0}), ErrorKind::DimensionMismatch);
}

TEST(Scaler, TrainingRowsLandInUnitInterval) {
    std::mt19937_64 rng(25);
    std::uniform_real_distribution<double> d(-50.0, 50.0);
    std::vector<std::vector<double>> rows(30, std::vector<double>(5));
    for (auto& r : rows) {
        for (auto& v : r) v = d(rng);
    }
    const ScalerState s = fit_scaler(rows);
    for (std::size_t k = 0; k < s.dimension(); ++k) EXPECT_LE(s.min[k], s.max[k]);
    for (const auto& r : rows) {
        for (const double v : apply_scaler(s, r)) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Reduce, ProjectionOrderAndCommutesWithScaling) {
    FeatureVector v;
    v.mja = 1;
    v.mia = 2;
    v.bda = 3;
    v.iba = 4;
    v.cmp = 5;
    v.ar = 6;
    v.cont = 7;
    v.mean = 8;
    v.var = 9;
    v.corr = 10;
    EXPECT_EQ(reduce(v), (std::array<double, 4>{1, 6, 2, 5}));
    EXPECT_EQ(select_features(v.values(), FeatureMode::Full10).size(), 10u);

    std::mt19937_64 rng(26);
    std::uniform_real_distribution<double> d(0.0, 10.0);
    std::vector<std::vector<double>> full;
    std::vector<std::vector<double>> reduced;
    for (int k = 0; k < 12; ++k) {
        std::array<double, kFeatureCount> a{};
        for (auto& x : a) x = d(rng);
        full.emplace_back(a.begin(), a.end());
        reduced.push_back(select_features(a, FeatureMode::Reduced4));
    }
    const ScalerState sf = fit_scaler(full);
    const ScalerState sr = fit_scaler(reduced);
    for (std::size_t k = 0; k < full.size(); ++k) {
        const auto scaled = apply_scaler(sf, full[k]);
        std::array<double, kFeatureCount> arr{};
        std::copy(scaled.begin(), scaled.end(), arr.begin());
        EXPECT_EQ(select_features(arr, FeatureMode::Reduced4), apply_scaler(sr, reduced[k]));
    }
}

TEST(Reduce, ModeNames) {
    EXPECT_EQ(parse_feature_mode("reduced4"), FeatureMode::Reduced4);
    EXPECT_EQ(parse_feature_mode("full10"), FeatureMode::Full10);
    EXPECT_EQ(to_string(FeatureMode::Full10), "full10");
    EXPECT_ERROR_KIND(parse_feature_mode("all"), ErrorKind::Config);
    EXPECT_EQ(feature_columns(FeatureMode::Reduced4), (std::vector<std::size_t>{0, 5, 1, 4}));
}
