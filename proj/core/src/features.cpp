#include "biliscope/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace biliscope {

namespace {

class DisjointSet {
public:
    int add() {
        parent_.push_back(static_cast<int>(parent_.size()));
        return parent_.back();
    }
    int find(int x) {
        while (parent_[static_cast<std::size_t>(x)] != x) {
            auto& p = parent_[static_cast<std::size_t>(x)];
            p = parent_[static_cast<std::size_t>(p)];
            x = p;
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) std::swap(a, b);
        parent_[static_cast<std::size_t>(a)] = b;
    }

private:
    std::vector<int> parent_;
};

}  // namespace

Raster<int> label_components(const BinaryMask& mask) {
    const int h = mask.height();
    const int w = mask.width();
    Raster<int> provisional(w, h, -1);
    DisjointSet sets;

    // First pass: provisional labels from the already-visited 8-neighbours.
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!mask.test(r, c)) continue;
            int label = -1;
            constexpr std::array<std::array<int, 2>, 4> kPrior = {{{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}}};
            for (const auto& [dr, dc] : kPrior) {
                const int rr = r + dr;
                const int cc = c + dc;
                if (!mask.contains(rr, cc) || !mask.test(rr, cc)) continue;
                const int other = provisional(rr, cc);
                if (label < 0) {
                    label = other;
                } else {
                    sets.unite(label, other);
                }
            }
            provisional(r, c) = label < 0 ? sets.add() : label;
        }
    }

    // Second pass: resolve and renumber by first appearance.
    Raster<int> labels(w, h, 0);
    std::vector<int> final_label;
    int next = 0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const int p = provisional(r, c);
            if (p < 0) continue;
            const auto root = static_cast<std::size_t>(sets.find(p));
            if (root >= final_label.size()) final_label.resize(root + 1, 0);
            if (final_label[root] == 0) final_label[root] = ++next;
            labels(r, c) = final_label[root];
        }
    }
    return labels;
}

std::vector<Blob> connected_components(const BinaryMask& mask) {
    const Raster<int> labels = label_components(mask);
    int count = 0;
    for (const int v : labels.pixels()) count = std::max(count, v);
    std::vector<Blob> blobs(static_cast<std::size_t>(count));
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            const int label = labels(r, c);
            if (label == 0) continue;
            Blob& blob = blobs[static_cast<std::size_t>(label - 1)];
            if (blob.area == 0) {
                blob.box = BoundingBox{r, c, r, c};
            } else {
                blob.box.top = std::min(blob.box.top, r);
                blob.box.left = std::min(blob.box.left, c);
                blob.box.bottom = std::max(blob.box.bottom, r);
                blob.box.right = std::max(blob.box.right, c);
            }
            blob.pixels.push_back(PixelCoord{r, c});
            ++blob.area;
            constexpr std::array<std::array<int, 2>, 4> kEdges = {{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
            for (const auto& [dr, dc] : kEdges) {
                const int rr = r + dr;
                const int cc = c + dc;
                if (!mask.contains(rr, cc) || !mask.test(rr, cc)) ++blob.perimeter;
            }
        }
    }
    return blobs;
}

const Blob& bile_duct_of(const std::vector<Blob>& blobs) {
    if (blobs.empty()) throw Error(ErrorKind::NoRegion, "no blobs in segmentation mask");
    const Blob* best = &blobs.front();
    for (const auto& blob : blobs) {
        const bool larger = blob.area > best->area;
        const bool tie_wins = blob.area == best->area &&
                              std::pair(blob.box.top, blob.box.left) < std::pair(best->box.top, best->box.left);
        if (larger || tie_wins) best = &blob;
    }
    return *best;
}

Axes axes(const Blob& duct) {
    const int w = duct.box.width();
    const int h = duct.box.height();
    return Axes{std::max(w, h), std::min(w, h)};
}

double compactness(double perimeter, double area) {
    if (!(area > 0.0)) throw Error(ErrorKind::NoRegion, "compactness: area must be positive");
    return perimeter * perimeter / (4.0 * std::numbers::pi * area);
}

double compactness(const Blob& duct) {
    return compactness(static_cast<double>(duct.perimeter), static_cast<double>(duct.area));
}

Glcm::Glcm(int levels, std::vector<double> probabilities) : levels_(levels), p_(std::move(probabilities)) {
    if (levels < 2) throw Error(ErrorKind::InvalidArgument, "glcm: levels must be >= 2");
    if (p_.size() != static_cast<std::size_t>(levels) * static_cast<std::size_t>(levels)) {
        throw Error(ErrorKind::DimensionMismatch, "glcm: matrix is not levels x levels");
    }
}

Glcm glcm(const GrayImage& img, const BinaryMask& mask, int levels) {
    if (levels < 2) throw Error(ErrorKind::InvalidArgument, "glcm: levels must be >= 2");
    if (!img.same_shape(mask)) throw Error(ErrorKind::DimensionMismatch, "glcm: image and mask differ in size");
    const auto n = static_cast<std::size_t>(levels);
    std::vector<double> counts(n * n, 0.0);
    std::size_t pairs = 0;
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c + 1 < img.width(); ++c) {
            if (!mask.test(r, c) || !mask.test(r, c + 1)) continue;
            const auto i = static_cast<std::size_t>(quantize_level(img(r, c), levels));
            const auto j = static_cast<std::size_t>(quantize_level(img(r, c + 1), levels));
            counts[i * n + j] += 1.0;
            counts[j * n + i] += 1.0;
            ++pairs;
        }
    }
    if (pairs == 0) throw Error(ErrorKind::DegenerateTexture, "glcm: no horizontal pixel pair inside the mask");
    const double total = 2.0 * static_cast<double>(pairs);
    for (auto& v : counts) v /= total;
    return Glcm(levels, std::move(counts));
}

GlcmStats glcm_stats(const Glcm& g) {
    const int n = g.levels();
    GlcmStats stats;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double p = g(i, j);
            stats.contrast += p * (i - j) * (i - j);
            stats.mean += p * i;
        }
    }
    double covariance = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double p = g(i, j);
            stats.variance += p * (i - stats.mean) * (i - stats.mean);
            covariance += p * (i - stats.mean) * (j - stats.mean);
        }
    }
    constexpr double kVarianceFloor = 1e-12;
    if (stats.variance <= kVarianceFloor) {
        stats.variance = 0.0;
        stats.correlation = 1.0;
        stats.degenerate = true;
    } else {
        stats.correlation = std::clamp(covariance / stats.variance, -1.0, 1.0);
    }
    return stats;
}

FeatureVector FeatureVector::from_values(const std::array<double, kFeatureCount>& v) noexcept {
    FeatureVector f;
    f.mja = v[0];
    f.mia = v[1];
    f.bda = v[2];
    f.iba = v[3];
    f.cmp = v[4];
    f.ar = v[5];
    f.cont = v[6];
    f.mean = v[7];
    f.var = v[8];
    f.corr = v[9];
    return f;
}

FeatureVector extract(const GrayImage& img, const BinaryMask& tree_mask, const Blob& duct,
                      const ExtractOptions& options) {
    if (!img.same_shape(tree_mask)) throw Error(ErrorKind::DimensionMismatch, "extract: image and mask differ in size");
    const std::size_t tree_area = tree_mask.count();
    if (tree_area == 0) throw Error(ErrorKind::NoRegion, "extract: biliary tree mask is empty");
    if (duct.area == 0) throw Error(ErrorKind::NoRegion, "extract: duct blob is empty");
    for (const auto& px : duct.pixels) {
        if (!tree_mask.contains(px.row, px.col) || !tree_mask.test(px.row, px.col)) {
            throw Error(ErrorKind::InvalidArgument, "extract: duct pixel outside the tree mask");
        }
    }
    FeatureVector f;
    const Axes ax = axes(duct);
    f.mja = ax.major / options.axis_scale;
    f.mia = ax.minor / options.axis_scale;
    f.bda = static_cast<double>(duct.area);
    f.iba = static_cast<double>(tree_area);
    f.cmp = compactness(duct);
    f.ar = f.bda / f.iba;
    const GlcmStats tex = glcm_stats(glcm(img, tree_mask, options.glcm_levels));
    f.cont = tex.contrast;
    f.mean = tex.mean;
    f.var = tex.variance;
    f.corr = tex.correlation;
    f.texture_degenerate = tex.degenerate;
    return f;
}

FeatureVector extract_from_mask(const GrayImage& img, const BinaryMask& tree_mask, const ExtractOptions& options) {
    const auto blobs = connected_components(tree_mask);
    return extract(img, tree_mask, bile_duct_of(blobs), options);
}

std::string_view to_string(FeatureMode mode) noexcept {
    return mode == FeatureMode::Reduced4 ? "reduced4" : "full10";
}

FeatureMode parse_feature_mode(std::string_view text) {
    if (text == "reduced4") return FeatureMode::Reduced4;
    if (text == "full10") return FeatureMode::Full10;
    throw Error(ErrorKind::Config, "unknown feature mode '" + std::string(text) + "' (want reduced4 or full10)");
}

std::array<double, 4> reduce(const FeatureVector& v) noexcept { return {v.mja, v.ar, v.mia, v.cmp}; }

std::vector<std::size_t> feature_columns(FeatureMode mode) {
    if (mode == FeatureMode::Reduced4) return {0, 5, 1, 4};
    std::vector<std::size_t> all(kFeatureCount);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
}

std::vector<double> select_features(const std::array<double, kFeatureCount>& values, FeatureMode mode) {
    std::vector<double> out;
    for (const auto col : feature_columns(mode)) out.push_back(values[col]);
    return out;
}

ScalerState fit_scaler(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "scaler: empty dataset");
    ScalerState s{rows.front(), rows.front()};
    for (const auto& row : rows) {
        if (row.size() != s.dimension()) throw Error(ErrorKind::DimensionMismatch, "scaler: ragged rows");
        for (std::size_t k = 0; k < row.size(); ++k) {
            s.min[k] = std::min(s.min[k], row[k]);
            s.max[k] = std::max(s.max[k], row[k]);
        }
    }
    return s;
}

std::vector<double> apply_scaler(const ScalerState& scaler, const std::vector<double>& row) {
    if (row.size() != scaler.dimension()) throw Error(ErrorKind::DimensionMismatch, "scaler: dimension mismatch");
    std::vector<double> out(row.size());
    for (std::size_t k = 0; k < row.size(); ++k) {
        const double range = scaler.max[k] - scaler.min[k];
        out[k] = range > 0.0 ? (row[k] - scaler.min[k]) / range : 0.0;
    }
    return out;
}

}  // namespace biliscope
