#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "biliscope/classify.hpp"

namespace biliscope {

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    [[nodiscard]] std::size_t total() const noexcept { return tp + tn + fp + fn; }
    void add(Label truth, Label predicted) noexcept;

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// A rate whose denominator was zero is reported as 0 with its flag set.
struct Metrics {
    double sensitivity = 0.0;
    double precision = 0.0;
    double specificity = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    bool sensitivity_degenerate = false;
    bool precision_degenerate = false;
    bool specificity_degenerate = false;
    bool f1_degenerate = false;
    bool accuracy_degenerate = false;
};

[[nodiscard]] Metrics metrics(const ConfusionCounts& c) noexcept;

[[nodiscard]] ConfusionCounts confusion(std::span<const Label> truth, std::span<const Label> predicted);

struct RocPoint {
    /// Scores >= threshold count as dilated; the first point uses +inf.
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    double auc = 0.0;
    std::vector<RocPoint> points;
};

/// Sweeps every distinct score from high to low; trapezoidal area. Throws
/// UndefinedAuc unless both labels occur.
[[nodiscard]] RocCurve roc_auc(std::span<const double> scores, std::span<const Label> labels);

/// Fold index per row. Each class is shuffled with the seed and dealt
/// round-robin, the dealing counter carrying over between classes.
/// Throws Stratification when a class has fewer rows than folds (unless
/// folds equals the row count).
[[nodiscard]] std::vector<int> stratified_folds(std::span<const Label> labels, int folds, std::uint64_t seed);

struct CvOptions {
    int folds = 10;
    std::uint64_t rng_seed = 7;
    /// Refit min-max scaling on each training split.
    bool per_fold_scaling = false;
};

struct ModelReport {
    ModelKind kind = ModelKind::Knn;
    int folds = 0;
    ConfusionCounts counts;
    Metrics metrics;
    RocCurve roc;
    /// Out-of-fold dilated score per dataset row.
    std::vector<double> scores;
    std::vector<int> fold_of_row;
};

[[nodiscard]] ModelReport cross_validate(const ModelSpec& spec, const LabeledDataset& data, const CvOptions& options);

struct ReportContext {
    std::string feature_mode;
    std::vector<std::string> feature_names;
    std::size_t rows = 0;
    std::size_t excluded_rows = 0;
    CvOptions cv;
};

/// Deterministic JSON text: one block per model with pooled counts, the five
/// rates, AUC and ROC points.
[[nodiscard]] std::string report_json(const ReportContext& context, const std::vector<ModelReport>& reports);

}  // namespace biliscope
