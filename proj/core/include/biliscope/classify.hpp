#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "biliscope/raster.hpp"

namespace biliscope {

enum class Label { Normal = 0, Dilated = 1 };

[[nodiscard]] std::string_view to_string(Label label) noexcept;
[[nodiscard]] Label parse_label(std::string_view text);

struct LabeledDataset {
    std::vector<std::vector<double>> rows;
    std::vector<Label> labels;
    std::vector<std::string> feature_names;
    std::vector<std::string> ids;

    [[nodiscard]] std::size_t size() const noexcept { return rows.size(); }
    [[nodiscard]] std::size_t dimension() const noexcept { return rows.empty() ? 0 : rows.front().size(); }
    [[nodiscard]] std::size_t count(Label label) const noexcept;

    /// Rows and labels agree in length, rows share one dimension, values are finite.
    void validate() const;

    [[nodiscard]] LabeledDataset subset(std::span<const std::size_t> indices) const;
};

enum class ModelKind { Knn, Svm, Lr, Dt, Rf, Mlp };

inline constexpr std::array<ModelKind, 6> kAllModelKinds = {ModelKind::Knn, ModelKind::Svm, ModelKind::Lr,
                                                            ModelKind::Dt,  ModelKind::Rf,  ModelKind::Mlp};

[[nodiscard]] std::string_view to_string(ModelKind kind) noexcept;
[[nodiscard]] ModelKind parse_model_kind(std::string_view text);

struct KnnParams {
    int k = 5;
};

struct SvmParams {
    /// RBF width; 0 selects 1 / dimension.
    double gamma = 0.0;
    double c = 1.0;
    double tolerance = 1e-3;
    int max_passes = 100;
};

struct LrParams {
    double learning_rate = 0.1;
    int epochs = 5000;
};

struct TreeParams {
    /// 0 means unlimited.
    int max_depth = 8;
    int min_leaf = 2;
    /// Features tried per split: 0 = all, -1 = floor(sqrt(d)).
    int max_features = 0;
};

struct ForestParams {
    int trees = 100;
    /// Per-split feature sample: -1 = floor(sqrt(d)), 0 = all.
    int max_features = -1;
    bool bootstrap = true;
    TreeParams tree{.max_depth = 8, .min_leaf = 2, .max_features = 0};
};

struct MlpParams {
    int hidden = 10;
    double learning_rate = 0.1;
    int epochs = 2000;
    double init_range = 0.5;
};

struct ModelSpec {
    ModelKind kind = ModelKind::Knn;
    KnnParams knn;
    SvmParams svm;
    LrParams lr;
    TreeParams dt;
    ForestParams rf;
    MlpParams mlp;
    std::uint64_t rng_seed = 42;

    [[nodiscard]] static ModelSpec defaults(ModelKind kind, std::uint64_t seed = 42);
    void validate() const;
};

struct KnnState {
    int k = 5;
    std::vector<std::vector<double>> rows;
    std::vector<Label> labels;
};

struct SvmState {
    double gamma = 1.0;
    std::vector<std::vector<double>> support;
    /// alpha_i * y_i per support vector.
    std::vector<double> coef;
    double bias = 0.0;
};

struct LrState {
    std::vector<double> weights;
    double bias = 0.0;
};

struct TreeNode {
    /// -1 marks a leaf.
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    /// Dilated fraction of the training rows that reached this node.
    double score = 0.0;
};

struct TreeState {
    std::vector<TreeNode> nodes;

    [[nodiscard]] double score(std::span<const double> x) const;
};

struct ForestState {
    std::vector<TreeState> trees;
};

/// d-h-2 network: sigmoid hidden layer, softmax output (index 1 = dilated).
struct MlpState {
    int inputs = 0;
    int hidden = 0;
    std::vector<double> w1;  // hidden x inputs
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // 2 x hidden
    std::vector<double> b2;  // 2

    [[nodiscard]] static MlpState random(int inputs, int hidden, double range, std::uint64_t seed);
    /// Probability of the dilated class.
    [[nodiscard]] double forward(std::span<const double> x) const;
};

/// Mean cross-entropy over the rows; fills `grad` (same shape) when non-null.
double mlp_loss_and_gradient(const MlpState& net, const std::vector<std::vector<double>>& rows,
                             const std::vector<Label>& labels, MlpState* grad);

using ModelState = std::variant<KnnState, SvmState, LrState, TreeState, ForestState, MlpState>;

class TrainedModel {
public:
    TrainedModel(ModelKind kind, std::size_t dimension, ModelState state);

    [[nodiscard]] ModelKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t dimension() const noexcept { return dimension_; }
    [[nodiscard]] const ModelState& state() const noexcept { return state_; }

    /// Dilated probability in [0, 1]; throws DimensionMismatch.
    [[nodiscard]] double predict_score(std::span<const double> x) const;
    /// Dilated iff score >= 0.5.
    [[nodiscard]] Label predict_label(std::span<const double> x) const;

private:
    ModelKind kind_;
    std::size_t dimension_;
    ModelState state_;
};

[[nodiscard]] Label label_for_score(double score) noexcept;

/// Deterministic given spec.rng_seed. Discriminative kinds throw
/// DegenerateData unless both labels are present.
[[nodiscard]] TrainedModel train_model(const ModelSpec& spec, const LabeledDataset& data);

/// Versioned, kind-tagged blob: text manifest, blank line, little-endian float32 tensors.
[[nodiscard]] Bytes save_model(const TrainedModel& model);
[[nodiscard]] TrainedModel load_model(std::span<const std::uint8_t> bytes);

}  // namespace biliscope
