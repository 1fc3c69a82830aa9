#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "biliscope/classify.hpp"
#include "biliscope/denoiser.hpp"
#include "biliscope/enhance.hpp"
#include "biliscope/evaluate.hpp"
#include "biliscope/features.hpp"
#include "biliscope/phantom.hpp"
#include "biliscope/segment.hpp"

namespace biliscope {

/// Which image the texture statistics are measured on.
enum class TextureSource { Enhanced, Denoised };

[[nodiscard]] std::string_view to_string(TextureSource source) noexcept;

struct PipelineConfig {
    /// Side length the input is resampled to before every other stage.
    int working_size = kWorkingSize;
    double sharpen_amount = 1.0;
    /// Residual-net weights; empty selects the Gaussian fallback.
    std::filesystem::path denoiser_weights;
    double fallback_sigma = 1.0;
    DehazeParams dehaze;
    std::optional<SeedSpec> seed;
    ChanVeseParams chan_vese;
    int glcm_levels = 8;
    TextureSource texture_source = TextureSource::Enhanced;
    FeatureMode feature_mode = FeatureMode::Reduced4;
    /// Segmentations with fewer foreground pixels are flagged degenerate.
    std::size_t min_mask_area = 10;
    /// build_dataset fails when more than this fraction of rows is degenerate.
    double max_degenerate_fraction = 0.2;
    std::vector<ModelSpec> models;
    CvOptions cv;
    /// Directory of trained models plus scaler; enables classification in run_case.
    std::filesystem::path model_dir;
    TrainConfig denoiser_training;
    /// Clean phantoms rendered for denoiser training.
    int denoiser_training_images = 24;
    CorpusSpec corpus;
    std::uint64_t rng_seed = 42;

    std::filesystem::path storage_dir = "biliscope-data";
    int worker_count = 2;
    int service_snapshot_every = 25;
    std::filesystem::path ui_dir;

    /// Default config: all six models, 10 folds.
    [[nodiscard]] static PipelineConfig defaults();
    void validate() const;
};

/// `key = value` lines; `#` starts a comment. Unknown keys are Config errors
/// naming the line.
[[nodiscard]] PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
[[nodiscard]] PipelineConfig load_config(const std::filesystem::path& path);

/// Stage names in cascade order.
inline constexpr std::array<std::string_view, 12> kStageOrder = {
    "decode",      "resize", "grayscale",   "sharpen", "denoise", "equalize",
    "complement1", "dehaze", "complement2", "segment", "extract", "classify"};

struct Intermediate {
    std::string stage;
    std::variant<GrayImage, RgbImage> image;
};

struct StageFailure {
    std::string stage;
    ErrorKind kind = ErrorKind::InvalidArgument;
    std::string message;
};

struct ModelScore {
    ModelKind kind = ModelKind::Knn;
    double score = 0.0;
    Label label = Label::Normal;
};

struct CaseResult {
    std::string id;
    std::vector<std::string> stage_trace;
    std::vector<Intermediate> intermediates;
    SeedSpec seed;
    std::optional<BinaryMask> mask;
    std::vector<BinaryMask> snapshots;
    std::vector<int> snapshot_iterations;
    std::optional<FeatureVector> features;
    std::size_t mask_area = 0;
    bool degenerate = false;
    std::vector<ModelScore> scores;
    /// Majority of the model labels; ties go to dilated.
    std::optional<Label> predicted;
    std::optional<StageFailure> failure;

    [[nodiscard]] bool ok() const noexcept { return !failure.has_value(); }
};

struct CaseOptions {
    std::string id;
    std::optional<SeedSpec> seed;
    std::optional<int> iterations;
    std::optional<FeatureMode> feature_mode;
    int snapshot_every = 0;
    /// Called after every segmentation iteration; `snapshot` is set when one
    /// was captured at that iteration.
    std::function<void(int iteration, int total, const BinaryMask* snapshot)> progress;
};

/// Min-max scaler persisted beside feature CSVs and model directories.
[[nodiscard]] std::string scaler_to_text(const ScalerState& scaler);
[[nodiscard]] ScalerState scaler_from_text(std::string_view text);

class Pipeline {
public:
    /// Loads denoiser weights and, when configured, the model directory.
    explicit Pipeline(PipelineConfig config);

    [[nodiscard]] const PipelineConfig& config() const noexcept { return config_; }
    [[nodiscard]] bool has_models() const noexcept { return !models_.empty(); }

    /// Stage errors are captured in the result, never thrown.
    [[nodiscard]] CaseResult run_case(std::span<const std::uint8_t> image_bytes, const CaseOptions& options = {}) const;

private:
    PipelineConfig config_;
    std::optional<ResidualNet> denoiser_;
    std::vector<TrainedModel> models_;
    std::optional<ScalerState> scaler_;
};

struct DatasetBuild {
    /// Non-degenerate rows, all ten scaled features.
    LabeledDataset dataset;
    ScalerState scaler;
    std::vector<CaseResult> cases;
    std::size_t degenerate_rows = 0;
    std::string csv;
};

/// Runs every manifest image (intermediates dropped), fits the scaler on the
/// usable rows and renders the feature CSV. Throws CorpusQuality when too
/// many rows are degenerate.
[[nodiscard]] DatasetBuild build_dataset(const Pipeline& pipeline, const std::vector<ManifestEntry>& manifest);

inline constexpr const char* kFeatureCsvHeader = "id,label,mja,mia,bda,iba,cmp,ar,cont,mean,var,corr";

/// Parses a feature CSV; `#` lines (degenerate rows) are skipped.
[[nodiscard]] LabeledDataset parse_feature_csv(std::string_view text);

/// The dataset restricted to the configured feature mode.
[[nodiscard]] LabeledDataset select_mode(const LabeledDataset& full, FeatureMode mode);

struct Evaluation {
    std::vector<ModelReport> reports;
    std::string json;
};

[[nodiscard]] Evaluation evaluate_all(const PipelineConfig& config, const LabeledDataset& full,
                                      std::size_t excluded_rows = 0);

/// Fits every configured model on the whole dataset and writes
/// `<kind>.model` files plus `scaler.txt` into `dir`.
void write_model_dir(const PipelineConfig& config, const LabeledDataset& full, const ScalerState& scaler,
                     const std::filesystem::path& dir);

/// Renders `denoiser_training_images` clean phantoms (no noise or haze) from
/// the corpus settings and trains on them.
[[nodiscard]] ResidualNet train_denoiser_on_phantoms(const PipelineConfig& config, const EpochCallback& on_epoch = {});

/// Serialised CaseResult (features, scores, flags, failure) as JSON text.
[[nodiscard]] std::string case_result_json(const CaseResult& result);

}  // namespace biliscope
