#include "biliscope/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace biliscope {

std::string_view to_string(TextureSource source) noexcept {
    return source == TextureSource::Denoised ? "denoised" : "enhanced";
}

// --- configuration ----------------------------------------------------------------

PipelineConfig PipelineConfig::defaults() {
    PipelineConfig cfg;
    for (const auto kind : kAllModelKinds) cfg.models.push_back(ModelSpec::defaults(kind, cfg.rng_seed));
    return cfg;
}

void PipelineConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::Config, what); };
    if (working_size < 21) fail("working_size must be >= 21");
    if (sharpen_amount < 0.0) fail("sharpen.amount must be >= 0");
    if (!(fallback_sigma > 0.0)) fail("denoiser.fallback_sigma must be > 0");
    if (glcm_levels < 2 || glcm_levels > 256) fail("glcm.levels must lie in [2, 256]");
    if (cv.folds < 2) fail("eval.folds must be >= 2");
    if (!(max_degenerate_fraction >= 0.0 && max_degenerate_fraction <= 1.0)) {
        fail("dataset.max_degenerate_fraction must lie in [0, 1]");
    }
    if (worker_count < 1) fail("service.workers must be >= 1");
    if (service_snapshot_every < 0) fail("service.snapshot_every must be >= 0");
    if (seed && !seed->fits(working_size, working_size)) fail("seed rectangle leaves the working image");
    if (denoiser_training_images < 1) fail("train.images must be >= 1");
    try {
        dehaze.validate();
        chan_vese.validate();
        for (const auto& m : models) m.validate();
    } catch (const Error& e) {
        fail(e.what());
    }
}

namespace {

class KeyValues {
public:
    KeyValues(std::string_view text) {
        std::istringstream in{std::string(text)};
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorKind::Config, "config line " + std::to_string(line_no) + ": expected 'key = value'");
            }
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) throw Error(ErrorKind::Config, "config line " + std::to_string(line_no) + ": empty key");
            if (entries_.count(key) != 0) {
                throw Error(ErrorKind::Config, "config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
            }
            entries_[key] = Entry{value, line_no};
        }
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::optional<std::string> take(const std::string& key) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        used_.push_back(key);
        return it->second.value;
    }

    template <typename T>
    void number(const std::string& key, T& out) {
        const auto v = take(key);
        if (!v) return;
        T parsed{};
        const char* first = v->data();
        const char* last = first + v->size();
        const auto [ptr, ec] = std::from_chars(first, last, parsed);
        if (ec != std::errc{} || ptr != last) {
            throw Error(ErrorKind::Config, "config line " + std::to_string(entries_[key].line) + ": '" + key +
                                               "' expects a number, got '" + *v + "'");
        }
        out = parsed;
    }

    void flag(const std::string& key, bool& out) {
        const auto v = take(key);
        if (!v) return;
        if (*v == "true" || *v == "1" || *v == "yes") {
            out = true;
        } else if (*v == "false" || *v == "0" || *v == "no") {
            out = false;
        } else {
            throw Error(ErrorKind::Config, "config line " + std::to_string(entries_[key].line) + ": '" + key +
                                               "' expects true or false, got '" + *v + "'");
        }
    }

    void path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
        const auto v = take(key);
        if (!v) return;
        const std::filesystem::path p(*v);
        out = p.is_absolute() || base.empty() ? p : base / p;
    }

    void reject_unused() const {
        for (const auto& [key, entry] : entries_) {
            if (std::find(used_.begin(), used_.end(), key) == used_.end()) {
                throw Error(ErrorKind::Config, "config line " + std::to_string(entry.line) + ": unknown key '" + key + "'");
            }
        }
    }

private:
    struct Entry {
        std::string value;
        int line = 0;
    };

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, Entry> entries_;
    std::vector<std::string> used_;
};

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

}  // namespace

PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
    KeyValues kv(text);
    PipelineConfig cfg;
    kv.number("rng_seed", cfg.rng_seed);
    kv.number("working_size", cfg.working_size);
    kv.number("sharpen.amount", cfg.sharpen_amount);
    kv.path("denoiser.weights", cfg.denoiser_weights, base_dir);
    kv.number("denoiser.fallback_sigma", cfg.fallback_sigma);
    kv.number("dehaze.patch_radius", cfg.dehaze.patch_radius);
    kv.number("dehaze.omega", cfg.dehaze.omega);
    kv.number("dehaze.t_floor", cfg.dehaze.t_floor);
    kv.number("dehaze.airlight_fraction", cfg.dehaze.airlight_fraction);

    const bool any_seed = kv.has("seed.center_row") || kv.has("seed.center_col") || kv.has("seed.half_size");
    if (any_seed) {
        SeedSpec seed;
        if (!kv.has("seed.center_row") || !kv.has("seed.center_col")) {
            throw Error(ErrorKind::Config, "seed override needs both seed.center_row and seed.center_col");
        }
        kv.number("seed.center_row", seed.center_row);
        kv.number("seed.center_col", seed.center_col);
        kv.number("seed.half_size", seed.half_size);
        cfg.seed = seed;
    }

    auto& cv = cfg.chan_vese;
    kv.number("chan_vese.mu", cv.mu);
    kv.number("chan_vese.nu", cv.nu);
    kv.number("chan_vese.lambda1", cv.lambda1);
    kv.number("chan_vese.lambda2", cv.lambda2);
    kv.number("chan_vese.epsilon", cv.epsilon);
    kv.number("chan_vese.dt", cv.dt);
    kv.number("chan_vese.iterations", cv.iterations);

    kv.number("glcm.levels", cfg.glcm_levels);
    if (const auto v = kv.take("texture.source")) {
        if (*v == "enhanced") {
            cfg.texture_source = TextureSource::Enhanced;
        } else if (*v == "denoised") {
            cfg.texture_source = TextureSource::Denoised;
        } else {
            throw Error(ErrorKind::Config, "texture.source must be enhanced or denoised, got '" + *v + "'");
        }
    }
    if (const auto v = kv.take("features.mode")) cfg.feature_mode = parse_feature_mode(*v);
    kv.number("features.min_mask_area", cfg.min_mask_area);
    kv.number("dataset.max_degenerate_fraction", cfg.max_degenerate_fraction);

    std::vector<ModelKind> kinds(kAllModelKinds.begin(), kAllModelKinds.end());
    if (const auto v = kv.take("models")) {
        kinds.clear();
        for (const auto& name : split(*v, ',')) kinds.push_back(parse_model_kind(name));
        if (kinds.empty()) throw Error(ErrorKind::Config, "models list is empty");
    }
    ModelSpec proto;
    kv.number("knn.k", proto.knn.k);
    kv.number("svm.gamma", proto.svm.gamma);
    kv.number("svm.c", proto.svm.c);
    kv.number("svm.tolerance", proto.svm.tolerance);
    kv.number("svm.max_passes", proto.svm.max_passes);
    kv.number("lr.learning_rate", proto.lr.learning_rate);
    kv.number("lr.epochs", proto.lr.epochs);
    kv.number("dt.max_depth", proto.dt.max_depth);
    kv.number("dt.min_leaf", proto.dt.min_leaf);
    kv.number("rf.trees", proto.rf.trees);
    kv.number("rf.max_features", proto.rf.max_features);
    kv.number("rf.max_depth", proto.rf.tree.max_depth);
    kv.number("rf.min_leaf", proto.rf.tree.min_leaf);
    kv.flag("rf.bootstrap", proto.rf.bootstrap);
    kv.number("mlp.hidden", proto.mlp.hidden);
    kv.number("mlp.learning_rate", proto.mlp.learning_rate);
    kv.number("mlp.epochs", proto.mlp.epochs);
    kv.number("mlp.init_range", proto.mlp.init_range);
    for (const auto kind : kinds) {
        ModelSpec spec = proto;
        spec.kind = kind;
        spec.rng_seed = cfg.rng_seed;
        cfg.models.push_back(spec);
    }
    kv.path("models.dir", cfg.model_dir, base_dir);

    kv.number("eval.folds", cfg.cv.folds);
    kv.number("eval.seed", cfg.cv.rng_seed);
    kv.flag("eval.per_fold_scaling", cfg.cv.per_fold_scaling);

    auto& tr = cfg.denoiser_training;
    kv.number("train.noise_sigma", tr.noise_sigma);
    kv.number("train.patch_size", tr.patch_size);
    kv.number("train.epochs", tr.epochs);
    kv.number("train.batch_size", tr.batch_size);
    kv.number("train.learning_rate", tr.learning_rate);
    kv.number("train.momentum", tr.momentum);
    kv.number("train.clip_norm", tr.clip_norm);
    kv.number("train.depth", tr.depth);
    kv.number("train.channels", tr.channels);
    kv.number("train.seed", tr.rng_seed);
    kv.number("train.images", cfg.denoiser_training_images);

    auto& corpus = cfg.corpus;
    auto& ph = corpus.base;
    kv.number("phantom.n_per_class", corpus.n_per_class);
    kv.number("phantom.seed", corpus.rng_seed);
    kv.number("phantom.normal_min_width", corpus.normal_min_width);
    kv.number("phantom.normal_max_width", corpus.normal_max_width);
    kv.number("phantom.dilated_min_width", corpus.dilated_min_width);
    kv.number("phantom.dilated_max_width", corpus.dilated_max_width);
    kv.number("phantom.size", ph.size);
    kv.number("phantom.branch_count", ph.branch_count);
    kv.number("phantom.branch_width", ph.branch_width_px);
    kv.number("phantom.fg", ph.fg_intensity);
    kv.number("phantom.bg", ph.bg_intensity);
    kv.number("phantom.noise_sigma", ph.noise_sigma);
    kv.number("phantom.haze", ph.haze_strength);
    kv.number("phantom.length_fraction", ph.length_fraction);
    kv.number("phantom.length_per_width", ph.length_per_width);
    kv.number("phantom.meander_ratio", ph.meander_ratio);
    kv.number("phantom.meander_wavelength", ph.meander_wavelength_px);
    kv.number("phantom.branch_length_fraction", ph.branch_length_fraction);
    kv.number("phantom.branch_gap", ph.branch_gap_px);
    kv.number("phantom.dilation_threshold_mm", ph.dilation_threshold_mm);
    kv.number("phantom.fov_mm", ph.fov_mm);
    kv.number("phantom.partial_volume_width", ph.appearance.partial_volume_width_px);
    kv.flag("phantom.tube_profile", ph.appearance.tube_profile);
    kv.number("phantom.psf_sigma", ph.appearance.psf_sigma);
    kv.number("phantom.debris_gain", ph.appearance.debris_gain);
    kv.number("phantom.debris_onset", ph.appearance.debris_onset_px);
    kv.number("phantom.debris_scale", ph.appearance.debris_scale_px);

    kv.path("service.storage_dir", cfg.storage_dir, base_dir);
    kv.number("service.workers", cfg.worker_count);
    kv.number("service.snapshot_every", cfg.service_snapshot_every);
    kv.path("service.ui_dir", cfg.ui_dir, base_dir);

    kv.reject_unused();
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.parent_path());
}

// --- scaler persistence --------------------------------------------------------

std::string scaler_to_text(const ScalerState& scaler) {
    std::string out = "biliscope-scaler 1\n";
    char buf[96];
    for (std::size_t k = 0; k < scaler.dimension(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g\n", scaler.min[k], scaler.max[k]);
        out += buf;
    }
    return out;
}

ScalerState scaler_from_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "biliscope-scaler" || version != 1) {
        throw Error(ErrorKind::Parse, "scaler: bad header");
    }
    ScalerState s;
    double lo = 0.0;
    double hi = 0.0;
    while (in >> lo >> hi) {
        if (lo > hi) throw Error(ErrorKind::Parse, "scaler: min exceeds max");
        s.min.push_back(lo);
        s.max.push_back(hi);
    }
    if (!in.eof()) throw Error(ErrorKind::Parse, "scaler: trailing garbage");
    if (s.min.empty()) throw Error(ErrorKind::Parse, "scaler: no columns");
    return s;
}

// --- the cascade -------------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
    config_.validate();
    if (!config_.denoiser_weights.empty()) denoiser_ = load_weights(read_file(config_.denoiser_weights));
    if (!config_.model_dir.empty()) {
        const Bytes scaler_bytes = read_file(config_.model_dir / "scaler.txt");
        scaler_ = scaler_from_text(std::string_view(reinterpret_cast<const char*>(scaler_bytes.data()), scaler_bytes.size()));
        for (const auto kind : kAllModelKinds) {
            const auto path = config_.model_dir / (std::string(to_string(kind)) + ".model");
            if (std::filesystem::exists(path)) models_.push_back(load_model(read_file(path)));
        }
        if (models_.empty()) {
            throw Error(ErrorKind::Config, "model directory " + config_.model_dir.string() + " holds no .model files");
        }
    }
}

CaseResult Pipeline::run_case(std::span<const std::uint8_t> image_bytes, const CaseOptions& options) const {
    CaseResult res;
    res.id = options.id;
    const int size = config_.working_size;

    auto stage = [&res](std::string_view name, auto&& body) {
        try {
            body();
        } catch (const Error& e) {
            res.failure = StageFailure{std::string(name), e.kind(), e.what()};
            return false;
        } catch (const std::exception& e) {
            res.failure = StageFailure{std::string(name), ErrorKind::InvalidArgument, e.what()};
            return false;
        }
        res.stage_trace.emplace_back(name);
        return true;
    };
    auto keep = [&res](std::string_view name, const auto& img) { res.intermediates.push_back(Intermediate{std::string(name), img}); };

    std::optional<std::variant<GrayImage, RgbImage>> decoded;
    if (!stage("decode", [&] {
            if (image_bytes.empty()) throw Error(ErrorKind::Parse, "empty image payload");
            decoded = decode_netpbm(image_bytes);
        })) {
        return res;
    }

    std::optional<std::variant<GrayImage, RgbImage>> resized;
    if (!stage("resize", [&] {
            resized = std::visit(
                [&](const auto& img) -> std::variant<GrayImage, RgbImage> { return resize_bilinear(img, size, size); },
                *decoded);
            std::visit([&](const auto& img) { keep("resize", img); }, *resized);
        })) {
        return res;
    }

    std::optional<GrayImage> gray;
    std::optional<GrayImage> denoised;
    std::optional<GrayImage> current;
    auto step = [&](std::string_view name, auto&& fn) {
        return stage(name, [&] {
            current = fn(*current);
            keep(name, *current);
        });
    };
    if (!stage("grayscale", [&] {
            current = std::holds_alternative<RgbImage>(*resized) ? to_grayscale(std::get<RgbImage>(*resized))
                                                                  : std::get<GrayImage>(*resized);
            keep("grayscale", *current);
        })) {
        return res;
    }
    if (!step("sharpen", [&](const GrayImage& g) { return sharpen(g, config_.sharpen_amount); })) return res;
    if (!step("denoise", [&](const GrayImage& g) {
            return denoiser_ ? infer(*denoiser_, g) : gaussian_fallback(g, config_.fallback_sigma);
        })) {
        return res;
    }
    denoised = current;
    if (!step("equalize", [](const GrayImage& g) { return histogram_equalize(g); })) return res;
    if (!step("complement1", [](const GrayImage& g) { return complement(g); })) return res;
    if (!step("dehaze", [&](const GrayImage& g) { return dehaze(g, config_.dehaze); })) return res;
    if (!step("complement2", [](const GrayImage& g) { return complement(g); })) return res;
    const GrayImage& enhanced = *current;

    if (!stage("segment", [&] {
            res.seed = options.seed ? *options.seed : config_.seed ? *config_.seed : default_seed(size, size);
            ChanVeseParams params = config_.chan_vese;
            if (options.iterations) params.iterations = *options.iterations;
            params.snapshot_every = options.snapshot_every;
            SegmentObserver observer;
            if (options.progress) {
                observer = [&](int it, const BinaryMask* snap) { options.progress(it, params.iterations, snap); };
            }
            Segmentation seg = run_chan_vese(enhanced, res.seed, params, observer);
            res.mask_area = seg.mask.count();
            res.degenerate = res.mask_area < config_.min_mask_area;
            res.mask = std::move(seg.mask);
            res.snapshots = std::move(seg.snapshots);
            res.snapshot_iterations = std::move(seg.snapshot_iterations);
        })) {
        return res;
    }

    if (!stage("extract", [&] {
            const GrayImage& texture = config_.texture_source == TextureSource::Denoised ? *denoised : enhanced;
            ExtractOptions opts;
            opts.glcm_levels = config_.glcm_levels;
            opts.axis_scale = size;
            res.features = extract_from_mask(texture, *res.mask, opts);
        })) {
        return res;
    }

    if (models_.empty()) return res;
    stage("classify", [&] {
        const FeatureMode mode = options.feature_mode.value_or(config_.feature_mode);
        const auto values = res.features->values();
        const std::vector<double> scaled = apply_scaler(*scaler_, std::vector<double>(values.begin(), values.end()));
        std::array<double, kFeatureCount> scaled_arr{};
        std::copy(scaled.begin(), scaled.end(), scaled_arr.begin());
        const std::vector<double> x = select_features(scaled_arr, mode);
        std::size_t dilated = 0;
        for (const auto& model : models_) {
            const double score = model.predict_score(x);
            res.scores.push_back(ModelScore{model.kind(), score, label_for_score(score)});
            dilated += label_for_score(score) == Label::Dilated ? 1 : 0;
        }
        res.predicted = 2 * dilated >= models_.size() ? Label::Dilated : Label::Normal;
    });
    return res;
}

// --- dataset -------------------------------------------------------------------------

DatasetBuild build_dataset(const Pipeline& pipeline, const std::vector<ManifestEntry>& manifest) {
    if (manifest.empty()) throw Error(ErrorKind::InvalidArgument, "dataset: manifest is empty");
    DatasetBuild build;
    std::vector<std::vector<double>> raw;
    std::vector<bool> usable;
    for (const auto& entry : manifest) {
        CaseOptions opts;
        opts.id = entry.id;
        CaseResult res = pipeline.run_case(read_file(entry.image_path), opts);
        res.intermediates.clear();
        res.snapshots.clear();
        const bool ok = res.ok() && !res.degenerate && res.features.has_value();
        usable.push_back(ok);
        if (ok) {
            const auto v = res.features->values();
            raw.emplace_back(v.begin(), v.end());
        } else {
            ++build.degenerate_rows;
        }
        build.cases.push_back(std::move(res));
    }
    const double fraction = static_cast<double>(build.degenerate_rows) / static_cast<double>(manifest.size());
    if (fraction > pipeline.config().max_degenerate_fraction || raw.empty()) {
        throw Error(ErrorKind::CorpusQuality, std::to_string(build.degenerate_rows) + " of " +
                                                  std::to_string(manifest.size()) + " rows are degenerate");
    }
    build.scaler = fit_scaler(raw);
    for (const auto name : kFeatureNames) build.dataset.feature_names.emplace_back(name);

    std::string csv = std::string(kFeatureCsvHeader) + "\n";
    std::size_t next_raw = 0;
    char buf[32];
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& entry = manifest[i];
        const auto& res = build.cases[i];
        if (!usable[i]) {
            const std::string reason = !res.ok() ? res.failure->stage + " failed" : "mask area " + std::to_string(res.mask_area);
            csv += "#degenerate," + entry.id + "," + std::string(to_string(entry.label)) + "," + reason + "\n";
            continue;
        }
        const std::vector<double> scaled = apply_scaler(build.scaler, raw[next_raw++]);
        csv += entry.id + "," + std::string(to_string(entry.label));
        std::vector<double> row;
        for (const double v : scaled) {
            std::snprintf(buf, sizeof buf, "%.6f", v);
            csv += ",";
            csv += buf;
            row.push_back(std::strtod(buf, nullptr));
        }
        csv += "\n";
        build.dataset.rows.push_back(std::move(row));
        build.dataset.labels.push_back(entry.label);
        build.dataset.ids.push_back(entry.id);
    }
    build.csv = std::move(csv);
    return build;
}

LabeledDataset parse_feature_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    LabeledDataset data;
    for (const auto name : kFeatureNames) data.feature_names.emplace_back(name);
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const std::string where = "features line " + std::to_string(line_no);
        if (!header_seen) {
            if (line != kFeatureCsvHeader) throw Error(ErrorKind::Parse, where + ": expected header '" + kFeatureCsvHeader + "'");
            header_seen = true;
            continue;
        }
        const auto fields = split(line, ',');
        if (fields.size() != 2 + kFeatureCount) {
            throw Error(ErrorKind::Parse, where + ": expected " + std::to_string(2 + kFeatureCount) + " fields");
        }
        std::vector<double> row;
        for (std::size_t k = 2; k < fields.size(); ++k) {
            double v = 0.0;
            const char* first = fields[k].data();
            const char* last = first + fields[k].size();
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc{} || ptr != last) throw Error(ErrorKind::Parse, where + ": bad number '" + fields[k] + "'");
            row.push_back(v);
        }
        data.ids.push_back(fields[0]);
        data.labels.push_back(parse_label(fields[1]));
        data.rows.push_back(std::move(row));
    }
    if (!header_seen) throw Error(ErrorKind::Parse, "features: missing header line");
    data.validate();
    return data;
}

LabeledDataset select_mode(const LabeledDataset& full, FeatureMode mode) {
    if (!full.rows.empty() && full.dimension() != kFeatureCount) {
        throw Error(ErrorKind::DimensionMismatch, "select_mode expects the ten-feature dataset");
    }
    LabeledDataset out;
    out.labels = full.labels;
    out.ids = full.ids;
    const auto cols = feature_columns(mode);
    for (const auto c : cols) out.feature_names.emplace_back(kFeatureNames[c]);
    for (const auto& row : full.rows) {
        std::vector<double> r;
        for (const auto c : cols) r.push_back(row[c]);
        out.rows.push_back(std::move(r));
    }
    return out;
}

Evaluation evaluate_all(const PipelineConfig& config, const LabeledDataset& full, std::size_t excluded_rows) {
    const LabeledDataset data = select_mode(full, config.feature_mode);
    Evaluation ev;
    for (const auto& spec : config.models) ev.reports.push_back(cross_validate(spec, data, config.cv));
    ReportContext ctx;
    ctx.feature_mode = std::string(to_string(config.feature_mode));
    ctx.feature_names = data.feature_names;
    ctx.rows = data.size();
    ctx.excluded_rows = excluded_rows;
    ctx.cv = config.cv;
    ev.json = report_json(ctx, ev.reports);
    return ev;
}

void write_model_dir(const PipelineConfig& config, const LabeledDataset& full, const ScalerState& scaler,
                     const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const LabeledDataset data = select_mode(full, config.feature_mode);
    for (const auto& spec : config.models) {
        const TrainedModel model = train_model(spec, data);
        write_file(dir / (std::string(to_string(spec.kind)) + ".model"), save_model(model));
    }
    const std::string text = scaler_to_text(scaler);
    write_file(dir / "scaler.txt", Bytes(text.begin(), text.end()));
}

ResidualNet train_denoiser_on_phantoms(const PipelineConfig& config, const EpochCallback& on_epoch) {
    CorpusSpec spec = config.corpus;
    spec.base.noise_sigma = 0.0;
    spec.base.haze_strength = 0.0;
    spec.n_per_class = (config.denoiser_training_images + 1) / 2;
    std::vector<GrayImage> clean;
    for (auto& sample : generate_corpus(spec)) {
        if (static_cast<int>(clean.size()) == config.denoiser_training_images) break;
        clean.push_back(std::move(sample.image));
    }
    return train(config.denoiser_training, clean, on_epoch);
}

// --- JSON ---------------------------------------------------------------------------------

std::string case_result_json(const CaseResult& r) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["id"] = r.id;
    j["ok"] = r.ok();
    j["stage_trace"] = r.stage_trace;
    j["seed"] = {{"center_row", r.seed.center_row},
                 {"center_col", r.seed.center_col},
                 {"half_size", r.seed.half_size},
                 {"rows", {r.seed.top(), r.seed.bottom()}},
                 {"cols", {r.seed.left(), r.seed.right()}}};
    j["mask_area"] = r.mask_area;
    j["degenerate"] = r.degenerate;
    if (r.features) {
        ordered_json f;
        const auto values = r.features->values();
        for (std::size_t k = 0; k < kFeatureCount; ++k) f[std::string(kFeatureNames[k])] = values[k];
        j["features"] = f;
        j["texture_degenerate"] = r.features->texture_degenerate;
        const auto red = reduce(*r.features);
        j["reduced"] = {{"mja", red[0]}, {"ar", red[1]}, {"mia", red[2]}, {"cmp", red[3]}};
    } else {
        j["features"] = nullptr;
        j["texture_degenerate"] = false;
        j["reduced"] = nullptr;
    }
    ordered_json scores = ordered_json::array();
    for (const auto& s : r.scores) {
        scores.push_back({{"model", std::string(to_string(s.kind))},
                          {"score", s.score},
                          {"label", std::string(to_string(s.label))}});
    }
    j["scores"] = scores;
    j["predicted"] = r.predicted ? ordered_json(std::string(to_string(*r.predicted))) : ordered_json(nullptr);
    j["snapshot_iterations"] = r.snapshot_iterations;
    if (r.failure) {
        j["failure"] = {{"stage", r.failure->stage},
                        {"kind", std::string(to_string(r.failure->kind))},
                        {"message", r.failure->message}};
    } else {
        j["failure"] = nullptr;
    }
    return j.dump(2);
}

}  // namespace biliscope
