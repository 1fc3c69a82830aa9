#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "biliscope/pipeline.hpp"
#include "biliscope/service.hpp"

namespace fs = std::filesystem;
using namespace biliscope;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitStage = 1;
constexpr int kExitUsage = 2;

PipelineConfig config_from(const std::string& path) {
    return path.empty() ? PipelineConfig::defaults() : load_config(path);
}

// Scaler saved beside a feature CSV: features.csv -> features.scaler.txt.
fs::path scaler_path_for(const fs::path& csv) {
    fs::path p = csv;
    p.replace_extension(".scaler.txt");
    return p;
}

int cmd_phantom(const std::string& config_path, int n, std::optional<std::uint64_t> seed, const std::string& out) {
    PipelineConfig cfg = config_from(config_path);
    CorpusSpec corpus = cfg.corpus;
    if (n > 0) corpus.n_per_class = n;
    if (seed) corpus.rng_seed = *seed;
    const auto samples = generate_corpus(corpus);
    const fs::path manifest = write_corpus(samples, out);
    std::printf("wrote %zu phantoms; manifest %s\n", samples.size(), manifest.string().c_str());
    return kExitOk;
}

int cmd_run(const std::string& config_path, const std::string& image, const std::string& out) {
    const Pipeline pipeline(config_from(config_path));
    CaseOptions opts;
    opts.id = fs::path(image).stem().string();
    const CaseResult result = pipeline.run_case(read_file(image), opts);
    fs::create_directories(out);
    int index = 0;
    for (const auto& im : result.intermediates) {
        char name[64];
        std::snprintf(name, sizeof name, "%02d_%s", index++, im.stage.c_str());
        if (const auto* gray = std::get_if<GrayImage>(&im.image)) {
            write_file(fs::path(out) / (std::string(name) + ".pgm"), save_pgm(*gray));
        } else {
            write_file(fs::path(out) / (std::string(name) + ".ppm"), save_ppm(std::get<RgbImage>(im.image)));
        }
    }
    if (result.mask) write_file(fs::path(out) / "mask.pgm", save_pgm(mask_to_gray(*result.mask)));
    write_text(fs::path(out) / "result.json", case_result_json(result) + "\n");
    if (!result.ok()) {
        std::fprintf(stderr, "stage %s failed: %s\n", result.failure->stage.c_str(), result.failure->message.c_str());
        return kExitStage;
    }
    std::printf("%s: mask area %zu%s\n", opts.id.c_str(), result.mask_area, result.degenerate ? " (degenerate)" : "");
    return kExitOk;
}

int cmd_dataset(const std::string& config_path, const std::string& manifest, const std::string& out) {
    const Pipeline pipeline(config_from(config_path));
    const DatasetBuild build = build_dataset(pipeline, read_manifest(manifest));
    write_text(out, build.csv);
    write_text(scaler_path_for(out), scaler_to_text(build.scaler));
    std::printf("%zu usable rows, %zu degenerate; wrote %s\n", build.dataset.size(), build.degenerate_rows, out.c_str());
    return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& features, const std::string& out,
             const std::string& models_out) {
    const PipelineConfig cfg = config_from(config_path);
    const std::string csv = read_text(features);
    const LabeledDataset full = parse_feature_csv(csv);
    std::size_t excluded = 0;
    for (std::size_t pos = 0; (pos = csv.find("\n#", pos)) != std::string::npos; ++pos) ++excluded;
    const Evaluation ev = evaluate_all(cfg, full, excluded);
    write_text(out, ev.json);
    for (const auto& r : ev.reports) {
        std::printf("%-4s accuracy %.3f auc %.3f\n", std::string(to_string(r.kind)).c_str(), r.metrics.accuracy,
                    r.roc.auc);
    }
    if (!models_out.empty()) {
        const ScalerState scaler = scaler_from_text(read_text(scaler_path_for(features)));
        write_model_dir(cfg, full, scaler, models_out);
        std::printf("models written to %s\n", models_out.c_str());
    }
    return kExitOk;
}

int cmd_train_denoiser(const std::string& config_path, const std::string& out) {
    const PipelineConfig cfg = config_from(config_path);
    const ResidualNet net = train_denoiser_on_phantoms(cfg, [](int epoch, double loss) {
        std::printf("epoch %d loss %.6f\n", epoch, loss);
        std::fflush(stdout);
    });
    write_file(out, save_weights(net));
    return kExitOk;
}

Service* g_service = nullptr;

extern "C" void on_signal(int) {
    if (g_service != nullptr) g_service->stop();
}

int cmd_serve(const std::string& config_path, const std::string& host, int port, const std::string& storage_dir,
              int workers) {
    PipelineConfig cfg = config_from(config_path);
    if (!storage_dir.empty()) cfg.storage_dir = storage_dir;
    if (workers > 0) cfg.worker_count = workers;
    cfg.validate();
    Service service(cfg);
    const int bound = service.bind(host, port);
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::printf("listening on http://%s:%d (storage %s)\n", host.c_str(), bound, cfg.storage_dir.string().c_str());
    std::fflush(stdout);
    service.run();
    g_service = nullptr;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"biliscope: biliary-tree dilation screening on MRI-like images"};
    app.require_subcommand(1);
    std::string config;
    app.add_option("--config", config, "pipeline configuration file (key = value lines)")->check(CLI::ExistingFile);

    auto* phantom = app.add_subcommand("phantom", "generate a labelled phantom corpus");
    int n = 0;
    std::optional<std::uint64_t> seed;
    std::string out;
    phantom->add_option("--n", n, "phantoms per class")->check(CLI::PositiveNumber);
    phantom->add_option("--seed", seed, "corpus seed");
    phantom->add_option("--out", out, "output directory")->required();

    auto* run = app.add_subcommand("run", "run the pipeline on one image and write its intermediates");
    std::string image;
    run->add_option("--image", image, "P5 or P6 input")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "output directory")->required();

    auto* dataset = app.add_subcommand("dataset", "build the feature CSV for a corpus manifest");
    std::string manifest;
    dataset->add_option("--manifest", manifest, "corpus manifest.csv")->required()->check(CLI::ExistingFile);
    dataset->add_option("--out", out, "feature CSV path")->required();

    auto* eval = app.add_subcommand("eval", "cross-validate the configured models on a feature CSV");
    std::string features;
    std::string models_out;
    eval->add_option("--features", features, "feature CSV")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", out, "report JSON path")->required();
    eval->add_option("--models-out", models_out, "also fit on all rows and save models here");

    auto* train = app.add_subcommand("train-denoiser", "train the residual denoiser on clean phantoms");
    train->add_option("--out", out, "weights file")->required();

    auto* serve = app.add_subcommand("serve", "start the HTTP service");
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string storage_dir;
    int workers = 0;
    serve->add_option("--host", host, "listen address");
    serve->add_option("--port", port, "listen port (0 picks one)")->check(CLI::Range(0, 65535));
    serve->add_option("--storage-dir", storage_dir, "storage directory");
    serve->add_option("--worker-count", workers, "concurrent jobs")->check(CLI::PositiveNumber);

    for (auto* sub : {phantom, run, dataset, eval, train, serve}) {
        sub->add_option("--config", config, "pipeline configuration file")->check(CLI::ExistingFile);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*phantom) return cmd_phantom(config, n, seed, out);
        if (*run) return cmd_run(config, image, out);
        if (*dataset) return cmd_dataset(config, manifest, out);
        if (*eval) return cmd_eval(config, features, out, models_out);
        if (*train) return cmd_train_denoiser(config, out);
        if (*serve) return cmd_serve(config, host, port, storage_dir, workers);
    } catch (const Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", std::string(to_string(e.kind())).c_str(), e.what());
        return e.kind() == ErrorKind::Config ? kExitUsage : kExitStage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitStage;
    }
    return kExitUsage;
}
