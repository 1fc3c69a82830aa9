#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

#include "biliscope/raster.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "biliscope_cli_test";

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BILISCOPE_CLI) + " " + args + " >" + (kWork / "stdout.txt").string() + " 2>" +
                            (kWork / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

constexpr const char* kSmallConfig =
    "working_size = 96\n"
    "chan_vese.iterations = 150\n"
    "eval.folds = 3\n"
    "phantom.n_per_class = 6\n"
    "phantom.size = 96\n"
    "phantom.normal_min_width = 4\n"
    "phantom.normal_max_width = 8\n"
    "phantom.dilated_min_width = 20\n"
    "phantom.dilated_max_width = 24\n"
    "phantom.length_fraction = 0.2\n"
    "phantom.length_per_width = 0.5\n"
    "phantom.noise_sigma = 4\n"
    "train.depth = 3\n"
    "train.channels = 2\n"
    "train.epochs = 1\n"
    "train.patch_size = 16\n"
    "train.images = 2\n";

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fs::remove_all(kWork);
        fs::create_directories(kWork);
        biliscope::write_text(kWork / "small.cfg", kSmallConfig);
    }
    static void TearDownTestSuite() { fs::remove_all(kWork); }
    static std::string cfg() { return "--config " + (kWork / "small.cfg").string(); }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("phantom --bogus-flag"), 2);
    EXPECT_EQ(run_cli("phantom"), 2);
    biliscope::write_text(kWork / "bad.cfg", "working_size = 96\nno_such_key = 1\n");
    EXPECT_EQ(run_cli("phantom --config " + (kWork / "bad.cfg").string() + " --out " + (kWork / "x").string()), 2);
    EXPECT_NE(biliscope::read_text(kWork / "stderr.txt").find("line 2"), std::string::npos);
}

TEST_F(Cli, HelpExitsZero) { EXPECT_EQ(run_cli("--help"), 0); }

TEST_F(Cli, StageFailureExitsOne) {
    biliscope::write_text(kWork / "garbage.pgm", "P5\n4 4\n255\nxx");
    EXPECT_EQ(run_cli("run " + cfg() + " --image " + (kWork / "garbage.pgm").string() + " --out " + (kWork / "bad_run").string()), 1);
    const auto j = nlohmann::json::parse(biliscope::read_text(kWork / "bad_run" / "result.json"));
    EXPECT_EQ(j["failure"]["stage"], "decode");
}

TEST_F(Cli, FullWorkflow) {
    const fs::path corpus = kWork / "corpus";
    ASSERT_EQ(run_cli("phantom " + cfg() + " --out " + corpus.string()), 0);
    ASSERT_TRUE(fs::exists(corpus / "manifest.csv"));

    const fs::path features = kWork / "features.csv";
    ASSERT_EQ(run_cli("dataset " + cfg() + " --manifest " + (corpus / "manifest.csv").string() + " --out " + features.string()), 0);
    ASSERT_TRUE(fs::exists(kWork / "features.scaler.txt"));
    const std::string csv = biliscope::read_text(features);
    ASSERT_EQ(run_cli("dataset " + cfg() + " --manifest " + (corpus / "manifest.csv").string() + " --out " +
                      (kWork / "again.csv").string()),
              0);
    EXPECT_EQ(biliscope::read_text(kWork / "again.csv"), csv);

    const fs::path report = kWork / "report.json";
    const fs::path models = kWork / "models";
    ASSERT_EQ(run_cli("eval " + cfg() + " --features " + features.string() + " --out " + report.string() +
                      " --models-out " + models.string()),
              0);
    EXPECT_EQ(nlohmann::json::parse(biliscope::read_text(report))["models"].size(), 6u);
    EXPECT_TRUE(fs::exists(models / "scaler.txt"));

    biliscope::write_text(kWork / "classify.cfg", std::string(kSmallConfig) + "models.dir = " + models.string() + "\n");
    const fs::path out = kWork / "case";
    ASSERT_EQ(run_cli("run --config " + (kWork / "classify.cfg").string() + " --image " +
                      (corpus / "images" / "ph0001.pgm").string() + " --out " + out.string()),
              0);
    EXPECT_TRUE(fs::exists(out / "00_resize.pgm"));
    EXPECT_TRUE(fs::exists(out / "07_complement2.pgm"));
    EXPECT_TRUE(fs::exists(out / "mask.pgm"));
    const auto j = nlohmann::json::parse(biliscope::read_text(out / "result.json"));
    EXPECT_EQ(j["scores"].size(), 6u);

    ASSERT_EQ(run_cli("train-denoiser " + cfg() + " --out " + (kWork / "w.bin").string()), 0);
    EXPECT_GT(fs::file_size(kWork / "w.bin"), 0u);
}
