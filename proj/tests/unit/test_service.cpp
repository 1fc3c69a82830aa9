#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "biliscope/service.hpp"

using namespace biliscope;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

PipelineConfig service_config(const fs::path& storage) {
    PipelineConfig cfg = PipelineConfig::defaults();
    cfg.working_size = 128;
    cfg.chan_vese.iterations = 100;
    cfg.storage_dir = storage;
    cfg.worker_count = 1;
    cfg.service_snapshot_every = 25;
    return cfg;
}

class Running {
public:
    explicit Running(const PipelineConfig& cfg) : service_(cfg) {
        port_ = service_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { service_.run(); });
        service_.wait_until_ready();
    }
    ~Running() {
        service_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(30, 0);
        return c;
    }

private:
    Service service_;
    int port_ = 0;
    std::thread thread_;
};

std::string phantom_pgm(int size) {
    PhantomSpec spec;
    spec.size = size;
    spec.duct_width_px = 8;
    spec.length_fraction = 0.2;
    spec.length_per_width = 0.5;
    const Bytes bytes = save_pgm(generate(spec).image);
    return {bytes.begin(), bytes.end()};
}

std::string upload(httplib::Client& c, const std::string& body) {
    const auto res = c.Post("/images", body, "application/octet-stream");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    return json::parse(res->body)["image_id"].get<std::string>();
}

json wait_for_job(httplib::Client& c, const std::string& job_id) {
    for (int i = 0; i < 600; ++i) {
        const auto res = c.Get("/jobs/" + job_id);
        EXPECT_EQ(res->status, 200);
        json j = json::parse(res->body);
        if (j["state"] == "done" || j["state"] == "failed") return j;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    ADD_FAILURE() << "job " << job_id << " did not finish";
    return {};
}

class ServiceTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("biliscope_service_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path dir_;
};

}  // namespace

TEST_F(ServiceTest, ImageUploads) {
    Running svc(service_config(dir_));
    auto c = svc.client();
    const std::string body = phantom_pgm(64);
    const std::string a = upload(c, body);
    const std::string b = upload(c, body);
    EXPECT_NE(a, b);

    const auto got = c.Get("/images/" + a);
    ASSERT_TRUE(got);
    EXPECT_EQ(got->status, 200);
    EXPECT_EQ(got->body, body);

    EXPECT_EQ(c.Get("/images/nope")->status, 404);
    EXPECT_EQ(c.Post("/images", "", "application/octet-stream")->status, 400);
    const auto garbage = c.Post("/images", "hello world", "application/octet-stream");
    EXPECT_EQ(garbage->status, 400);
    EXPECT_TRUE(json::parse(garbage->body).contains("error"));

    const int blobs = static_cast<int>(std::distance(fs::directory_iterator(dir_ / "blobs"), fs::directory_iterator{}));
    EXPECT_EQ(blobs, 1);
}

TEST_F(ServiceTest, JobLifecycle) {
    Running svc(service_config(dir_));
    auto c = svc.client();
    const std::string image = upload(c, phantom_pgm(128));

    const auto created = c.Post("/jobs", json{{"image_id", image}, {"seed", {{"row", 54}, {"col", 54}, {"half_size", 10}}}}.dump(),
                                "application/json");
    ASSERT_EQ(created->status, 202);
    const std::string job = json::parse(created->body)["job_id"];
    EXPECT_EQ(created->get_header_value("Location"), "/jobs/" + job);

    const json status = wait_for_job(c, job);
    ASSERT_EQ(status["state"], "done") << status.dump();
    EXPECT_EQ(status["progress"]["completed"], 100);
    EXPECT_EQ(status["progress"]["total"], 100);
    EXPECT_EQ(status["snapshot_iterations"], json({0, 25, 50, 75, 100}));
    EXPECT_EQ(status["snapshot_count"], 5);
    EXPECT_TRUE(status["error"].is_null());
    EXPECT_EQ(status["request"]["seed"]["row"], 54);

    const auto result = c.Get("/jobs/" + job + "/result");
    ASSERT_EQ(result->status, 200);
    const json r = json::parse(result->body);
    EXPECT_EQ(r["seed"]["rows"], json({54, 74}));
    EXPECT_EQ(r["seed"]["cols"], json({54, 74}));
    EXPECT_TRUE(r["failure"].is_null());

    const auto snap = c.Get("/jobs/" + job + "/snapshots/4");
    ASSERT_EQ(snap->status, 200);
    const GrayImage mask = load_pgm(Bytes(snap->body.begin(), snap->body.end()));
    EXPECT_EQ(mask.width(), 128);
    EXPECT_EQ(c.Get("/jobs/" + job + "/snapshots/5")->status, 404);
    EXPECT_EQ(c.Get("/jobs/nope")->status, 404);
    EXPECT_EQ(c.Get("/jobs/nope/result")->status, 404);
}

TEST_F(ServiceTest, JobValidation) {
    Running svc(service_config(dir_));
    auto c = svc.client();
    const std::string image = upload(c, phantom_pgm(64));
    auto post = [&](const json& body) { return c.Post("/jobs", body.dump(), "application/json")->status; };
    EXPECT_EQ(post({{"image_id", "missing"}}), 404);
    EXPECT_EQ(post({{"image_id", image}, {"seed", {{"row", 120}, {"col", 0}}}}), 422);
    EXPECT_EQ(post({{"image_id", image}, {"seed", {{"row", -1}, {"col", 0}}}}), 422);
    EXPECT_EQ(post({{"image_id", image}, {"seed", {{"row", 10}, {"col", 10}, {"half_size", -2}}}}), 422);
    EXPECT_EQ(post({{"image_id", image}, {"seed", {{"row", "ten"}, {"col", 0}}}}), 400);
    EXPECT_EQ(post({{"image_id", image}, {"iterations", 0}}), 422);
    EXPECT_EQ(post({{"image_id", image}, {"feature_mode", "everything"}}), 422);
    EXPECT_EQ(post({{"image", image}}), 400);
    EXPECT_EQ(c.Post("/jobs", "{not json", "application/json")->status, 400);
}

TEST_F(ServiceTest, ResultBeforeDoneIsConflict) {
    PipelineConfig cfg = service_config(dir_);
    cfg.chan_vese.iterations = 2000;
    Running svc(cfg);
    auto c = svc.client();
    const std::string image = upload(c, phantom_pgm(128));
    const std::string first = json::parse(c.Post("/jobs", json{{"image_id", image}}.dump(), "application/json")->body)["job_id"];
    const std::string second = json::parse(c.Post("/jobs", json{{"image_id", image}}.dump(), "application/json")->body)["job_id"];
    // One worker: the second job waits behind the first.
    const auto res = c.Get("/jobs/" + second + "/result");
    EXPECT_EQ(res->status, 409);
    const json body = json::parse(res->body);
    EXPECT_TRUE(body["state"] == "queued" || body["state"] == "running");
    (void)first;
}

TEST_F(ServiceTest, ReviewsAndRestart) {
    std::string image;
    std::string job;
    {
        Running svc(service_config(dir_));
        auto c = svc.client();
        image = upload(c, phantom_pgm(128));
        job = json::parse(c.Post("/jobs", json{{"image_id", image}}.dump(), "application/json")->body)["job_id"];
        ASSERT_EQ(wait_for_job(c, job)["state"], "done");

        auto review = [&](const json& label) {
            return c.Post("/reviews", json{{"image_id", image}, {"clinician_label", label}}.dump(), "application/json");
        };
        EXPECT_EQ(review("maybe")->status, 422);
        EXPECT_EQ(c.Post("/reviews", json{{"image_id", image}}.dump(), "application/json")->status, 422);
        EXPECT_EQ(c.Post("/reviews", json{{"image_id", "nope"}, {"clinician_label", "normal"}}.dump(), "application/json")->status,
                  404);
        const auto first = review("dilated");
        ASSERT_EQ(first->status, 201);
        const json rec = json::parse(first->body);
        EXPECT_EQ(rec["job_id"], job);
        EXPECT_EQ(rec["clinician_label"], "dilated");
        EXPECT_EQ(review(nullptr)->status, 201);

        const json listing = json::parse(c.Get("/reviews")->body);
        ASSERT_EQ(listing["reviews"].size(), 2u);
        EXPECT_FALSE(listing["reviews"][0]["current"].get<bool>());
        EXPECT_TRUE(listing["reviews"][1]["current"].get<bool>());
        EXPECT_TRUE(listing["reviews"][1]["clinician_label"].is_null());
    }
    Running again(service_config(dir_));
    auto c = again.client();
    EXPECT_EQ(c.Get("/images/" + image)->body, phantom_pgm(128));
    const auto result = c.Get("/jobs/" + job + "/result");
    EXPECT_EQ(result->status, 200);
    EXPECT_EQ(c.Get("/jobs/" + job + "/snapshots/0")->status, 200);
    const json listing = json::parse(c.Get("/reviews?image_id=" + image)->body);
    ASSERT_EQ(listing["reviews"].size(), 2u);
    EXPECT_EQ(listing["reviews"][0]["clinician_label"], "dilated");
    EXPECT_TRUE(listing["reviews"][1]["current"].get<bool>());
    EXPECT_EQ(json::parse(c.Get("/reviews?image_id=other")->body)["reviews"].size(), 0u);
}

TEST_F(ServiceTest, InFlightJobsReportedFailedAfterRestart) {
    PipelineConfig cfg = service_config(dir_);
    cfg.chan_vese.iterations = 5000;
    std::string job;
    {
        Running svc(cfg);
        auto c = svc.client();
        const std::string image = upload(c, phantom_pgm(128));
        job = json::parse(c.Post("/jobs", json{{"image_id", image}}.dump(), "application/json")->body)["job_id"];
    }
    Running again(service_config(dir_));
    auto c = again.client();
    const json status = json::parse(c.Get("/jobs/" + job)->body);
    EXPECT_EQ(status["state"], "failed");
    EXPECT_EQ(status["error"]["stage"], "interrupted");
    const auto result = c.Get("/jobs/" + job + "/result");
    EXPECT_EQ(result->status, 409);
    EXPECT_EQ(json::parse(result->body)["stage"], "interrupted");
}

TEST_F(ServiceTest, SeedEchoAtFullResolution) {
    PipelineConfig cfg = service_config(dir_);
    cfg.working_size = 512;
    Running svc(cfg);
    auto c = svc.client();
    const std::string image = upload(c, phantom_pgm(128));
    const json body{{"image_id", image}, {"seed", {{"row", 246}, {"col", 246}, {"half_size", 10}}}, {"iterations", 5}};
    const std::string job = json::parse(c.Post("/jobs", body.dump(), "application/json")->body)["job_id"];
    ASSERT_EQ(wait_for_job(c, job)["state"], "done");
    const json r = json::parse(c.Get("/jobs/" + job + "/result")->body);
    EXPECT_EQ(r["seed"]["rows"], json({246, 266}));
    EXPECT_EQ(r["seed"]["cols"], json({246, 266}));
    EXPECT_EQ(r["seed"]["center_row"], 256);
}
