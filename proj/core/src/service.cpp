#include "biliscope/service.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <openssl/evp.h>

#include <httplib.h>
#include <json.hpp>

namespace biliscope {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kJsonType = "application/json";
constexpr const char* kPgmType = "image/x-portable-graymap";
constexpr int kMaxIterations = 100000;

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorKind::Io, "sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(length * 2);
    for (unsigned int i = 0; i < length; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::span<const std::uint8_t> as_bytes(std::string_view text) {
    return {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()};
}

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    const std::time_t secs = std::chrono::system_clock::to_time_t(now);
    std::tm utc{};
    gmtime_r(&secs, &utc);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &utc);
    char full[48];
    std::snprintf(full, sizeof full, "%s.%03dZ", buf, static_cast<int>(ms));
    return full;
}

// Flat directory of content-addressed blobs plus append-only JSON-line logs.
class Storage {
public:
    explicit Storage(fs::path root) : root_(std::move(root)) {
        std::error_code ec;
        fs::create_directories(root_ / "blobs", ec);
        if (ec) throw Error(ErrorKind::Io, "cannot create storage at '" + root_.string() + "': " + ec.message());
    }

    std::string put(std::span<const std::uint8_t> bytes, std::string_view ext) {
        const std::string sha = sha256_hex(bytes);
        const fs::path target = blob_path(sha, ext);
        if (!fs::exists(target)) {
            const fs::path tmp = target.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
            write_file(tmp, bytes);
            fs::rename(tmp, target);
        }
        return sha;
    }

    [[nodiscard]] Bytes get(const std::string& sha, std::string_view ext) const { return read_file(blob_path(sha, ext)); }

    void append(const std::string& log, const ordered_json& line) {
        const std::lock_guard lock(mutex_);
        std::ofstream out(root_ / log, std::ios::app | std::ios::binary);
        out << line.dump() << '\n';
        out.flush();
        if (!out) throw Error(ErrorKind::Io, "cannot append to " + log);
    }

    // A torn final line (crash mid-write) is skipped.
    [[nodiscard]] std::vector<json> read_log(const std::string& log) const {
        std::vector<json> lines;
        std::ifstream in(root_ / log, std::ios::binary);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json parsed = json::parse(line, nullptr, false);
            if (!parsed.is_discarded() && parsed.is_object()) lines.push_back(std::move(parsed));
        }
        return lines;
    }

private:
    [[nodiscard]] fs::path blob_path(const std::string& sha, std::string_view ext) const {
        return root_ / "blobs" / (sha + std::string(ext));
    }

    fs::path root_;
    std::mutex mutex_;
};

enum class JobState { Queued, Running, Done, Failed };

std::string_view to_string(JobState s) noexcept {
    switch (s) {
        case JobState::Queued: return "queued";
        case JobState::Running: return "running";
        case JobState::Done: return "done";
        case JobState::Failed: return "failed";
    }
    return "failed";
}

struct ImageRecord {
    std::string id;
    std::string sha;
    std::string ext;
    int width = 0;
    int height = 0;
};

struct JobRequest {
    std::optional<SeedSpec> seed;
    std::optional<int> iterations;
    std::optional<FeatureMode> feature_mode;
};

struct Job {
    std::string id;
    std::string image_id;
    JobRequest request;
    json request_json;
    JobState state = JobState::Queued;
    int completed = 0;
    int total = 0;
    std::vector<std::string> snapshot_shas;
    std::vector<int> snapshot_iterations;
    std::string result_body;
    std::string error_stage;
    std::string error_message;
    json predicted;
    json scores = json::array();
};

struct HttpError {
    int status;
    std::string message;
};

void reply_json(httplib::Response& res, int status, const ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", kJsonType);
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply_json(res, status, ordered_json{{"error", message}});
}

json parse_body(const httplib::Request& req) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw HttpError{400, "request body must be a JSON object"};
    return body;
}

int integer_field(const json& obj, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_number_integer()) throw HttpError{400, std::string("'") + key + "' must be an integer"};
    const auto v = it->get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw HttpError{422, std::string("'") + key + "' is out of range"};
    }
    return static_cast<int>(v);
}

}  // namespace

struct Service::Impl {
    explicit Impl(PipelineConfig cfg)
        : config(std::move(cfg)), pipeline(config), storage(config.storage_dir), ids(std::random_device{}()) {
        reload();
        routes();
        for (int i = 0; i < config.worker_count; ++i) workers.emplace_back([this] { worker_loop(); });
    }

    ~Impl() {
        server.stop();
        {
            const std::lock_guard lock(mutex);
            stopping = true;
        }
        wake.notify_all();
        for (auto& t : workers) t.join();
    }

    PipelineConfig config;
    Pipeline pipeline;
    Storage storage;
    httplib::Server server;

    std::mutex mutex;
    std::condition_variable wake;
    std::map<std::string, ImageRecord> images;
    std::map<std::string, std::shared_ptr<Job>> jobs;
    std::vector<ordered_json> reviews;
    std::deque<std::shared_ptr<Job>> queue;
    bool stopping = false;
    std::atomic<bool> cancel{false};
    std::vector<std::thread> workers;
    std::mt19937_64 ids;

    // Caller holds the mutex.
    std::string fresh_id(std::string_view prefix) {
        for (;;) {
            char buf[17];
            std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(ids()));
            std::string id = std::string(prefix) + "-" + buf;
            if (!images.contains(id) && !jobs.contains(id)) return id;
        }
    }

    // --- persistence -------------------------------------------------------

    void reload() {
        for (const auto& line : storage.read_log("images.log")) {
            ImageRecord rec{line.value("image_id", ""), line.value("sha256", ""), line.value("ext", ".pnm"),
                            line.value("width", 0), line.value("height", 0)};
            if (!rec.id.empty()) images[rec.id] = rec;
        }
        for (const auto& line : storage.read_log("reviews.log")) reviews.push_back(ordered_json(line));
        for (const auto& line : storage.read_log("jobs.log")) replay_job_event(line);
        for (auto& [id, job] : jobs) {
            if (job->state == JobState::Queued || job->state == JobState::Running) {
                job->state = JobState::Failed;
                job->error_stage = "interrupted";
                job->error_message = "job was in flight when the server stopped";
                storage.append("jobs.log", ordered_json{{"event", "failed"},
                                                        {"job_id", id},
                                                        {"stage", job->error_stage},
                                                        {"message", job->error_message}});
            }
        }
    }

    void replay_job_event(const json& line) {
        const std::string event = line.value("event", "");
        const std::string id = line.value("job_id", "");
        if (event == "created") {
            auto job = std::make_shared<Job>();
            job->id = id;
            job->image_id = line.value("image_id", "");
            job->request_json = line.value("request", json::object());
            job->total = line.value("total", 0);
            jobs[id] = job;
            return;
        }
        const auto it = jobs.find(id);
        if (it == jobs.end()) return;
        Job& job = *it->second;
        job.snapshot_shas = line.value("snapshots", std::vector<std::string>{});
        job.snapshot_iterations = line.value("snapshot_iterations", std::vector<int>{});
        job.completed = line.value("completed", job.completed);
        if (line.contains("result")) {
            job.result_body = bytes_to_string(storage.get(line["result"].get<std::string>(), ".json"));
            absorb_result(job);
        }
        if (event == "done") {
            job.state = JobState::Done;
            done_order.push_back(id);
        } else if (event == "failed") {
            job.state = JobState::Failed;
            job.error_stage = line.value("stage", "");
            job.error_message = line.value("message", "");
        }
    }

    static std::string bytes_to_string(const Bytes& b) { return {b.begin(), b.end()}; }

    static void absorb_result(Job& job) {
        const json r = json::parse(job.result_body, nullptr, false);
        if (r.is_discarded()) return;
        job.predicted = r.value("predicted", json());
        job.scores = r.value("scores", json::array());
    }

    // --- jobs ----------------------------------------------------------------

    void worker_loop() {
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock lock(mutex);
                wake.wait(lock, [this] { return stopping || !queue.empty(); });
                if (stopping) return;
                job = queue.front();
                queue.pop_front();
                job->state = JobState::Running;
            }
            execute(*job);
        }
    }

    void execute(Job& job) {
        ImageRecord image;
        {
            const std::lock_guard lock(mutex);
            image = images.at(job.image_id);
        }
        CaseOptions opts;
        opts.id = job.image_id;
        opts.seed = job.request.seed;
        opts.iterations = job.request.iterations;
        opts.feature_mode = job.request.feature_mode;
        opts.snapshot_every = config.service_snapshot_every;
        opts.progress = [&](int iteration, int total, const BinaryMask* snapshot) {
            if (cancel.load()) throw Error(ErrorKind::InvalidArgument, "cancelled: server stopping");
            std::string sha;
            if (snapshot != nullptr) sha = storage.put(save_pgm(mask_to_gray(*snapshot)), ".pgm");
            const std::lock_guard lock(mutex);
            job.completed = iteration;
            job.total = total;
            if (snapshot != nullptr) {
                job.snapshot_shas.push_back(sha);
                job.snapshot_iterations.push_back(iteration);
            }
        };

        CaseResult result;
        try {
            result = pipeline.run_case(storage.get(image.sha, image.ext), opts);
        } catch (const std::exception& e) {
            result.failure = StageFailure{"decode", ErrorKind::Io, e.what()};
        }
        // Cut short by shutdown: leave it in flight so the next start reports it interrupted.
        if (!result.ok() && cancel.load()) return;
        const std::string body = case_result_json(result) + "\n";
        const std::string result_sha = storage.put(as_bytes(body), ".json");

        ordered_json event;
        {
            const std::lock_guard lock(mutex);
            job.result_body = body;
            absorb_result(job);
            if (result.ok()) {
                job.state = JobState::Done;
                done_order.push_back(job.id);
            } else {
                job.state = JobState::Failed;
                job.error_stage = result.failure->stage;
                job.error_message = result.failure->message;
            }
            event = ordered_json{{"event", std::string(to_string(job.state))},
                                 {"job_id", job.id},
                                 {"completed", job.completed},
                                 {"result", result_sha},
                                 {"snapshots", job.snapshot_shas},
                                 {"snapshot_iterations", job.snapshot_iterations}};
            if (!result.ok()) {
                event["stage"] = job.error_stage;
                event["message"] = job.error_message;
            }
        }
        storage.append("jobs.log", event);
    }

    JobRequest parse_job_request(const json& body, json& echo) const {
        JobRequest req;
        const int size = config.working_size;
        if (const auto it = body.find("seed"); it != body.end() && !it->is_null()) {
            if (!it->is_object()) throw HttpError{400, "'seed' must be an object"};
            const int row = integer_field(*it, "row");
            const int col = integer_field(*it, "col");
            const int half = it->contains("half_size") ? integer_field(*it, "half_size") : SeedSpec::kDefaultHalfSize;
            if (half < 0) throw HttpError{422, "seed half_size must be >= 0"};
            // (row, col) is the rectangle's top-left corner.
            const SeedSpec seed{row + half, col + half, half};
            if (row < 0 || col < 0 || !seed.fits(size, size)) {
                throw HttpError{422, "seed rows [" + std::to_string(row) + "," + std::to_string(seed.bottom()) +
                                         "] cols [" + std::to_string(col) + "," + std::to_string(seed.right()) +
                                         "] leave the " + std::to_string(size) + "x" + std::to_string(size) +
                                         " working image"};
            }
            req.seed = seed;
            echo["seed"] = {{"row", row}, {"col", col}, {"half_size", half}};
        }
        if (const auto it = body.find("iterations"); it != body.end() && !it->is_null()) {
            const int n = integer_field(body, "iterations");
            if (n < 1 || n > kMaxIterations) {
                throw HttpError{422, "iterations must lie in [1, " + std::to_string(kMaxIterations) + "]"};
            }
            req.iterations = n;
            echo["iterations"] = n;
        }
        if (const auto it = body.find("feature_mode"); it != body.end() && !it->is_null()) {
            if (!it->is_string()) throw HttpError{400, "'feature_mode' must be a string"};
            try {
                req.feature_mode = parse_feature_mode(it->get<std::string>());
            } catch (const Error& e) {
                throw HttpError{422, e.what()};
            }
            echo["feature_mode"] = it->get<std::string>();
        }
        return req;
    }

    // Caller holds the mutex.
    ordered_json job_json(const Job& job) const {
        ordered_json j;
        j["job_id"] = job.id;
        j["image_id"] = job.image_id;
        j["state"] = std::string(to_string(job.state));
        j["progress"] = {{"completed", job.completed}, {"total", job.total}};
        j["snapshot_count"] = job.snapshot_shas.size();
        j["snapshot_iterations"] = job.snapshot_iterations;
        j["request"] = job.request_json;
        if (job.state == JobState::Failed) {
            j["error"] = {{"stage", job.error_stage}, {"message", job.error_message}};
        } else {
            j["error"] = nullptr;
        }
        return j;
    }

    std::shared_ptr<Job> find_job(const std::string& id) {
        const auto it = jobs.find(id);
        if (it == jobs.end()) throw HttpError{404, "unknown job '" + id + "'"};
        return it->second;
    }

    // --- reviews -------------------------------------------------------------

    // Caller holds the mutex.
    ordered_json review_listing(const std::string& image_filter) const {
        std::map<std::string, std::size_t> latest;
        for (std::size_t i = 0; i < reviews.size(); ++i) latest[reviews[i].value("image_id", "")] = i;
        ordered_json out = ordered_json::array();
        for (std::size_t i = 0; i < reviews.size(); ++i) {
            const std::string image_id = reviews[i].value("image_id", "");
            if (!image_filter.empty() && image_id != image_filter) continue;
            ordered_json rec = reviews[i];
            rec["current"] = latest[image_id] == i;
            out.push_back(rec);
        }
        return ordered_json{{"reviews", out}};
    }

    // --- routing -------------------------------------------------------------

    template <typename Fn>
    httplib::Server::Handler guarded(Fn fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const HttpError& e) {
                reply_error(res, e.status, e.message);
            } catch (const Error& e) {
                reply_error(res, 500, std::string(to_string(e.kind())) + ": " + e.what());
            } catch (const std::exception& e) {
                reply_error(res, 500, e.what());
            }
        };
    }

    void routes() {
        server.Post("/images", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (req.body.empty()) throw HttpError{400, "empty body: expected a P5 or P6 image"};
            const auto bytes = as_bytes(req.body);
            int width = 0;
            int height = 0;
            try {
                std::visit(
                    [&](const auto& img) {
                        width = img.width();
                        height = img.height();
                    },
                    decode_netpbm(bytes));
            } catch (const Error& e) {
                throw HttpError{400, std::string("undecodable image: ") + e.what()};
            }
            const std::string sha = storage.put(bytes, ".pnm");
            ordered_json rec;
            {
                const std::lock_guard lock(mutex);
                const std::string id = fresh_id("img");
                images[id] = ImageRecord{id, sha, ".pnm", width, height};
                rec = {{"image_id", id}, {"sha256", sha}, {"ext", ".pnm"}, {"width", width}, {"height", height},
                       {"uploaded", now_iso8601()}};
            }
            storage.append("images.log", rec);
            reply_json(res, 201, ordered_json{{"image_id", rec["image_id"]}, {"width", width}, {"height", height}});
        }));

        server.Get(R"(/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            ImageRecord rec;
            {
                const std::lock_guard lock(mutex);
                const auto it = images.find(req.matches[1]);
                if (it == images.end()) throw HttpError{404, "unknown image '" + std::string(req.matches[1]) + "'"};
                rec = it->second;
            }
            const Bytes bytes = storage.get(rec.sha, rec.ext);
            res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "application/octet-stream");
        }));

        server.Post("/jobs", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const json body = parse_body(req);
            const auto it = body.find("image_id");
            if (it == body.end() || !it->is_string()) throw HttpError{400, "'image_id' must be a string"};
            const std::string image_id = it->get<std::string>();
            {
                const std::lock_guard lock(mutex);
                if (!images.contains(image_id)) throw HttpError{404, "unknown image '" + image_id + "'"};
            }
            json echo = json::object();
            const JobRequest request = parse_job_request(body, echo);
            auto job = std::make_shared<Job>();
            job->image_id = image_id;
            job->request = request;
            job->request_json = echo;
            job->total = request.iterations.value_or(config.chan_vese.iterations);
            {
                const std::lock_guard lock(mutex);
                job->id = fresh_id("job");
                jobs[job->id] = job;
            }
            storage.append("jobs.log", ordered_json{{"event", "created"},
                                                    {"job_id", job->id},
                                                    {"image_id", image_id},
                                                    {"request", echo},
                                                    {"total", job->total},
                                                    {"created", now_iso8601()}});
            {
                const std::lock_guard lock(mutex);
                queue.push_back(job);
            }
            wake.notify_one();
            res.set_header("Location", "/jobs/" + job->id);
            reply_json(res, 202, ordered_json{{"job_id", job->id}, {"state", "queued"}});
        }));

        server.Get(R"(/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::lock_guard lock(mutex);
            reply_json(res, 200, job_json(*find_job(req.matches[1])));
        }));

        server.Get(R"(/jobs/([^/]+)/snapshots/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::string sha;
            {
                const std::lock_guard lock(mutex);
                const auto job = find_job(req.matches[1]);
                const std::string k_text = req.matches[2];
                const std::size_t k = k_text.size() > 9 ? std::numeric_limits<std::size_t>::max() : std::stoul(k_text);
                if (k >= job->snapshot_shas.size()) {
                    throw HttpError{404, "snapshot " + k_text + " not available (" +
                                             std::to_string(job->snapshot_shas.size()) + " captured)"};
                }
                sha = job->snapshot_shas[k];
            }
            const Bytes bytes = storage.get(sha, ".pgm");
            res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), kPgmType);
        }));

        server.Get(R"(/jobs/([^/]+)/result)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::lock_guard lock(mutex);
            const auto job = find_job(req.matches[1]);
            switch (job->state) {
                case JobState::Done:
                    res.status = 200;
                    res.set_content(job->result_body, kJsonType);
                    return;
                case JobState::Failed:
                    reply_json(res, 409, ordered_json{{"error", "job failed"},
                                                      {"state", "failed"},
                                                      {"stage", job->error_stage},
                                                      {"message", job->error_message}});
                    return;
                default:
                    reply_json(res, 409, ordered_json{{"error", "job not finished"},
                                                      {"state", std::string(to_string(job->state))}});
            }
        }));

        server.Post("/reviews", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const json body = parse_body(req);
            const auto id_it = body.find("image_id");
            if (id_it == body.end() || !id_it->is_string()) throw HttpError{400, "'image_id' must be a string"};
            const std::string image_id = id_it->get<std::string>();
            const auto label_it = body.find("clinician_label");
            json label;
            if (label_it == body.end()) throw HttpError{422, "'clinician_label' is required (dilated, normal or null)"};
            if (!label_it->is_null()) {
                if (!label_it->is_string()) throw HttpError{422, "'clinician_label' must be dilated, normal or null"};
                try {
                    label = std::string(to_string(parse_label(label_it->get<std::string>())));
                } catch (const Error&) {
                    throw HttpError{422, "invalid clinician_label '" + label_it->get<std::string>() +
                                             "' (want dilated, normal or null)"};
                }
            }
            ordered_json rec;
            {
                const std::lock_guard lock(mutex);
                if (!images.contains(image_id)) throw HttpError{404, "unknown image '" + image_id + "'"};
                // The most recently finished job on this image supplies the prediction.
                std::shared_ptr<Job> source;
                for (const auto& id : done_order) {
                    const auto& job = jobs.at(id);
                    if (job->image_id == image_id) source = job;
                }
                rec["review_id"] = fresh_id("rev");
                rec["image_id"] = image_id;
                rec["job_id"] = source ? ordered_json(source->id) : ordered_json(nullptr);
                rec["predicted_label"] = source ? ordered_json(source->predicted) : ordered_json(nullptr);
                rec["scores"] = source ? ordered_json(source->scores) : ordered_json::array();
                rec["clinician_label"] = label;
                rec["timestamp"] = now_iso8601();
                reviews.push_back(rec);
            }
            storage.append("reviews.log", rec);
            rec["current"] = true;
            reply_json(res, 201, rec);
        }));

        server.Get("/reviews", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::lock_guard lock(mutex);
            reply_json(res, 200, review_listing(req.get_param_value("image_id")));
        }));

        if (!config.ui_dir.empty() && fs::is_directory(config.ui_dir)) {
            server.set_mount_point("/ui", config.ui_dir.string());
        }
    }

    // Ids of successfully finished jobs in completion order.
    std::vector<std::string> done_order;
};

Service::Service(PipelineConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() {
    impl_->cancel = true;
}

int Service::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorKind::Io, "cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace biliscope
