#pragma once

#include <memory>
#include <string>

#include "biliscope/pipeline.hpp"

namespace biliscope {

/// HTTP facade over the pipeline for the review UI.
///
/// Endpoints: POST /images, GET /images/{id}, POST /jobs, GET /jobs/{id},
/// GET /jobs/{id}/snapshots/{k}, GET /jobs/{id}/result, POST /reviews,
/// GET /reviews, and the static UI under /ui when `ui_dir` is set.
///
/// Storage (under `storage_dir`): blobs/ holds content-addressed files named
/// by SHA-256; images.log, jobs.log and reviews.log are append-only JSON
/// lines. Restarting on the same directory re-serves images, finished jobs
/// and reviews; jobs that were queued or running are reported failed.
class Service {
public:
    explicit Service(PipelineConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the listening socket; port 0 picks a free port. Returns the port.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called. Requires bind().
    void run();
    void stop();
    /// Blocks until run() is accepting connections.
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace biliscope
