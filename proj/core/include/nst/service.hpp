#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

#include "nst/loss_network.hpp"

namespace nst {

struct ServiceOptions {
    std::filesystem::path data_dir = "nst-data";
    std::size_t workers = 2;
    std::size_t queue_limit = 64;  // queued (not yet running) jobs
};

/// HTTP job service.
///
///   POST /jobs                    multipart: content, style, optional config (JSON)
///   GET  /jobs                    all job summaries
///   GET  /jobs/{id}               one summary
///   GET  /jobs/{id}/frames/{k}    k-th emitted frame as PNG
///   GET  /jobs/{id}/losses        CSV of the rows produced so far
///   POST /jobs/{id}/cancel
///   GET  /presets
///   POST /sweeps                  multipart: spec (JSON), content and style files
///   GET  /sweeps/{id}/sheet       contact sheet PNG (?content=i, default 0)
///
/// Every job lives in <data_dir>/jobs/<id>/. On construction the directory is
/// scanned: finished jobs are re-listed with their artifacts, and jobs that
/// were queued or running when the previous process stopped are marked failed.
class Service {
   public:
    Service(std::shared_ptr<const LossNetwork> net, ServiceOptions options = {});
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Port 0 picks a free port. Returns the bound port; throws IoError.
    int bind(const std::string& host, int port);
    // Blocks until stop() is called.
    void serve();
    // Stops accepting requests, cancels running jobs and joins the workers.
    void stop();

   private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace nst
