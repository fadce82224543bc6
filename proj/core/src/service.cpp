#include "nst/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stop_token>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "nst/config.hpp"
#include "nst/errors.hpp"
#include "nst/experiments.hpp"
#include "nst/imaging.hpp"
#include "nst/optimize.hpp"

namespace nst {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool is_terminal(const std::string& status) {
    return status == "done" || status == "failed" || status == "cancelled";
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << bytes;
        if (!out) throw IoError("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

struct Job {
    std::string id;
    std::uint64_t seq = 0;
    std::string kind;  // single | sweep
    std::string status = "queued";
    std::string created, started, finished;
    std::string error;
    std::string config_json;  // TransferConfig or SweepSpec document
    fs::path dir;

    std::vector<int> frame_iterations;
    std::vector<LossReport> history;
    std::size_t cells_done = 0;
    std::size_t cells_total = 0;
    std::vector<std::string> sheets;  // relative to dir, one per content image

    // Inputs, only held until the run starts.
    std::optional<TransferConfig> config;
    std::optional<SweepSpec> sweep;
    RgbImage content, style;

    std::stop_source stop;
    bool cancel_requested = false;
};

std::string losses_csv(const std::vector<LossReport>& history) {
    std::string out = LossReport::csv_header() + "\n";
    for (const auto& r : history) out += r.to_csv_row() + "\n";
    return out;
}

void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
    json body{{"error", message}};
    if (!field.empty()) body["field"] = field;
    reply_json(res, status, body);
}

}  // namespace

struct Service::Impl {
    std::shared_ptr<const LossNetwork> net;
    ServiceOptions options;
    fs::path jobs_dir;

    std::mutex mutex;
    std::condition_variable cv;
    std::map<std::string, std::shared_ptr<Job>> jobs;
    std::deque<std::shared_ptr<Job>> queue;
    std::uint64_t next_seq = 1;
    bool stopping = false;

    std::vector<std::thread> workers;
    httplib::Server server;
    std::atomic<bool> stopped{false};

    Impl(std::shared_ptr<const LossNetwork> n, ServiceOptions o) : net(std::move(n)), options(std::move(o)) {
        if (!net) throw ConfigError("service needs a loss network");
        if (options.workers == 0) throw ConfigError("service needs at least one worker");
        jobs_dir = options.data_dir / "jobs";
        fs::create_directories(jobs_dir);
        reload();
        routes();
        for (std::size_t i = 0; i < options.workers; ++i) workers.emplace_back([this] { work(); });
    }

    // Caller holds the mutex or owns the job exclusively.
    json summary(const Job& job) const {
        json j{{"id", job.id},
               {"kind", job.kind},
               {"status", job.status},
               {"created", job.created},
               {"started", job.started},
               {"finished", job.finished},
               {"error", job.error},
               {"frames", job.frame_iterations},
               {"iterations_completed", job.history.size()}};
        j[job.kind == "sweep" ? "spec" : "config"] = json::parse(job.config_json);
        if (job.kind == "sweep") {
            j["cells_done"] = job.cells_done;
            j["cells_total"] = job.cells_total;
            j["sheets"] = job.sheets.size();
        }
        return j;
    }

    void persist(const Job& job) const {
        json meta = summary(job);
        meta.erase("config");
        meta.erase("spec");
        meta["seq"] = job.seq;
        meta["sheets"] = job.sheets;
        write_file(job.dir / "job.json", meta.dump(2));
        write_file(job.dir / "losses.csv", losses_csv(job.history));
    }

    void reload() {
        std::vector<std::shared_ptr<Job>> found;
        for (const auto& entry : fs::directory_iterator(jobs_dir)) {
            if (!entry.is_directory()) continue;
            auto job = std::make_shared<Job>();
            job->dir = entry.path();
            try {
                const json meta = json::parse(read_file(job->dir / "job.json"));
                job->id = meta.at("id").get<std::string>();
                job->seq = meta.at("seq").get<std::uint64_t>();
                job->kind = meta.at("kind").get<std::string>();
                job->status = meta.at("status").get<std::string>();
                job->created = meta.value("created", "");
                job->started = meta.value("started", "");
                job->finished = meta.value("finished", "");
                job->error = meta.value("error", "");
                job->frame_iterations = meta.value("frames", std::vector<int>{});
                job->cells_done = meta.value("cells_done", std::size_t{0});
                job->cells_total = meta.value("cells_total", std::size_t{0});
                job->sheets = meta.value("sheets", std::vector<std::string>{});
                job->config_json = read_file(job->dir / "config.json");
                std::istringstream rows(read_file(job->dir / "losses.csv"));
                std::string line;
                std::getline(rows, line);
                while (std::getline(rows, line)) {
                    if (!line.empty()) job->history.push_back(LossReport::from_csv_row(line));
                }
            } catch (const std::exception&) {
                continue;  // not a job directory this service wrote
            }
            if (!is_terminal(job->status)) {
                job->status = "failed";
                job->error = "interrupted by service restart";
                job->finished = now_utc();
                persist(*job);
            }
            next_seq = std::max(next_seq, job->seq + 1);
            found.push_back(job);
        }
        for (auto& job : found) jobs[job->id] = job;
    }

    std::shared_ptr<Job> new_job(const std::string& kind) {
        auto job = std::make_shared<Job>();
        job->seq = next_seq++;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s-%06llu", kind == "sweep" ? "sweep" : "job",
                      static_cast<unsigned long long>(job->seq));
        job->id = buf;
        job->kind = kind;
        job->created = now_utc();
        job->dir = jobs_dir / job->id;
        return job;
    }

    // Caller holds the mutex.
    bool enqueue(const std::shared_ptr<Job>& job, httplib::Response& res) {
        if (queue.size() >= options.queue_limit) {
            reply_error(res, 429, "job queue is full (" + std::to_string(options.queue_limit) + " queued)");
            return false;
        }
        fs::create_directories(job->dir / "frames");
        write_file(job->dir / "config.json", job->config_json);
        persist(*job);
        jobs[job->id] = job;
        queue.push_back(job);
        cv.notify_one();
        reply_json(res, 202, {{"id", job->id}});
        return true;
    }

    std::shared_ptr<Job> find(const std::string& id) {
        auto it = jobs.find(id);
        return it == jobs.end() ? nullptr : it->second;
    }

    void submit_job(const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data()) {
            return reply_error(res, 400, "expected multipart/form-data with content, style and config parts");
        }
        RgbImage images[2];
        const char* fields[2] = {"content", "style"};
        for (int i = 0; i < 2; ++i) {
            if (!req.has_file(fields[i])) {
                return reply_error(res, 400, std::string("missing image part '") + fields[i] + "'", fields[i]);
            }
            const std::string& bytes = req.get_file_value(fields[i]).content;
            try {
                images[i] = decode_png(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
            } catch (const std::exception& e) {
                return reply_error(res, 400, std::string(fields[i]) + ": " + e.what(), fields[i]);
            }
        }
        TransferConfig config;
        try {
            if (req.has_file("config")) config = config_from_json(req.get_file_value("config").content);
            check_taps(config);
        } catch (const ConfigError& e) {
            return reply_error(res, 400, e.what(), "config");
        }

        std::lock_guard lock(mutex);
        auto job = new_job("single");
        job->config = config;
        job->config_json = config_to_json(config);
        job->content = std::move(images[0]);
        job->style = std::move(images[1]);
        if (enqueue(job, res)) {
            save_png(job->content, job->dir / "content.png");
            save_png(job->style, job->dir / "style.png");
        } else {
            --next_seq;
        }
    }

    void check_taps(const TransferConfig& config) const {
        for (const auto* taps : {&config.content_taps, &config.style_taps}) {
            for (const auto& tap : *taps) {
                if (!net->has_layer(tap)) throw ConfigError("unknown tap '" + tap + "'");
            }
        }
    }

    void submit_sweep(const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data() || !req.has_file("spec")) {
            return reply_error(res, 400, "expected multipart/form-data with a spec part", "spec");
        }
        SweepSpec spec;
        try {
            spec = sweep_from_json(req.get_file_value("spec").content);
            check_taps(spec.base);
        } catch (const ConfigError& e) {
            return reply_error(res, 400, e.what(), "spec");
        }
        std::vector<std::pair<std::string, std::string>> uploads[2];  // (stem, bytes)
        const char* fields[2] = {"content", "style"};
        for (int i = 0; i < 2; ++i) {
            const auto files = req.get_file_values(fields[i]);
            if (files.empty()) {
                return reply_error(res, 400, std::string("missing image part '") + fields[i] + "'", fields[i]);
            }
            for (std::size_t n = 0; n < files.size(); ++n) {
                const auto& file = files[n];
                try {
                    decode_png(std::vector<std::uint8_t>(file.content.begin(), file.content.end()));
                } catch (const std::exception& e) {
                    return reply_error(res, 400, std::string(fields[i]) + ": " + e.what(), fields[i]);
                }
                std::string stem = fs::path(file.filename).stem().string();
                if (stem.empty() || stem == "." || stem == "..") stem = std::string(fields[i]) + std::to_string(n);
                uploads[i].emplace_back(stem, file.content);
            }
        }

        std::lock_guard lock(mutex);
        auto job = new_job("sweep");
        spec.output_dir = job->dir / "output";
        spec.content_images.clear();
        spec.style_images.clear();
        for (const auto& [stem, bytes] : uploads[0]) spec.content_images.push_back(job->dir / "inputs" / "content" / (stem + ".png"));
        for (const auto& [stem, bytes] : uploads[1]) spec.style_images.push_back(job->dir / "inputs" / "style" / (stem + ".png"));
        try {
            validate(spec);
        } catch (const ConfigError& e) {
            --next_seq;
            return reply_error(res, 400, e.what(), "spec");
        }
        job->cells_total = spec.content_images.size() * spec.style_images.size() * spec.values.size();
        job->config_json = sweep_to_json(spec);
        job->sweep = spec;
        if (!enqueue(job, res)) {
            --next_seq;
            return;
        }
        fs::create_directories(job->dir / "inputs" / "content");
        fs::create_directories(job->dir / "inputs" / "style");
        for (int i = 0; i < 2; ++i) {
            const auto& paths = i == 0 ? spec.content_images : spec.style_images;
            for (std::size_t n = 0; n < paths.size(); ++n) write_file(paths[n], uploads[i][n].second);
        }
    }

    void cancel(const std::string& id, httplib::Response& res) {
        std::lock_guard lock(mutex);
        auto job = find(id);
        if (!job) return reply_error(res, 404, "no job " + id);
        if (job->status == "queued") {
            queue.erase(std::remove(queue.begin(), queue.end(), job), queue.end());
            job->status = "cancelled";
            job->finished = now_utc();
            persist(*job);
        } else if (job->status == "running") {
            job->cancel_requested = true;
            job->stop.request_stop();
        }
        reply_json(res, 202, {{"id", id}, {"status", job->status}, {"cancel_requested", true}});
    }

    void routes() {
        server.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) { submit_job(req, res); });
        server.Get("/jobs", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lock(mutex);
            std::vector<std::shared_ptr<Job>> ordered;
            for (const auto& [id, job] : jobs) ordered.push_back(job);
            std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a->seq < b->seq; });
            json list = json::array();
            for (const auto& job : ordered) list.push_back(summary(*job));
            reply_json(res, 200, {{"jobs", list}});
        });
        server.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mutex);
            auto job = find(req.matches[1]);
            if (!job) return reply_error(res, 404, "no job " + std::string(req.matches[1]));
            reply_json(res, 200, summary(*job));
        });
        server.Get(R"(/jobs/([^/]+)/frames/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
            fs::path path;
            {
                std::lock_guard lock(mutex);
                auto job = find(req.matches[1]);
                if (!job) return reply_error(res, 404, "no job " + std::string(req.matches[1]));
                const std::size_t k = std::stoul(req.matches[2]);
                if (k >= job->frame_iterations.size()) {
                    return reply_error(res, 404,
                                       "frame " + std::to_string(k) + " not produced yet (" +
                                           std::to_string(job->frame_iterations.size()) + " available)");
                }
                path = job->dir / "frames" / (std::to_string(k) + ".png");
                res.set_header("X-Iteration", std::to_string(job->frame_iterations[k]));
            }
            try {
                res.set_content(read_file(path), "image/png");
            } catch (const IoError& e) {
                reply_error(res, 404, e.what());
            }
        });
        server.Get(R"(/jobs/([^/]+)/losses)", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mutex);
            auto job = find(req.matches[1]);
            if (!job) return reply_error(res, 404, "no job " + std::string(req.matches[1]));
            res.set_content(losses_csv(job->history), "text/csv");
        });
        server.Post(R"(/jobs/([^/]+)/cancel)",
                    [this](const httplib::Request& req, httplib::Response& res) { cancel(req.matches[1], res); });
        server.Get("/presets", [](const httplib::Request&, httplib::Response& res) {
            TransferConfig adam = recommended_preset();
            adam.optimizer = OptimizerKind::adam;
            json presets = json::array();
            presets.push_back({{"name", "default"}, {"config", json::parse(config_to_json(TransferConfig{}))}});
            presets.push_back({{"name", "recommended"}, {"config", json::parse(config_to_json(recommended_preset()))}});
            presets.push_back({{"name", "recommended_adam"}, {"config", json::parse(config_to_json(adam))}});
            reply_json(res, 200, {{"presets", presets}});
        });
        server.Post("/sweeps", [this](const httplib::Request& req, httplib::Response& res) { submit_sweep(req, res); });
        server.Get(R"(/sweeps/([^/]+)/sheet)", [this](const httplib::Request& req, httplib::Response& res) {
            fs::path path;
            {
                std::lock_guard lock(mutex);
                auto job = find(req.matches[1]);
                if (!job || job->kind != "sweep") {
                    return reply_error(res, 404, "no sweep " + std::string(req.matches[1]));
                }
                std::size_t index = 0;
                if (req.has_param("content")) {
                    try {
                        index = std::stoul(req.get_param_value("content"));
                    } catch (const std::exception&) {
                        return reply_error(res, 400, "content must be a non-negative integer", "content");
                    }
                }
                if (index >= job->sheets.size()) return reply_error(res, 404, "sheet not available");
                path = job->dir / job->sheets[index];
            }
            try {
                res.set_content(read_file(path), "image/png");
            } catch (const IoError& e) {
                reply_error(res, 404, e.what());
            }
        });
    }

    void finish(Job& job, const std::string& status, const std::string& error) {
        std::lock_guard lock(mutex);
        job.status = status;
        job.error = error;
        job.finished = now_utc();
        job.content = {};
        job.style = {};
        persist(job);
    }

    void finish_cancelled(Job& job) {
        bool by_user;
        {
            std::lock_guard lock(mutex);
            by_user = job.cancel_requested;
        }
        if (by_user) return finish(job, "cancelled", "");
        finish(job, "failed", "interrupted by service shutdown");
    }

    void run_single(Job& job) {
        ProgressSink sink;
        sink.on_report = [&](const LossReport& report) {
            std::lock_guard lock(mutex);
            job.history.push_back(report);
        };
        sink.on_frame = [&](int iteration, const RgbImage& frame) {
            std::size_t index;
            {
                std::lock_guard lock(mutex);
                index = job.frame_iterations.size();
            }
            save_png(frame, job.dir / "frames" / (std::to_string(index) + ".png"));
            std::lock_guard lock(mutex);
            job.frame_iterations.push_back(iteration);
            persist(job);
        };
        const TransferResult result = run_transfer(job.content, job.style, *job.config, *net, sink,
                                                   job.stop.get_token());
        switch (result.status) {
            case RunStatus::completed:
                return finish(job, "done", "");
            case RunStatus::cancelled:
                return finish_cancelled(job);
            case RunStatus::failed:
                return finish(job, "failed", result.error);
        }
    }

    void run_sweep_job(Job& job) {
        SweepOptions sweep_options;
        sweep_options.workers = 1;
        sweep_options.stop = job.stop.get_token();
        sweep_options.on_cell = [&](const SweepCell&) {
            std::lock_guard lock(mutex);
            ++job.cells_done;
        };
        const SweepSpec& spec = *job.sweep;
        const SweepResult result = nst::run_sweep(spec, *net, sweep_options);
        {
            std::lock_guard lock(mutex);
            for (const auto& content : spec.content_images) {
                job.sheets.push_back(
                    fs::relative(sweep_directory(spec) / content.stem() / "sheet.png", job.dir).string());
            }
        }
        if (job.stop.stop_requested()) return finish_cancelled(job);
        std::size_t failed = 0;
        for (const auto& cell : result.cells) failed += cell.status != RunStatus::completed;
        finish(job, "done", failed ? std::to_string(failed) + " cell(s) failed" : "");
    }

    void work() {
        while (true) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock lock(mutex);
                cv.wait(lock, [this] { return stopping || !queue.empty(); });
                if (stopping) return;
                job = queue.front();
                queue.pop_front();
                job->status = "running";
                job->started = now_utc();
                persist(*job);
            }
            try {
                if (job->kind == "sweep") {
                    run_sweep_job(*job);
                } else {
                    run_single(*job);
                }
            } catch (const std::exception& e) {
                finish(*job, "failed", e.what());
            }
        }
    }

    void shutdown() {
        if (stopped.exchange(true)) return;
        server.stop();
        {
            std::lock_guard lock(mutex);
            stopping = true;
            for (auto& [id, job] : jobs) {
                if (job->status == "running") job->stop.request_stop();
            }
        }
        cv.notify_all();
        for (auto& w : workers) {
            if (w.joinable()) w.join();
        }
    }
};

Service::Service(std::shared_ptr<const LossNetwork> net, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(net), std::move(options))) {}

Service::~Service() { impl_->shutdown(); }

int Service::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw IoError("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw IoError("cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void Service::serve() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->shutdown(); }

}  // namespace nst
