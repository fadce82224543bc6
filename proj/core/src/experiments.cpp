#include "nst/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "nst/errors.hpp"

namespace nst {

using json = nlohmann::json;

std::string to_string(SweepParameter parameter) {
    switch (parameter) {
        case SweepParameter::num_iterations:
            return "num_iterations";
        case SweepParameter::learning_rate:
            return "learning_rate";
        case SweepParameter::tv_strength:
            return "tv_strength";
        case SweepParameter::content_weight:
            return "content_weight";
    }
    return "?";
}

SweepParameter parse_sweep_parameter(std::string_view text) {
    for (auto p : {SweepParameter::num_iterations, SweepParameter::learning_rate, SweepParameter::tv_strength,
                   SweepParameter::content_weight}) {
        if (text == to_string(p)) return p;
    }
    throw ConfigError("varied_parameter must be one of num_iterations, learning_rate, tv_strength, content_weight; got '" +
                      std::string(text) + "'");
}

TransferConfig apply_parameter(const TransferConfig& base, SweepParameter parameter, double value) {
    TransferConfig config = base;
    switch (parameter) {
        case SweepParameter::num_iterations:
            if (value != std::floor(value) || value < 0 || value > 1e9) {
                throw ConfigError("num_iterations sweep values must be non-negative integers");
            }
            config.num_iterations = static_cast<int>(value);
            break;
        case SweepParameter::learning_rate:
            config.learning_rate = value;
            break;
        case SweepParameter::tv_strength:
            config.tv_strength = value;
            break;
        case SweepParameter::content_weight:
            config.content_weight = value;
            break;
    }
    return config;
}

void validate(const SweepSpec& spec) {
    if (spec.name.empty()) throw ConfigError("sweep name must not be empty");
    if (spec.name.find_first_of("/\\") != std::string::npos || spec.name == "." || spec.name == "..") {
        throw ConfigError("sweep name must be a plain directory name");
    }
    if (spec.values.empty()) throw ConfigError("sweep values must not be empty");
    for (std::size_t i = 1; i < spec.values.size(); ++i) {
        if (!(spec.values[i] > spec.values[i - 1])) throw ConfigError("sweep values must be strictly increasing");
    }
    validate(spec.base);
    for (double v : spec.values) validate(apply_parameter(spec.base, spec.varied_parameter, v));
    for (const auto* list : {&spec.content_images, &spec.style_images}) {
        std::set<std::string> stems;
        for (const auto& path : *list) {
            if (!stems.insert(path.stem().string()).second) {
                throw ConfigError("image file names must be unique within a list: " + path.stem().string());
            }
        }
    }
}

std::string format_value(const SweepSpec& spec, double value) {
    char buf[64];
    if (spec.varied_parameter == SweepParameter::content_weight) {
        std::snprintf(buf, sizeof(buf), "%g:%g", value, spec.base.style_weight);
    } else {
        std::snprintf(buf, sizeof(buf), "%g", value);
    }
    return buf;
}

std::string sweep_to_json(const SweepSpec& spec) {
    json j;
    j["name"] = spec.name;
    j["base"] = json::parse(config_to_json(spec.base));
    j["varied_parameter"] = to_string(spec.varied_parameter);
    j["values"] = spec.values;
    j["content_images"] = json::array();
    for (const auto& p : spec.content_images) j["content_images"].push_back(p.string());
    j["style_images"] = json::array();
    for (const auto& p : spec.style_images) j["style_images"].push_back(p.string());
    j["output_dir"] = spec.output_dir.string();
    return j.dump(2);
}

SweepSpec sweep_from_json(std::string_view json_text, const std::filesystem::path& relative_to) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("sweep spec is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("sweep spec must be a JSON object");
    SweepSpec spec;
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return (path.is_relative() && !relative_to.empty()) ? relative_to / path : path;
    };
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "name") {
                spec.name = value.get<std::string>();
            } else if (key == "base") {
                spec.base = config_from_json(value.dump());
            } else if (key == "varied_parameter") {
                spec.varied_parameter = parse_sweep_parameter(value.get<std::string>());
            } else if (key == "values") {
                spec.values = value.get<std::vector<double>>();
            } else if (key == "content_images") {
                for (const auto& p : value.get<std::vector<std::string>>()) spec.content_images.push_back(resolve(p));
            } else if (key == "style_images") {
                for (const auto& p : value.get<std::vector<std::string>>()) spec.style_images.push_back(resolve(p));
            } else if (key == "output_dir") {
                spec.output_dir = resolve(value.get<std::string>());
            } else {
                throw ConfigError("unknown sweep field '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("sweep spec field has the wrong type: ") + e.what());
    }
    if (!doc.contains("varied_parameter")) throw ConfigError("sweep spec needs varied_parameter");
    validate(spec);
    return spec;
}

std::vector<SweepSpec> builtin_sweeps() {
    std::vector<SweepSpec> sweeps;

    SweepSpec iterations;
    iterations.name = "exp1_iterations";
    iterations.base.optimizer = OptimizerKind::lbfgs;
    iterations.varied_parameter = SweepParameter::num_iterations;
    iterations.values = {100, 200, 300, 400, 500};
    sweeps.push_back(iterations);

    SweepSpec rates;
    rates.name = "exp2_learning_rate";
    rates.base.optimizer = OptimizerKind::adam;
    rates.varied_parameter = SweepParameter::learning_rate;
    rates.values = {1e0, 5e0, 1e1, 2e1, 4e1, 6e1};
    sweeps.push_back(rates);

    SweepSpec tv;
    tv.name = "exp3_tv_strength";
    tv.base.optimizer = OptimizerKind::lbfgs;
    tv.varied_parameter = SweepParameter::tv_strength;
    tv.values = {1e-8, 1e-6, 1e-4, 1e-2, 1e-1, 1e0};
    sweeps.push_back(tv);

    SweepSpec ratio;
    ratio.name = "exp4_content_style_ratio";
    ratio.base.optimizer = OptimizerKind::lbfgs;
    ratio.base.style_weight = 100.0;
    ratio.varied_parameter = SweepParameter::content_weight;
    ratio.values = {10, 50, 100, 200, 300};
    sweeps.push_back(ratio);

    return sweeps;
}

TransferConfig recommended_preset() {
    TransferConfig preset;
    preset.num_iterations = 300;
    preset.tv_strength = 1e-6;
    preset.content_weight = 100.0;
    preset.style_weight = 100.0;
    preset.optimizer = OptimizerKind::lbfgs;
    preset.learning_rate = 2e1;
    return preset;
}

std::uint32_t cell_seed(std::uint32_t base_seed, std::size_t content_index, std::size_t style_index,
                        std::size_t value_index) {
    return static_cast<std::uint32_t>(base_seed + content_index * 10000 + style_index * 100 + value_index);
}

std::filesystem::path sweep_directory(const SweepSpec& spec) { return spec.output_dir / spec.name; }

namespace {

using Clock = std::chrono::steady_clock;

struct Task {
    std::size_t content = 0;
    std::size_t style = 0;
    std::vector<std::size_t> value_indices;
};

std::string status_name(RunStatus status) {
    switch (status) {
        case RunStatus::completed:
            return "ok";
        case RunStatus::cancelled:
            return "cancelled";
        case RunStatus::failed:
            return "failed";
    }
    return "?";
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

std::string history_csv(const std::vector<LossReport>& history) {
    std::string out = LossReport::csv_header() + "\n";
    for (const auto& r : history) out += r.to_csv_row() + "\n";
    return out;
}

void run_single(const SweepSpec& spec, const Task& task, const RgbImage& content, const RgbImage& style,
                const LossNetwork& net, std::stop_token stop, std::vector<SweepCell>& cells,
                std::size_t (*index)(const SweepSpec&, std::size_t, std::size_t, std::size_t)) {
    const std::size_t k = task.value_indices.front();
    SweepCell& cell = cells[index(spec, task.content, task.style, k)];
    TransferConfig config = apply_parameter(spec.base, spec.varied_parameter, spec.values[k]);
    config.seed = cell_seed(spec.base.seed, task.content, task.style, k);
    const auto start = Clock::now();
    TransferResult run = run_transfer(content, style, config, net, {}, stop);
    cell.runtime_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    cell.status = run.status;
    cell.error = run.error;
    cell.image = std::move(run.final_image);
    cell.final_report = run.history.empty() ? run.initial : run.history.back();
    cell.history = std::move(run.history);
}

void run_shared_iterations(const SweepSpec& spec, const Task& task, const RgbImage& content, const RgbImage& style,
                           const LossNetwork& net, std::stop_token stop, std::vector<SweepCell>& cells,
                           std::size_t (*index)(const SweepSpec&, std::size_t, std::size_t, std::size_t)) {
    int longest = 0;
    int step = 0;
    for (double v : spec.values) {
        longest = std::max(longest, static_cast<int>(v));
        step = std::gcd(step, static_cast<int>(v));
    }
    TransferConfig config = spec.base;
    config.num_iterations = longest;
    config.save_every = std::max(step, 1);
    config.seed = cell_seed(spec.base.seed, task.content, task.style, 0);

    const auto start = Clock::now();
    std::vector<double> elapsed;
    ProgressSink sink;
    sink.on_report = [&](const LossReport&) {
        elapsed.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    };
    TransferResult run = run_transfer(content, style, config, net, sink, stop);

    for (std::size_t k : task.value_indices) {
        SweepCell& cell = cells[index(spec, task.content, task.style, k)];
        const int n = static_cast<int>(spec.values[k]);
        auto frame = std::find_if(run.frames.begin(), run.frames.end(),
                                  [n](const Frame& f) { return f.iteration == n; });
        const bool reached = n <= static_cast<int>(run.history.size()) && frame != run.frames.end();
        cell.history.assign(run.history.begin(), run.history.begin() + std::min<std::size_t>(n, run.history.size()));
        cell.final_report = cell.history.empty() ? run.initial : cell.history.back();
        cell.runtime_seconds = n == 0 || elapsed.empty() ? 0.0 : elapsed[std::min<std::size_t>(n, elapsed.size()) - 1];
        if (reached) {
            cell.status = RunStatus::completed;
            cell.image = frame->image;
        } else {
            cell.status = run.status == RunStatus::completed ? RunStatus::failed : run.status;
            cell.error = run.error;
            cell.image = run.final_image;
        }
    }
}

std::size_t cell_index(const SweepSpec& spec, std::size_t content, std::size_t style, std::size_t value) {
    return (content * spec.style_images.size() + style) * spec.values.size() + value;
}

}  // namespace

std::string summary_csv(const SweepSpec& spec, const SweepResult& result) {
    std::ostringstream out;
    out << "content,style,value,status,iterations,content_loss,style_loss,tv_loss,total_loss\n";
    for (const auto& cell : result.cells) {
        const auto& r = cell.final_report;
        out << spec.content_images[cell.content_index].stem().string() << ','
            << spec.style_images[cell.style_index].stem().string() << ',' << format_value(spec, cell.value) << ','
            << status_name(cell.status) << ',' << cell.history.size() << ',' << fmt17(r.content) << ','
            << fmt17(r.style) << ',' << fmt17(r.tv) << ',' << fmt17(r.total) << '\n';
    }
    return out.str();
}

SweepResult run_sweep(const SweepSpec& spec, const LossNetwork& net, const SweepOptions& options) {
    validate(spec);
    if (spec.content_images.empty() || spec.style_images.empty()) {
        throw ConfigError("sweep '" + spec.name + "' needs at least one content and one style image");
    }
    std::vector<RgbImage> contents, styles;
    for (const auto& p : spec.content_images) contents.push_back(load_png(p));
    for (const auto& p : spec.style_images) styles.push_back(load_png(p));
    // Surface tap/size problems before spending compute.
    std::vector<std::string> taps = spec.base.content_taps;
    taps.insert(taps.end(), spec.base.style_taps.begin(), spec.base.style_taps.end());
    std::vector<RgbImage> placeholders;
    for (const auto& img : contents) {
        for (const auto& tap : taps) {
            if (!net.has_layer(tap)) throw ConfigError("unknown tap '" + tap + "'");
        }
        RgbImage fitted = fit_to_network(img, spec.base.image_size, net, taps);
        placeholders.push_back(failed_cell(fitted.width, fitted.height));
    }
    for (const auto& img : styles) fit_to_network(img, spec.base.image_size, net, spec.base.style_taps);

    SweepResult result;
    result.contents = contents.size();
    result.styles = styles.size();
    result.values = spec.values.size();
    result.cells.resize(result.contents * result.styles * result.values);
    for (std::size_t i = 0; i < result.contents; ++i) {
        for (std::size_t j = 0; j < result.styles; ++j) {
            for (std::size_t k = 0; k < result.values; ++k) {
                auto& cell = result.cells[cell_index(spec, i, j, k)];
                cell.content_index = i;
                cell.style_index = j;
                cell.value_index = k;
                cell.value = spec.values[k];
            }
        }
    }

    const bool shared = spec.varied_parameter == SweepParameter::num_iterations;
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < result.contents; ++i) {
        for (std::size_t j = 0; j < result.styles; ++j) {
            if (shared) {
                Task t{i, j, {}};
                for (std::size_t k = 0; k < result.values; ++k) t.value_indices.push_back(k);
                tasks.push_back(std::move(t));
            } else {
                for (std::size_t k = 0; k < result.values; ++k) tasks.push_back({i, j, {k}});
            }
        }
    }

    std::size_t workers = options.workers;
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, tasks.size());

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (true) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks.size()) return;
            const Task& task = tasks[t];
            try {
                if (shared) {
                    run_shared_iterations(spec, task, contents[task.content], styles[task.style], net, options.stop,
                                          result.cells, cell_index);
                } else {
                    run_single(spec, task, contents[task.content], styles[task.style], net, options.stop,
                               result.cells, cell_index);
                }
                if (options.on_cell) {
                    for (std::size_t k : task.value_indices) {
                        options.on_cell(result.cells[cell_index(spec, task.content, task.style, k)]);
                    }
                }
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::vector<std::string> row_labels, col_labels;
    for (const auto& p : spec.style_images) row_labels.push_back(p.stem().string());
    for (double v : spec.values) col_labels.push_back(format_value(spec, v));
    for (std::size_t i = 0; i < result.contents; ++i) {
        std::vector<std::vector<RgbImage>> grid(result.styles);
        for (std::size_t j = 0; j < result.styles; ++j) {
            for (std::size_t k = 0; k < result.values; ++k) {
                const auto& cell = result.cell(i, j, k);
                const bool usable = cell.status == RunStatus::completed &&
                                    cell.image.width == placeholders[i].width &&
                                    cell.image.height == placeholders[i].height;
                grid[j].push_back(usable ? cell.image : placeholders[i]);
            }
        }
        result.sheets.push_back(contact_sheet(grid, row_labels, col_labels));
    }

    if (options.write_files) {
        namespace fs = std::filesystem;
        const fs::path root = sweep_directory(spec);
        std::ostringstream timings;
        timings << "content,style,value,runtime_seconds\n";
        for (std::size_t i = 0; i < result.contents; ++i) {
            const fs::path content_dir = root / spec.content_images[i].stem();
            fs::create_directories(content_dir / "cells");
            save_png(result.sheets[i], content_dir / "sheet.png");
            for (std::size_t j = 0; j < result.styles; ++j) {
                for (std::size_t k = 0; k < result.values; ++k) {
                    const auto& cell = result.cell(i, j, k);
                    const std::string stem =
                        spec.style_images[j].stem().string() + "_" + format_value(spec, cell.value);
                    const bool ok = cell.status == RunStatus::completed;
                    save_png(ok ? cell.image : placeholders[i], content_dir / "cells" / (stem + ".png"));
                    write_text(content_dir / "cells" / (stem + ".csv"), history_csv(cell.history));
                    timings << spec.content_images[i].stem().string() << ',' << spec.style_images[j].stem().string()
                            << ',' << format_value(spec, cell.value) << ',' << cell.runtime_seconds << '\n';
                }
            }
        }
        write_text(root / "summary.csv", summary_csv(spec, result));
        write_text(root / "timings.csv", timings.str());
    }
    return result;
}

}  // namespace nst
