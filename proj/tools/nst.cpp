// Command-line front end: single runs, sweeps, presets, weight export.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "common.hpp"
#include "nst/config.hpp"
#include "nst/errors.hpp"
#include "nst/experiments.hpp"
#include "nst/imaging.hpp"
#include "nst/optimize.hpp"

namespace fs = std::filesystem;

namespace {

struct ConfigFlags {
    std::string preset = "default";
    std::string config_file;
    std::optional<int> num_iterations;
    std::optional<int> save_every;
    std::optional<double> learning_rate;
    std::optional<double> tv_strength;
    std::optional<double> content_weight;
    std::optional<double> style_weight;
    std::optional<std::string> optimizer;
    std::optional<std::string> style_target;
    std::optional<std::string> init;
    std::optional<std::uint32_t> seed;
    std::optional<int> size;

    void add_to(CLI::App& app) {
        app.add_option("--preset", preset, "Starting point: default or recommended")->capture_default_str();
        app.add_option("--config", config_file, "JSON file with TransferConfig fields");
        app.add_option("--num-iterations", num_iterations);
        app.add_option("--save-every", save_every);
        app.add_option("--learning-rate", learning_rate, "Adam step in 8-bit intensity levels");
        app.add_option("--tv-strength", tv_strength);
        app.add_option("--content-weight", content_weight);
        app.add_option("--style-weight", style_weight);
        app.add_option("--optimizer", optimizer, "adam or lbfgs");
        app.add_option("--style-target", style_target, "gram or spatial_average");
        app.add_option("--init", init, "content or noise");
        app.add_option("--seed", seed);
        app.add_option("--size", size, "Longest side of the working image");
    }

    nst::TransferConfig resolve() const {
        nst::TransferConfig config;
        if (preset == "recommended") {
            config = nst::recommended_preset();
        } else if (preset != "default") {
            throw nst::ConfigError("--preset must be default or recommended");
        }
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw nst::IoError("cannot read " + config_file);
            std::stringstream text;
            text << in.rdbuf();
            config = nst::config_from_json(text.str(), config);
        }
        if (num_iterations) config.num_iterations = *num_iterations;
        if (save_every) config.save_every = *save_every;
        if (learning_rate) config.learning_rate = *learning_rate;
        if (tv_strength) config.tv_strength = *tv_strength;
        if (content_weight) config.content_weight = *content_weight;
        if (style_weight) config.style_weight = *style_weight;
        if (optimizer) config.optimizer = nst::parse_optimizer(*optimizer);
        if (style_target) config.style_target_mode = nst::parse_style_target(*style_target);
        if (init) config.init = nst::parse_init(*init);
        if (seed) config.seed = *seed;
        if (size) config.image_size = *size;
        nst::validate(config);
        return config;
    }
};

struct NetworkFlags {
    std::string weights = "tiny:7";
    std::string arch = "tiny";
    std::string pool = "average";

    void add_to(CLI::App& app) {
        app.add_option("--weights", weights, "NSTW file or tiny:SEED")->capture_default_str();
        app.add_option("--arch", arch, "Architecture of a weight file: tiny or vgg16")->capture_default_str();
        app.add_option("--pool", pool, "average or max")->capture_default_str();
    }
};

int run_command(const ConfigFlags& flags, const NetworkFlags& network, const std::string& content,
                const std::string& style, const std::string& output, const std::string& frames_dir,
                const std::string& losses, bool quiet) {
    const nst::TransferConfig config = flags.resolve();
    const auto net = nst::tools::open_network(network.weights, network.arch, network.pool);
    const nst::RgbImage content_image = nst::load_png(content);
    const nst::RgbImage style_image = nst::load_png(style);
    if (!frames_dir.empty()) fs::create_directories(frames_dir);

    nst::ProgressSink sink;
    sink.on_report = [&](const nst::LossReport& r) {
        if (!quiet && (r.iteration % config.save_every == 0 || r.iteration == config.num_iterations)) {
            std::fprintf(stderr, "iter %5d  content %.6g  style %.6g  tv %.6g  total %.6g\n", r.iteration, r.content,
                         r.style, r.tv, r.total);
        }
    };
    if (!frames_dir.empty()) {
        sink.on_frame = [&](int iteration, const nst::RgbImage& frame) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%05d.png", iteration);
            nst::save_png(frame, fs::path(frames_dir) / name);
        };
    }
    const nst::TransferResult result = nst::run_transfer(content_image, style_image, config, *net, sink);
    nst::save_png(result.final_image, output);
    if (!losses.empty()) {
        std::ofstream out(losses);
        out << nst::LossReport::csv_header() << '\n';
        for (const auto& r : result.history) out << r.to_csv_row() << '\n';
    }
    if (result.status == nst::RunStatus::failed) {
        std::cerr << "run failed: " << result.error << '\n';
        return 3;
    }
    return 0;
}

int sweep_command(const std::string& spec_file, const std::string& builtin, const NetworkFlags& network,
                  const std::vector<std::string>& contents, const std::vector<std::string>& styles,
                  const std::string& output_dir, std::size_t workers, std::optional<int> size, bool quiet) {
    nst::SweepSpec spec;
    if (!spec_file.empty()) {
        std::ifstream in(spec_file);
        if (!in) throw nst::IoError("cannot read " + spec_file);
        std::stringstream text;
        text << in.rdbuf();
        spec = nst::sweep_from_json(text.str(), fs::path(spec_file).parent_path());
    } else {
        bool found = false;
        for (auto& s : nst::builtin_sweeps()) {
            if (s.name == builtin) {
                spec = s;
                found = true;
            }
        }
        if (!found) throw nst::ConfigError("unknown builtin sweep '" + builtin + "'");
    }
    for (const auto& c : contents) spec.content_images.emplace_back(c);
    for (const auto& s : styles) spec.style_images.emplace_back(s);
    if (!output_dir.empty()) spec.output_dir = output_dir;
    if (size) spec.base.image_size = *size;

    const auto net = nst::tools::open_network(network.weights, network.arch, network.pool);
    nst::SweepOptions options;
    options.workers = workers;
    std::mutex print;
    if (!quiet) {
        options.on_cell = [&](const nst::SweepCell& cell) {
            std::lock_guard lock(print);
            std::fprintf(stderr, "cell content=%zu style=%zu value=%s  total %.6g  %.1fs\n", cell.content_index,
                         cell.style_index, nst::format_value(spec, cell.value).c_str(), cell.final_report.total,
                         cell.runtime_seconds);
        };
    }
    nst::run_sweep(spec, *net, options);
    std::cout << nst::sweep_directory(spec).string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural style transfer"};
    app.require_subcommand(1);

    ConfigFlags run_flags;
    NetworkFlags run_network;
    std::string content, style, output = "out.png", frames_dir, losses;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "Stylize one content image");
    run->add_option("--content", content)->required()->check(CLI::ExistingFile);
    run->add_option("--style", style)->required()->check(CLI::ExistingFile);
    run->add_option("-o,--output", output)->capture_default_str();
    run->add_option("--frames-dir", frames_dir, "Write every emitted frame here");
    run->add_option("--losses", losses, "Write the loss history CSV here");
    run->add_flag("-q,--quiet", quiet);
    run_flags.add_to(*run);
    run_network.add_to(*run);

    std::string spec_file, builtin, output_dir;
    std::vector<std::string> contents, styles;
    std::size_t workers = 0;
    std::optional<int> sweep_size;
    NetworkFlags sweep_network;
    auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
    auto* spec_opt = sweep->add_option("--spec", spec_file, "SweepSpec JSON file")->check(CLI::ExistingFile);
    sweep->add_option("--builtin", builtin, "exp1_iterations, exp2_learning_rate, exp3_tv_strength, "
                                            "exp4_content_style_ratio")
        ->excludes(spec_opt);
    sweep->add_option("--content", contents, "Content images (appended to the spec)")->check(CLI::ExistingFile);
    sweep->add_option("--style", styles, "Style images (appended to the spec)")->check(CLI::ExistingFile);
    sweep->add_option("--output-dir", output_dir);
    sweep->add_option("--workers", workers, "0: one per core")->capture_default_str();
    sweep->add_option("--size", sweep_size);
    sweep->add_flag("-q,--quiet", quiet);
    sweep_network.add_to(*sweep);

    auto* presets = app.add_subcommand("presets", "Print the default and recommended configurations");

    std::uint32_t export_seed = 7;
    std::string export_path;
    auto* export_cmd = app.add_subcommand("export-tiny-weights", "Write tiny_network(seed) as an NSTW file");
    export_cmd->add_option("--seed", export_seed)->capture_default_str();
    export_cmd->add_option("-o,--output", export_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return run_command(run_flags, run_network, content, style, output, frames_dir, losses, quiet);
        if (*sweep) {
            if (spec_file.empty() && builtin.empty()) throw nst::ConfigError("sweep needs --spec or --builtin");
            return sweep_command(spec_file, builtin, sweep_network, contents, styles, output_dir, workers,
                                 sweep_size, quiet);
        }
        if (*presets) {
            std::cout << "{\"default\": " << nst::config_to_json(nst::TransferConfig{})
                      << ",\n\"recommended\": " << nst::config_to_json(nst::recommended_preset()) << "}\n";
            return 0;
        }
        if (*export_cmd) {
            nst::save_weights(nst::tiny_network(export_seed), export_path);
            return 0;
        }
    } catch (const nst::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
