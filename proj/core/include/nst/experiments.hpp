#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "nst/config.hpp"
#include "nst/imaging.hpp"
#include "nst/loss_network.hpp"
#include "nst/optimize.hpp"

namespace nst {

enum class SweepParameter { num_iterations, learning_rate, tv_strength, content_weight };

std::string to_string(SweepParameter parameter);
SweepParameter parse_sweep_parameter(std::string_view text);

/// One experiment: a base configuration with a single parameter swept over an
/// ascending value list, for every content x style image pair.
struct SweepSpec {
    std::string name;
    TransferConfig base;
    SweepParameter varied_parameter = SweepParameter::num_iterations;
    std::vector<double> values;
    std::vector<std::filesystem::path> content_images;
    std::vector<std::filesystem::path> style_images;
    std::filesystem::path output_dir = "sweeps";
};

// Structural checks plus validation of every per-value configuration.
void validate(const SweepSpec& spec);

TransferConfig apply_parameter(const TransferConfig& base, SweepParameter parameter, double value);

// Compact label used in file names and sheet headers ("300", "1e-06", "50:100").
std::string format_value(const SweepSpec& spec, double value);

std::string sweep_to_json(const SweepSpec& spec);
// Missing "base" fields take engine defaults; relative image paths resolve
// against `relative_to` when given.
SweepSpec sweep_from_json(std::string_view json_text, const std::filesystem::path& relative_to = {});

/// The four hyperparameter grids: iterations, Adam learning rate, TV strength
/// and content:style ratio. Image lists are left empty for the caller.
std::vector<SweepSpec> builtin_sweeps();

// Iterations 300, TV 1e-6, content:style 100:100, L-BFGS; Adam rate 2e1.
TransferConfig recommended_preset();

// base_seed + content * 10000 + style * 100 + value (mod 2^32).
std::uint32_t cell_seed(std::uint32_t base_seed, std::size_t content_index, std::size_t style_index,
                        std::size_t value_index);

struct SweepCell {
    std::size_t content_index = 0;
    std::size_t style_index = 0;
    std::size_t value_index = 0;
    double value = 0.0;
    RunStatus status = RunStatus::completed;
    std::string error;
    RgbImage image;
    std::vector<LossReport> history;
    LossReport final_report;
    double runtime_seconds = 0.0;
};

struct SweepResult {
    std::size_t contents = 0;
    std::size_t styles = 0;
    std::size_t values = 0;
    std::vector<SweepCell> cells;   // ordered by (content, style, value)
    std::vector<RgbImage> sheets;   // one per content image

    const SweepCell& cell(std::size_t content, std::size_t style, std::size_t value) const {
        return cells[(content * styles + style) * values + value];
    }
};

struct SweepOptions {
    std::size_t workers = 0;  // 0: one per hardware thread
    bool write_files = true;
    std::function<void(const SweepCell&)> on_cell;  // called from worker threads
    std::stop_token stop;
};

/// Runs every (content, style, value) cell and, unless disabled, writes
///   <output_dir>/<name>/<content>/sheet.png
///   <output_dir>/<name>/<content>/cells/<style>_<value>.png and .csv
///   <output_dir>/<name>/summary.csv   (deterministic final losses)
///   <output_dir>/<name>/timings.csv   (wall-clock seconds per cell)
/// All inputs are read before any compute. A cell whose run fails numerically
/// is recorded as failed and drawn as a crossed gray tile. An iteration sweep
/// shares one run per image pair, snapshotted at each requested count.
SweepResult run_sweep(const SweepSpec& spec, const LossNetwork& net, const SweepOptions& options = {});

// Per-content and summary file locations used by run_sweep.
std::filesystem::path sweep_directory(const SweepSpec& spec);
std::string summary_csv(const SweepSpec& spec, const SweepResult& result);

}  // namespace nst
