#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

#include "nst/config.hpp"
#include "nst/imaging.hpp"
#include "nst/loss_network.hpp"
#include "nst/objective.hpp"

namespace nst {

struct AdamState {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double epsilon = 1e-8;

    std::vector<double> first_moment;
    std::vector<double> second_moment;
    long step = 0;

    explicit AdamState(std::size_t size) : first_moment(size, 0.0), second_moment(size, 0.0) {}
};

// Bias-corrected Adam update of `params` in place. Throws NumericError on a
// non-finite gradient, ConfigError on a size mismatch.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad, double learning_rate);

struct Evaluation {
    double loss = 0.0;
    std::vector<double> gradient;
};

using Evaluator = std::function<Evaluation(std::span<const double> point)>;
// Maps a trial point back into the feasible set, in place.
using Projection = std::function<void(std::span<double> point)>;

struct LbfgsOptions {
    std::size_t memory = 10;
    double armijo = 1e-4;
    double shrink = 0.5;
    int max_backtracks = 20;
};

struct LbfgsStepResult {
    bool moved = false;
    bool stalled = false;  // line search exhausted without sufficient decrease
    double step_length = 0.0;
    int evaluations = 0;
};

/// Iterate, its loss and gradient, plus the (s, y) curvature pairs.
class LbfgsState {
   public:
    LbfgsState(std::vector<double> start, Evaluation at_start, LbfgsOptions options = {});

    const std::vector<double>& point() const { return point_; }
    double loss() const { return loss_; }
    const std::vector<double>& gradient() const { return gradient_; }
    std::size_t history_size() const { return steps_.size(); }
    const LbfgsOptions& options() const { return options_; }

   private:
    std::vector<double> point_;
    double loss_;
    std::vector<double> gradient_;
    LbfgsOptions options_;
    std::vector<std::vector<double>> steps_;     // s_k = x_{k+1} - x_k
    std::vector<std::vector<double>> changes_;   // y_k = g_{k+1} - g_k

    friend LbfgsStepResult lbfgs_step(LbfgsState&, const Evaluator&, const Projection&);
};

/// One L-BFGS iteration: two-loop recursion direction, then backtracking
/// (projected when `project` is set) until the Armijo condition holds. A zero
/// gradient yields a zero step; exhausting the backtracks yields a zero step
/// flagged as stalled and clears the curvature history.
LbfgsStepResult lbfgs_step(LbfgsState& state, const Evaluator& evaluate, const Projection& project = {});

struct Frame {
    int iteration = 0;
    RgbImage image;
};

struct ProgressSink {
    std::function<void(const LossReport&)> on_report;
    std::function<void(int iteration, const RgbImage& frame)> on_frame;
};

enum class RunStatus { completed, cancelled, failed };

struct TransferResult {
    RgbImage final_image;
    std::vector<Frame> frames;
    LossReport initial;                // the init image, iteration 0
    std::vector<LossReport> history;   // entry k-1 describes the image after k steps
    RunStatus status = RunStatus::completed;
    std::string error;
    int stalled_iterations = 0;
};

/// Iterations at which a run emits frames: 0, s, 2s, ... below the last
/// multiple of s, then the final iteration. Always floor(n/s) + 1 entries.
std::vector<int> frame_schedule(int num_iterations, int save_every);

// Working size of a run: longest side `image_size`, then shrunk per axis to the
// nearest extent the network prefix accepts.
RgbImage fit_to_network(const RgbImage& image, int image_size, const LossNetwork& net,
                        std::span<const std::string> taps);

/// Optimizes the output image against the weighted content/style/TV objective.
///
/// Content and style targets are computed once. Pixels are clamped to the
/// valid preprocessed range after every step. Invalid configurations throw
/// ConfigError before any compute; a non-finite loss ends the run with
/// status failed and the last finite image retained. Stop requests are
/// honored at iteration boundaries.
TransferResult run_transfer(const RgbImage& content, const RgbImage& style, const TransferConfig& config,
                            const LossNetwork& net, const ProgressSink& sink = {}, std::stop_token stop = {});

}  // namespace nst
