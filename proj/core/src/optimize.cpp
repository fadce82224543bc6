#include "nst/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "nst/errors.hpp"

namespace nst {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// One Adam step moves a pixel by at most about learning_rate levels of 8-bit
// intensity in the [0,1]-scaled preprocessed space.
constexpr double kIntensityLevel = 1.0 / 255.0;

}  // namespace

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad, double learning_rate) {
    if (params.size() != grad.size() || state.first_moment.size() != params.size()) {
        throw ConfigError("adam_step: parameter, gradient and state sizes differ (" + std::to_string(params.size()) +
                          ", " + std::to_string(grad.size()) + ", " + std::to_string(state.first_moment.size()) +
                          ")");
    }
    if (!all_finite(grad)) throw NumericError("adam_step: non-finite gradient");
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(AdamState::beta1, t);
    const double correction2 = 1.0 - std::pow(AdamState::beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        m = AdamState::beta1 * m + (1.0 - AdamState::beta1) * grad[i];
        v = AdamState::beta2 * v + (1.0 - AdamState::beta2) * grad[i] * grad[i];
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + AdamState::epsilon);
    }
}

LbfgsState::LbfgsState(std::vector<double> start, Evaluation at_start, LbfgsOptions options)
    : point_(std::move(start)),
      loss_(at_start.loss),
      gradient_(std::move(at_start.gradient)),
      options_(options) {
    if (point_.size() != gradient_.size()) throw ConfigError("L-BFGS start point and gradient sizes differ");
    if (options_.memory == 0) throw ConfigError("L-BFGS memory must be positive");
    if (!std::isfinite(loss_) || !all_finite(gradient_)) throw NumericError("L-BFGS start point is not finite");
}

LbfgsStepResult lbfgs_step(LbfgsState& state, const Evaluator& evaluate, const Projection& project) {
    LbfgsStepResult result;
    const auto& g = state.gradient_;
    const std::size_t n = g.size();
    const double g_norm = std::sqrt(dot(g, g));
    if (g_norm == 0.0) return result;

    // Two-loop recursion: direction = -H g.
    std::vector<double> q(g);
    const std::size_t m = state.steps_.size();
    std::vector<double> alpha(m), rho(m);
    for (std::size_t k = m; k-- > 0;) {
        rho[k] = 1.0 / dot(state.changes_[k], state.steps_[k]);
        alpha[k] = rho[k] * dot(state.steps_[k], q);
        for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[k] * state.changes_[k][i];
    }
    double initial_step = 1.0;
    if (m > 0) {
        const auto& s = state.steps_.back();
        const auto& y = state.changes_.back();
        const double gamma = dot(s, y) / dot(y, y);
        for (auto& v : q) v *= gamma;
    } else {
        initial_step = std::min(1.0, 1.0 / g_norm);
    }
    for (std::size_t k = 0; k < m; ++k) {
        const double beta = rho[k] * dot(state.changes_[k], q);
        for (std::size_t i = 0; i < n; ++i) q[i] += state.steps_[k][i] * (alpha[k] - beta);
    }
    std::vector<double> direction(n);
    for (std::size_t i = 0; i < n; ++i) direction[i] = -q[i];
    if (!(dot(direction, g) < 0.0) || !all_finite(direction)) {
        // Curvature information is unusable; restart from steepest descent.
        state.steps_.clear();
        state.changes_.clear();
        for (std::size_t i = 0; i < n; ++i) direction[i] = -g[i];
        initial_step = std::min(1.0, 1.0 / g_norm);
    }

    const auto& opts = state.options_;
    std::vector<double> trial(n);
    double t = initial_step;
    for (int attempt = 0; attempt <= opts.max_backtracks; ++attempt, t *= opts.shrink) {
        for (std::size_t i = 0; i < n; ++i) trial[i] = state.point_[i] + t * direction[i];
        if (project) project(trial);
        double decrease = 0.0;  // g . (trial - x)
        for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (trial[i] - state.point_[i]);
        if (!(decrease < 0.0)) continue;
        Evaluation eval = evaluate(trial);
        ++result.evaluations;
        if (!std::isfinite(eval.loss) || eval.gradient.size() != n) continue;
        if (eval.loss > state.loss_ + opts.armijo * decrease) continue;

        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = trial[i] - state.point_[i];
            y[i] = eval.gradient[i] - g[i];
        }
        const double sy = dot(s, y);
        if (sy > 0.0 && std::isfinite(sy)) {
            if (state.steps_.size() == opts.memory) {
                state.steps_.erase(state.steps_.begin());
                state.changes_.erase(state.changes_.begin());
            }
            state.steps_.push_back(std::move(s));
            state.changes_.push_back(std::move(y));
        }
        state.point_ = trial;
        state.loss_ = eval.loss;
        state.gradient_ = std::move(eval.gradient);
        result.moved = true;
        result.step_length = t;
        return result;
    }
    state.steps_.clear();
    state.changes_.clear();
    result.stalled = true;
    return result;
}

std::vector<int> frame_schedule(int num_iterations, int save_every) {
    if (num_iterations < 0 || save_every < 1) throw ConfigError("frame_schedule: invalid iteration counts");
    const int multiples = num_iterations / save_every;
    std::vector<int> schedule;
    schedule.reserve(static_cast<std::size_t>(multiples) + 1);
    for (int k = 0; k < multiples; ++k) schedule.push_back(k * save_every);
    schedule.push_back(num_iterations);
    return schedule;
}

RgbImage fit_to_network(const RgbImage& image, int image_size, const LossNetwork& net,
                        std::span<const std::string> taps) {
    RgbImage sized = resize_bilinear(image, image_size);
    const auto w = net.fit_extent(static_cast<std::size_t>(sized.width), taps);
    const auto h = net.fit_extent(static_cast<std::size_t>(sized.height), taps);
    if (w == 0 || h == 0) {
        throw ConfigError("image of " + std::to_string(sized.width) + "x" + std::to_string(sized.height) +
                          " is too small for the requested loss network taps");
    }
    return resize_bilinear(sized, static_cast<int>(w), static_cast<int>(h));
}

namespace {

void check_taps(const LossNetwork& net, const std::vector<std::string>& taps) {
    for (const auto& tap : taps) {
        if (!net.has_layer(tap)) {
            std::string available;
            for (const auto& name : net.layer_names()) available += " " + name;
            throw ConfigError("unknown tap '" + tap + "'; available:" + available);
        }
    }
}

std::vector<double> initial_pixels(const Tensor& content, const TransferConfig& config,
                                   const std::array<double, 3>& means) {
    if (config.init == InitMode::content) return {content.data().begin(), content.data().end()};
    std::mt19937_64 rng(config.seed);
    const std::size_t plane = content.dim(1) * content.dim(2);
    std::vector<double> pixels(content.numel());
    for (std::size_t c = 0; c < 3; ++c) {
        std::uniform_real_distribution<double> uniform(-means[c], 1.0 - means[c]);
        for (std::size_t i = 0; i < plane; ++i) pixels[c * plane + i] = uniform(rng);
    }
    return pixels;
}

}  // namespace

TransferResult run_transfer(const RgbImage& content, const RgbImage& style, const TransferConfig& config,
                            const LossNetwork& net, const ProgressSink& sink, std::stop_token stop) {
    validate(config);
    check_taps(net, config.content_taps);
    check_taps(net, config.style_taps);

    std::vector<std::string> all_taps = config.content_taps;
    all_taps.insert(all_taps.end(), config.style_taps.begin(), config.style_taps.end());
    const RgbImage content_img = fit_to_network(content, config.image_size, net, all_taps);
    const RgbImage style_img = fit_to_network(style, config.image_size, net, config.style_taps);

    const Tensor content_tensor = preprocess(content_img, net);
    const Tensor style_tensor = preprocess(style_img, net);
    const FeatureSet content_target = extract_features(net, content_tensor, config.content_taps);
    const StyleTarget style_target =
        make_style_target(extract_features(net, style_tensor, config.style_taps), config.style_target_mode);

    const Shape shape = content_tensor.shape();
    const int width = content_img.width;
    const int height = content_img.height;
    const auto& means = net.channel_means();
    const std::size_t plane = static_cast<std::size_t>(width) * height;

    auto clamp_pixels = [&](std::span<double> pixels) {
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < plane; ++i) {
                auto& v = pixels[c * plane + i];
                v = std::clamp(v, -means[c], 1.0 - means[c]);
            }
        }
    };

    LossReport last_report;
    auto evaluate = [&](std::span<const double> pixels) {
        Tensor image(shape, std::vector<double>(pixels.begin(), pixels.end()), true);
        ObjectiveValue value = total_objective(image, config, content_target, style_target, net);
        GradientMap grads = backward(value.total);
        last_report = value.report;
        auto g = grads.at(image).data();
        return Evaluation{value.report.total, std::vector<double>(g.begin(), g.end())};
    };

    TransferResult result;
    const auto schedule = frame_schedule(config.num_iterations, config.save_every);
    auto next_frame = schedule.begin();
    auto emit_frame = [&](int iteration, std::span<const double> pixels) {
        RgbImage frame = deprocess(pixels, width, height, means);
        if (sink.on_frame) sink.on_frame(iteration, frame);
        result.frames.push_back({iteration, std::move(frame)});
    };

    std::vector<double> pixels = initial_pixels(content_tensor, config, means);
    clamp_pixels(pixels);
    Evaluation current;
    try {
        current = evaluate(pixels);
    } catch (const NumericError& e) {
        result.status = RunStatus::failed;
        result.error = std::string("non-finite loss at initialization: ") + e.what();
        result.final_image = deprocess(pixels, width, height, means);
        return result;
    }
    result.initial = last_report;
    result.initial.iteration = 0;
    if (*next_frame == 0 && config.num_iterations > 0) {
        emit_frame(0, pixels);
        ++next_frame;
    }

    std::optional<LbfgsState> lbfgs;
    std::optional<AdamState> adam;
    if (config.optimizer == OptimizerKind::lbfgs) {
        lbfgs.emplace(pixels, current);
    } else {
        adam.emplace(pixels.size());
    }
    const double adam_rate = config.learning_rate * kIntensityLevel;
    LossReport report = result.initial;
    result.history.reserve(static_cast<std::size_t>(config.num_iterations));

    for (int iteration = 1; iteration <= config.num_iterations; ++iteration) {
        if (stop.stop_requested()) {
            result.status = RunStatus::cancelled;
            break;
        }
        try {
            if (lbfgs) {
                LbfgsStepResult step = lbfgs_step(*lbfgs, evaluate, clamp_pixels);
                if (step.moved) {
                    // The accepted trial is the last point the evaluator saw.
                    report = last_report;
                    pixels = lbfgs->point();
                } else if (step.stalled) {
                    ++result.stalled_iterations;
                }
            } else {
                std::vector<double> candidate = pixels;
                adam_step(*adam, candidate, current.gradient, adam_rate);
                clamp_pixels(candidate);
                current = evaluate(candidate);
                pixels = std::move(candidate);
                report = last_report;
            }
        } catch (const NumericError& e) {
            result.status = RunStatus::failed;
            result.error = "non-finite value at iteration " + std::to_string(iteration) + ": " + e.what();
            break;
        }
        report.iteration = iteration;
        result.history.push_back(report);
        if (sink.on_report) sink.on_report(report);
        if (next_frame != schedule.end() && *next_frame == iteration && iteration != config.num_iterations) {
            emit_frame(iteration, pixels);
            ++next_frame;
        }
    }

    if (result.status == RunStatus::completed) emit_frame(config.num_iterations, pixels);
    result.final_image = deprocess(pixels, width, height, means);
    return result;
}

}  // namespace nst
