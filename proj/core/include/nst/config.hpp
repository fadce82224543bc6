#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nst {

enum class OptimizerKind { adam, lbfgs };
enum class StyleTargetMode { gram, spatial_average };
enum class InitMode { noise, content };

/// Every knob of a single stylization run.
///
/// `learning_rate` only affects Adam and is expressed in 8-bit intensity
/// levels per step (a rate of 1 moves a pixel by at most about 1/255 of the
/// full range per iteration).
struct TransferConfig {
    int num_iterations = 500;
    int save_every = 50;
    OptimizerKind optimizer = OptimizerKind::lbfgs;
    double learning_rate = 1e-3;
    double tv_strength = 1e-6;
    double content_weight = 100.0;
    double style_weight = 100.0;
    std::vector<std::string> content_taps{"relu2_2"};
    std::vector<std::string> style_taps{"relu1_1", "relu1_2", "relu2_1", "relu2_2"};
    StyleTargetMode style_target_mode = StyleTargetMode::gram;
    InitMode init = InitMode::content;
    std::uint32_t seed = 0;
    int image_size = 256;

    bool operator==(const TransferConfig&) const = default;
};

// Throws ConfigError describing the first violated constraint.
void validate(const TransferConfig& config);

std::string to_string(OptimizerKind kind);
std::string to_string(StyleTargetMode mode);
std::string to_string(InitMode mode);
OptimizerKind parse_optimizer(std::string_view text);
StyleTargetMode parse_style_target(std::string_view text);
InitMode parse_init(std::string_view text);

// JSON object with the field names of TransferConfig.
std::string config_to_json(const TransferConfig& config);

// Applies the fields present in a JSON object on top of `base` and validates
// the result. Unknown fields and wrongly typed values are ConfigErrors.
TransferConfig config_from_json(std::string_view json_text, const TransferConfig& base = {});

}  // namespace nst
