#include "nst/config.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <type_traits>

#include <json.hpp>

#include "nst/errors.hpp"

namespace nst {

using json = nlohmann::json;

void validate(const TransferConfig& config) {
    auto finite_non_negative = [](double v, const char* name) {
        if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string(name) + " must be >= 0");
    };
    if (config.num_iterations < 0) throw ConfigError("num_iterations must be >= 0");
    if (config.save_every < 1) throw ConfigError("save_every must be >= 1");
    if (!std::isfinite(config.learning_rate) || config.learning_rate <= 0.0) {
        throw ConfigError("learning_rate must be > 0");
    }
    finite_non_negative(config.tv_strength, "tv_strength");
    finite_non_negative(config.content_weight, "content_weight");
    finite_non_negative(config.style_weight, "style_weight");
    if (config.content_taps.empty()) throw ConfigError("content_taps must name at least one layer");
    if (config.style_taps.empty()) throw ConfigError("style_taps must name at least one layer");
    for (const auto* taps : {&config.content_taps, &config.style_taps}) {
        std::set<std::string> seen;
        for (const auto& t : *taps) {
            if (!seen.insert(t).second) throw ConfigError("duplicate tap name '" + t + "'");
        }
    }
    if (config.image_size < 8) throw ConfigError("image_size must be >= 8");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "lbfgs"; }

std::string to_string(StyleTargetMode mode) {
    return mode == StyleTargetMode::gram ? "gram" : "spatial_average";
}

std::string to_string(InitMode mode) { return mode == InitMode::noise ? "noise" : "content"; }

OptimizerKind parse_optimizer(std::string_view text) {
    if (text == "adam") return OptimizerKind::adam;
    if (text == "lbfgs") return OptimizerKind::lbfgs;
    throw ConfigError("optimizer must be 'adam' or 'lbfgs', got '" + std::string(text) + "'");
}

StyleTargetMode parse_style_target(std::string_view text) {
    if (text == "gram") return StyleTargetMode::gram;
    if (text == "spatial_average") return StyleTargetMode::spatial_average;
    throw ConfigError("style_target_mode must be 'gram' or 'spatial_average', got '" + std::string(text) + "'");
}

InitMode parse_init(std::string_view text) {
    if (text == "noise") return InitMode::noise;
    if (text == "content") return InitMode::content;
    throw ConfigError("init must be 'noise' or 'content', got '" + std::string(text) + "'");
}

std::string config_to_json(const TransferConfig& c) {
    json j = {
        {"num_iterations", c.num_iterations},
        {"save_every", c.save_every},
        {"optimizer", to_string(c.optimizer)},
        {"learning_rate", c.learning_rate},
        {"tv_strength", c.tv_strength},
        {"content_weight", c.content_weight},
        {"style_weight", c.style_weight},
        {"content_taps", c.content_taps},
        {"style_taps", c.style_taps},
        {"style_target_mode", to_string(c.style_target_mode)},
        {"init", to_string(c.init)},
        {"seed", c.seed},
        {"image_size", c.image_size},
    };
    return j.dump();
}

namespace {

template <typename T>
T field(const json& value, const std::string& name) {
    try {
        if constexpr (std::is_integral_v<T>) {
            if (!value.is_number_integer()) throw ConfigError(name + " must be an integer");
            const auto wide = value.get<std::int64_t>();
            if (wide < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
                wide > static_cast<std::int64_t>(std::numeric_limits<T>::max())) {
                throw ConfigError(name + " is out of range");
            }
            return static_cast<T>(wide);
        } else {
            return value.get<T>();
        }
    } catch (const json::exception&) {
        throw ConfigError(name + " has the wrong type");
    }
}

}  // namespace

TransferConfig config_from_json(std::string_view json_text, const TransferConfig& base) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");

    TransferConfig c = base;
    for (const auto& [key, value] : doc.items()) {
        if (key == "num_iterations") {
            c.num_iterations = field<int>(value, key);
        } else if (key == "save_every") {
            c.save_every = field<int>(value, key);
        } else if (key == "optimizer") {
            c.optimizer = parse_optimizer(field<std::string>(value, key));
        } else if (key == "learning_rate") {
            c.learning_rate = field<double>(value, key);
        } else if (key == "tv_strength") {
            c.tv_strength = field<double>(value, key);
        } else if (key == "content_weight") {
            c.content_weight = field<double>(value, key);
        } else if (key == "style_weight") {
            c.style_weight = field<double>(value, key);
        } else if (key == "content_taps") {
            c.content_taps = field<std::vector<std::string>>(value, key);
        } else if (key == "style_taps") {
            c.style_taps = field<std::vector<std::string>>(value, key);
        } else if (key == "style_target_mode") {
            c.style_target_mode = parse_style_target(field<std::string>(value, key));
        } else if (key == "init") {
            c.init = parse_init(field<std::string>(value, key));
        } else if (key == "seed") {
            c.seed = field<std::uint32_t>(value, key);
        } else if (key == "image_size") {
            c.image_size = field<int>(value, key);
        } else {
            throw ConfigError("unknown config field '" + key + "'");
        }
    }
    validate(c);
    return c;
}

}  // namespace nst
