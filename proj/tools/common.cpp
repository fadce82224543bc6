#include "common.hpp"

#include <charconv>

#include "nst/errors.hpp"

namespace nst::tools {

std::shared_ptr<const LossNetwork> open_network(const std::string& weights, const std::string& arch,
                                                const std::string& pool) {
    if (pool != "average" && pool != "max") throw ConfigError("--pool must be average or max");
    const PoolMode mode = pool == "max" ? PoolMode::max : PoolMode::average;
    if (weights.rfind("tiny:", 0) == 0) {
        const std::string digits = weights.substr(5);
        std::uint32_t seed = 0;
        const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
        if (ec != std::errc{} || end != digits.data() + digits.size() || digits.empty()) {
            throw ConfigError("--weights tiny:SEED needs an unsigned integer seed, got '" + digits + "'");
        }
        return std::make_shared<const LossNetwork>(tiny_network(seed));
    }
    if (arch == "tiny") return std::make_shared<const LossNetwork>(load_weights(weights, tiny_architecture(mode)));
    if (arch == "vgg16") return std::make_shared<const LossNetwork>(load_weights(weights, vgg16_architecture(mode)));
    throw ConfigError("--arch must be tiny or vgg16");
}

}  // namespace nst::tools
