#pragma once

#include <memory>
#include <string>

#include "nst/loss_network.hpp"

namespace nst::tools {

// "tiny:SEED" builds the deterministic tiny network; anything else is an NSTW
// file read against the architecture named by `arch` (tiny or vgg16).
std::shared_ptr<const LossNetwork> open_network(const std::string& weights, const std::string& arch,
                                                const std::string& pool);

}  // namespace nst::tools
