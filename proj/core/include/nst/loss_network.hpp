#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nst/tensor.hpp"

namespace nst {

enum class LayerKind { conv, relu, pool };
enum class PoolMode { average, max };

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::relu;

    // conv
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    // pool
    std::size_t window = 2;
    PoolMode pool_mode = PoolMode::average;

    static LayerSpec conv(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0);
    static LayerSpec relu(std::string name);
    static LayerSpec pool(std::string name, std::size_t window, PoolMode mode = PoolMode::average);
};

using Architecture = std::vector<LayerSpec>;

// conv1_1 .. relu3_2 with valid 3x3 convolutions and two 2x2 pools.
Architecture tiny_architecture(PoolMode pool_mode = PoolMode::average);

// The thirteen-conv VGG-16 feature stack (padding 1), for externally supplied
// weights. VGG weights are trained with max pooling; swapping in average
// pooling is common for pixel optimization.
Architecture vgg16_architecture(PoolMode pool_mode = PoolMode::average);

struct ConvParams {
    Tensor weights;  // C_out x C_in x k x k
    Tensor bias;     // C_out, or undefined
};

/// A fixed feature extractor. Immutable after construction, so one instance
/// can be shared by concurrent runs.
class LossNetwork {
   public:
    LossNetwork(Architecture layers, std::map<std::string, ConvParams> params, std::array<double, 3> channel_means);

    const Architecture& layers() const { return layers_; }
    const std::array<double, 3>& channel_means() const { return channel_means_; }
    const ConvParams& conv_params(const std::string& layer) const;
    std::size_t input_channels() const;
    bool has_layer(const std::string& name) const;
    std::vector<std::string> layer_names() const;

    // Largest extent <= `extent` for which every layer up to the deepest of
    // `taps` has a valid output (pool windows divide evenly). 0 if none.
    std::size_t fit_extent(std::size_t extent, std::span<const std::string> taps) const;

   private:
    Architecture layers_;
    std::map<std::string, ConvParams> params_;
    std::array<double, 3> channel_means_;
};

// tap name -> activation
using FeatureSet = std::map<std::string, Tensor>;

/// Reads an "NSTW" weight file (little-endian):
///   "NSTW" | u32 version=1 | u32 entry_count |
///   entry_count x { u16 name_len | name | u8 dtype(0=f32) | u8 ndim | u32 dims[ndim] | data } |
///   3 x f32 channel means
/// Each conv layer is bound to the entry carrying its name; an optional
/// "<layer>.bias" entry supplies its bias (zero bias otherwise).
LossNetwork load_weights(const std::filesystem::path& path, const Architecture& architecture);

void save_weights(const LossNetwork& net, const std::filesystem::path& path);

// Deterministic He-normal weights (rounded to f32 so a save/load round trip is
// exact), zero biases, channel means 0.5.
LossNetwork tiny_network(std::uint32_t seed);

/// Runs the network prefix needed to reach every tap. Activations stay linked
/// to the graph when the image requires a gradient.
FeatureSet extract_features(const LossNetwork& net, const Tensor& image, std::span<const std::string> taps);

}  // namespace nst
