#include "nst/loss_network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <type_traits>

#include "nst/errors.hpp"
#include "nst/ops.hpp"

namespace nst {

LayerSpec LayerSpec::conv(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride, std::size_t padding) {
    LayerSpec spec;
    spec.name = std::move(name);
    spec.kind = LayerKind::conv;
    spec.in_channels = in_channels;
    spec.out_channels = out_channels;
    spec.kernel = kernel;
    spec.stride = stride;
    spec.padding = padding;
    return spec;
}

LayerSpec LayerSpec::relu(std::string name) {
    LayerSpec spec;
    spec.name = std::move(name);
    spec.kind = LayerKind::relu;
    return spec;
}

LayerSpec LayerSpec::pool(std::string name, std::size_t window, PoolMode mode) {
    LayerSpec spec;
    spec.name = std::move(name);
    spec.kind = LayerKind::pool;
    spec.window = window;
    spec.pool_mode = mode;
    return spec;
}

Architecture tiny_architecture(PoolMode pool_mode) {
    return {
        LayerSpec::conv("conv1_1", 3, 16, 3),  LayerSpec::relu("relu1_1"),
        LayerSpec::conv("conv1_2", 16, 16, 3), LayerSpec::relu("relu1_2"),
        LayerSpec::pool("pool1", 2, pool_mode),
        LayerSpec::conv("conv2_1", 16, 32, 3), LayerSpec::relu("relu2_1"),
        LayerSpec::conv("conv2_2", 32, 32, 3), LayerSpec::relu("relu2_2"),
        LayerSpec::pool("pool2", 2, pool_mode),
        LayerSpec::conv("conv3_1", 32, 64, 3), LayerSpec::relu("relu3_2"),
    };
}

Architecture vgg16_architecture(PoolMode pool_mode) {
    const std::vector<std::vector<std::size_t>> stages = {
        {64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
    Architecture layers;
    std::size_t channels = 3;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        for (std::size_t i = 0; i < stages[s].size(); ++i) {
            const auto suffix = std::to_string(s + 1) + "_" + std::to_string(i + 1);
            layers.push_back(LayerSpec::conv("conv" + suffix, channels, stages[s][i], 3, 1, 1));
            layers.push_back(LayerSpec::relu("relu" + suffix));
            channels = stages[s][i];
        }
        if (s + 1 < stages.size()) layers.push_back(LayerSpec::pool("pool" + std::to_string(s + 1), 2, pool_mode));
    }
    return layers;
}

LossNetwork::LossNetwork(Architecture layers, std::map<std::string, ConvParams> params,
                         std::array<double, 3> channel_means)
    : layers_(std::move(layers)), params_(std::move(params)), channel_means_(channel_means) {
    std::set<std::string> names;
    std::size_t channels = 0;
    for (const auto& layer : layers_) {
        if (!names.insert(layer.name).second) throw ConfigError("duplicate layer name '" + layer.name + "'");
        if (layer.kind != LayerKind::conv) continue;
        if (channels != 0 && layer.in_channels != channels) {
            throw ConfigError("layer '" + layer.name + "' expects " + std::to_string(layer.in_channels) +
                              " input channels but the previous conv produces " + std::to_string(channels));
        }
        channels = layer.out_channels;
        auto it = params_.find(layer.name);
        if (it == params_.end()) throw ConfigError("no weights bound to conv layer '" + layer.name + "'");
        const Shape expected{layer.out_channels, layer.in_channels, layer.kernel, layer.kernel};
        if (it->second.weights.shape() != expected) {
            throw ConfigError(layer.name + ": declared weights " + shape_to_string(expected) + " but got " +
                              shape_to_string(it->second.weights.shape()));
        }
        if (it->second.bias.defined() && it->second.bias.shape() != Shape{layer.out_channels}) {
            throw ConfigError(layer.name + ": bias shape " + shape_to_string(it->second.bias.shape()) +
                              " does not match " + std::to_string(layer.out_channels) + " output channels");
        }
    }
    for (double m : channel_means_) {
        if (!std::isfinite(m)) throw NumericError("non-finite channel mean");
    }
}

const ConvParams& LossNetwork::conv_params(const std::string& layer) const {
    auto it = params_.find(layer);
    if (it == params_.end()) throw ConfigError("'" + layer + "' is not a conv layer of this network");
    return it->second;
}

std::size_t LossNetwork::input_channels() const {
    for (const auto& layer : layers_) {
        if (layer.kind == LayerKind::conv) return layer.in_channels;
    }
    return 3;
}

bool LossNetwork::has_layer(const std::string& name) const {
    return std::any_of(layers_.begin(), layers_.end(), [&](const LayerSpec& l) { return l.name == name; });
}

std::vector<std::string> LossNetwork::layer_names() const {
    std::vector<std::string> names;
    names.reserve(layers_.size());
    for (const auto& layer : layers_) names.push_back(layer.name);
    return names;
}

std::size_t LossNetwork::fit_extent(std::size_t extent, std::span<const std::string> taps) const {
    std::size_t depth = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (std::find(taps.begin(), taps.end(), layers_[i].name) != taps.end()) depth = i + 1;
    }
    auto valid = [&](std::size_t n) {
        for (std::size_t i = 0; i < depth; ++i) {
            const auto& layer = layers_[i];
            if (layer.kind == LayerKind::conv) {
                if (n + 2 * layer.padding < layer.kernel) return false;
                n = (n + 2 * layer.padding - layer.kernel) / layer.stride + 1;
            } else if (layer.kind == LayerKind::pool) {
                if (n % layer.window != 0) return false;
                n /= layer.window;
            }
            if (n == 0) return false;
        }
        return true;
    };
    for (std::size_t n = extent; n > 0; --n) {
        if (valid(n)) return n;
    }
    return 0;
}

namespace {

constexpr char kMagic[4] = {'N', 'S', 'T', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

class Reader {
   public:
    explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open weight file " + path.string());
    }

    void bytes(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw IoError("weight file " + path_.string() + " is truncated");
        }
    }

    template <typename T>
    T scalar() {
        unsigned char raw[sizeof(T)];
        bytes(raw, sizeof(T));
        std::uint64_t value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) value |= std::uint64_t{raw[i]} << (8 * i);
        if constexpr (std::is_same_v<T, float>) {
            return std::bit_cast<float>(static_cast<std::uint32_t>(value));
        } else {
            return static_cast<T>(value);
        }
    }

   private:
    std::ifstream in_;
    std::filesystem::path path_;
};

class Writer {
   public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw IoError("cannot write weight file " + path.string());
    }

    void bytes(const void* src, std::size_t n) {
        out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failed for " + path_.string());
    }

    template <typename T>
    void scalar(T v) {
        std::uint64_t value = 0;
        if constexpr (std::is_same_v<T, float>) {
            value = std::bit_cast<std::uint32_t>(v);
        } else {
            value = static_cast<std::uint64_t>(v);
        }
        unsigned char raw[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) raw[i] = static_cast<unsigned char>(value >> (8 * i));
        bytes(raw, sizeof(T));
    }

   private:
    std::ofstream out_;
    std::filesystem::path path_;
};

void write_entry(Writer& out, const std::string& name, const Tensor& tensor) {
    if (name.size() > 0xFFFF) throw ConfigError("layer name too long: " + name);
    out.scalar<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    out.bytes(name.data(), name.size());
    out.scalar<std::uint8_t>(kDtypeF32);
    out.scalar<std::uint8_t>(static_cast<std::uint8_t>(tensor.rank()));
    for (auto d : tensor.shape()) out.scalar<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : tensor.data()) out.scalar<float>(static_cast<float>(v));
}

}  // namespace

LossNetwork load_weights(const std::filesystem::path& path, const Architecture& architecture) {
    Reader in(path);
    char magic[4];
    in.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path.string() + ": bad magic, not an NSTW weight file");
    const auto version = in.scalar<std::uint32_t>();
    if (version != kVersion) {
        throw FormatError(path.string() + ": unsupported NSTW version " + std::to_string(version));
    }
    const auto count = in.scalar<std::uint32_t>();

    std::map<std::string, Tensor> entries;
    for (std::uint32_t e = 0; e < count; ++e) {
        const auto name_len = in.scalar<std::uint16_t>();
        std::string name(name_len, '\0');
        in.bytes(name.data(), name_len);
        const auto dtype = in.scalar<std::uint8_t>();
        if (dtype != kDtypeF32) {
            throw FormatError(path.string() + ": entry '" + name + "' has unknown dtype " + std::to_string(dtype));
        }
        const auto ndim = in.scalar<std::uint8_t>();
        if (ndim == 0) throw FormatError(path.string() + ": entry '" + name + "' has zero dimensions");
        Shape shape(ndim);
        for (auto& d : shape) {
            d = in.scalar<std::uint32_t>();
            if (d == 0) throw FormatError(path.string() + ": entry '" + name + "' has a zero extent");
        }
        std::vector<double> values(shape_numel(shape));
        for (auto& v : values) v = static_cast<double>(in.scalar<float>());
        if (!entries.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
            throw FormatError(path.string() + ": duplicate entry '" + name + "'");
        }
    }
    std::array<double, 3> means{};
    for (auto& m : means) m = static_cast<double>(in.scalar<float>());

    std::map<std::string, ConvParams> params;
    std::set<std::string> used;
    for (const auto& layer : architecture) {
        if (layer.kind != LayerKind::conv) continue;
        auto it = entries.find(layer.name);
        if (it == entries.end()) throw FormatError(path.string() + ": no weights stored for conv layer '" + layer.name + "'");
        const Shape expected{layer.out_channels, layer.in_channels, layer.kernel, layer.kernel};
        if (it->second.shape() != expected) {
            throw FormatError(layer.name + ": declared weights " + shape_to_string(expected) + " but file stores " +
                              shape_to_string(it->second.shape()));
        }
        ConvParams p{it->second, Tensor()};
        used.insert(layer.name);
        if (auto b = entries.find(layer.name + ".bias"); b != entries.end()) {
            if (b->second.shape() != Shape{layer.out_channels}) {
                throw FormatError(layer.name + ": bias " + shape_to_string(b->second.shape()) + " does not match " +
                                  std::to_string(layer.out_channels) + " output channels");
            }
            p.bias = b->second;
            used.insert(b->first);
        }
        params.emplace(layer.name, std::move(p));
    }
    for (const auto& [name, tensor] : entries) {
        if (!used.contains(name)) throw FormatError(path.string() + ": entry '" + name + "' matches no conv layer");
    }
    return LossNetwork(architecture, std::move(params), means);
}

void save_weights(const LossNetwork& net, const std::filesystem::path& path) {
    std::vector<std::pair<std::string, Tensor>> entries;
    for (const auto& layer : net.layers()) {
        if (layer.kind != LayerKind::conv) continue;
        const auto& p = net.conv_params(layer.name);
        entries.emplace_back(layer.name, p.weights);
        if (p.bias.defined()) entries.emplace_back(layer.name + ".bias", p.bias);
    }
    Writer out(path);
    out.bytes(kMagic, 4);
    out.scalar<std::uint32_t>(kVersion);
    out.scalar<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, tensor] : entries) write_entry(out, name, tensor);
    for (double m : net.channel_means()) out.scalar<float>(static_cast<float>(m));
}

LossNetwork tiny_network(std::uint32_t seed) {
    auto layers = tiny_architecture();
    std::mt19937_64 rng(seed);
    std::map<std::string, ConvParams> params;
    for (const auto& layer : layers) {
        if (layer.kind != LayerKind::conv) continue;
        const double fan_in = static_cast<double>(layer.in_channels * layer.kernel * layer.kernel);
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
        Shape shape{layer.out_channels, layer.in_channels, layer.kernel, layer.kernel};
        std::vector<double> values(shape_numel(shape));
        for (auto& v : values) v = static_cast<double>(static_cast<float>(normal(rng)));
        params.emplace(layer.name, ConvParams{Tensor(std::move(shape), std::move(values)),
                                              Tensor::zeros({layer.out_channels})});
    }
    return LossNetwork(std::move(layers), std::move(params), {0.5, 0.5, 0.5});
}

FeatureSet extract_features(const LossNetwork& net, const Tensor& image, std::span<const std::string> taps) {
    FeatureSet features;
    if (taps.empty()) return features;

    std::set<std::string> wanted;
    for (const auto& tap : taps) {
        if (!wanted.insert(tap).second) throw ConfigError("duplicate tap name '" + tap + "'");
        if (!net.has_layer(tap)) {
            std::ostringstream msg;
            msg << "unknown tap '" << tap << "'; available:";
            for (const auto& name : net.layer_names()) msg << ' ' << name;
            throw ConfigError(msg.str());
        }
    }
    if (image.rank() != 3 || image.dim(0) != net.input_channels()) {
        throw ConfigError("loss network expects a " + std::to_string(net.input_channels()) +
                          " x H x W image, got " + shape_to_string(image.shape()));
    }

    Tensor x = image;
    for (const auto& layer : net.layers()) {
        switch (layer.kind) {
            case LayerKind::conv: {
                const auto& p = net.conv_params(layer.name);
                x = conv2d(x, p.weights, p.bias, layer.stride, layer.padding);
                break;
            }
            case LayerKind::relu:
                x = relu(x);
                break;
            case LayerKind::pool:
                x = layer.pool_mode == PoolMode::average ? avg_pool2d(x, layer.window) : max_pool2d(x, layer.window);
                break;
        }
        if (wanted.contains(layer.name)) {
            features.emplace(layer.name, x);
            if (features.size() == wanted.size()) break;
        }
    }
    return features;
}

}  // namespace nst
