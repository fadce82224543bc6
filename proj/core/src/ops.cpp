#include "nst/ops.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "nst/errors.hpp"

namespace nst {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                          shape_to_string(b.shape()));
    }
}

std::vector<double> copy_of(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void require_image(const Tensor& t, const char* op) {
    if (t.rank() != 3) {
        throw ConfigError(std::string(op) + ": expected a C x H x W tensor, got " + shape_to_string(t.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto out = copy_of(a);
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](auto g, auto gi) {
        for (auto& target : gi) {
            for (std::size_t i = 0; i < target.size(); ++i) target[i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto out = copy_of(a);
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](auto g, auto gi) {
        for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i];
        for (std::size_t i = 0; i < gi[1].size(); ++i) gi[1][i] -= g[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto out = copy_of(a);
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    return Tensor::from_op(a.shape(), std::move(out), {a, b}, [a, b](auto g, auto gi) {
        auto ad = a.data();
        auto bd = b.data();
        for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i] * bd[i];
        for (std::size_t i = 0; i < gi[1].size(); ++i) gi[1][i] += g[i] * ad[i];
    });
}

Tensor scale(const Tensor& a, double factor) {
    auto out = copy_of(a);
    for (auto& v : out) v *= factor;
    return Tensor::from_op(a.shape(), std::move(out), {a}, [factor](auto g, auto gi) {
        for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i] * factor;
    });
}

Tensor square(const Tensor& a) {
    auto out = copy_of(a);
    for (auto& v : out) v *= v;
    return Tensor::from_op(a.shape(), std::move(out), {a}, [a](auto g, auto gi) {
        auto ad = a.data();
        for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += 2.0 * ad[i] * g[i];
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) total += v;
    return Tensor::from_op({1}, {total}, {a}, [](auto g, auto gi) {
        for (auto& v : gi[0]) v += g[0];
    });
}

Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.numel());
    double total = 0.0;
    for (double v : a.data()) total += v;
    return Tensor::from_op({1}, {total / n}, {a}, [n](auto g, auto gi) {
        for (auto& v : gi[0]) v += g[0] / n;
    });
}

Tensor relu(const Tensor& input) {
    auto out = copy_of(input);
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return Tensor::from_op(input.shape(), std::move(out), {input}, [input](auto g, auto gi) {
        auto x = input.data();
        for (std::size_t i = 0; i < gi[0].size(); ++i) {
            if (x[i] > 0.0) gi[0][i] += g[i];
        }
    });
}

namespace {

struct ConvGeometry {
    std::size_t in_channels, height, width;
    std::size_t out_channels, kernel;
    std::size_t stride, padding;
    std::size_t out_height, out_width;

    // Output columns [first, last) whose tap at kernel offset kx lands inside
    // the unpadded input row.
    std::pair<std::size_t, std::size_t> valid_range(std::size_t k_offset, std::size_t extent,
                                                    std::size_t out_extent) const {
        // input index = o * stride + k_offset - padding must be in [0, extent)
        std::size_t first = 0;
        if (k_offset < padding) first = (padding - k_offset + stride - 1) / stride;
        std::size_t last = 0;
        if (extent + padding > k_offset) {
            last = (extent + padding - k_offset - 1) / stride + 1;
        }
        last = std::min(last, out_extent);
        if (first > last) first = last;
        return {first, last};
    }
};

// Iterates over every (input index, output index) pair contributing through
// kernel tap (co, ci, ky, kx). Callback receives row pointers' offsets.
template <typename Fn>
void for_each_tap(const ConvGeometry& geo, Fn&& fn) {
    for (std::size_t ky = 0; ky < geo.kernel; ++ky) {
        auto [oy0, oy1] = geo.valid_range(ky, geo.height, geo.out_height);
        for (std::size_t kx = 0; kx < geo.kernel; ++kx) {
            auto [ox0, ox1] = geo.valid_range(kx, geo.width, geo.out_width);
            if (ox0 >= ox1) continue;
            for (std::size_t oy = oy0; oy < oy1; ++oy) {
                const std::size_t iy = oy * geo.stride + ky - geo.padding;
                const std::size_t ix0 = ox0 * geo.stride + kx - geo.padding;
                fn(ky, kx, oy, iy, ox0, ox1 - ox0, ix0);
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    require_image(input, "conv2d");
    if (weights.rank() != 4 || weights.dim(2) != weights.dim(3) || weights.dim(1) != input.dim(0)) {
        throw ConfigError("conv2d: weights " + shape_to_string(weights.shape()) + " incompatible with input " +
                          shape_to_string(input.shape()));
    }
    if (stride == 0) throw ConfigError("conv2d: stride must be positive");
    ConvGeometry geo{};
    geo.in_channels = input.dim(0);
    geo.height = input.dim(1);
    geo.width = input.dim(2);
    geo.out_channels = weights.dim(0);
    geo.kernel = weights.dim(2);
    geo.stride = stride;
    geo.padding = padding;
    if (geo.kernel > geo.height + 2 * padding || geo.kernel > geo.width + 2 * padding) {
        throw ConfigError("conv2d: kernel of weights " + shape_to_string(weights.shape()) +
                          " larger than padded input " + shape_to_string(input.shape()));
    }
    if (bias.defined() && bias.shape() != Shape{geo.out_channels}) {
        throw ConfigError("conv2d: bias " + shape_to_string(bias.shape()) + " does not match weights " +
                          shape_to_string(weights.shape()));
    }
    geo.out_height = (geo.height + 2 * padding - geo.kernel) / stride + 1;
    geo.out_width = (geo.width + 2 * padding - geo.kernel) / stride + 1;

    const std::size_t in_plane = geo.height * geo.width;
    const std::size_t out_plane = geo.out_height * geo.out_width;
    const std::size_t kk = geo.kernel * geo.kernel;
    std::vector<double> out(geo.out_channels * out_plane, 0.0);
    auto x = input.data();
    auto w = weights.data();

    for (std::size_t co = 0; co < geo.out_channels; ++co) {
        double* out_c = out.data() + co * out_plane;
        if (bias.defined()) std::fill(out_c, out_c + out_plane, bias.data()[co]);
        for (std::size_t ci = 0; ci < geo.in_channels; ++ci) {
            const double* in_c = x.data() + ci * in_plane;
            const double* w_c = w.data() + (co * geo.in_channels + ci) * kk;
            for_each_tap(geo, [&](std::size_t ky, std::size_t kx, std::size_t oy, std::size_t iy, std::size_t ox0,
                                  std::size_t count, std::size_t ix0) {
                const double wv = w_c[ky * geo.kernel + kx];
                double* dst = out_c + oy * geo.out_width + ox0;
                const double* src = in_c + iy * geo.width + ix0;
                if (geo.stride == 1) {
                    for (std::size_t i = 0; i < count; ++i) dst[i] += wv * src[i];
                } else {
                    for (std::size_t i = 0; i < count; ++i) dst[i] += wv * src[i * geo.stride];
                }
            });
        }
    }

    Shape out_shape{geo.out_channels, geo.out_height, geo.out_width};
    std::vector<Tensor> inputs{input, weights};
    if (bias.defined()) inputs.push_back(bias);
    return Tensor::from_op(
        std::move(out_shape), std::move(out), std::move(inputs),
        [geo, input, weights, in_plane, out_plane, kk](std::span<const double> g, auto gi) {
            auto x = input.data();
            auto w = weights.data();
            std::span<double> gx = gi[0];
            std::span<double> gw = gi[1];
            for (std::size_t co = 0; co < geo.out_channels; ++co) {
                const double* g_c = g.data() + co * out_plane;
                for (std::size_t ci = 0; ci < geo.in_channels; ++ci) {
                    const std::size_t w_base = (co * geo.in_channels + ci) * kk;
                    const double* in_c = x.data() + ci * in_plane;
                    for_each_tap(geo, [&](std::size_t ky, std::size_t kx, std::size_t oy, std::size_t iy,
                                          std::size_t ox0, std::size_t count, std::size_t ix0) {
                        const std::size_t widx = w_base + ky * geo.kernel + kx;
                        const double* gsrc = g_c + oy * geo.out_width + ox0;
                        if (!gx.empty()) {
                            const double wv = w[widx];
                            double* dst = gx.data() + ci * in_plane + iy * geo.width + ix0;
                            if (geo.stride == 1) {
                                for (std::size_t i = 0; i < count; ++i) dst[i] += wv * gsrc[i];
                            } else {
                                for (std::size_t i = 0; i < count; ++i) dst[i * geo.stride] += wv * gsrc[i];
                            }
                        }
                        if (!gw.empty()) {
                            const double* src = in_c + iy * geo.width + ix0;
                            double acc = 0.0;
                            for (std::size_t i = 0; i < count; ++i) acc += gsrc[i] * src[i * geo.stride];
                            gw[widx] += acc;
                        }
                    });
                }
            }
            if (gi.size() > 2 && !gi[2].empty()) {
                for (std::size_t co = 0; co < geo.out_channels; ++co) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < out_plane; ++i) acc += g[co * out_plane + i];
                    gi[2][co] += acc;
                }
            }
        });
}

namespace {

void check_pool(const Tensor& input, std::size_t window, const char* op) {
    require_image(input, op);
    if (window == 0) throw ConfigError(std::string(op) + ": window must be positive");
    if (input.dim(1) % window != 0 || input.dim(2) % window != 0) {
        throw ConfigError(std::string(op) + ": extents of " + shape_to_string(input.shape()) +
                          " not divisible by window " + std::to_string(window));
    }
}

}  // namespace

Tensor avg_pool2d(const Tensor& input, std::size_t window) {
    check_pool(input, window, "avg_pool2d");
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t oh = h / window, ow = w / window;
    const double area = static_cast<double>(window * window);
    std::vector<double> out(c * oh * ow, 0.0);
    auto x = input.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xcol = 0; xcol < w; ++xcol) {
                out[(ch * oh + y / window) * ow + xcol / window] += x[(ch * h + y) * w + xcol];
            }
        }
    }
    for (auto& v : out) v /= area;
    return Tensor::from_op({c, oh, ow}, std::move(out), {input}, [=](auto g, auto gi) {
        auto& gx = gi[0];
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t xcol = 0; xcol < w; ++xcol) {
                    gx[(ch * h + y) * w + xcol] += g[(ch * oh + y / window) * ow + xcol / window] / area;
                }
            }
        }
    });
}

Tensor max_pool2d(const Tensor& input, std::size_t window) {
    check_pool(input, window, "max_pool2d");
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t oh = h / window, ow = w / window;
    std::vector<double> out(c * oh * ow);
    // First maximal element in row-major window order receives the gradient.
    std::vector<std::size_t> argmax(out.size());
    auto x = input.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (ch * h + oy * window) * w + ox * window;
                for (std::size_t dy = 0; dy < window; ++dy) {
                    for (std::size_t dx = 0; dx < window; ++dx) {
                        const std::size_t idx = (ch * h + oy * window + dy) * w + ox * window + dx;
                        if (x[idx] > x[best]) best = idx;
                    }
                }
                const std::size_t o = (ch * oh + oy) * ow + ox;
                out[o] = x[best];
                argmax[o] = best;
            }
        }
    }
    return Tensor::from_op({c, oh, ow}, std::move(out), {input}, [argmax = std::move(argmax)](auto g, auto gi) {
        for (std::size_t o = 0; o < argmax.size(); ++o) gi[0][argmax[o]] += g[o];
    });
}

}  // namespace nst
