#pragma once

#include <cstddef>

#include "nst/tensor.hpp"

namespace nst {

// Elementwise; shapes must match exactly (no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor square(const Tensor& a);

// Full reductions to a scalar of shape [1].
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Subgradient at exactly 0 is 0.
Tensor relu(const Tensor& input);

/// 2-D cross-correlation over a single C_in x H x W image.
///
/// weights: C_out x C_in x k x k, bias: C_out (may be undefined for no bias).
/// Output extent per axis is floor((n + 2*padding - k) / stride) + 1.
/// Throws ConfigError naming both shapes on mismatch.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0);

// Non-overlapping window x window pooling. H and W must be divisible by window.
Tensor avg_pool2d(const Tensor& input, std::size_t window);
Tensor max_pool2d(const Tensor& input, std::size_t window);

}  // namespace nst
