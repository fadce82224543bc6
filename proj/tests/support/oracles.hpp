#pragma once

// Reference implementations written as plain loops over flat buffers. They
// share nothing with the engine beyond the row-major layout convention.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <random>
#include <vector>

#include "nst/imaging.hpp"
#include "nst/tensor.hpp"

namespace nst::testing {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

// Uniform values whose magnitude is at least `gap`, so relu/max kinks stay
// far from a finite-difference stencil.
std::vector<double> random_away_from_zero(std::size_t n, std::mt19937_64& rng, double gap = 0.05);

// C_in x H x W input, C_out x C_in x k x k weights, optional bias (empty).
std::vector<double> brute_conv2d(const std::vector<double>& input, std::size_t c, std::size_t h, std::size_t w,
                                 const std::vector<double>& weights, std::size_t c_out, std::size_t k,
                                 const std::vector<double>& bias, std::size_t stride, std::size_t padding,
                                 std::size_t& out_h, std::size_t& out_w);

std::vector<double> brute_avg_pool(const std::vector<double>& input, std::size_t c, std::size_t h, std::size_t w,
                                   std::size_t window);
std::vector<double> brute_max_pool(const std::vector<double>& input, std::size_t c, std::size_t h, std::size_t w,
                                   std::size_t window);

// C x C, normalized by C*H*W.
std::vector<double> brute_gram(const std::vector<double>& features, std::size_t c, std::size_t h, std::size_t w);

double brute_tv(const std::vector<double>& image, std::size_t c, std::size_t h, std::size_t w);

// Central differences of f at x with step h.
std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double h = 1e-5);

// ||a - b|| / max(||b||, floor)
double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12);

double max_abs_diff(std::span<const double> a, std::span<const double> b);

// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
double min_eigenvalue(std::vector<double> m, std::size_t n);

// 64 x 64 fixture pair: a shaded disc on a gradient, and a diagonal stripe
// texture.
RgbImage fixture_content(int size = 64);
RgbImage fixture_style(int size = 64, int variant = 0);

}  // namespace nst::testing
