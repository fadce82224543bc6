#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <filesystem>
#include <string>
#include <vector>

#include "nst/loss_network.hpp"
#include "nst/tensor.hpp"

namespace nst {

// Interleaved 8-bit RGB, row-major.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> samples;

    RgbImage() = default;
    RgbImage(int width, int height, std::uint8_t fill = 0);

    std::uint8_t* pixel(int x, int y) { return samples.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
    const std::uint8_t* pixel(int x, int y) const {
        return samples.data() + 3 * (static_cast<std::size_t>(y) * width + x);
    }

    bool operator==(const RgbImage&) const = default;
};

// 8-bit RGB, RGBA (alpha dropped), gray and palette images are accepted.
// 16-bit samples raise UnsupportedError, anything unreadable FormatError.
RgbImage load_png(const std::filesystem::path& path);
RgbImage decode_png(const std::vector<std::uint8_t>& bytes);
void save_png(const RgbImage& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const RgbImage& image);

// Scales so the longer side equals `longest_side`, preserving aspect ratio.
RgbImage resize_bilinear(const RgbImage& image, int longest_side);
RgbImage resize_bilinear(const RgbImage& image, int width, int height);

// [0,1] scaling followed by per-channel mean subtraction -> 3 x H x W.
Tensor preprocess(const RgbImage& image, const LossNetwork& net);
// Inverse of preprocess with clamping to [0,1] and round-to-nearest.
RgbImage deprocess(const Tensor& pixels, const LossNetwork& net);
RgbImage deprocess(std::span<const double> pixels, int width, int height, const std::array<double, 3>& means);

struct SheetLayout {
    static constexpr int gutter = 4;
    static constexpr int label_band = 16;

    static int width(int cols, int cell_width) { return cols * cell_width + (cols - 1) * gutter + label_band; }
    static int height(int rows, int cell_height) { return rows * cell_height + (rows - 1) * gutter + label_band; }
};

/// Lays out cells row-major on white with 4-px gutters, a 16-px column label
/// band on top and a 16-px row label band on the left. Every cell must have
/// the same size and every row the same length.
RgbImage contact_sheet(const std::vector<std::vector<RgbImage>>& cells, const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels);

// Mid-gray cell with a dark diagonal cross, used for failed sweep cells.
RgbImage failed_cell(int width, int height);

// Built-in 5x7 font, 6-px advance (8 px when vertical). Lowercase letters
// render as uppercase; unknown characters as '?'.
void draw_text(RgbImage& image, int x, int y, std::string_view text, std::array<std::uint8_t, 3> color,
               bool vertical = false);

}  // namespace nst
