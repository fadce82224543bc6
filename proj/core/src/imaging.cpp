#include "nst/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "font5x7.hpp"
#include "nst/errors.hpp"

namespace nst {

RgbImage::RgbImage(int w, int h, std::uint8_t fill) : width(w), height(h) {
    if (w <= 0 || h <= 0) {
        throw ConfigError("image dimensions must be positive, got " + std::to_string(w) + "x" + std::to_string(h));
    }
    samples.assign(3 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
}

RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        const std::string message = image.message;
        png_image_free(&image);
        throw FormatError("malformed PNG: " + message);
    }
    if (image.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&image);
        throw UnsupportedError("unsupported PNG bit depth: only 8-bit samples are accepted");
    }
    const int width = static_cast<int>(image.width);
    const int height = static_cast<int>(image.height);
    image.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgba.data(), 0, nullptr)) {
        const std::string message = image.message;
        png_image_free(&image);
        throw FormatError("malformed PNG: " + message);
    }
    RgbImage out(width, height);
    const std::size_t n = static_cast<std::size_t>(width) * height;
    for (std::size_t i = 0; i < n; ++i) {
        out.samples[3 * i] = rgba[4 * i];
        out.samples[3 * i + 1] = rgba[4 * i + 1];
        out.samples[3 * i + 2] = rgba[4 * i + 2];
    }
    return out;
}

RgbImage load_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_png(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
    if (image.width <= 0 || image.height <= 0 ||
        image.samples.size() != 3 * static_cast<std::size_t>(image.width) * image.height) {
        throw ConfigError("cannot encode an image whose sample count does not match its dimensions");
    }
    png_image desc;
    std::memset(&desc, 0, sizeof(desc));
    desc.version = PNG_IMAGE_VERSION;
    desc.width = static_cast<png_uint_32>(image.width);
    desc.height = static_cast<png_uint_32>(image.height);
    desc.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&desc, nullptr, &size, 0, image.samples.data(), 0, nullptr)) {
        throw IoError(std::string("PNG encoding failed: ") + desc.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.samples.data(), 0, nullptr)) {
        throw IoError(std::string("PNG encoding failed: ") + desc.message);
    }
    out.resize(size);
    return out;
}

void save_png(const RgbImage& image, const std::filesystem::path& path) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write image " + path.string());
}

RgbImage resize_bilinear(const RgbImage& image, int longest_side) {
    if (longest_side < 8) throw ConfigError("longest_side must be >= 8");
    const int longest = std::max(image.width, image.height);
    if (longest == longest_side) return image;
    const double factor = static_cast<double>(longest_side) / longest;
    int w = longest_side;
    int h = longest_side;
    if (image.width >= image.height) {
        h = std::max(1, static_cast<int>(std::lround(image.height * factor)));
    } else {
        w = std::max(1, static_cast<int>(std::lround(image.width * factor)));
    }
    return resize_bilinear(image, w, h);
}

RgbImage resize_bilinear(const RgbImage& image, int width, int height) {
    if (width == image.width && height == image.height) return image;
    RgbImage out(width, height);
    const double sx = static_cast<double>(image.width) / width;
    const double sy = static_cast<double>(image.height) / height;
    auto source_coord = [](int dst, double scale, int extent, int& i0, int& i1, double& t) {
        double src = (dst + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(extent - 1));
        i0 = static_cast<int>(std::floor(src));
        i1 = std::min(i0 + 1, extent - 1);
        t = src - i0;
    };
    for (int y = 0; y < height; ++y) {
        int y0, y1;
        double ty;
        source_coord(y, sy, image.height, y0, y1, ty);
        for (int x = 0; x < width; ++x) {
            int x0, x1;
            double tx;
            source_coord(x, sx, image.width, x0, x1, tx);
            for (int c = 0; c < 3; ++c) {
                const double top = image.pixel(x0, y0)[c] * (1.0 - tx) + image.pixel(x1, y0)[c] * tx;
                const double bottom = image.pixel(x0, y1)[c] * (1.0 - tx) + image.pixel(x1, y1)[c] * tx;
                const double v = top * (1.0 - ty) + bottom * ty;
                out.pixel(x, y)[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

Tensor preprocess(const RgbImage& image, const LossNetwork& net) {
    const auto& means = net.channel_means();
    const std::size_t w = static_cast<std::size_t>(image.width);
    const std::size_t h = static_cast<std::size_t>(image.height);
    std::vector<double> values(3 * w * h);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < w * h; ++i) {
            values[c * w * h + i] = image.samples[3 * i + c] / 255.0 - means[c];
        }
    }
    return Tensor({3, h, w}, std::move(values));
}

RgbImage deprocess(std::span<const double> pixels, int width, int height, const std::array<double, 3>& means) {
    RgbImage out(width, height);
    const std::size_t plane = static_cast<std::size_t>(width) * height;
    if (pixels.size() != 3 * plane) throw ConfigError("deprocess: pixel count does not match dimensions");
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            const double v = std::clamp(pixels[c * plane + i] + means[c], 0.0, 1.0);
            out.samples[3 * i + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
    return out;
}

RgbImage deprocess(const Tensor& pixels, const LossNetwork& net) {
    if (pixels.rank() != 3 || pixels.dim(0) != 3) {
        throw ConfigError("deprocess expects a 3 x H x W tensor, got " + shape_to_string(pixels.shape()));
    }
    return deprocess(pixels.data(), static_cast<int>(pixels.dim(2)), static_cast<int>(pixels.dim(1)),
                     net.channel_means());
}

void draw_text(RgbImage& image, int x, int y, std::string_view text, std::array<std::uint8_t, 3> color,
               bool vertical) {
    for (char ch : text) {
        const auto& glyph = detail::glyph_for(ch);
        for (int row = 0; row < detail::kGlyphHeight; ++row) {
            for (int col = 0; col < detail::kGlyphWidth; ++col) {
                if (!(glyph[row] & (0x10 >> col))) continue;
                const int px = x + col;
                const int py = y + row;
                if (px < 0 || py < 0 || px >= image.width || py >= image.height) continue;
                std::copy(color.begin(), color.end(), image.pixel(px, py));
            }
        }
        if (vertical) {
            y += detail::kGlyphHeight + 1;
        } else {
            x += detail::kGlyphWidth + 1;
        }
    }
}

RgbImage failed_cell(int width, int height) {
    RgbImage cell(width, height, 128);
    const int n = std::max(width, height);
    for (int i = 0; i < n; ++i) {
        const int x = i * width / n;
        const int y = i * height / n;
        for (int t = -1; t <= 1; ++t) {
            for (int px : {x + t, width - 1 - x + t}) {
                if (px < 0 || px >= width) continue;
                auto* p = cell.pixel(px, y);
                p[0] = p[1] = p[2] = 40;
            }
        }
    }
    return cell;
}

RgbImage contact_sheet(const std::vector<std::vector<RgbImage>>& cells, const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels) {
    if (cells.empty() || cells.front().empty()) throw ConfigError("contact sheet needs at least one cell");
    const int rows = static_cast<int>(cells.size());
    const int cols = static_cast<int>(cells.front().size());
    const int cw = cells.front().front().width;
    const int ch = cells.front().front().height;
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(cells[r].size()) != cols) {
            throw ConfigError("ragged contact sheet grid: row " + std::to_string(r) + " has " +
                              std::to_string(cells[r].size()) + " cells, expected " + std::to_string(cols));
        }
        for (const auto& cell : cells[r]) {
            if (cell.width != cw || cell.height != ch) {
                throw ConfigError("contact sheet cells must share one size");
            }
        }
    }
    if (!row_labels.empty() && static_cast<int>(row_labels.size()) != rows) {
        throw ConfigError("row label count does not match grid rows");
    }
    if (!col_labels.empty() && static_cast<int>(col_labels.size()) != cols) {
        throw ConfigError("column label count does not match grid columns");
    }

    constexpr int band = SheetLayout::label_band;
    constexpr int gutter = SheetLayout::gutter;
    RgbImage sheet(SheetLayout::width(cols, cw), SheetLayout::height(rows, ch), 255);
    const std::array<std::uint8_t, 3> ink{0, 0, 0};
    const int advance = detail::kGlyphWidth + 1;
    for (int c = 0; c < cols && !col_labels.empty(); ++c) {
        const int max_chars = std::max(1, (cw + 1) / advance);
        const std::string_view text = std::string_view(col_labels[c]).substr(0, max_chars);
        const int text_w = static_cast<int>(text.size()) * advance - 1;
        const int x0 = band + c * (cw + gutter) + (cw - text_w) / 2;
        draw_text(sheet, x0, (band - detail::kGlyphHeight) / 2, text, ink);
    }
    for (int r = 0; r < rows && !row_labels.empty(); ++r) {
        const int v_advance = detail::kGlyphHeight + 1;
        const int max_chars = std::max(1, (ch + 1) / v_advance);
        const std::string_view text = std::string_view(row_labels[r]).substr(0, max_chars);
        const int text_h = static_cast<int>(text.size()) * v_advance - 1;
        const int y0 = band + r * (ch + gutter) + (ch - text_h) / 2;
        draw_text(sheet, (band - detail::kGlyphWidth) / 2, y0, text, ink, true);
    }
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const auto& cell = cells[r][c];
            const int ox = band + c * (cw + gutter);
            const int oy = band + r * (ch + gutter);
            for (int y = 0; y < ch; ++y) {
                std::copy_n(cell.pixel(0, y), 3 * cw, sheet.pixel(ox, oy + y));
            }
        }
    }
    return sheet;
}

}  // namespace nst
