#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nst::testing {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

std::vector<double> random_away_from_zero(std::size_t n, std::mt19937_64& rng, double gap) {
    std::uniform_real_distribution<double> dist(gap, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(n);
    for (auto& x : v) x = sign(rng) ? dist(rng) : -dist(rng);
    return v;
}

std::vector<double> brute_conv2d(const std::vector<double>& input, std::size_t c, std::size_t h, std::size_t w,
                                 const std::vector<double>& weights, std::size_t c_out, std::size_t k,
                                 const std::vector<double>& bias, std::size_t stride, std::size_t padding,
                                 std::size_t& out_h, std::size_t& out_w) {
    const std::size_t ph = h + 2 * padding;
    const std::size_t pw = w + 2 * padding;
    std::vector<double> padded(c * ph * pw, 0.0);
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                padded[(ci * ph + y + padding) * pw + x + padding] = input[(ci * h + y) * w + x];
    out_h = (ph - k) / stride + 1;
    out_w = (pw - k) / stride + 1;
    std::vector<double> out(c_out * out_h * out_w, 0.0);
    for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t y = 0; y < out_h; ++y)
            for (std::size_t x = 0; x < out_w; ++x) {
                double acc = bias.empty() ? 0.0 : bias[o];
                for (std::size_t ci = 0; ci < c; ++ci)
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx)
                            acc += weights[((o * c + ci) * k + ky) * k + kx] *
                                   padded[(ci * ph + y * stride + ky) * pw + x * stride + kx];
                out[(o * out_h + y) * out_w + x] = acc;
            }
    return out;
}

namespace {

std::vector<double> brute_pool(const std::vector<double>& input, std::size_t c, std::size_t h, std::size_t w,
                               std::size_t window, bool take_max) {
    const std::size_t oh = h / window;
    const std::size_t ow = w / window;
    std::vector<double> out(c * oh * ow);
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = take_max ? -std::numeric_limits<double>::infinity() : 0.0;
                for (std::size_t dy = 0; dy < window; ++dy)
                    for (std::size_t dx = 0; dx < window; ++dx) {
                        const double v = input[(ci * h + y * window + dy) * w + x * window + dx];
                        acc = take_max ? std::max(acc, v) : acc + v;
                    }
                out[(ci * oh + y) * ow + x] = take_max ? acc : acc / static_cast<double>(window * window);
            }
    return out;
}

}  // namespace

std::vector<double> brute_avg_pool(const std::vector<double>& input, std::size_t c, std::size_t h, std::size_t w,
                                   std::size_t window) {
    return brute_pool(input, c, h, w, window, false);
}

std::vector<double> brute_max_pool(const std::vector<double>& input, std::size_t c, std::size_t h, std::size_t w,
                                   std::size_t window) {
    return brute_pool(input, c, h, w, window, true);
}

std::vector<double> brute_gram(const std::vector<double>& features, std::size_t c, std::size_t h, std::size_t w) {
    std::vector<double> g(c * c, 0.0);
    const double norm = static_cast<double>(c * h * w);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < h * w; ++p) acc += features[i * h * w + p] * features[j * h * w + p];
            g[i * c + j] = acc / norm;
        }
    return g;
}

double brute_tv(const std::vector<double>& image, std::size_t c, std::size_t h, std::size_t w) {
    double acc = 0.0;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double v = image[(ci * h + y) * w + x];
                if (y + 1 < h) acc += std::pow(image[(ci * h + y + 1) * w + x] - v, 2);
                if (x + 1 < w) acc += std::pow(image[(ci * h + y) * w + x + 1] - v, 2);
            }
    return acc;
}

std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f(x);
        x[i] = saved - h;
        const double down = f(x);
        x[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
    double diff = 0.0;
    double norm = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        norm += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(norm), floor);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double min_eigenvalue(std::vector<double> m, std::size_t n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += m[p * n + q] * m[p * n + q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double cs = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * cs;
                for (std::size_t r = 0; r < n; ++r) {
                    const double a = m[r * n + p];
                    const double b = m[r * n + q];
                    m[r * n + p] = cs * a - sn * b;
                    m[r * n + q] = sn * a + cs * b;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double a = m[p * n + r];
                    const double b = m[q * n + r];
                    m[p * n + r] = cs * a - sn * b;
                    m[q * n + r] = sn * a + cs * b;
                }
            }
    }
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) lowest = std::min(lowest, m[i * n + i]);
    return lowest;
}

RgbImage fixture_content(int size) {
    RgbImage img(size, size);
    const double r = size * 0.3;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            auto* p = img.pixel(x, y);
            const double dx = x - size * 0.55;
            const double dy = y - size * 0.45;
            const bool inside = dx * dx + dy * dy < r * r;
            p[0] = static_cast<std::uint8_t>(inside ? 220 : 40 + 150 * x / size);
            p[1] = static_cast<std::uint8_t>(inside ? 180 - 100 * y / size : 60 + 120 * y / size);
            p[2] = static_cast<std::uint8_t>(inside ? 60 : 170);
        }
    return img;
}

RgbImage fixture_style(int size, int variant) {
    RgbImage img(size, size);
    const double period = variant == 0 ? 6.0 : 11.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            auto* p = img.pixel(x, y);
            const double s = std::sin((x + (variant == 0 ? y : -2 * y)) * 2.0 * M_PI / period);
            const double t = std::cos(y * 2.0 * M_PI / (period * 1.7));
            p[0] = static_cast<std::uint8_t>(128 + 110 * s);
            p[1] = static_cast<std::uint8_t>(128 + 90 * t * (variant == 0 ? 1 : -1));
            p[2] = static_cast<std::uint8_t>(128 - 100 * s * t);
        }
    return img;
}

}  // namespace nst::testing
