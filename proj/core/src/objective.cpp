#include "nst/objective.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <vector>

#include "nst/errors.hpp"
#include "nst/ops.hpp"

namespace nst {

namespace {

void require_feature_map(const Tensor& t, const char* what) {
    if (t.rank() != 3) {
        throw ConfigError(std::string(what) + ": expected a C x H x W feature map, got " +
                          shape_to_string(t.shape()));
    }
}

const Tensor& lookup(const FeatureSet& set, const std::string& tap, const char* role) {
    auto it = set.find(tap);
    if (it == set.end()) throw ConfigError(std::string(role) + " features are missing tap '" + tap + "'");
    return it->second;
}

}  // namespace

GramMatrix gram_matrix(const Tensor& features) {
    require_feature_map(features, "gram_matrix");
    const std::size_t c = features.dim(0);
    const std::size_t plane = features.dim(1) * features.dim(2);
    const double norm = static_cast<double>(c * plane);
    auto f = features.data();
    std::vector<double> g(c * c, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
        const double* fi = f.data() + i * plane;
        for (std::size_t j = i; j < c; ++j) {
            const double* fj = f.data() + j * plane;
            double acc = 0.0;
            for (std::size_t p = 0; p < plane; ++p) acc += fi[p] * fj[p];
            g[i * c + j] = acc / norm;
            g[j * c + i] = acc / norm;
        }
    }
    Tensor values = Tensor::from_op({c, c}, std::move(g), {features}, [features, c, plane, norm](auto grad, auto gi) {
        // dF_i = sum_j (dG_ij + dG_ji) F_j / norm
        auto f = features.data();
        auto& df = gi[0];
        for (std::size_t i = 0; i < c; ++i) {
            double* dfi = df.data() + i * plane;
            for (std::size_t j = 0; j < c; ++j) {
                const double coeff = (grad[i * c + j] + grad[j * c + i]) / norm;
                if (coeff == 0.0) continue;
                const double* fj = f.data() + j * plane;
                for (std::size_t p = 0; p < plane; ++p) dfi[p] += coeff * fj[p];
            }
        }
    });
    return {std::move(values), norm};
}

Tensor spatial_average(const Tensor& features) {
    require_feature_map(features, "spatial_average");
    const std::size_t c = features.dim(0);
    const std::size_t plane = features.dim(1) * features.dim(2);
    auto f = features.data();
    std::vector<double> means(c, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += f[i * plane + p];
        means[i] = acc / static_cast<double>(plane);
    }
    return Tensor::from_op({c}, std::move(means), {features}, [c, plane](auto grad, auto gi) {
        for (std::size_t i = 0; i < c; ++i) {
            const double share = grad[i] / static_cast<double>(plane);
            for (std::size_t p = 0; p < plane; ++p) gi[0][i * plane + p] += share;
        }
    });
}

StyleTarget make_style_target(const FeatureSet& style_features, StyleTargetMode mode) {
    StyleTarget target;
    target.mode = mode;
    for (const auto& [tap, activation] : style_features) {
        Tensor stat = mode == StyleTargetMode::gram ? gram_matrix(activation).values : spatial_average(activation);
        target.statistics.emplace(tap, stat.detach());
    }
    return target;
}

Tensor content_loss(const FeatureSet& generated, const FeatureSet& target, std::span<const std::string> taps) {
    if (taps.empty()) throw ConfigError("content loss needs at least one tap");
    Tensor total;
    for (const auto& tap : taps) {
        const Tensor& g = lookup(generated, tap, "generated");
        const Tensor& t = lookup(target, tap, "content target");
        if (g.shape() != t.shape()) {
            throw ConfigError("content tap '" + tap + "': generated " + shape_to_string(g.shape()) + " vs target " +
                              shape_to_string(t.shape()));
        }
        Tensor term = mean(square(sub(g, t)));
        total = total.defined() ? add(total, term) : term;
    }
    return taps.size() == 1 ? total : scale(total, 1.0 / static_cast<double>(taps.size()));
}

Tensor style_loss(const FeatureSet& generated, const StyleTarget& target) {
    if (target.statistics.empty()) throw ConfigError("style target has no taps");
    Tensor total;
    for (const auto& [tap, stat] : target.statistics) {
        const Tensor& g = lookup(generated, tap, "generated");
        Tensor current = target.mode == StyleTargetMode::gram ? gram_matrix(g).values : spatial_average(g);
        if (current.shape() != stat.shape()) {
            throw ConfigError("style tap '" + tap + "': statistic " + shape_to_string(current.shape()) +
                              " vs target " + shape_to_string(stat.shape()));
        }
        Tensor term = sum(square(sub(current, stat)));
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

Tensor tv_loss(const Tensor& image) {
    require_feature_map(image, "tv_loss");
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (h < 2 || w < 2) throw ConfigError("tv_loss needs H, W >= 2, got " + shape_to_string(image.shape()));
    auto x = image.data();
    double total = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = x.data() + ch * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t col = 0; col < w; ++col) {
                const double v = p[y * w + col];
                if (col + 1 < w) {
                    const double d = p[y * w + col + 1] - v;
                    total += d * d;
                }
                if (y + 1 < h) {
                    const double d = p[(y + 1) * w + col] - v;
                    total += d * d;
                }
            }
        }
    }
    return Tensor::from_op({1}, {total}, {image}, [image, c, h, w](auto grad, auto gi) {
        auto x = image.data();
        const double g = grad[0];
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* p = x.data() + ch * h * w;
            double* dp = gi[0].data() + ch * h * w;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t col = 0; col < w; ++col) {
                    const std::size_t i = y * w + col;
                    if (col + 1 < w) {
                        const double d = 2.0 * g * (p[i + 1] - p[i]);
                        dp[i + 1] += d;
                        dp[i] -= d;
                    }
                    if (y + 1 < h) {
                        const double d = 2.0 * g * (p[i + w] - p[i]);
                        dp[i + w] += d;
                        dp[i] -= d;
                    }
                }
            }
        }
    });
}

std::string LossReport::csv_header() { return "iteration,content,style,tv,total"; }

std::string LossReport::to_csv_row() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g", iteration, content, style, tv, total);
    return buf;
}

LossReport LossReport::from_csv_row(std::string_view row) {
    LossReport r;
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        auto comma = row.find(',', start);
        cells.push_back(row.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (cells.size() != 5) throw FormatError("loss row needs 5 fields: '" + std::string(row) + "'");
    auto parse = [&](std::string_view cell, auto& out) {
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
        if (ec != std::errc() || ptr != cell.data() + cell.size()) {
            throw FormatError("bad loss value '" + std::string(cell) + "'");
        }
    };
    parse(cells[0], r.iteration);
    parse(cells[1], r.content);
    parse(cells[2], r.style);
    parse(cells[3], r.tv);
    parse(cells[4], r.total);
    return r;
}

ObjectiveValue total_objective(const Tensor& image, const TransferConfig& config, const FeatureSet& content_target,
                               const StyleTarget& style_target, const LossNetwork& net) {
    std::vector<std::string> taps = config.content_taps;
    for (const auto& [tap, stat] : style_target.statistics) {
        if (std::find(taps.begin(), taps.end(), tap) == taps.end()) taps.push_back(tap);
    }
    FeatureSet features = extract_features(net, image, taps);

    Tensor lc = content_loss(features, content_target, config.content_taps);
    Tensor ls = style_loss(features, style_target);
    Tensor ltv = tv_loss(image);
    Tensor total = add(add(scale(lc, config.content_weight), scale(ls, config.style_weight)),
                       scale(ltv, config.tv_strength));

    ObjectiveValue value;
    value.report.content = lc.item();
    value.report.style = ls.item();
    value.report.tv = ltv.item();
    value.report.total = total.item();
    value.total = std::move(total);
    return value;
}

}  // namespace nst
