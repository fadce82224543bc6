#pragma once

#include <map>
#include <span>
#include <string>

#include "nst/config.hpp"
#include "nst/loss_network.hpp"
#include "nst/tensor.hpp"

namespace nst {

/// Channel co-occurrence statistics of one feature map:
/// G[i][j] = sum_{h,w} F[i,h,w] * F[j,h,w] / (C*H*W).
struct GramMatrix {
    Tensor values;  // C x C, differentiable
    double normalizer = 1.0;
};

GramMatrix gram_matrix(const Tensor& features);

// Per-channel spatial mean of a C x H x W map, shape [C].
Tensor spatial_average(const Tensor& features);

struct StyleTarget {
    StyleTargetMode mode = StyleTargetMode::gram;
    std::map<std::string, Tensor> statistics;  // tap -> Gram matrix or channel means
};

// Statistics are detached: the style image is a constant of the run.
StyleTarget make_style_target(const FeatureSet& style_features, StyleTargetMode mode);

// Mean over taps of the per-tap mean squared error.
Tensor content_loss(const FeatureSet& generated, const FeatureSet& target, std::span<const std::string> taps);

// Sum over taps of the squared Euclidean (Frobenius for Gram) distance.
Tensor style_loss(const FeatureSet& generated, const StyleTarget& target);

// Anisotropic squared total variation summed over channels.
Tensor tv_loss(const Tensor& image);

struct LossReport {
    int iteration = 0;
    double content = 0.0;
    double style = 0.0;
    double tv = 0.0;
    double total = 0.0;

    static std::string csv_header();  // "iteration,content,style,tv,total"
    std::string to_csv_row() const;
    static LossReport from_csv_row(std::string_view row);

    bool operator==(const LossReport&) const = default;
};

struct ObjectiveValue {
    Tensor total;  // differentiable scalar
    LossReport report;
};

/// content_weight * content + style_weight * style + tv_strength * tv
/// evaluated with a single forward pass through the network prefix.
ObjectiveValue total_objective(const Tensor& image, const TransferConfig& config, const FeatureSet& content_target,
                               const StyleTarget& style_target, const LossNetwork& net);

}  // namespace nst
