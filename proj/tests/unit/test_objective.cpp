#include <gtest/gtest.h>

#include <random>

#include "nst/errors.hpp"
#include "nst/imaging.hpp"
#include "nst/objective.hpp"
#include "nst/ops.hpp"
#include "oracles.hpp"

using namespace nst;
namespace t = nst::testing;

namespace {

std::vector<double> values(const Tensor& x) { return {x.data().begin(), x.data().end()}; }

struct Fixture {
    LossNetwork net = tiny_network(7);
    TransferConfig config;
    FeatureSet content_target;
    StyleTarget style_target;
    Tensor image;

    explicit Fixture(int size, TransferConfig c = {}) : config(std::move(c)) {
        config.image_size = size;
        const Tensor content = preprocess(t::fixture_content(size), net);
        const Tensor style = preprocess(t::fixture_style(size), net);
        content_target = extract_features(net, content, config.content_taps);
        style_target = make_style_target(extract_features(net, style, config.style_taps), config.style_target_mode);
        std::mt19937_64 rng(21);
        auto noise = t::random_values(content.numel(), rng, -0.1, 0.1);
        for (std::size_t i = 0; i < noise.size(); ++i) noise[i] += content.at(i);
        image = Tensor(content.shape(), noise);
    }

    ObjectiveValue eval(const TransferConfig& c) const {
        return total_objective(image, c, content_target, style_target, net);
    }
};

}  // namespace

TEST(Gram, ZeroFeaturesGiveZeroMatrix) {
    const GramMatrix g = gram_matrix(Tensor::zeros({3, 4, 4}));
    for (double v : g.values.data()) EXPECT_EQ(v, 0.0);
}

TEST(Gram, HandComputedTwoChannelCase) {
    const GramMatrix g = gram_matrix(Tensor({2, 1, 1}, {1, 2}));
    EXPECT_EQ(values(g.values), (std::vector<double>{0.5, 1, 1, 2}));
    EXPECT_DOUBLE_EQ(g.normalizer, 2.0);
}

TEST(Gram, MatchesBruteForce) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const auto f = t::random_values(4 * 8 * 8, rng);
        EXPECT_LT(t::max_abs_diff(gram_matrix(Tensor({4, 8, 8}, f)).values.data(), t::brute_gram(f, 4, 8, 8)), 1e-10);
    }
    const auto f = t::random_values(3 * 4 * 4, rng);
    EXPECT_LT(t::max_abs_diff(gram_matrix(Tensor({3, 4, 4}, f)).values.data(), t::brute_gram(f, 3, 4, 4)), 1e-10);
}

TEST(Gram, SymmetricAndPositiveSemidefinite) {
    std::mt19937_64 rng(32);
    for (std::size_t c : {2u, 3u, 4u, 6u}) {
        const auto g = values(gram_matrix(Tensor({c, 5, 3}, t::random_values(c * 15, rng))).values);
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j) EXPECT_LT(std::abs(g[i * c + j] - g[j * c + i]), 1e-12);
        EXPECT_GE(t::min_eigenvalue(g, c), -1e-9);
    }
}

TEST(Gram, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(33);
    const auto f0 = t::random_values(3 * 4 * 4, rng);
    const Tensor probe({3, 3}, t::random_values(9, rng));
    Tensor f({3, 4, 4}, f0, true);
    backward(sum(mul(gram_matrix(f).values, probe)));
    const auto numeric = t::numeric_gradient(
        [&](const std::vector<double>& v) { return sum(mul(gram_matrix(Tensor({3, 4, 4}, v)).values, probe)).item(); },
        f0);
    EXPECT_LT(t::relative_error(values(f.grad_tensor()), numeric), 1e-4);
}

TEST(ContentLoss, IdentityIsZeroAndHandCase) {
    const std::vector<std::string> taps{"a"};
    FeatureSet x{{"a", Tensor({1, 1, 2}, {0, 0})}};
    FeatureSet y{{"a", Tensor({1, 1, 2}, {2, 2})}};
    EXPECT_DOUBLE_EQ(content_loss(x, x, taps).item(), 0.0);
    EXPECT_DOUBLE_EQ(content_loss(x, y, taps).item(), 4.0);
}

TEST(ContentLoss, AveragesOverTaps) {
    const std::vector<std::string> taps{"a", "b"};
    FeatureSet x{{"a", Tensor({1, 1, 2}, {0, 0})}, {"b", Tensor({1, 1, 1}, {0})}};
    FeatureSet y{{"a", Tensor({1, 1, 2}, {2, 2})}, {"b", Tensor({1, 1, 1}, {0})}};
    EXPECT_DOUBLE_EQ(content_loss(x, y, taps).item(), 2.0);
}

TEST(ContentLoss, Errors) {
    FeatureSet x{{"a", Tensor({1, 1, 2}, {0, 0})}};
    FeatureSet y{{"a", Tensor({1, 2, 1}, {0, 0})}};
    EXPECT_THROW(content_loss(x, x, std::vector<std::string>{}), ConfigError);
    try {
        content_loss(x, y, std::vector<std::string>{"a"});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos);
    }
}

TEST(StyleLoss, IdentityIsZero) {
    std::mt19937_64 rng(34);
    FeatureSet f{{"a", Tensor({3, 4, 4}, t::random_values(48, rng))}};
    EXPECT_DOUBLE_EQ(style_loss(f, make_style_target(f, StyleTargetMode::gram)).item(), 0.0);
    EXPECT_DOUBLE_EQ(style_loss(f, make_style_target(f, StyleTargetMode::spatial_average)).item(), 0.0);
}

TEST(StyleLoss, FrobeniusOfAllOnesDifferenceAtTwoChannels) {
    // generated Gram [[0.5,1],[1,2]]; target differs by 1 in every entry.
    FeatureSet f{{"a", Tensor({2, 1, 1}, {1, 2})}};
    StyleTarget target{StyleTargetMode::gram, {{"a", Tensor({2, 2}, {1.5, 2, 2, 3})}}};
    EXPECT_DOUBLE_EQ(style_loss(f, target).item(), 4.0);
}

TEST(StyleLoss, SpatialAverageHandCase) {
    FeatureSet f{{"a", Tensor({2, 1, 2}, {1, 1, 3, 3})}};
    StyleTarget target{StyleTargetMode::spatial_average, {{"a", Tensor({2}, {1, 1})}}};
    EXPECT_DOUBLE_EQ(style_loss(f, target).item(), 4.0);
}

TEST(StyleLoss, MissingTapIsAnError) {
    FeatureSet f{{"a", Tensor({2, 1, 1}, {1, 2})}};
    StyleTarget target{StyleTargetMode::gram, {{"b", Tensor({2, 2}, {0, 0, 0, 0})}}};
    EXPECT_THROW(style_loss(f, target), ConfigError);
}

TEST(StyleTarget, IsDetached) {
    Tensor a({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}, true);
    const StyleTarget target = make_style_target(FeatureSet{{"x", a}}, StyleTargetMode::gram);
    EXPECT_FALSE(target.statistics.at("x").requires_grad());
}

TEST(TvLoss, HandCasesAndOracle) {
    EXPECT_DOUBLE_EQ(tv_loss(Tensor::full({3, 5, 5}, 0.4)).item(), 0.0);
    EXPECT_DOUBLE_EQ(tv_loss(Tensor({1, 2, 2}, {0, 1, 2, 3})).item(), 10.0);
    std::mt19937_64 rng(35);
    for (int trial = 0; trial < 5; ++trial) {
        const auto x = t::random_values(4 * 8 * 8, rng);
        EXPECT_LT(std::abs(tv_loss(Tensor({4, 8, 8}, x)).item() - t::brute_tv(x, 4, 8, 8)), 1e-10);
    }
    EXPECT_THROW(tv_loss(Tensor::zeros({1, 1, 4})), ConfigError);
}

TEST(TvLoss, CheckerboardExceedsItsBlur) {
    std::vector<double> board(8 * 8);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) board[y * 8 + x] = (x + y) % 2 ? 1.0 : 0.0;
    std::vector<double> blurred(board.size());
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
            double acc = 0;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = static_cast<int>(y) + dy, xx = static_cast<int>(x) + dx;
                    if (yy < 0 || xx < 0 || yy >= 8 || xx >= 8) continue;
                    acc += board[yy * 8 + xx];
                    ++n;
                }
            blurred[y * 8 + x] = acc / n;
        }
    EXPECT_GT(tv_loss(Tensor({1, 8, 8}, board)).item(), tv_loss(Tensor({1, 8, 8}, blurred)).item());
}

TEST(TvLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(36);
    const auto x0 = t::random_values(3 * 5 * 6, rng);
    Tensor x({3, 5, 6}, x0, true);
    backward(tv_loss(x));
    const auto numeric =
        t::numeric_gradient([](const std::vector<double>& v) { return tv_loss(Tensor({3, 5, 6}, v)).item(); }, x0);
    EXPECT_LT(t::relative_error(values(x.grad_tensor()), numeric), 1e-4);
}

TEST(TotalObjective, ZeroWeightsGiveZero) {
    Fixture fx(16);
    TransferConfig c = fx.config;
    c.content_weight = 0;
    c.style_weight = 0;
    c.tv_strength = 0;
    const ObjectiveValue v = fx.eval(c);
    EXPECT_EQ(v.total.item(), 0.0);
    EXPECT_EQ(v.report.total, 0.0);
}

TEST(TotalObjective, ReportMatchesWeightedComponents) {
    Fixture fx(16);
    const ObjectiveValue v = fx.eval(fx.config);
    const auto& r = v.report;
    EXPECT_GT(r.content, 0.0);
    EXPECT_GT(r.style, 0.0);
    EXPECT_GT(r.tv, 0.0);
    EXPECT_NEAR(r.total, 100 * r.content + 100 * r.style + 1e-6 * r.tv, 1e-12 * r.total);
    EXPECT_DOUBLE_EQ(v.total.item(), r.total);
}

TEST(TotalObjective, ContentWeightIsLinear) {
    Fixture fx(16);
    TransferConfig one = fx.config, two = fx.config;
    one.content_weight = 1;
    two.content_weight = 2;
    const auto a = fx.eval(one).report;
    const auto b = fx.eval(two).report;
    EXPECT_DOUBLE_EQ(a.content, b.content);
    EXPECT_NEAR(b.total - a.total, a.content, 1e-12 * b.total);
}

TEST(TotalObjective, ContentShareGrowsWithRatio) {
    Fixture fx(16);
    TransferConfig even = fx.config, heavy = fx.config;
    heavy.content_weight = 200;
    const auto a = fx.eval(even).report;
    const auto b = fx.eval(heavy).report;
    EXPECT_GT(200 * b.content / b.total, 100 * a.content / a.total);
}

TEST(TotalObjective, JointScalingScalesNonTvPart) {
    Fixture fx(16);
    TransferConfig base = fx.config, scaled = fx.config;
    scaled.content_weight *= 3;
    scaled.style_weight *= 3;
    const auto a = fx.eval(base).report;
    const auto b = fx.eval(scaled).report;
    const double tv_a = base.tv_strength * a.tv;
    EXPECT_NEAR(b.total - tv_a, 3 * (a.total - tv_a), 1e-12 * b.total);
}

TEST(TotalObjective, PixelGradientMatchesFiniteDifferences) {
    // 8x8 only reaches the shallow taps.
    TransferConfig c;
    c.content_taps = {"relu1_2"};
    c.style_taps = {"relu1_1", "relu1_2"};
    c.tv_strength = 1e-2;
    Fixture fx(8, c);
    const std::vector<double> x0 = values(fx.image);
    Tensor x(fx.image.shape(), x0, true);
    backward(total_objective(x, fx.config, fx.content_target, fx.style_target, fx.net).total);
    const auto numeric = t::numeric_gradient(
        [&](const std::vector<double>& v) {
            return total_objective(Tensor(fx.image.shape(), v), fx.config, fx.content_target, fx.style_target, fx.net)
                .total.item();
        },
        x0);
    EXPECT_LT(t::relative_error(values(x.grad_tensor()), numeric), 1e-3);
}

TEST(LossReport, CsvRoundTripIsExact) {
    const LossReport r{17, 0.1, 1.0 / 3.0, 12345.678, 2e-300};
    EXPECT_EQ(LossReport::from_csv_row(r.to_csv_row()), r);
    EXPECT_EQ(LossReport::csv_header(), "iteration,content,style,tv,total");
    EXPECT_THROW(LossReport::from_csv_row("1,2,3"), FormatError);
    EXPECT_THROW(LossReport::from_csv_row("1,2,x,4,5"), FormatError);
}
