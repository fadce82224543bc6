#include <gtest/gtest.h>

#include <random>

#include "nst/errors.hpp"
#include "nst/ops.hpp"
#include "oracles.hpp"

using namespace nst;
namespace t = nst::testing;

namespace {

std::vector<double> values(const Tensor& x) { return {x.data().begin(), x.data().end()}; }

// Analytic gradient of sum(out * probe) with respect to `x`, against central
// differences of the same scalar.
double gradient_error(const std::function<Tensor(const Tensor&)>& op, const Shape& shape,
                      const std::vector<double>& x0, std::mt19937_64& rng) {
    const Tensor probe_shape = op(Tensor(shape, x0));
    const Tensor probe(probe_shape.shape(), t::random_values(probe_shape.numel(), rng));
    auto scalar = [&](const Tensor& x) { return sum(mul(op(x), probe)); };
    Tensor x(shape, x0, true);
    backward(scalar(x));
    const std::vector<double> analytic(x.grad().begin(), x.grad().end());
    const auto numeric = t::numeric_gradient([&](const std::vector<double>& v) { return scalar(Tensor(shape, v)).item(); }, x0);
    return t::relative_error(analytic, numeric);
}

}  // namespace

TEST(Conv2d, ScalarKernelScalesInput) {
    Tensor in({1, 2, 2}, {1, 2, 3, 4});
    Tensor w({1, 1, 1, 1}, {2});
    EXPECT_EQ(values(conv2d(in, w, Tensor({1}, {0.0}))), (std::vector<double>{2, 4, 6, 8}));
}

TEST(Conv2d, OnesKernelSumsWindow) {
    Tensor out = conv2d(Tensor::full({1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0), Tensor());
    EXPECT_EQ(out.shape(), (Shape{1, 1, 1}));
    EXPECT_DOUBLE_EQ(out.item(), 9.0);
}

TEST(Conv2d, ZeroInputGivesZeroOutput) {
    std::mt19937_64 rng(1);
    Tensor w({2, 3, 3, 3}, t::random_values(54, rng));
    Tensor out = conv2d(Tensor::zeros({3, 5, 5}), w, Tensor::zeros({2}));
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, ShapeMismatchNamesBothShapes) {
    try {
        conv2d(Tensor::zeros({3, 5, 5}), Tensor::zeros({2, 4, 3, 3}), Tensor());
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x4x3x3]"), std::string::npos);
        EXPECT_NE(msg.find("[3x5x5]"), std::string::npos);
    }
}

TEST(Conv2d, MatchesBruteForceAcrossStridesAndPadding) {
    std::mt19937_64 rng(2);
    for (std::size_t stride : {1u, 2u}) {
        for (std::size_t padding : {0u, 1u, 2u}) {
            const auto in = t::random_values(4 * 8 * 8, rng);
            const auto w = t::random_values(3 * 4 * 3 * 3, rng);
            const auto b = t::random_values(3, rng);
            std::size_t oh = 0, ow = 0;
            const auto expected = t::brute_conv2d(in, 4, 8, 8, w, 3, 3, b, stride, padding, oh, ow);
            Tensor out = conv2d(Tensor({4, 8, 8}, in), Tensor({3, 4, 3, 3}, w), Tensor({3}, b), stride, padding);
            EXPECT_EQ(out.shape(), (Shape{3, oh, ow}));
            EXPECT_LT(t::max_abs_diff(out.data(), expected), 1e-10) << "stride " << stride << " padding " << padding;
        }
    }
}

TEST(Conv2d, IsLinearWithoutBias) {
    std::mt19937_64 rng(3);
    const Tensor w({2, 3, 3, 3}, t::random_values(54, rng));
    const Tensor x({3, 6, 6}, t::random_values(108, rng));
    const Tensor y({3, 6, 6}, t::random_values(108, rng));
    const double a = 0.7, b = -1.3;
    const Tensor lhs = conv2d(add(scale(x, a), scale(y, b)), w, Tensor(), 1, 1);
    const Tensor rhs = add(scale(conv2d(x, w, Tensor(), 1, 1), a), scale(conv2d(y, w, Tensor(), 1, 1), b));
    EXPECT_LT(t::max_abs_diff(lhs.data(), rhs.data()), 1e-9);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(4);
    const Shape in_shape{3, 6, 6};
    const Tensor w({2, 3, 3, 3}, t::random_values(54, rng));
    const Tensor b({2}, t::random_values(2, rng));
    EXPECT_LT(gradient_error([&](const Tensor& x) { return conv2d(x, w, b, 1, 1); }, in_shape,
                             t::random_values(108, rng), rng),
              1e-4);
    const Tensor in(in_shape, t::random_values(108, rng));
    EXPECT_LT(gradient_error([&](const Tensor& wt) { return conv2d(in, wt, b, 2, 1); }, {2, 3, 3, 3},
                             t::random_values(54, rng), rng),
              1e-4);
    const Tensor w2 = w;
    EXPECT_LT(gradient_error([&](const Tensor& bias) { return conv2d(in, w2, bias); }, {2}, t::random_values(2, rng), rng),
              1e-4);
}

TEST(Relu, ClampsNegativesAndZero) {
    EXPECT_EQ(values(relu(Tensor({3}, {-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
    const Tensor y = relu(Tensor::full({2, 2}, -3.0));
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Relu, SubgradientAtZeroIsZero) {
    Tensor x({3}, {-1, 0, 2}, true);
    backward(sum(relu(x)));
    EXPECT_EQ(values(x.grad_tensor()), (std::vector<double>{0, 0, 1}));
}

TEST(Relu, GradientOfSumAtMinusOneTwo) {
    const std::vector<double> x0{-1.0, 2.0};
    Tensor x({2}, x0, true);
    backward(sum(relu(x)));
    const auto numeric =
        t::numeric_gradient([](const std::vector<double>& v) { return sum(relu(Tensor({2}, v))).item(); }, x0);
    EXPECT_EQ(values(x.grad_tensor()), (std::vector<double>{0, 1}));
    EXPECT_LT(t::relative_error(values(x.grad_tensor()), numeric), 1e-4);
}

TEST(AvgPool, MeanOfWindow) {
    EXPECT_DOUBLE_EQ(avg_pool2d(Tensor({1, 2, 2}, {1, 2, 3, 4}), 2).item(), 2.5);
    const Tensor c = avg_pool2d(Tensor::full({2, 4, 4}, 0.3), 2);
    EXPECT_EQ(c.shape(), (Shape{2, 2, 2}));
    for (double v : c.data()) EXPECT_DOUBLE_EQ(v, 0.3);
}

TEST(AvgPool, WindowOneIsIdentity) {
    std::mt19937_64 rng(5);
    const Tensor x({2, 3, 5}, t::random_values(30, rng));
    EXPECT_EQ(values(avg_pool2d(x, 1)), values(x));
}

TEST(AvgPool, NonDivisibleExtentIsAConfigError) {
    EXPECT_THROW(avg_pool2d(Tensor::zeros({1, 5, 4}), 2), ConfigError);
    EXPECT_THROW(max_pool2d(Tensor::zeros({1, 4, 3}), 2), ConfigError);
}

TEST(Pool, MatchesBruteForce) {
    std::mt19937_64 rng(6);
    for (std::size_t window : {1u, 2u, 4u}) {
        const auto in = t::random_values(4 * 8 * 8, rng);
        EXPECT_LT(t::max_abs_diff(avg_pool2d(Tensor({4, 8, 8}, in), window).data(), t::brute_avg_pool(in, 4, 8, 8, window)),
                  1e-10);
        EXPECT_LT(t::max_abs_diff(max_pool2d(Tensor({4, 8, 8}, in), window).data(), t::brute_max_pool(in, 4, 8, 8, window)),
                  1e-10);
    }
}

TEST(Pool, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(7);
    EXPECT_LT(gradient_error([](const Tensor& x) { return avg_pool2d(x, 2); }, {2, 4, 4}, t::random_values(32, rng), rng),
              1e-4);
    // Distinct values per window keep the argmax stable under the stencil.
    std::vector<double> x0(32);
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = 0.1 * static_cast<double>((i * 7) % 32);
    EXPECT_LT(gradient_error([](const Tensor& x) { return max_pool2d(x, 2); }, {2, 4, 4}, x0, rng), 1e-4);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(8);
    const Shape shape{2, 3, 4};
    const Tensor other(shape, t::random_values(24, rng));
    const auto x0 = t::random_values(24, rng);
    EXPECT_LT(gradient_error([&](const Tensor& x) { return add(x, other); }, shape, x0, rng), 1e-4);
    EXPECT_LT(gradient_error([&](const Tensor& x) { return sub(other, x); }, shape, x0, rng), 1e-4);
    EXPECT_LT(gradient_error([&](const Tensor& x) { return mul(x, other); }, shape, x0, rng), 1e-4);
    EXPECT_LT(gradient_error([&](const Tensor& x) { return scale(x, -2.5); }, shape, x0, rng), 1e-4);
    EXPECT_LT(gradient_error([&](const Tensor& x) { return square(x); }, shape, x0, rng), 1e-4);
    EXPECT_LT(gradient_error([&](const Tensor& x) { return sum(x); }, shape, x0, rng), 1e-4);
    EXPECT_LT(gradient_error([&](const Tensor& x) { return mean(x); }, shape, x0, rng), 1e-4);
    EXPECT_LT(gradient_error([&](const Tensor& x) { return relu(x); }, shape, t::random_away_from_zero(24, rng), rng),
              1e-4);
}

TEST(Elementwise, ShapeMismatchIsAConfigError) {
    EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), ConfigError);
    EXPECT_THROW(mul(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ConfigError);
}

TEST(Determinism, SameInputsGiveBitIdenticalOutputs) {
    std::mt19937_64 rng(9);
    const auto in = t::random_values(3 * 8 * 8, rng);
    const auto w = t::random_values(4 * 3 * 9, rng);
    const Tensor a = conv2d(Tensor({3, 8, 8}, in), Tensor({4, 3, 3, 3}, w), Tensor(), 1, 1);
    const Tensor b = conv2d(Tensor({3, 8, 8}, in), Tensor({4, 3, 3, 3}, w), Tensor(), 1, 1);
    EXPECT_EQ(values(a), values(b));
}
