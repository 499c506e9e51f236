#include <gtest/gtest.h>

#include "curvepose/errors.hpp"
#include "curvepose/nn.hpp"
#include "gradcheck.hpp"

namespace curvepose {
namespace {

using nn::Tensor;

TEST(Conv, OneByOneIdentityKernel) {
    Tensor<double> x({1, 3, 4});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) - 5.0;
    const Tensor<double> w({1, 1, 1, 1}, 1.0);
    const Tensor<double> b({1}, 0.0);
    const auto y = nn::conv2d_forward(x, w, b);
    EXPECT_EQ(y.shape, x.shape);
    EXPECT_EQ(y.data, x.data);
}

TEST(Conv, AllOnesKernelSumsWindow) {
    const Tensor<double> x({1, 5, 5}, 1.0);
    const Tensor<double> w({1, 1, 3, 3}, 1.0);
    const Tensor<double> b({1}, 0.0);
    const auto y = nn::conv2d_forward(x, w, b);
    ASSERT_EQ(y.shape, (std::vector<int>{1, 3, 3}));
    for (double v : y.data) EXPECT_DOUBLE_EQ(v, 9.0);
}

TEST(Conv, BiasIsAddedPerChannel) {
    const Tensor<double> x({1, 2, 2}, 0.0);
    const Tensor<double> w({2, 1, 1, 1}, 1.0);
    Tensor<double> b({2});
    b[0] = 1.5;
    b[1] = -2.0;
    const auto y = nn::conv2d_forward(x, w, b);
    for (int i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(y[i], 1.5);
        EXPECT_DOUBLE_EQ(y[4 + i], -2.0);
    }
}

TEST(Conv, ShapeMismatchThrows) {
    const Tensor<double> x({2, 5, 5});
    const Tensor<double> b({1});
    EXPECT_THROW(nn::conv2d_forward(x, Tensor<double>({1, 3, 3, 3}), b), ShapeError);
    EXPECT_THROW(nn::conv2d_forward(x, Tensor<double>({1, 2, 6, 6}), b), ShapeError);
    EXPECT_THROW(nn::conv2d_forward(x, Tensor<double>({1, 2, 3, 3}), Tensor<double>({2})), ShapeError);
}

TEST(Pool, PicksMaximum) {
    Tensor<double> x({1, 2, 2});
    x[0] = 1;
    x[1] = 2;
    x[2] = 3;
    x[3] = 4;
    const auto r = nn::maxpool2x2_forward(x);
    ASSERT_EQ(r.output.shape, (std::vector<int>{1, 1, 1}));
    EXPECT_DOUBLE_EQ(r.output[0], 4.0);
    EXPECT_EQ(r.argmax[0], 3u);
}

TEST(Pool, TiesRouteGradientToFirstElement) {
    const Tensor<double> x({1, 2, 2}, 7.0);
    const auto r = nn::maxpool2x2_forward(x);
    EXPECT_EQ(r.argmax[0], 0u);
    const auto g = nn::maxpool2x2_backward(x.shape, r.argmax, Tensor<double>({1, 1, 1}, 1.0));
    EXPECT_DOUBLE_EQ(g[0], 1.0);
    EXPECT_DOUBLE_EQ(g[1] + g[2] + g[3], 0.0);
}

TEST(Pool, OddSizesAreFloored) {
    const auto r = nn::maxpool2x2_forward(Tensor<double>({3, 7, 5}));
    EXPECT_EQ(r.output.shape, (std::vector<int>{3, 3, 2}));
}

TEST(Relu, Values) {
    Tensor<double> x({2});
    x[0] = -1.0;
    x[1] = 2.0;
    const auto y = nn::relu_forward(x);
    EXPECT_DOUBLE_EQ(y[0], 0.0);
    EXPECT_DOUBLE_EQ(y[1], 2.0);
}

TEST(Fc, IdentityWeights) {
    Tensor<double> x({3});
    x[0] = 1;
    x[1] = -2;
    x[2] = 3;
    Tensor<double> w({3, 3});
    for (int i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
    const auto y = nn::fc_forward(x, w, Tensor<double>({3}));
    EXPECT_EQ(y.data, x.data);
    EXPECT_THROW(nn::fc_forward(Tensor<double>({4}), w, Tensor<double>({3})), ShapeError);
}

TEST(Flatten, KeepsOrder) {
    Tensor<double> x({2, 2, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
    const auto f = nn::flatten(x);
    EXPECT_EQ(f.shape, (std::vector<int>{8}));
    EXPECT_EQ(f.data, x.data);
}

TEST(Loss, HuberValues) {
    EXPECT_DOUBLE_EQ(nn::huber_loss(0.0, 0.0, 0.4).loss, 0.0);
    EXPECT_DOUBLE_EQ(nn::huber_loss(0.0, 0.0, 0.4).grad, 0.0);
    const auto at_delta = nn::huber_loss(1.4, 1.0, 0.4);
    EXPECT_NEAR(at_delta.loss, 0.08, 1e-12);
    EXPECT_NEAR(at_delta.grad, 0.4, 1e-12);
    const auto beyond = nn::huber_loss(2.0, 1.0, 0.4);
    EXPECT_NEAR(beyond.loss, 0.32, 1e-12);
    EXPECT_NEAR(beyond.grad, 0.4, 1e-12);
    EXPECT_NEAR(nn::huber_loss(0.0, 1.0, 0.4).grad, -0.4, 1e-12);
    EXPECT_THROW(nn::huber_loss(0.0, 0.0, 0.0), ConfigError);
}

TEST(Loss, MseValues) {
    const auto v = nn::mse_loss(1.5, 1.0);
    EXPECT_DOUBLE_EQ(v.loss, 0.25);
    EXPECT_DOUBLE_EQ(v.grad, 1.0);
}

constexpr double kTol = 1e-4;

TEST(GradCheck, Conv) { EXPECT_LE(gradcheck::conv(20, 1), kTol); }
TEST(GradCheck, Pool) { EXPECT_LE(gradcheck::pool(20, 2), kTol); }
TEST(GradCheck, Relu) { EXPECT_LE(gradcheck::relu(20, 3), kTol); }
TEST(GradCheck, Fc) { EXPECT_LE(gradcheck::fc(20, 4), kTol); }
TEST(GradCheck, Huber) { EXPECT_LE(gradcheck::loss(20, 5, true), kTol); }
TEST(GradCheck, Mse) { EXPECT_LE(gradcheck::loss(20, 6, false), kTol); }

}  // namespace
}  // namespace curvepose
