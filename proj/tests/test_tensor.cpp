// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#include <gtest/gtest.h>

#include "mbkt/autodiff.hpp"
#include "mbkt/tensor.hpp"
#include "support/oracles.hpp"

using namespace mbkt;

namespace {

Tensor<double> eval_matmul(const Tensor<double>& a, const Tensor<double>& b) {
    Graph<double> g;
    return matmul(g.input(a), g.input(b)).value();
}

}  // namespace

TEST(Tensor, ShapeInvariants) {
    Tensor<double> t({2, 3});
    EXPECT_EQ(t.numel(), 6);
    EXPECT_EQ(t.rank(), 2);
    EXPECT_THROW(Tensor<double>({2, 0}), DimensionError);
    EXPECT_THROW(Tensor<double>({2, 3}, {1.0, 2.0}), DimensionError);
}

TEST(Matmul, IdentityCase) {
    const auto i2 = Tensor<double>::eye(2);
    const auto a = Tensor<double>::matrix({{1, 2}, {3, 4}});
    const auto r = eval_matmul(i2, a);
    EXPECT_EQ(r.data(), a.data());
}

TEST(Matmul, ZeroAnnihilator) {
    const auto z = Tensor<double>::zeros({2, 3});
    Tensor<double> b({3, 4});
    for (std::int64_t i = 0; i < b.numel(); ++i) b.at(i) = static_cast<double>(i) - 5.0;
    const auto r = eval_matmul(z, b);
    ASSERT_EQ(r.shape(), (Shape{2, 4}));
    for (std::int64_t i = 0; i < r.numel(); ++i) EXPECT_EQ(r.at(i), 0.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
    const auto a = Tensor<double>::matrix({{1, 2}, {3, 4}});
    const auto b = Tensor<double>::matrix({{5, 6}, {7, 8}});
    const auto r = eval_matmul(a, b);
    EXPECT_DOUBLE_EQ(r.at(0, 0), 19.0);
    EXPECT_DOUBLE_EQ(r.at(0, 1), 22.0);
    EXPECT_DOUBLE_EQ(r.at(1, 0), 43.0);
    EXPECT_DOUBLE_EQ(r.at(1, 1), 50.0);

    Rng rng(3);
    for (int round = 0; round < 5; ++round) {
        Tensor<double> x({3, 4}), y({4, 2});
        for (auto& v : x.data()) v = rng.uniform(-2, 2);
        for (auto& v : y.data()) v = rng.uniform(-2, 2);
        oracle::Mat xo(3, std::vector<double>(4)), yo(4, std::vector<double>(2));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) xo[i][j] = x.at(i, j);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 2; ++j) yo[i][j] = y.at(i, j);
        const auto want = oracle::matmul(xo, yo);
        const auto got = eval_matmul(x, y);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j) EXPECT_NEAR(got.at(i, j), want[i][j], 1e-12);
    }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    Graph<double> g;
    auto a = g.input(Tensor<double>::zeros({2, 3}));
    auto b = g.input(Tensor<double>::zeros({4, 2}));
    try {
        matmul(a, b);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(2x3)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(4x2)"), std::string::npos) << msg;
    }
}

TEST(SoftmaxRows, UniformLogits) {
    Graph<double> g;
    auto y = softmax_rows(g.input(Tensor<double>::matrix({{0, 0, 0}})));
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(y.value().at(0, j), 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxRows, DominantLogit) {
    Graph<double> g;
    auto y = softmax_rows(g.input(Tensor<double>::matrix({{100, 0, 0}})));
    EXPECT_NEAR(y.value().at(0, 0), 1.0, 1e-6);
    EXPECT_NEAR(y.value().at(0, 1), 0.0, 1e-6);
    EXPECT_NEAR(y.value().at(0, 2), 0.0, 1e-6);
}

TEST(SoftmaxRows, MatchesExpNormalizeOracle) {
    Graph<double> g;
    auto y = softmax_rows(g.input(Tensor<double>::matrix({{1, 2, 3}})));
    const auto want = oracle::softmax({1, 2, 3});
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(y.value().at(0, j), want[static_cast<std::size_t>(j)], 1e-12);
    // frozen reference values
    EXPECT_NEAR(y.value().at(0, 0), 0.09003, 1e-5);
    EXPECT_NEAR(y.value().at(0, 1), 0.24473, 1e-5);
    EXPECT_NEAR(y.value().at(0, 2), 0.66524, 1e-5);
}

TEST(SoftmaxRows, RowsSumToOneAndShiftInvariant) {
    Rng rng(11);
    for (int round = 0; round < 10; ++round) {
        Tensor<double> x({4, 6});
        for (auto& v : x.data()) v = rng.uniform(-5, 5);
        Graph<double> g;
        const auto y = softmax_rows(g.input(x)).value();
        for (int i = 0; i < 4; ++i) {
            double s = 0;
            for (int j = 0; j < 6; ++j) s += y.at(i, j);
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
        Tensor<double> shifted = x;
        const double c = rng.uniform(-10, 10);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 6; ++j) shifted.at(i, j) += c;
        Graph<double> g2;
        const auto y2 = softmax_rows(g2.input(shifted)).value();
        for (std::int64_t i = 0; i < y.numel(); ++i)
            EXPECT_NEAR(y.at(i), y2.at(i), 1e-9);
    }
}

TEST(Elementwise, AddIdentityAndRelu) {
    Graph<double> g;
    auto x = g.input(Tensor<double>::matrix({{1, -2}, {3, 4}}));
    auto y = add(x, g.input(Tensor<double>::zeros({2, 2})));
    EXPECT_EQ(y.value().data(), x.value().data());

    auto r = relu(g.input(Tensor<double>::row({-1, 0, 2})));
    EXPECT_EQ(r.value().data(), (std::vector<double>{0, 0, 2}));
}

TEST(Elementwise, SquareValueAndGrad) {
    Graph<double> g;
    Parameter<double> p("x", Tensor<double>::row({3, -2}));
    auto y = square(g.param(p));
    EXPECT_EQ(y.value().data(), (std::vector<double>{9, 4}));
    g.backward(sum_all(y));  // grad seed [1,1]
    EXPECT_DOUBLE_EQ(p.grad.at(0), 6.0);
    EXPECT_DOUBLE_EQ(p.grad.at(1), -4.0);
}

TEST(Elementwise, BroadcastRejectsIncompatible) {
    Graph<double> g;
    auto a = g.input(Tensor<double>::zeros({2, 3}));
    auto b = g.input(Tensor<double>::zeros({2, 4}));
    EXPECT_THROW(add(a, b), DimensionError);
}

TEST(Concat, SingleOperandUnchanged) {
    Graph<double> g;
    Tensor<double> a({2, 3});
    for (std::int64_t i = 0; i < a.numel(); ++i) a.at(i) = static_cast<double>(i);
    auto r = concat<double>({g.input(a)}, 1);
    EXPECT_EQ(r.value().data(), a.data());
}

TEST(Concat, BlockLayout) {
    Graph<double> g;
    auto r = concat<double>({g.input(Tensor<double>::ones({2, 1})),
                             g.input(Tensor<double>::zeros({2, 2}))},
                            1);
    EXPECT_EQ(r.value().data(), (std::vector<double>{1, 0, 0, 1, 0, 0}));
}

TEST(Concat, OffAxisMismatch) {
    Graph<double> g;
    EXPECT_THROW(concat<double>({g.input(Tensor<double>::zeros({2, 3})),
                                 g.input(Tensor<double>::zeros({3, 3}))},
                                1),
                 DimensionError);
}

TEST(Concat, SplitRoundTripIsBitwise) {
    Rng rng(5);
    for (int round = 0; round < 20; ++round) {
        const std::int64_t k1 = rng.uniform_int(1, 5);
        const std::int64_t k2 = rng.uniform_int(1, 5);
        Tensor<double> a({3, k1}), b({3, k2});
        for (auto& v : a.data()) v = rng.uniform(-1, 1);
        for (auto& v : b.data()) v = rng.uniform(-1, 1);
        const auto joined = concat_values<double>({a, b}, 1);
        const auto parts = split_values(joined, 1, {k1, k2});
        ASSERT_EQ(parts.size(), 2u);
        EXPECT_EQ(parts[0].data(), a.data());  // bitwise
        EXPECT_EQ(parts[1].data(), b.data());
    }
}

TEST(Determinism, SameSeedSameValues) {
    auto build = [] {
        Rng rng(99);
        Tensor<double> t({4, 4});
        for (auto& v : t.data()) v = rng.normal();
        return t;
    };
    const auto a = build();
    const auto b = build();
    EXPECT_EQ(a.data(), b.data());  // bitwise
}

TEST(DebugChecks, NonFiniteDetected) {
    debug_checks() = true;
    Graph<double> g;
    Tensor<double> bad({2});
    bad.at(0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(g.input(bad), NumericError);
    debug_checks() = false;
    Graph<double> g2;
    EXPECT_NO_THROW(g2.input(bad));
}
