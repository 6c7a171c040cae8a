// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#include <gtest/gtest.h>

#include <cmath>

#include "mbkt/train.hpp"
#include "mbkt/transfer.hpp"

using namespace mbkt;

TEST(ConsistencyLoss, IdenticalInputsGiveExactZero) {
    Rng rng(1);
    Tensor<double> x({3, 4});
    for (auto& v : x.data()) v = rng.uniform(-2, 2);
    Graph<double> g;
    auto a = g.input(x);
    auto b = g.input(x);
    EXPECT_EQ(consistency_loss(a, b, ConsistencyKind::L2).value().at(0), 0.0);
    EXPECT_EQ(consistency_loss(a, b, ConsistencyKind::L1).value().at(0), 0.0);
}

TEST(ConsistencyLoss, ConstantOffset) {
    const double c = 0.75;
    Tensor<double> x = Tensor<double>::full({4, 5}, 1.25);
    Tensor<double> y = Tensor<double>::full({4, 5}, 1.25 + c);
    Graph<double> g;
    EXPECT_NEAR(consistency_loss(g.input(y), g.input(x), ConsistencyKind::L2).value().at(0), c * c,
                1e-12);
    EXPECT_NEAR(consistency_loss(g.input(y), g.input(x), ConsistencyKind::L1).value().at(0), c,
                1e-12);
}

TEST(ConsistencyLoss, MatchesHandSummedOracle) {
    Rng rng(2);
    Tensor<double> a({2, 3}), b({2, 3});
    for (auto& v : a.data()) v = rng.uniform(-1, 1);
    for (auto& v : b.data()) v = rng.uniform(-1, 1);
    double l2 = 0, l1 = 0;
    for (std::int64_t i = 0; i < 6; ++i) {
        const double d = a.at(i) - b.at(i);
        l2 += d * d;
        l1 += std::abs(d);
    }
    l2 /= 6;
    l1 /= 6;
    Graph<double> g;
    EXPECT_NEAR(consistency_loss(g.input(a), g.input(b), ConsistencyKind::L2).value().at(0), l2,
                1e-9);
    EXPECT_NEAR(consistency_loss(g.input(a), g.input(b), ConsistencyKind::L1).value().at(0), l1,
                1e-9);
}

TEST(ConsistencyLoss, SymmetryAndNonnegativity) {
    Rng rng(3);
    for (int round = 0; round < 10; ++round) {
        Tensor<double> a({3, 3}), b({3, 3});
        for (auto& v : a.data()) v = rng.uniform(-2, 2);
        for (auto& v : b.data()) v = rng.uniform(-2, 2);
        Graph<double> g;
        for (const auto kind : {ConsistencyKind::L1, ConsistencyKind::L2}) {
            const double ab = consistency_loss(g.input(a), g.input(b), kind).value().at(0);
            const double ba = consistency_loss(g.input(b), g.input(a), kind).value().at(0);
            EXPECT_GE(ab, 0.0);
            EXPECT_DOUBLE_EQ(ab, ba);
        }
    }
}

TEST(ConsistencyLoss, ShapeMismatchRejected) {
    Graph<double> g;
    auto a = g.input(Tensor<double>::zeros({2, 3}));
    auto b = g.input(Tensor<double>::zeros({3, 3}));
    EXPECT_THROW(consistency_loss(a, b, ConsistencyKind::L2), DimensionError);
}

TEST(TransferNet, OutputShapeIsCanonicalLength) {
    Rng rng(4);
    TransferNetParams<double> theta("theta", 6, 3, 2, rng);
    for (const std::int64_t t_in : {1, 4, 9}) {
        Tensor<double> f({t_in, 6});
        for (auto& v : f.data()) v = rng.uniform(-1, 1);
        Graph<double> g;
        const auto out = transfer_apply(g.input(f), theta, 2, 5).value();
        EXPECT_EQ(out.shape(), (Shape{5, 6}));
    }
}

TEST(TransferNet, ZeroOutputMapGivesZeroReconstruction) {
    Rng rng(5);
    TransferNetParams<double> theta("theta", 4, 3, 2, rng);
    for (auto& v : theta.out.weight.value.data()) v = 0;
    for (auto& v : theta.out.bias.value.data()) v = 0;
    Tensor<double> f({3, 4});
    for (auto& v : f.data()) v = rng.uniform(-1, 1);
    Graph<double> g;
    const auto out = transfer_apply(g.input(f), theta, 2, 6).value();
    for (std::int64_t i = 0; i < out.numel(); ++i) EXPECT_EQ(out.at(i), 0.0);
}

TEST(TransferNet, ThetaAndPhiAreIndependent) {
    Rng rng(6);
    TransferNetParams<double> theta("theta", 4, 3, 2, rng);
    TransferNetParams<double> phi("phi", 4, 3, 2, rng);
    Tensor<double> f({3, 4});
    for (auto& v : f.data()) v = rng.uniform(-1, 1);

    auto run_phi = [&] {
        Graph<double> g;
        return transfer_apply(g.input(f), phi, 2, 3).value();
    };
    const auto before = run_phi();
    theta.in.weight.value.at(0, 0) += 10.0;  // perturb theta only
    theta.stack.layers[1].mha.wq.weight.value.at(1, 1) -= 3.0;
    const auto after = run_phi();
    EXPECT_EQ(before.data(), after.data());  // bitwise
}

TEST(DeltaFusion, OutputShapeAndOrderSensitivity) {
    Rng rng(7);
    DeltaNetParams<double> delta("delta", 4, 3, 2, rng);
    Tensor<double> a({5, 4}), b({5, 4});
    for (auto& v : a.data()) v = rng.uniform(-1, 1);
    for (auto& v : b.data()) v = rng.uniform(-1, 1);
    Graph<double> g;
    const auto ab = fuse_reconstruction(g.input(a), g.input(b), delta, 2).value();
    EXPECT_EQ(ab.shape(), (Shape{5, 4}));
    const auto ba = fuse_reconstruction(g.input(b), g.input(a), delta, 2).value();
    double diff = 0;
    for (std::int64_t i = 0; i < ab.numel(); ++i)
        diff = std::max(diff, std::abs(ab.at(i) - ba.at(i)));
    EXPECT_GT(diff, 1e-6);  // concatenation is ordered
}

TEST(DeltaFusion, ShapeMismatchRejected) {
    Rng rng(8);
    DeltaNetParams<double> delta("delta", 4, 3, 2, rng);
    Graph<double> g;
    auto a = g.input(Tensor<double>::zeros({3, 4}));
    auto b = g.input(Tensor<double>::zeros({5, 4}));
    EXPECT_THROW(fuse_reconstruction(a, b, delta, 2), DimensionError);
}

// Training-signal end-to-end: 200 optimizer steps on a synthetic set where
// audio is a linear mix of vision and language must cut the summed
// consistency loss to below half its initial value, on at least 3 seeds.
TEST(TransferTraining, ConsistencyLossHalvesIn200Steps) {
    int successes = 0;
    for (const std::uint64_t seed : {11ull, 22ull, 33ull}) {
        SyntheticSpec spec;
        spec.n_samples = 8;
        spec.d_v = 4;
        spec.d_l = 5;
        spec.d_a = 3;
        spec.latent_k = 3;
        spec.noise = 0.05;
        spec.t_v_min = spec.t_l_min = spec.t_a_min = 3;
        spec.t_v_max = spec.t_l_max = spec.t_a_max = 4;
        const Dataset ds = generate_synthetic(spec, seed);

        TrainConfig cfg;
        cfg.model.d_model = 8;
        cfg.model.heads = 2;
        cfg.model.ffn_ratio = 2;
        cfg.model.mode = ModalityMode::MissingAudio;
        cfg.epochs = 200;
        cfg.batch_size = 8;  // full batch: one optimizer step per epoch
        cfg.lr = 1e-3;
        cfg.seed = seed;
        cfg.precision = "f64";

        const auto result = train<double>(cfg, ds);
        const double initial = result.log.front().loss_cons_v + result.log.front().loss_cons_l;
        const double final_loss = result.log.back().loss_cons_v + result.log.back().loss_cons_l;
        if (final_loss < 0.5 * initial) ++successes;
    }
    EXPECT_GE(successes, 3);
}
