// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mbkt/autodiff.hpp"
#include "mbkt/losses.hpp"
#include "mbkt/model.hpp"

namespace mbkt {

/// Finite-difference verification of every backward rule, op by op and
/// block by block. All checks run at 64-bit precision.

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0;
    bool pass = false;
};

namespace gradcheck_detail {

using P = Parameter<double>;

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Keep kinked ops (relu, abs) away from their non-differentiable point.
inline Tensor<double> random_tensor_away_from_zero(Shape shape, Rng& rng, double margin = 0.1) {
    Tensor<double> t = random_tensor(std::move(shape), rng);
    for (auto& v : t.data())
        if (v > -margin && v < margin) v = v < 0 ? v - margin : v + margin;
    return t;
}

/// Compare backward() gradients against central finite differences for
/// every listed input of one forward function. Returns the worst relative
/// error, with denominators clamped at 1.
inline double check_instance(const std::vector<P*>& inputs,
                             const std::function<Var<double>(Graph<double>&)>& forward,
                             double eps = 1e-5) {
    for (P* p : inputs) p->zero_grad();
    {
        Graph<double> g;
        Var<double> loss = forward(g);
        g.backward(loss);
    }
    double worst = 0;
    for (P* p : inputs) {
        const Tensor<double> analytic = p->grad;
        Tensor<double> probe = p->value;
        const Tensor<double> fd = finite_difference_grad(
            [&](const Tensor<double>& x) {
                p->value = x;
                Graph<double> g;
                const double v = forward(g).value().at(0);
                return v;
            },
            probe, eps);
        p->value = probe;
        for (std::int64_t i = 0; i < fd.numel(); ++i) {
            const double a = analytic.at(i), b = fd.at(i);
            const double rel = std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

/// Scalar-ize an arbitrary op output: sum of output ∘ fixed random weights,
/// so gradients are non-uniform.
inline Var<double> weighted_sum(Var<double> out, Rng& rng) {
    Graph<double>& g = *out.g;
    Tensor<double> w(out.value().shape());
    for (auto& v : w.data()) v = rng.uniform(-1.0, 1.0);
    return sum_all(mul(out, g.constant(std::move(w))));
}

}  // namespace gradcheck_detail

struct GradCheckOptions {
    std::string filter;       // substring match on check names; empty = all
    int rounds = 10;          // random instances per check
    double tolerance = 1e-4;
    bool corrupt_backward = false;  // test fixture: break one rule on purpose
};

inline std::vector<GradCheckResult> run_gradchecks(const GradCheckOptions& opt = {}) {
    using namespace gradcheck_detail;

    struct Check {
        std::string name;
        std::function<double(std::uint64_t)> run;  // seed → max rel err
    };
    std::vector<Check> checks;

    auto add_check = [&](std::string name, std::function<double(std::uint64_t)> fn) {
        checks.push_back({std::move(name), std::move(fn)});
    };

    // --- primitive ops -----------------------------------------------------
    add_check("matmul", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({3, 4}, rng));
        P b("b", random_tensor({4, 2}, rng));
        return check_instance({&a, &b}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(matmul(g.param(a), g.param(b)), wr);
        });
    });
    add_check("add_broadcast", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({3, 4}, rng));
        P b("b", random_tensor({4}, rng));
        return check_instance({&a, &b}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(add(g.param(a), g.param(b)), wr);
        });
    });
    add_check("sub", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({2, 5}, rng));
        P b("b", random_tensor({2, 5}, rng));
        return check_instance({&a, &b}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(sub(g.param(a), g.param(b)), wr);
        });
    });
    add_check("mul_broadcast", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({3, 4}, rng));
        P b("b", random_tensor({1, 4}, rng));
        return check_instance({&a, &b}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(mul(g.param(a), g.param(b)), wr);
        });
    });
    add_check("square", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({4, 3}, rng));
        return check_instance({&a}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(square(g.param(a)), wr);
        });
    });
    add_check("abs", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor_away_from_zero({4, 3}, rng));
        return check_instance({&a}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(abs_val(g.param(a)), wr);
        });
    });
    if (!opt.corrupt_backward) {
        add_check("relu", [](std::uint64_t seed) {
            Rng rng(seed);
            P a("a", random_tensor_away_from_zero({4, 3}, rng));
            return check_instance({&a}, [&](Graph<double>& g) {
                Rng wr(seed + 1);
                return weighted_sum(relu(g.param(a)), wr);
            });
        });
    } else {
        // Deliberately wrong rule (derivative 1 everywhere); the harness
        // must flag it.
        add_check("relu", [](std::uint64_t seed) {
            Rng rng(seed);
            P a("a", random_tensor_away_from_zero({4, 3}, rng));
            return check_instance({&a}, [&](Graph<double>& g) {
                Var<double> x = g.param(a);
                const Tensor<double>& xv = g.value(x.id);
                Tensor<double> out(xv.shape());
                for (std::int64_t i = 0; i < xv.numel(); ++i)
                    out.at(i) = xv.at(i) > 0 ? xv.at(i) : 0.0;
                Var<double> y = g.op(
                    std::move(out), {x.id},
                    [xid = x.id](Graph<double>& gr, std::int64_t self) {
                        gr.accum_grad(xid, gr.grad(self));
                    },
                    "relu_corrupted");
                Rng wr(seed + 1);
                return weighted_sum(y, wr);
            });
        });
    }
    add_check("gelu", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({4, 3}, rng));
        return check_instance({&a}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(gelu(g.param(a)), wr);
        });
    });
    add_check("scale", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({3, 3}, rng));
        return check_instance({&a}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(scale(g.param(a), 0.37), wr);
        });
    });
    add_check("transpose", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({3, 5}, rng));
        return check_instance({&a}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(transpose(g.param(a)), wr);
        });
    });
    add_check("softmax_rows", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({3, 5}, rng, -3.0, 3.0));
        return check_instance({&a}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(softmax_rows(g.param(a)), wr);
        });
    });
    add_check("concat", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({3, 2}, rng));
        P b("b", random_tensor({3, 4}, rng));
        return check_instance({&a, &b}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(concat<double>({g.param(a), g.param(b)}, 1), wr);
        });
    });
    add_check("slice_cols", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({3, 6}, rng));
        return check_instance({&a}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(slice_cols(g.param(a), 2, 3), wr);
        });
    });
    add_check("mean_rows", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({5, 3}, rng));
        return check_instance({&a}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(mean_rows(g.param(a)), wr);
        });
    });
    add_check("mean_all", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({4, 4}, rng));
        return check_instance({&a},
                              [&](Graph<double>& g) { return mean_all(square(g.param(a))); });
    });
    add_check("sum_all", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({4, 4}, rng));
        return check_instance({&a}, [&](Graph<double>& g) { return sum_all(square(g.param(a))); });
    });
    add_check("resample_down", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({7, 3}, rng));
        return check_instance({&a}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(resample(g.param(a), 4), wr);
        });
    });
    add_check("resample_up", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({3, 3}, rng));
        return check_instance({&a}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(resample(g.param(a), 8), wr);
        });
    });
    add_check("conv1d_same", [](std::uint64_t seed) {
        Rng rng(seed);
        P x("x", random_tensor({5, 3}, rng));
        P w("w", random_tensor({9, 4}, rng));
        P b("b", random_tensor({4}, rng));
        return check_instance({&x, &w, &b}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(conv1d_same(g.param(x), g.param(w), g.param(b), 3), wr);
        });
    });
    add_check("layer_norm", [](std::uint64_t seed) {
        Rng rng(seed);
        P x("x", random_tensor({4, 6}, rng));
        P gm("g", random_tensor({6}, rng, 0.5, 1.5));
        P bt("b", random_tensor({6}, rng));
        return check_instance({&x, &gm, &bt}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(layer_norm(g.param(x), g.param(gm), g.param(bt), 1e-5), wr);
        });
    });
    add_check("dropout", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({4, 4}, rng));
        return check_instance({&a}, [&](Graph<double>& g) {
            Rng drop_rng(seed + 7);  // same mask on every forward rebuild
            Rng wr(seed + 1);
            return weighted_sum(dropout(g.param(a), 0.4, drop_rng), wr);
        });
    });
    add_check("cross_entropy", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({7}, rng, -2.0, 2.0));
        const std::int64_t label = static_cast<std::int64_t>(seed % 7);
        return check_instance(
            {&a}, [&](Graph<double>& g) { return cross_entropy_logits(g.param(a), label); });
    });
    add_check("sigmoid_bce", [](std::uint64_t seed) {
        Rng rng(seed);
        P a("a", random_tensor({4}, rng, -2.0, 2.0));
        std::vector<int> flags(4);
        for (auto& f : flags) f = rng.uniform() < 0.5 ? 0 : 1;
        return check_instance(
            {&a}, [&](Graph<double>& g) { return sigmoid_bce_logits(g.param(a), flags); });
    });

    // --- composite blocks ---------------------------------------------------
    add_check("scaled_dot_attention", [](std::uint64_t seed) {
        Rng rng(seed);
        P q("q", random_tensor({3, 4}, rng));
        P k("k", random_tensor({5, 4}, rng));
        P v("v", random_tensor({5, 2}, rng));
        return check_instance({&q, &k, &v}, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(scaled_dot_attention(g.param(q), g.param(k), g.param(v)), wr);
        });
    });
    add_check("multi_head_attention", [](std::uint64_t seed) {
        Rng rng(seed);
        MhaParams<double> p("mha", 8, rng);
        P tgt("tgt", random_tensor({3, 8}, rng));
        P src("src", random_tensor({5, 8}, rng));
        std::vector<P*> inputs{&tgt, &src};
        p.visit([&](P& q) { inputs.push_back(&q); });
        return check_instance(inputs, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(multi_head_attention(g.param(tgt), g.param(src), p, 2), wr);
        });
    });
    add_check("transformer_layer_stack", [](std::uint64_t seed) {
        Rng rng(seed);
        TransformerStack<double> stack("stack", 3, 6, 2, rng);
        P x("x", random_tensor({4, 6}, rng));
        std::vector<P*> inputs{&x};
        stack.visit([&](P& q) { inputs.push_back(&q); });
        return check_instance(inputs, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(stack_apply(g.param(x), stack, 2), wr);
        });
    });
    add_check("encoder", [](std::uint64_t seed) {
        Rng rng(seed);
        EncoderParams<double> enc("enc", 6, 4, 2, rng);
        P x("x", random_tensor({5, 6}, rng));
        std::vector<P*> inputs{&x};
        enc.visit([&](P& q) { inputs.push_back(&q); });
        return check_instance(inputs, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(encode_modality(g.param(x), enc, 2), wr);
        });
    });
    add_check("cross_modal_block", [](std::uint64_t seed) {
        Rng rng(seed);
        MhaParams<double> p("cm", 6, rng);
        P tgt("tgt", random_tensor({4, 6}, rng));
        P src("src", random_tensor({3, 6}, rng));
        std::vector<P*> inputs{&tgt, &src};
        p.visit([&](P& q) { inputs.push_back(&q); });
        return check_instance(inputs, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(cross_modal_block(g.param(tgt), g.param(src), p, 2), wr);
        });
    });
    add_check("transfer_net", [](std::uint64_t seed) {
        Rng rng(seed);
        TransferNetParams<double> net("theta", 4, 3, 2, rng);
        P x("x", random_tensor({5, 4}, rng));
        std::vector<P*> inputs{&x};
        net.visit([&](P& q) { inputs.push_back(&q); });
        return check_instance(inputs, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(transfer_apply(g.param(x), net, 2, 3), wr);
        });
    });
    add_check("delta_fusion", [](std::uint64_t seed) {
        Rng rng(seed);
        DeltaNetParams<double> net("delta", 4, 3, 2, rng);
        P a("a", random_tensor({3, 4}, rng));
        P b("b", random_tensor({3, 4}, rng));
        std::vector<P*> inputs{&a, &b};
        net.visit([&](P& q) { inputs.push_back(&q); });
        return check_instance(inputs, [&](Graph<double>& g) {
            Rng wr(seed + 1);
            return weighted_sum(fuse_reconstruction(g.param(a), g.param(b), net, 2), wr);
        });
    });
    add_check("full_model", [](std::uint64_t seed) {
        Rng rng(seed);
        ModelConfig cfg;
        cfg.d_model = 4;
        cfg.heads = 2;
        cfg.ffn_ratio = 2;
        cfg.d_v = 2;
        cfg.d_l = 3;
        cfg.d_a = 2;
        cfg.mode = ModalityMode::MissingAudio;
        ModelParams<double> params(cfg, rng);

        SyntheticSpec spec;
        spec.n_samples = 8;
        spec.d_v = 2;
        spec.d_l = 3;
        spec.d_a = 2;
        spec.latent_k = 2;
        spec.t_v_min = spec.t_l_min = spec.t_a_min = 2;
        spec.t_v_max = spec.t_l_max = spec.t_a_max = 3;
        const Dataset ds = generate_synthetic(spec, seed);
        const Sample& sample = ds.samples[seed % ds.samples.size()];

        std::vector<P*> inputs;
        params.visit([&](P& q) { inputs.push_back(&q); });
        return check_instance(inputs, [&](Graph<double>& g) {
            ForwardOptions<double> fo;
            fo.training = true;
            ForwardOutput<double> out = model_forward(g, params, sample, fo);
            Var<double> pred = prediction_loss(out.logits, sample, LabelMode::SevenClass);
            return total_loss(pred, out.cons_v, out.cons_l, 1.0, 1.0);
        });
    });

    std::vector<GradCheckResult> results;
    for (const auto& check : checks) {
        if (!opt.filter.empty() && check.name.find(opt.filter) == std::string::npos) continue;
        GradCheckResult r;
        r.name = check.name;
        for (int round = 0; round < opt.rounds; ++round)
            r.max_rel_err = std::max(r.max_rel_err,
                                     check.run(1000 + static_cast<std::uint64_t>(round) * 37));
        r.pass = r.max_rel_err < opt.tolerance;
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace mbkt
