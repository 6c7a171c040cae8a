// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mbkt/autodiff.hpp"
#include "mbkt/errors.hpp"
#include "mbkt/rng.hpp"
#include "mbkt/tensor.hpp"

namespace mbkt {

inline constexpr double kLayerNormEps = 1e-5;

/// Attention geometry. Head width divides the model width exactly.
struct AttentionConfig {
    std::int64_t d_model = 32;
    std::int64_t heads = 4;

    AttentionConfig() = default;
    AttentionConfig(std::int64_t d, std::int64_t h) : d_model(d), heads(h) {
        if (h < 1 || d % h != 0)
            throw ConfigError("heads (" + std::to_string(h) + ") must divide d_model (" +
                              std::to_string(d) + ")");
    }
    std::int64_t d_k() const { return d_model / heads; }
    double scale() const { return 1.0 / std::sqrt(static_cast<double>(d_k())); }
};

/// Fully connected layer. Weights start uniform in ±sqrt(6/(fan_in+fan_out)),
/// biases at zero.
template <class Real>
struct Linear {
    Parameter<Real> weight;  // [d_in, d_out]
    Parameter<Real> bias;    // [d_out]

    Linear() = default;
    Linear(const std::string& prefix, std::int64_t d_in, std::int64_t d_out, Rng& rng)
        : weight(prefix + ".weight", Tensor<Real>({d_in, d_out})),
          bias(prefix + ".bias", Tensor<Real>({d_out})) {
        const double limit = std::sqrt(6.0 / static_cast<double>(d_in + d_out));
        for (auto& w : weight.value.data()) w = static_cast<Real>(rng.uniform(-limit, limit));
    }

    template <class V>
    void visit(V&& v) {
        v(weight);
        v(bias);
    }
};

template <class Real>
Var<Real> linear_apply(Var<Real> x, Linear<Real>& lin) {
    Graph<Real>& g = *x.g;
    return add(matmul(x, g.param(lin.weight)), g.param(lin.bias));
}

template <class Real>
struct LayerNormParams {
    Parameter<Real> gamma;
    Parameter<Real> beta;

    LayerNormParams() = default;
    LayerNormParams(const std::string& prefix, std::int64_t d)
        : gamma(prefix + ".gamma", Tensor<Real>::ones({d})),
          beta(prefix + ".beta", Tensor<Real>({d})) {}

    template <class V>
    void visit(V&& v) {
        v(gamma);
        v(beta);
    }
};

template <class Real>
Var<Real> layer_norm_apply(Var<Real> x, LayerNormParams<Real>& ln) {
    Graph<Real>& g = *x.g;
    return layer_norm(x, g.param(ln.gamma), g.param(ln.beta), static_cast<Real>(kLayerNormEps));
}

/// Sinusoidal position table: sin on even dims, cos on odd dims, base 10000.
template <class Real>
Tensor<Real> positional_encoding(std::int64_t t, std::int64_t d) {
    if (t < 1 || d < 1) throw ContractError("positional_encoding needs T, d >= 1");
    Tensor<Real> pe({t, d});
    for (std::int64_t pos = 0; pos < t; ++pos) {
        for (std::int64_t j = 0; j < d; ++j) {
            const std::int64_t pair = j - (j % 2);
            const double freq =
                std::pow(10000.0, -static_cast<double>(pair) / static_cast<double>(d));
            const double angle = static_cast<double>(pos) * freq;
            pe.at(pos, j) = static_cast<Real>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return pe;
}

/// softmax(Q Kᵀ / sqrt(d_k)) V with full visibility (no mask).
template <class Real>
Var<Real> scaled_dot_attention(Var<Real> q, Var<Real> k, Var<Real> v) {
    const auto& qs = q.value().shape();
    const auto& ks = k.value().shape();
    const auto& vs = v.value().shape();
    if (qs.size() != 2 || ks.size() != 2 || vs.size() != 2 || qs[1] != ks[1] || ks[0] != vs[0])
        throw DimensionError("scaled_dot_attention shapes " + shape_str(qs) + ", " + shape_str(ks) +
                             ", " + shape_str(vs) + " are inconsistent");
    const Real inv_sqrt_dk = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(qs[1])));
    Var<Real> scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    return matmul(softmax_rows(scores), v);
}

template <class Real>
struct MhaParams {
    Linear<Real> wq, wk, wv, wo;

    MhaParams() = default;
    MhaParams(const std::string& prefix, std::int64_t d, Rng& rng)
        : wq(prefix + ".wq", d, d, rng),
          wk(prefix + ".wk", d, d, rng),
          wv(prefix + ".wv", d, d, rng),
          wo(prefix + ".wo", d, d, rng) {}

    template <class V>
    void visit(V&& v) {
        wq.visit(v);
        wk.visit(v);
        wv.visit(v);
        wo.visit(v);
    }
};

/// Multi-head attention. Queries come from `target`, keys and values from
/// `source`; self-attention is the special case source == target.
template <class Real>
Var<Real> multi_head_attention(Var<Real> target, Var<Real> source, MhaParams<Real>& p,
                               std::int64_t heads) {
    const std::int64_t d = target.value().dim(1);
    AttentionConfig cfg(d, heads);
    Var<Real> q = linear_apply(target, p.wq);
    Var<Real> k = linear_apply(source, p.wk);
    Var<Real> v = linear_apply(source, p.wv);

    std::vector<Var<Real>> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    const std::int64_t dk = cfg.d_k();
    for (std::int64_t h = 0; h < heads; ++h) {
        Var<Real> qh = slice_cols(q, h * dk, dk);
        Var<Real> kh = slice_cols(k, h * dk, dk);
        Var<Real> vh = slice_cols(v, h * dk, dk);
        head_outs.push_back(scaled_dot_attention(qh, kh, vh));
    }
    Var<Real> merged = heads == 1 ? head_outs.front() : concat(head_outs, 1);
    return linear_apply(merged, p.wo);
}

template <class Real>
struct TransformerLayerParams {
    MhaParams<Real> mha;
    Linear<Real> ff1, ff2;
    LayerNormParams<Real> ln1, ln2;

    TransformerLayerParams() = default;
    TransformerLayerParams(const std::string& prefix, std::int64_t d, std::int64_t ffn_ratio,
                           Rng& rng)
        : mha(prefix + ".mha", d, rng),
          ff1(prefix + ".ff1", d, d * ffn_ratio, rng),
          ff2(prefix + ".ff2", d * ffn_ratio, d, rng),
          ln1(prefix + ".ln1", d),
          ln2(prefix + ".ln2", d) {}

    template <class V>
    void visit(V&& v) {
        mha.visit(v);
        ff1.visit(v);
        ff2.visit(v);
        ln1.visit(v);
        ln2.visit(v);
    }
};

/// Pre-norm transformer layer:
///   x + MHA(LN1(x), LN1(context)), then x + FFN(LN2(x)).
/// `context == x` gives the self-attention layer.
template <class Real>
Var<Real> transformer_layer(Var<Real> x, Var<Real> context, TransformerLayerParams<Real>& p,
                            std::int64_t heads, double dropout_rate = 0.0, Rng* rng = nullptr) {
    Var<Real> xn = layer_norm_apply(x, p.ln1);
    Var<Real> cn = context.id == x.id ? xn : layer_norm_apply(context, p.ln1);
    Var<Real> attended = multi_head_attention(xn, cn, p.mha, heads);
    if (dropout_rate > 0.0) attended = dropout(attended, dropout_rate, *rng);
    Var<Real> h = add(x, attended);

    Var<Real> hn = layer_norm_apply(h, p.ln2);
    Var<Real> ff = linear_apply(gelu(linear_apply(hn, p.ff1)), p.ff2);
    if (dropout_rate > 0.0) ff = dropout(ff, dropout_rate, *rng);
    return add(h, ff);
}

/// A stack of self-attention transformer layers sharing one geometry.
template <class Real>
struct TransformerStack {
    std::vector<TransformerLayerParams<Real>> layers;

    TransformerStack() = default;
    TransformerStack(const std::string& prefix, std::int64_t depth, std::int64_t d,
                     std::int64_t ffn_ratio, Rng& rng) {
        layers.reserve(static_cast<std::size_t>(depth));
        for (std::int64_t i = 0; i < depth; ++i)
            layers.emplace_back(prefix + ".layer" + std::to_string(i), d, ffn_ratio, rng);
    }

    template <class V>
    void visit(V&& v) {
        for (auto& l : layers) l.visit(v);
    }
};

template <class Real>
Var<Real> stack_apply(Var<Real> x, TransformerStack<Real>& stack, std::int64_t heads,
                      double dropout_rate = 0.0, Rng* rng = nullptr) {
    for (auto& layer : stack.layers) x = transformer_layer(x, x, layer, heads, dropout_rate, rng);
    return x;
}

}  // namespace mbkt
