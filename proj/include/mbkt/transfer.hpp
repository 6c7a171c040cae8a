// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <cstdint>
#include <string>

#include "mbkt/autodiff.hpp"
#include "mbkt/errors.hpp"
#include "mbkt/nn.hpp"

namespace mbkt {

/// Distance used to tie reconstructed audio features to the ground truth.
enum class ConsistencyKind { L1, L2 };

inline const char* consistency_name(ConsistencyKind k) {
    return k == ConsistencyKind::L1 ? "l1" : "l2";
}

inline ConsistencyKind parse_consistency(const std::string& s) {
    if (s == "l1" || s == "L1") return ConsistencyKind::L1;
    if (s == "l2" || s == "L2") return ConsistencyKind::L2;
    throw ConfigError("unknown consistency kind '" + s + "'");
}

/// Mean elementwise distance between a reconstruction and its target:
/// mean squared difference (L2) or mean absolute difference (L1). Zero
/// exactly when the tensors are equal.
template <class Real>
Var<Real> consistency_loss(Var<Real> recon, Var<Real> target, ConsistencyKind kind) {
    const auto& rs = recon.value().shape();
    const auto& ts = target.value().shape();
    if (rs != ts)
        throw DimensionError("consistency_loss shapes differ: " + shape_str(rs) + " vs " +
                             shape_str(ts));
    Var<Real> diff = sub(recon, target);
    return kind == ConsistencyKind::L2 ? mean_all(square(diff)) : mean_all(abs_val(diff));
}

/// One directional transfer network (vision→audio or language→audio):
/// linear in, three self-attention transformer layers, linear out. The
/// caller resamples the result to the canonical reconstruction length.
template <class Real>
struct TransferNetParams {
    Linear<Real> in;
    TransformerStack<Real> stack;
    Linear<Real> out;

    TransferNetParams() = default;
    TransferNetParams(const std::string& prefix, std::int64_t d, std::int64_t depth,
                      std::int64_t ffn_ratio, Rng& rng)
        : in(prefix + ".in", d, d, rng),
          stack(prefix + ".stack", depth, d, ffn_ratio, rng),
          out(prefix + ".out", d, d, rng) {}

    template <class V>
    void visit(V&& v) {
        in.visit(v);
        stack.visit(v);
        out.visit(v);
    }
};

/// Map encoded source-modality features to reconstructed audio features of
/// length `t_rec`.
template <class Real>
Var<Real> transfer_apply(Var<Real> encoded, TransferNetParams<Real>& p, std::int64_t heads,
                         std::int64_t t_rec, double dropout_rate = 0.0, Rng* rng = nullptr) {
    Var<Real> h = linear_apply(encoded, p.in);
    h = stack_apply(h, p.stack, heads, dropout_rate, rng);
    h = linear_apply(h, p.out);
    return resample(h, t_rec);
}

/// Fusion of the two directional reconstructions: transformer stack over
/// the feature-axis concatenation (width 2·d_model), projected back down.
template <class Real>
struct DeltaNetParams {
    TransformerStack<Real> stack;
    Linear<Real> out;

    DeltaNetParams() = default;
    DeltaNetParams(const std::string& prefix, std::int64_t d, std::int64_t depth,
                   std::int64_t ffn_ratio, Rng& rng)
        : stack(prefix + ".stack", depth, 2 * d, ffn_ratio, rng),
          out(prefix + ".out", 2 * d, d, rng) {}

    template <class V>
    void visit(V&& v) {
        stack.visit(v);
        out.visit(v);
    }
};

template <class Real>
Var<Real> fuse_reconstruction(Var<Real> recon_from_vision, Var<Real> recon_from_language,
                              DeltaNetParams<Real>& p, std::int64_t heads,
                              double dropout_rate = 0.0, Rng* rng = nullptr) {
    const auto& a = recon_from_vision.value().shape();
    const auto& b = recon_from_language.value().shape();
    if (a != b)
        throw DimensionError("fuse_reconstruction shapes differ: " + shape_str(a) + " vs " +
                             shape_str(b));
    Var<Real> cat = concat<Real>({recon_from_vision, recon_from_language}, 1);
    Var<Real> h = stack_apply(cat, p.stack, heads, dropout_rate, rng);
    return linear_apply(h, p.out);
}

}  // namespace mbkt
