// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbkt/autodiff.hpp"
#include "mbkt/errors.hpp"
#include "mbkt/nn.hpp"
#include "mbkt/types.hpp"

namespace mbkt {

inline constexpr std::int64_t kConvKernel = 3;
inline constexpr std::int64_t kStackDepth = 3;

/// Modality-specific encoder: temporal convolution projecting the raw
/// feature width to d_model, plus sinusoidal positions, plus three
/// self-attention transformer layers.
template <class Real>
struct EncoderParams {
    Parameter<Real> conv_weight;  // [kernel·d_raw, d_model]
    Parameter<Real> conv_bias;    // [d_model]
    TransformerStack<Real> stack;

    EncoderParams() = default;
    EncoderParams(const std::string& prefix, std::int64_t d_raw, std::int64_t d_model,
                  std::int64_t ffn_ratio, Rng& rng)
        : conv_weight(prefix + ".conv.weight", Tensor<Real>({kConvKernel * d_raw, d_model})),
          conv_bias(prefix + ".conv.bias", Tensor<Real>({d_model})),
          stack(prefix + ".stack", kStackDepth, d_model, ffn_ratio, rng) {
        const double limit = std::sqrt(6.0 / static_cast<double>(kConvKernel * d_raw + d_model));
        for (auto& w : conv_weight.value.data()) w = static_cast<Real>(rng.uniform(-limit, limit));
    }

    template <class V>
    void visit(V&& v) {
        v(conv_weight);
        v(conv_bias);
        stack.visit(v);
    }
};

/// (T×d_raw) → (T×d_model). Length is preserved.
template <class Real>
Var<Real> encode_modality(Var<Real> x, EncoderParams<Real>& p, std::int64_t heads,
                          double dropout_rate = 0.0, Rng* rng = nullptr) {
    Graph<Real>& g = *x.g;
    const auto& shape = g.value(x.id).shape();
    if (shape.size() != 2) throw ContractError("encode_modality expects a [T, d_raw] sequence");
    const std::int64_t t = shape[0];
    const std::int64_t d_model = p.conv_bias.value.numel();

    Var<Real> h = conv1d_same(x, g.param(p.conv_weight), g.param(p.conv_bias), kConvKernel);
    h = add(h, g.constant(positional_encoding<Real>(t, d_model)));
    return stack_apply(h, p.stack, heads, dropout_rate, rng);
}

/// Adapt one source modality into a target stream and add it back:
/// target + MHA(query = target, key/value = source).
template <class Real>
Var<Real> cross_modal_block(Var<Real> target, Var<Real> source, MhaParams<Real>& p,
                            std::int64_t heads) {
    const auto& ts = target.value().shape();
    const auto& ss = source.value().shape();
    if (ts.size() != 2 || ss.size() != 2 || ts[1] != ss[1])
        throw DimensionError("cross_modal_block width mismatch: " + shape_str(ts) + " vs " +
                             shape_str(ss));
    return add(target, multi_head_attention(target, source, p, heads));
}

/// Which target streams participate in fusion.
struct TargetSet {
    bool vision = false;
    bool language = false;
    bool audio = false;

    static TargetSet all() { return {true, true, true}; }
    bool contains(Modality m) const {
        switch (m) {
            case Modality::Vision: return vision;
            case Modality::Language: return language;
            default: return audio;
        }
    }
    void set(Modality m, bool on = true) {
        switch (m) {
            case Modality::Vision: vision = on; break;
            case Modality::Language: language = on; break;
            default: audio = on; break;
        }
    }
    int count() const { return (vision ? 1 : 0) + (language ? 1 : 0) + (audio ? 1 : 0); }
    bool any() const { return count() > 0; }
};

/// Cross-modal attention blocks into each enabled target, a self-attention
/// decoder over the pooled target vectors, and the prediction head.
template <class Real>
struct FusionParams {
    struct CrossBlock {
        Modality source;
        Modality target;
        MhaParams<Real> mha;
    };

    std::vector<CrossBlock> blocks;
    TransformerStack<Real> decoder;
    Linear<Real> head;

    FusionParams() = default;
    FusionParams(const std::vector<Modality>& streams, const TargetSet& targets, std::int64_t d,
                 std::int64_t ffn_ratio, std::int64_t n_classes, Rng& rng) {
        for (const Modality tgt : kModalityOrder) {
            if (!targets.contains(tgt)) continue;
            bool tgt_present = false;
            for (const Modality s : streams) tgt_present = tgt_present || s == tgt;
            if (!tgt_present)
                throw ConfigError(std::string("enabled target '") + modality_key(tgt) +
                                  "' has no input stream");
            for (const Modality src : kModalityOrder) {
                if (src == tgt) continue;
                bool src_present = false;
                for (const Modality s : streams) src_present = src_present || s == src;
                if (!src_present) continue;
                const std::string name = std::string("fusion.cm_") + modality_letter(src) +
                                         "_to_" + modality_letter(tgt);
                blocks.push_back({src, tgt, MhaParams<Real>(name, d, rng)});
            }
        }
        decoder = TransformerStack<Real>("fusion.decoder", kStackDepth, d, ffn_ratio, rng);
        head = Linear<Real>("fusion.head", d, n_classes, rng);
    }

    MhaParams<Real>* find_block(Modality src, Modality tgt) {
        for (auto& b : blocks)
            if (b.source == src && b.target == tgt) return &b.mha;
        return nullptr;
    }

    template <class V>
    void visit(V&& v) {
        for (auto& b : blocks) b.mha.visit(v);
        decoder.visit(v);
        head.visit(v);
    }
};

/// Fuse the encoded streams and emit class logits [1, C]. Every enabled
/// target receives one cross-modal block from each other stream; attended
/// results are summed into the target, each target stream is mean-pooled
/// over time, the pooled vectors are stacked and run through the decoder,
/// and the mean decoder output feeds the head.
template <class Real>
Var<Real> fuse_and_predict(const std::vector<std::pair<Modality, Var<Real>>>& streams,
                           const TargetSet& targets, FusionParams<Real>& p, std::int64_t heads,
                           double dropout_rate = 0.0, Rng* rng = nullptr) {
    if (!targets.any()) throw ConfigError("fusion needs at least one enabled target");

    auto stream_of = [&](Modality m) -> const Var<Real>* {
        for (const auto& [mod, var] : streams)
            if (mod == m) return &var;
        return nullptr;
    };

    std::vector<Var<Real>> pooled;
    for (const Modality tgt : kModalityOrder) {
        if (!targets.contains(tgt)) continue;
        const Var<Real>* tv = stream_of(tgt);
        if (!tv)
            throw ConfigError(std::string("enabled target '") + modality_key(tgt) +
                              "' missing its input stream");
        Var<Real> acc = *tv;
        for (const Modality src : kModalityOrder) {
            if (src == tgt) continue;
            const Var<Real>* sv = stream_of(src);
            if (!sv) continue;
            MhaParams<Real>* mha = p.find_block(src, tgt);
            if (!mha)
                throw ConfigError(std::string("no fusion block for ") + modality_key(src) +
                                  " into " + modality_key(tgt));
            acc = add(acc, multi_head_attention(*tv, *sv, *mha, heads));
        }
        pooled.push_back(mean_rows(acc));
    }

    Var<Real> stacked = pooled.size() == 1 ? pooled.front() : concat(pooled, 0);
    Var<Real> decoded = stack_apply(stacked, p.decoder, heads, dropout_rate, rng);
    return linear_apply(mean_rows(decoded), p.head);
}

}  // namespace mbkt
