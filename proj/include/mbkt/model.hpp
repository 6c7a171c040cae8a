// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mbkt/autodiff.hpp"
#include "mbkt/data.hpp"
#include "mbkt/errors.hpp"
#include "mbkt/fusion.hpp"
#include "mbkt/transfer.hpp"
#include "mbkt/types.hpp"

namespace mbkt {

/// Which modalities feed the model and where the audio stream comes from.
enum class ModalityMode {
    MissingAudio,    // audio reconstructed from vision + language
    FullModality,    // ground-truth audio encoded directly
    VisionOnly,
    LanguageOnly,
    LanguageVision,  // both observed streams, no audio branch at all
};

inline const char* modality_mode_name(ModalityMode m) {
    switch (m) {
        case ModalityMode::MissingAudio: return "missing_audio";
        case ModalityMode::FullModality: return "full_modality";
        case ModalityMode::VisionOnly: return "vision_only";
        case ModalityMode::LanguageOnly: return "language_only";
        case ModalityMode::LanguageVision: return "language_vision";
    }
    return "?";
}

inline ModalityMode parse_modality_mode(const std::string& s) {
    if (s == "missing_audio") return ModalityMode::MissingAudio;
    if (s == "full_modality") return ModalityMode::FullModality;
    if (s == "vision_only") return ModalityMode::VisionOnly;
    if (s == "language_only") return ModalityMode::LanguageOnly;
    if (s == "language_vision") return ModalityMode::LanguageVision;
    throw ConfigError("unknown modality mode '" + s + "'");
}

/// Fusion streams a mode provides (the audio slot may be reconstructed).
inline std::vector<Modality> mode_streams(ModalityMode m) {
    switch (m) {
        case ModalityMode::MissingAudio:
        case ModalityMode::FullModality:
            return {Modality::Vision, Modality::Language, Modality::Audio};
        case ModalityMode::VisionOnly: return {Modality::Vision};
        case ModalityMode::LanguageOnly: return {Modality::Language};
        case ModalityMode::LanguageVision: return {Modality::Vision, Modality::Language};
    }
    return {};
}

/// Raw-feature encoders a mode needs.
inline std::vector<Modality> mode_encoders(ModalityMode m) {
    return mode_streams(m);  // the audio encoder also serves consistency targets
}

inline bool mode_has_transfer(ModalityMode m) { return m == ModalityMode::MissingAudio; }

struct ModelConfig {
    std::int64_t d_model = 32;
    std::int64_t heads = 4;
    std::int64_t ffn_ratio = 4;
    std::int64_t d_v = 0, d_l = 0, d_a = 0;
    LabelMode label_mode = LabelMode::SevenClass;
    ModalityMode mode = ModalityMode::MissingAudio;
    TargetSet enabled_targets;  // empty (= default) means every available stream
    double dropout = 0.0;

    std::int64_t n_classes() const { return label_mode == LabelMode::SevenClass ? 7 : 4; }
    std::int64_t raw_dim(Modality m) const {
        switch (m) {
            case Modality::Vision: return d_v;
            case Modality::Language: return d_l;
            default: return d_a;
        }
    }

    TargetSet resolved_targets() const {
        if (enabled_targets.any()) return enabled_targets;
        TargetSet t;
        for (const Modality m : mode_streams(mode)) t.set(m);
        return t;
    }

    void validate() const {
        AttentionConfig check(d_model, heads);  // throws on bad division
        (void)check;
        if (ffn_ratio < 1) throw ConfigError("ffn_ratio must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
        const TargetSet t = resolved_targets();
        for (const Modality m : kModalityOrder) {
            if (!t.contains(m)) continue;
            bool avail = false;
            for (const Modality s : mode_streams(mode)) avail = avail || s == m;
            if (!avail)
                throw ConfigError(std::string("target '") + modality_key(m) +
                                  "' is not available in mode " + modality_mode_name(mode));
        }
        for (const Modality m : mode_encoders(mode))
            if (raw_dim(m) < 1)
                throw ConfigError(std::string("raw dim for '") + modality_key(m) +
                                  "' must be set");
    }
};

/// Every learnable weight of the pipeline for one configuration. Only the
/// components the mode uses are allocated, so parameter counts are an
/// exact function of the configuration.
template <class Real>
struct ModelParams {
    ModelConfig config;
    std::optional<EncoderParams<Real>> enc_v, enc_l, enc_a;
    std::optional<TransferNetParams<Real>> theta, phi;
    std::optional<DeltaNetParams<Real>> delta;
    FusionParams<Real> fusion;

    ModelParams() = default;

    ModelParams(const ModelConfig& cfg, Rng& rng) : config(cfg) {
        config.validate();
        for (const Modality m : mode_encoders(cfg.mode)) {
            auto make = [&](const char* name, std::int64_t d_raw) {
                return EncoderParams<Real>(name, d_raw, cfg.d_model, cfg.ffn_ratio, rng);
            };
            switch (m) {
                case Modality::Vision: enc_v = make("enc_v", cfg.d_v); break;
                case Modality::Language: enc_l = make("enc_l", cfg.d_l); break;
                case Modality::Audio: enc_a = make("enc_a", cfg.d_a); break;
            }
        }
        if (mode_has_transfer(cfg.mode)) {
            theta = TransferNetParams<Real>("theta", cfg.d_model, kStackDepth, cfg.ffn_ratio, rng);
            phi = TransferNetParams<Real>("phi", cfg.d_model, kStackDepth, cfg.ffn_ratio, rng);
            delta = DeltaNetParams<Real>("delta", cfg.d_model, kStackDepth, cfg.ffn_ratio, rng);
        }
        fusion = FusionParams<Real>(mode_streams(cfg.mode), config.resolved_targets(), cfg.d_model,
                                    cfg.ffn_ratio, cfg.n_classes(), rng);
    }

    template <class V>
    void visit(V&& v) {
        if (enc_v) enc_v->visit(v);
        if (enc_l) enc_l->visit(v);
        if (enc_a) enc_a->visit(v);
        if (theta) theta->visit(v);
        if (phi) phi->visit(v);
        if (delta) delta->visit(v);
        fusion.visit(v);
    }

    std::int64_t param_count() {
        std::int64_t n = 0;
        visit([&](Parameter<Real>& p) { n += p.value.numel(); });
        return n;
    }

    void zero_grads() {
        visit([](Parameter<Real>& p) { p.zero_grad(); });
    }
};

/// Captured intermediate activations, for tests that compare runs.
template <class Real>
struct ForwardTrace {
    Tensor<Real> encoded_vision;
    Tensor<Real> encoded_language;
    Tensor<Real> reconstruction;  // fused audio slot content, when present
};

template <class Real>
struct ForwardOptions {
    bool training = false;
    std::optional<ModalityMode> run_mode;  // defaults to the mode the model was built for
    ConsistencyKind consistency = ConsistencyKind::L2;
    bool detach_consistency_target = false;
    double dropout = 0.0;
    Rng* dropout_rng = nullptr;
    ForwardTrace<Real>* trace = nullptr;
};

template <class Real>
struct ForwardOutput {
    Var<Real> logits;  // [1, C]
    std::optional<Var<Real>> cons_v;  // consistency of the vision-based reconstruction
    std::optional<Var<Real>> cons_l;  // consistency of the language-based reconstruction
};

/// One sample through the pipeline. In missing-audio evaluation the
/// ground-truth acoustic field is never touched; the reconstruction length
/// falls back to max(T_V, T_L).
template <class Real>
ForwardOutput<Real> model_forward(Graph<Real>& g, ModelParams<Real>& params, const Sample& sample,
                                  ForwardOptions<Real> opt) {
    const ModalityMode mode = opt.run_mode.value_or(params.config.mode);
    const std::int64_t heads = params.config.heads;
    const double drop = opt.training ? opt.dropout : 0.0;

    auto require = [&](Modality m) -> const ModalitySequence& {
        const auto& seq = sample.get(m);
        if (!seq)
            throw ConfigError(std::string("mode ") + modality_mode_name(mode) + " requires '" +
                              modality_key(m) + "' absent from sample '" + sample.id + "'");
        return *seq;
    };
    auto encoder_for = [&](Modality m) -> EncoderParams<Real>& {
        std::optional<EncoderParams<Real>>* e = nullptr;
        switch (m) {
            case Modality::Vision: e = &params.enc_v; break;
            case Modality::Language: e = &params.enc_l; break;
            case Modality::Audio: e = &params.enc_a; break;
        }
        if (!e->has_value())
            throw ConfigError(std::string("model has no encoder for '") + modality_key(m) +
                              "' (built for mode " + modality_mode_name(params.config.mode) + ")");
        return e->value();
    };
    auto encode = [&](Modality m) {
        const ModalitySequence& seq = require(m);
        Var<Real> x = g.input_cast(seq.features);
        return encode_modality(x, encoder_for(m), heads, drop, opt.dropout_rng);
    };

    ForwardOutput<Real> out;
    std::vector<std::pair<Modality, Var<Real>>> streams;

    switch (mode) {
        case ModalityMode::VisionOnly:
            streams.emplace_back(Modality::Vision, encode(Modality::Vision));
            break;
        case ModalityMode::LanguageOnly:
            streams.emplace_back(Modality::Language, encode(Modality::Language));
            break;
        case ModalityMode::LanguageVision: {
            streams.emplace_back(Modality::Vision, encode(Modality::Vision));
            streams.emplace_back(Modality::Language, encode(Modality::Language));
            break;
        }
        case ModalityMode::FullModality: {
            streams.emplace_back(Modality::Vision, encode(Modality::Vision));
            streams.emplace_back(Modality::Language, encode(Modality::Language));
            streams.emplace_back(Modality::Audio, encode(Modality::Audio));
            break;
        }
        case ModalityMode::MissingAudio: {
            if (!params.theta || !params.phi || !params.delta)
                throw ConfigError("model has no transfer networks; it was built for mode " +
                                  std::string(modality_mode_name(params.config.mode)));
            Var<Real> f_v = encode(Modality::Vision);
            Var<Real> f_l = encode(Modality::Language);

            // Canonical reconstruction length: the ground-truth audio length
            // while training with audio available, otherwise max(T_V, T_L).
            std::int64_t t_rec;
            std::optional<Var<Real>> f_a_true;
            if (opt.training && sample.has(Modality::Audio)) {
                f_a_true = encode(Modality::Audio);
                t_rec = f_a_true->value().dim(0);
            } else {
                t_rec = std::max(f_v.value().dim(0), f_l.value().dim(0));
            }

            Var<Real> r_v = transfer_apply(f_v, *params.theta, heads, t_rec, drop, opt.dropout_rng);
            Var<Real> r_l = transfer_apply(f_l, *params.phi, heads, t_rec, drop, opt.dropout_rng);

            if (f_a_true) {
                Var<Real> target =
                    opt.detach_consistency_target ? detach(*f_a_true) : *f_a_true;
                out.cons_v = consistency_loss(r_v, target, opt.consistency);
                out.cons_l = consistency_loss(r_l, target, opt.consistency);
            }

            Var<Real> f_a_rec =
                fuse_reconstruction(r_v, r_l, *params.delta, heads, drop, opt.dropout_rng);
            if (opt.trace) opt.trace->reconstruction = f_a_rec.value();

            streams.emplace_back(Modality::Vision, f_v);
            streams.emplace_back(Modality::Language, f_l);
            streams.emplace_back(Modality::Audio, f_a_rec);
            break;
        }
    }

    if (opt.trace) {
        for (const auto& [m, v] : streams) {
            if (m == Modality::Vision) opt.trace->encoded_vision = v.value();
            if (m == Modality::Language) opt.trace->encoded_language = v.value();
        }
    }

    out.logits = fuse_and_predict(streams, params.config.resolved_targets(), params.fusion, heads,
                                  drop, opt.dropout_rng);
    return out;
}

}  // namespace mbkt
