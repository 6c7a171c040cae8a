// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mbkt/checkpoint.hpp"
#include "mbkt/data.hpp"
#include "mbkt/losses.hpp"
#include "mbkt/metrics.hpp"
#include "mbkt/model.hpp"
#include "mbkt/optim.hpp"

namespace mbkt {

struct TrainConfig {
    ModelConfig model;
    std::int64_t epochs = 40;
    std::int64_t max_epochs = 0;  // 0 = no cap; caps `epochs` for desk-scale runs
    double lr = 1e-3;
    std::int64_t batch_size = 16;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    ConsistencyKind consistency = ConsistencyKind::L2;
    bool detach_consistency_target = false;
    std::uint64_t seed = 42;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    std::string precision = "f32";

    std::int64_t effective_epochs() const {
        return max_epochs > 0 ? std::min(epochs, max_epochs) : epochs;
    }
};

struct EpochLog {
    std::int64_t epoch = 0;
    double loss_total = 0, loss_pred = 0, loss_cons_v = 0, loss_cons_l = 0;
    MetricsReport train_metrics;
};

template <class Real>
struct TrainResult {
    ModelParams<Real> params;
    std::vector<EpochLog> log;
};

// ---------------------------------------------------------------------------
// Config JSON (config files, manifests)
// ---------------------------------------------------------------------------

inline nlohmann::json targets_to_json(const TargetSet& t) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Modality m : kModalityOrder)
        if (t.contains(m)) arr.push_back(modality_key(m));
    return arr;
}

inline TargetSet targets_from_json(const nlohmann::json& arr) {
    TargetSet t;
    for (const auto& item : arr) {
        const std::string s = item.get<std::string>();
        if (s == "vision") t.vision = true;
        else if (s == "language") t.language = true;
        else if (s == "audio") t.audio = true;
        else throw ConfigError("unknown fusion target '" + s + "'");
    }
    return t;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {
        {"model",
         {{"d_model", c.model.d_model},
          {"heads", c.model.heads},
          {"ffn_ratio", c.model.ffn_ratio},
          {"d_v", c.model.d_v},
          {"d_l", c.model.d_l},
          {"d_a", c.model.d_a},
          {"label_mode", label_mode_name(c.model.label_mode)},
          {"mode", modality_mode_name(c.model.mode)},
          {"targets", targets_to_json(c.model.enabled_targets)},
          {"dropout", c.model.dropout}}},
        {"epochs", c.epochs},
        {"max_epochs", c.max_epochs},
        {"lr", c.lr},
        {"batch_size", c.batch_size},
        {"lambda1", c.lambda1},
        {"lambda2", c.lambda2},
        {"consistency", consistency_name(c.consistency)},
        {"detach_consistency_target", c.detach_consistency_target},
        {"seed", c.seed},
        {"adam", {{"beta1", c.adam_beta1}, {"beta2", c.adam_beta2}, {"eps", c.adam_eps}}},
        {"precision", c.precision},
    };
}

/// Parse a config JSON; unspecified fields keep the values in `base`.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
    TrainConfig c = base;
    if (j.contains("model")) {
        const auto& m = j.at("model");
        c.model.d_model = m.value("d_model", c.model.d_model);
        c.model.heads = m.value("heads", c.model.heads);
        c.model.ffn_ratio = m.value("ffn_ratio", c.model.ffn_ratio);
        c.model.d_v = m.value("d_v", c.model.d_v);
        c.model.d_l = m.value("d_l", c.model.d_l);
        c.model.d_a = m.value("d_a", c.model.d_a);
        if (m.contains("label_mode"))
            c.model.label_mode = parse_label_mode(m.at("label_mode").get<std::string>());
        if (m.contains("mode"))
            c.model.mode = parse_modality_mode(m.at("mode").get<std::string>());
        if (m.contains("targets")) c.model.enabled_targets = targets_from_json(m.at("targets"));
        c.model.dropout = m.value("dropout", c.model.dropout);
    }
    c.epochs = j.value("epochs", c.epochs);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    if (j.contains("consistency"))
        c.consistency = parse_consistency(j.at("consistency").get<std::string>());
    c.detach_consistency_target = j.value("detach_consistency_target", c.detach_consistency_target);
    c.seed = j.value("seed", c.seed);
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        c.adam_beta1 = a.value("beta1", c.adam_beta1);
        c.adam_beta2 = a.value("beta2", c.adam_beta2);
        c.adam_eps = a.value("eps", c.adam_eps);
    }
    c.precision = j.value("precision", c.precision);
    return c;
}

inline nlohmann::json epoch_log_to_json(const EpochLog& e) {
    nlohmann::json j = {{"epoch", e.epoch},
                        {"loss_total", e.loss_total},
                        {"loss_pred", e.loss_pred},
                        {"loss_cons_v", e.loss_cons_v},
                        {"loss_cons_l", e.loss_cons_l}};
    const MetricsReport& m = e.train_metrics;
    if (m.mode == LabelMode::SevenClass) {
        j["acc7"] = m.acc7;
        j["acc2"] = m.acc2;
        j["f1"] = m.f1;
        j["mae"] = m.mae;
        j["corr"] = m.corr;
    } else {
        for (int c = 0; c < 4; ++c) {
            const std::string name = kEmotionNames[static_cast<std::size_t>(c)];
            j["acc_" + name] = m.class_acc[static_cast<std::size_t>(c)];
            j["f1_" + name] = m.class_f1[static_cast<std::size_t>(c)];
        }
    }
    return j;
}

// ---------------------------------------------------------------------------
// Training / evaluation
// ---------------------------------------------------------------------------

namespace detail {

/// Modalities a run must find on every sample. Audio is optional in
/// missing-audio mode even while training; samples without it simply
/// contribute no consistency terms.
inline std::vector<Modality> required_modalities(ModalityMode mode) {
    switch (mode) {
        case ModalityMode::MissingAudio: return {Modality::Vision, Modality::Language};
        case ModalityMode::FullModality:
            return {Modality::Vision, Modality::Language, Modality::Audio};
        case ModalityMode::VisionOnly: return {Modality::Vision};
        case ModalityMode::LanguageOnly: return {Modality::Language};
        case ModalityMode::LanguageVision: return {Modality::Vision, Modality::Language};
    }
    return {};
}

inline void check_dataset_mode(const Dataset& ds, ModalityMode mode) {
    for (const auto& s : ds.samples)
        for (const Modality m : required_modalities(mode))
            if (!s.has(m))
                throw ConfigError(std::string("mode ") + modality_mode_name(mode) + " requires '" +
                                  modality_key(m) + "', absent from sample '" + s.id + "'");
}

inline LabeledPrediction to_labeled(const std::vector<double>& logits, const Sample& s) {
    LabeledPrediction lp;
    lp.logits = logits;
    lp.label_class = s.label_class;
    lp.label_flags = s.label_flags;
    return lp;
}

template <class Real>
std::vector<double> logits_values(const Var<Real>& logits) {
    const Tensor<Real>& t = logits.value();
    std::vector<double> out(static_cast<std::size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i) out[static_cast<std::size_t>(i)] =
        static_cast<double>(t.at(i));
    return out;
}

}  // namespace detail

/// Fill dataset-derived fields (dims, label mode) and cross-check the rest.
inline void resolve_config(TrainConfig& cfg, const Dataset& ds) {
    if (cfg.model.d_v == 0) cfg.model.d_v = ds.d_v;
    if (cfg.model.d_l == 0) cfg.model.d_l = ds.d_l;
    if (cfg.model.d_a == 0) cfg.model.d_a = ds.d_a;
    if (cfg.model.d_v != ds.d_v || cfg.model.d_l != ds.d_l || cfg.model.d_a != ds.d_a)
        throw ConfigError("configured raw dims (" + std::to_string(cfg.model.d_v) + "," +
                          std::to_string(cfg.model.d_l) + "," + std::to_string(cfg.model.d_a) +
                          ") do not match dataset dims (" + std::to_string(ds.d_v) + "," +
                          std::to_string(ds.d_l) + "," + std::to_string(ds.d_a) + ")");
    cfg.model.label_mode = ds.mode;
    if (cfg.precision != "f32" && cfg.precision != "f64")
        throw ConfigError("precision must be f32 or f64, got '" + cfg.precision + "'");
}

/// Per-epoch progress callback: (epoch log) → void.
using EpochCallback = std::function<void(const EpochLog&)>;

/// Train the configured model on `ds`. Deterministic for a fixed seed:
/// parameter init, shuffling, and dropout all derive from cfg.seed.
template <class Real>
TrainResult<Real> train(TrainConfig cfg, const Dataset& ds, const EpochCallback& on_epoch = {}) {
    if (ds.samples.empty()) throw ContractError("training dataset is empty");
    resolve_config(cfg, ds);
    cfg.model.validate();
    detail::check_dataset_mode(ds, cfg.model.mode);
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.lambda1 < 0 || cfg.lambda2 < 0) throw ConfigError("lambda weights must be >= 0");
    if (cfg.effective_epochs() < 1) throw ConfigError("epochs must be >= 1");

    Rng master(cfg.seed);
    Rng init_rng = master.fork(1);
    Rng shuffle_rng = master.fork(2);
    Rng dropout_rng = master.fork(3);

    TrainResult<Real> result{ModelParams<Real>(cfg.model, init_rng), {}};
    ModelParams<Real>& params = result.params;

    std::vector<Parameter<Real>*> plist;
    params.visit([&](Parameter<Real>& p) { plist.push_back(&p); });

    Adam<Real> opt(AdamConfig{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});

    const std::size_t n = ds.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::int64_t epoch = 1; epoch <= cfg.effective_epochs(); ++epoch) {
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(
                shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        EpochLog log;
        log.epoch = epoch;
        std::vector<LabeledPrediction> preds;
        preds.reserve(n);

        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            const Real inv_batch = Real(1) / static_cast<Real>(stop - start);
            params.zero_grads();

            for (std::size_t bi = start; bi < stop; ++bi) {
                const Sample& sample = ds.samples[order[bi]];
                Graph<Real> g;
                ForwardOptions<Real> fo;
                fo.training = true;
                fo.consistency = cfg.consistency;
                fo.detach_consistency_target = cfg.detach_consistency_target;
                fo.dropout = cfg.model.dropout;
                fo.dropout_rng = &dropout_rng;
                ForwardOutput<Real> out = model_forward(g, params, sample, fo);

                Var<Real> pred = prediction_loss(out.logits, sample, cfg.model.label_mode);
                Var<Real> total = total_loss(pred, out.cons_v, out.cons_l, cfg.lambda1, cfg.lambda2);
                g.backward(scale(total, inv_batch));

                const double pv = static_cast<double>(pred.value().at(0));
                const double cv = out.cons_v ? static_cast<double>(out.cons_v->value().at(0)) : 0.0;
                const double cl = out.cons_l ? static_cast<double>(out.cons_l->value().at(0)) : 0.0;
                log.loss_pred += pv;
                log.loss_cons_v += cv;
                log.loss_cons_l += cl;
                log.loss_total += static_cast<double>(total.value().at(0));
                preds.push_back(detail::to_labeled(detail::logits_values(out.logits), sample));
            }
            opt.step(plist);
        }

        const double inv_n = 1.0 / static_cast<double>(n);
        log.loss_pred *= inv_n;
        log.loss_cons_v *= inv_n;
        log.loss_cons_l *= inv_n;
        log.loss_total *= inv_n;
        log.train_metrics = compute_metrics(preds, cfg.model.label_mode);
        if (on_epoch) on_epoch(log);
        result.log.push_back(std::move(log));
    }
    return result;
}

/// Per-sample inspection hook for evaluation.
template <class Real>
using EvalTraceCallback = std::function<void(std::size_t, const ForwardTrace<Real>&)>;

/// Evaluate without mutating parameters. In missing-audio mode the
/// acoustic fields of `ds` are never read.
template <class Real>
MetricsReport evaluate(ModelParams<Real>& params, const Dataset& ds, ModalityMode run_mode,
                       const EvalTraceCallback<Real>& trace_cb = {}) {
    if (ds.samples.empty()) throw ContractError("evaluation dataset is empty");
    if (params.config.d_v != ds.d_v || params.config.d_l != ds.d_l ||
        params.config.d_a != ds.d_a)
        throw ConfigError("checkpoint dims (" + std::to_string(params.config.d_v) + "," +
                          std::to_string(params.config.d_l) + "," +
                          std::to_string(params.config.d_a) + ") do not match dataset dims (" +
                          std::to_string(ds.d_v) + "," + std::to_string(ds.d_l) + "," +
                          std::to_string(ds.d_a) + ")");
    if (params.config.label_mode != ds.mode)
        throw ConfigError("checkpoint label mode does not match dataset");
    detail::check_dataset_mode(ds, run_mode);

    std::vector<LabeledPrediction> preds;
    preds.reserve(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& sample = ds.samples[i];
        Graph<Real> g(/*grad_enabled=*/false);
        ForwardOptions<Real> fo;
        fo.training = false;
        fo.run_mode = run_mode;
        ForwardTrace<Real> trace;
        if (trace_cb) fo.trace = &trace;
        ForwardOutput<Real> out = model_forward(g, params, sample, fo);
        if (trace_cb) trace_cb(i, trace);
        preds.push_back(detail::to_labeled(detail::logits_values(out.logits), sample));
    }
    return compute_metrics(preds, params.config.label_mode);
}

template <class Real>
MetricsReport evaluate(ModelParams<Real>& params, const Dataset& ds) {
    return evaluate(params, ds, params.config.mode);
}

}  // namespace mbkt
