// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mbkt/autodiff.hpp"
#include "mbkt/data.hpp"
#include "mbkt/errors.hpp"
#include "mbkt/types.hpp"

namespace mbkt {

/// Prediction loss: softmax cross-entropy for the seven-class head,
/// summed per-class sigmoid binary cross-entropy for the multilabel head.
template <class Real>
Var<Real> prediction_loss(Var<Real> logits, const Sample& sample, LabelMode mode) {
    const std::int64_t c = logits.value().numel();
    if (mode == LabelMode::SevenClass) {
        if (c != 7) throw ContractError("sevenclass head expects 7 logits, got " + std::to_string(c));
        return cross_entropy_logits(logits, sample.label_class);
    }
    if (c != 4) throw ContractError("multilabel4 head expects 4 logits, got " + std::to_string(c));
    std::vector<int> flags(sample.label_flags.begin(), sample.label_flags.end());
    return sigmoid_bce_logits(logits, flags);
}

/// Weighted objective: prediction + λ1·consistency(V→A) + λ2·consistency(L→A).
template <class Real>
Var<Real> total_loss(Var<Real> pred, std::optional<Var<Real>> cons_v,
                     std::optional<Var<Real>> cons_l, double lambda1, double lambda2) {
    if (lambda1 < 0 || lambda2 < 0) throw ContractError("loss weights must be >= 0");
    Var<Real> total = pred;
    if (cons_v) total = add(total, scale(*cons_v, static_cast<Real>(lambda1)));
    if (cons_l) total = add(total, scale(*cons_l, static_cast<Real>(lambda2)));
    return total;
}

/// Plain-arithmetic counterpart used when assembling log records.
inline double total_loss_value(double pred, double cons_v, double cons_l, double lambda1,
                               double lambda2) {
    if (lambda1 < 0 || lambda2 < 0) throw ContractError("loss weights must be >= 0");
    return pred + lambda1 * cons_v + lambda2 * cons_l;
}

/// Expected sentiment score under the softmax of a 7-way logit vector:
/// Σ_c p_c · score(c) with scores −3..3. Invariant to shifting all logits.
template <class Real>
double predict_score(const Tensor<Real>& logits) {
    if (logits.numel() != 7) throw ContractError("predict_score expects 7 logits");
    double mx = static_cast<double>(logits.at(0));
    for (std::int64_t j = 1; j < 7; ++j) mx = std::max(mx, static_cast<double>(logits.at(j)));
    double denom = 0, acc = 0;
    for (std::int64_t j = 0; j < 7; ++j) {
        const double e = std::exp(static_cast<double>(logits.at(j)) - mx);
        denom += e;
        acc += e * static_cast<double>(class_to_score(static_cast<int>(j)));
    }
    return acc / denom;
}

inline double sigmoid_value(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace mbkt
