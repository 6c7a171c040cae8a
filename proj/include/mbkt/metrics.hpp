// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mbkt/errors.hpp"
#include "mbkt/losses.hpp"
#include "mbkt/types.hpp"

namespace mbkt {

/// One prediction paired with its ground truth. `logits` is length 7
/// (sevenclass) or 4 (multilabel4).
struct LabeledPrediction {
    std::vector<double> logits;
    int label_class = -1;
    std::array<int, 4> label_flags{0, 0, 0, 0};
};

struct MetricsReport {
    LabelMode mode = LabelMode::SevenClass;
    std::size_t n = 0;

    // sevenclass
    double acc7 = 0, acc2 = 0, f1 = 0, mae = 0, corr = 0;
    bool corr_degenerate = false;

    // multilabel4, indexed per kEmotionNames
    std::array<double, 4> class_acc{};
    std::array<double, 4> class_f1{};
};

namespace detail {

inline double binary_f1(long tp, long fp, long fn) {
    const double prec = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
}

inline int argmax(const std::vector<double>& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

}  // namespace detail

/// Evaluation metrics over a prediction set.
///
/// Sevenclass: Acc7 is the argmax match rate; Acc2 and F1 are computed on
/// the subset with true score ≠ 0 with "positive" meaning expected score
/// > 0; MAE and Corr compare the expected score against the true score.
/// Multilabel4: per-class accuracy and binary F1 at probability 0.5.
inline MetricsReport compute_metrics(const std::vector<LabeledPrediction>& items, LabelMode mode) {
    if (items.empty()) throw ContractError("compute_metrics on an empty prediction set");
    MetricsReport r;
    r.mode = mode;
    r.n = items.size();

    if (mode == LabelMode::SevenClass) {
        long hits7 = 0, nz = 0, hits2 = 0, tp = 0, fp = 0, fn = 0;
        double abs_err = 0;
        std::vector<double> pred_scores, true_scores;
        pred_scores.reserve(items.size());
        true_scores.reserve(items.size());

        for (const auto& it : items) {
            if (it.logits.size() != 7) throw ContractError("sevenclass metrics expect 7 logits");
            if (it.label_class < 0 || it.label_class > 6)
                throw ContractError("label class out of range");
            if (detail::argmax(it.logits) == it.label_class) ++hits7;

            Tensor<double> lt({7}, std::vector<double>(it.logits.begin(), it.logits.end()));
            const double s = predict_score(lt);
            const double y = static_cast<double>(class_to_score(it.label_class));
            pred_scores.push_back(s);
            true_scores.push_back(y);
            abs_err += std::abs(s - y);

            if (y != 0.0) {
                ++nz;
                const bool pred_pos = s > 0;
                const bool true_pos = y > 0;
                if (pred_pos == true_pos) ++hits2;
                if (pred_pos && true_pos) ++tp;
                if (pred_pos && !true_pos) ++fp;
                if (!pred_pos && true_pos) ++fn;
            }
        }
        r.acc7 = static_cast<double>(hits7) / static_cast<double>(items.size());
        r.acc2 = nz > 0 ? static_cast<double>(hits2) / static_cast<double>(nz) : 0.0;
        r.f1 = detail::binary_f1(tp, fp, fn);
        r.mae = abs_err / static_cast<double>(items.size());

        double mp = 0, mt = 0;
        for (std::size_t i = 0; i < items.size(); ++i) {
            mp += pred_scores[i];
            mt += true_scores[i];
        }
        mp /= static_cast<double>(items.size());
        mt /= static_cast<double>(items.size());
        double cov = 0, vp = 0, vt = 0;
        for (std::size_t i = 0; i < items.size(); ++i) {
            cov += (pred_scores[i] - mp) * (true_scores[i] - mt);
            vp += (pred_scores[i] - mp) * (pred_scores[i] - mp);
            vt += (true_scores[i] - mt) * (true_scores[i] - mt);
        }
        if (vp <= 0 || vt <= 0) {
            r.corr = 0.0;
            r.corr_degenerate = true;
        } else {
            r.corr = cov / std::sqrt(vp * vt);
        }
        return r;
    }

    for (int c = 0; c < 4; ++c) {
        long hits = 0, tp = 0, fp = 0, fn = 0;
        for (const auto& it : items) {
            if (it.logits.size() != 4) throw ContractError("multilabel4 metrics expect 4 logits");
            const bool pred = sigmoid_value(it.logits[static_cast<std::size_t>(c)]) > 0.5;
            const bool truth = it.label_flags[static_cast<std::size_t>(c)] != 0;
            if (pred == truth) ++hits;
            if (pred && truth) ++tp;
            if (pred && !truth) ++fp;
            if (!pred && truth) ++fn;
        }
        r.class_acc[static_cast<std::size_t>(c)] =
            static_cast<double>(hits) / static_cast<double>(items.size());
        r.class_f1[static_cast<std::size_t>(c)] = detail::binary_f1(tp, fp, fn);
    }
    return r;
}

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_g4(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace detail

/// Flat key-value serialization, one `key value` pair per line.
inline std::string metrics_to_kv(const MetricsReport& r) {
    std::string out;
    if (r.mode == LabelMode::SevenClass) {
        out += "acc7 " + detail::fmt_g17(r.acc7) + "\n";
        out += "acc2 " + detail::fmt_g17(r.acc2) + "\n";
        out += "f1 " + detail::fmt_g17(r.f1) + "\n";
        out += "mae " + detail::fmt_g17(r.mae) + "\n";
        out += "corr " + detail::fmt_g17(r.corr) + "\n";
    } else {
        for (int c = 0; c < 4; ++c) {
            const std::string name = kEmotionNames[static_cast<std::size_t>(c)];
            out += "acc_" + name + " " + detail::fmt_g17(r.class_acc[static_cast<std::size_t>(c)]) + "\n";
            out += "f1_" + name + " " + detail::fmt_g17(r.class_f1[static_cast<std::size_t>(c)]) + "\n";
        }
    }
    return out;
}

/// Markdown table header + one row, shaped like the usual benchmark tables.
inline std::string metrics_to_markdown(const MetricsReport& r, const std::string& row_label) {
    std::string out;
    if (r.mode == LabelMode::SevenClass) {
        out += "| Model | Acc7 | Acc2 | F1 | MAE | Corr |\n";
        out += "|---|---|---|---|---|---|\n";
        out += "| " + row_label + " | " + detail::fmt_g4(r.acc7) + " | " + detail::fmt_g4(r.acc2) +
               " | " + detail::fmt_g4(r.f1) + " | " + detail::fmt_g4(r.mae) + " | " +
               detail::fmt_g4(r.corr) + " |\n";
    } else {
        out += "| Model |";
        for (const char* name : kEmotionNames) {
            out += std::string(" Acc(") + name + ") | F1(" + name + ") |";
        }
        out += "\n|---|";
        for (int c = 0; c < 8; ++c) out += "---|";
        out += "\n| " + row_label + " |";
        for (int c = 0; c < 4; ++c)
            out += " " + detail::fmt_g4(r.class_acc[static_cast<std::size_t>(c)]) + " | " +
                   detail::fmt_g4(r.class_f1[static_cast<std::size_t>(c)]) + " |";
        out += "\n";
    }
    return out;
}

/// One markdown row without the header (for multi-row reports).
inline std::string metrics_markdown_row(const MetricsReport& r, const std::string& row_label) {
    std::string out = "| " + row_label + " |";
    if (r.mode == LabelMode::SevenClass) {
        out += " " + detail::fmt_g4(r.acc7) + " | " + detail::fmt_g4(r.acc2) + " | " +
               detail::fmt_g4(r.f1) + " | " + detail::fmt_g4(r.mae) + " | " +
               detail::fmt_g4(r.corr) + " |";
    } else {
        for (int c = 0; c < 4; ++c)
            out += " " + detail::fmt_g4(r.class_acc[static_cast<std::size_t>(c)]) + " | " +
                   detail::fmt_g4(r.class_f1[static_cast<std::size_t>(c)]) + " |";
    }
    return out + "\n";
}

}  // namespace mbkt
