// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mbkt/autodiff.hpp"
#include "mbkt/errors.hpp"

namespace mbkt {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. First/second moment buffers are laid out in
/// the order the parameter list is first seen; the list must stay stable
/// across steps.
template <class Real>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {
        if (cfg_.lr <= 0) throw ConfigError("Adam lr must be > 0");
    }

    const AdamConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return t_; }

    void step(const std::vector<Parameter<Real>*>& params) {
        if (m_.empty()) {
            m_.reserve(params.size());
            v_.reserve(params.size());
            for (const auto* p : params) {
                m_.push_back(Tensor<Real>::zeros(p->value.shape()));
                v_.push_back(Tensor<Real>::zeros(p->value.shape()));
            }
        }
        if (m_.size() != params.size())
            throw ContractError("Adam state holds " + std::to_string(m_.size()) +
                                " buffers, got " + std::to_string(params.size()) + " parameters");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

        for (std::size_t i = 0; i < params.size(); ++i) {
            Parameter<Real>& p = *params[i];
            if (!p.grad.same_shape(p.value))
                throw ContractError("gradient shape mismatch for parameter '" + p.name + "'");
            if (debug_checks() && !p.grad.all_finite())
                throw NumericError("non-finite gradient for parameter '" + p.name + "'");
            auto& m = m_[i].data();
            auto& v = v_[i].data();
            auto& w = p.value.data();
            const auto& g = p.grad.data();
            for (std::size_t j = 0; j < w.size(); ++j) {
                const double gj = static_cast<double>(g[j]);
                const double mj = cfg_.beta1 * static_cast<double>(m[j]) + (1.0 - cfg_.beta1) * gj;
                const double vj =
                    cfg_.beta2 * static_cast<double>(v[j]) + (1.0 - cfg_.beta2) * gj * gj;
                m[j] = static_cast<Real>(mj);
                v[j] = static_cast<Real>(vj);
                const double mhat = mj / bc1;
                const double vhat = vj / bc2;
                w[j] = static_cast<Real>(static_cast<double>(w[j]) -
                                         cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

private:
    AdamConfig cfg_;
    std::vector<Tensor<Real>> m_, v_;
    std::int64_t t_ = 0;
};

}  // namespace mbkt
