// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mbkt/errors.hpp"
#include "mbkt/rng.hpp"
#include "mbkt/tensor.hpp"

namespace mbkt {

/// A named learnable weight. Gradients accumulate into `grad` across
/// backward passes until the optimizer consumes and clears them.
template <class Real>
struct Parameter {
    std::string name;
    Tensor<Real> value;
    Tensor<Real> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor<Real> v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor<Real>::zeros(value.shape())) {}

    void zero_grad() {
        for (auto& g : grad.data()) g = Real(0);
    }
};

template <class Real>
class Graph;

/// Handle to one node of a Graph. Cheap to copy; valid only while the
/// owning graph is alive.
template <class Real>
struct Var {
    Graph<Real>* g = nullptr;
    std::int64_t id = -1;

    bool valid() const { return g != nullptr && id >= 0; }
    const Tensor<Real>& value() const { return g->value(id); }
    const Tensor<Real>& grad() const { return g->grad(id); }
};

namespace detail {

// Right-aligned broadcast: missing or size-1 dims stretch. Returns the
// output shape or throws.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
            throw DimensionError("shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Per-output-dim element strides for an operand, 0 where it broadcasts.
inline std::vector<std::int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
    std::vector<std::int64_t> strides(out.size(), 0);
    std::int64_t s = 1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        const std::size_t src = shape.size() - 1 - i;
        const std::size_t dst = out.size() - 1 - i;
        strides[dst] = shape[src] == 1 ? 0 : s;
        s *= shape[src];
    }
    return strides;
}

// Odometer over an output shape yielding (out_index, off_a, off_b).
template <class Fn>
void broadcast_walk(const Shape& out, const std::vector<std::int64_t>& sa,
                    const std::vector<std::int64_t>& sb, Fn&& fn) {
    const std::int64_t n = shape_numel(out);
    const std::size_t rank = out.size();
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t oa = 0, ob = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        fn(i, oa, ob);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out[d]) break;
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

}  // namespace detail

/// Define-by-run reverse-mode tape. Nodes are appended in forward order,
/// which is already a topological order, so one reverse sweep settles
/// every gradient. A graph belongs to one thread; rebuild per forward.
template <class Real>
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool grad_enabled() const { return grad_enabled_; }
    std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }

    /// Leaf for a learnable parameter. One node per parameter per graph;
    /// repeated calls return the same handle.
    Var<Real> param(Parameter<Real>& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return {this, it->second};
        Node n;
        n.borrowed = &p.value;
        n.requires_grad = grad_enabled_;
        n.param = &p;
        const std::int64_t id = push(std::move(n), "param");
        param_nodes_.emplace(&p, id);
        return {this, id};
    }

    /// Leaf for observed data; owns a copy, no gradient.
    Var<Real> input(const Tensor<Real>& x) {
        Node n;
        n.value = x;
        return {this, push(std::move(n), "input")};
    }

    template <class Other>
    Var<Real> input_cast(const Tensor<Other>& x) {
        Node n;
        n.value = x.template cast<Real>();
        return {this, push(std::move(n), "input")};
    }

    /// Leaf for a computed constant (positional tables etc.).
    Var<Real> constant(Tensor<Real> x) {
        Node n;
        n.value = std::move(x);
        return {this, push(std::move(n), "constant")};
    }

    const Tensor<Real>& value(std::int64_t id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.borrowed ? *n.borrowed : n.value;
    }

    /// Gradient buffer of a node; zeros if the node was not reached.
    const Tensor<Real>& grad(std::int64_t id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) n.grad = Tensor<Real>::zeros(value(id).shape());
        return n.grad;
    }

    bool requires_grad(std::int64_t id) const {
        return nodes_[static_cast<std::size_t>(id)].requires_grad;
    }

    using Backprop = std::function<void(Graph&, std::int64_t)>;

    /// Append an op result. `parents` are consumed node ids; `backprop`
    /// scatters this node's grad into them and may read any node value.
    Var<Real> op(Tensor<Real> value, std::vector<std::int64_t> parents, Backprop backprop,
                 const char* name) {
        Node n;
        n.value = std::move(value);
        if (grad_enabled_) {
            for (auto p : parents)
                if (nodes_[static_cast<std::size_t>(p)].requires_grad) {
                    n.requires_grad = true;
                    break;
                }
        }
        if (n.requires_grad) {
            n.parents = std::move(parents);
            n.backprop = std::move(backprop);
        }
        return {this, push(std::move(n), name)};
    }

    /// Add `src` into a node's grad buffer elementwise.
    void accum_grad(std::int64_t id, const Real* src, std::int64_t count) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad) return;
        if (n.grad.empty()) n.grad = Tensor<Real>::zeros(value(id).shape());
        if (count != n.grad.numel())
            throw DimensionError("gradient size mismatch on accumulate");
        Real* dst = n.grad.data().data();
        for (std::int64_t i = 0; i < count; ++i) dst[i] += src[i];
    }

    void accum_grad(std::int64_t id, const Tensor<Real>& g) {
        accum_grad(id, g.data().data(), g.numel());
    }

    /// Reverse sweep from a scalar loss. Populates every reachable
    /// requires_grad node and adds leaf grads into their Parameters.
    void backward(Var<Real> loss) {
        if (loss.g != this) throw ContractError("backward: loss from another graph");
        if (value(loss.id).numel() != 1)
            throw ContractError("backward requires a scalar loss, got shape " +
                                shape_str(value(loss.id).shape()));
        if (!grad_enabled_) throw ContractError("backward on a no-grad graph");

        Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
        if (ln.grad.empty()) ln.grad = Tensor<Real>::zeros(value(loss.id).shape());
        ln.grad.at(0) += Real(1);

        for (std::int64_t id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
            n.backprop(*this, id);
        }
        for (auto& n : nodes_) {
            if (n.param && n.requires_grad && !n.grad.empty()) {
                auto& dst = n.param->grad.data();
                const auto& src = n.grad.data();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            }
        }
    }

    const std::vector<std::int64_t>& parents(std::int64_t id) const {
        return nodes_[static_cast<std::size_t>(id)].parents;
    }

private:
    struct Node {
        Tensor<Real> value;
        const Tensor<Real>* borrowed = nullptr;
        Tensor<Real> grad;
        bool requires_grad = false;
        Parameter<Real>* param = nullptr;
        std::vector<std::int64_t> parents;
        Backprop backprop;
    };

    std::int64_t push(Node n, const char* name) {
        if (debug_checks()) {
            const Tensor<Real>& v = n.borrowed ? *n.borrowed : n.value;
            if (!v.all_finite())
                throw NumericError(std::string("non-finite values after op '") + name + "'");
        }
        nodes_.push_back(std::move(n));
        return static_cast<std::int64_t>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter<Real>*, std::int64_t> param_nodes_;
    bool grad_enabled_;
};

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

namespace detail {

template <class Real>
void require_same_graph(const Var<Real>& a, const Var<Real>& b) {
    if (a.g != b.g) throw ContractError("operands belong to different graphs");
}

enum class BinKind { Add, Sub, Mul };

template <class Real>
Var<Real> binary(Var<Real> a, Var<Real> b, BinKind kind, const char* name) {
    require_same_graph(a, b);
    Graph<Real>& g = *a.g;
    const Tensor<Real>& av = g.value(a.id);
    const Tensor<Real>& bv = g.value(b.id);
    const Shape out_shape = broadcast_shape(av.shape(), bv.shape());
    const auto sa = broadcast_strides(av.shape(), out_shape);
    const auto sb = broadcast_strides(bv.shape(), out_shape);

    Tensor<Real> out(out_shape);
    {
        Real* o = out.data().data();
        const Real* pa = av.data().data();
        const Real* pb = bv.data().data();
        if (av.same_shape(bv)) {
            const std::int64_t n = out.numel();
            switch (kind) {
                case BinKind::Add: for (std::int64_t i = 0; i < n; ++i) o[i] = pa[i] + pb[i]; break;
                case BinKind::Sub: for (std::int64_t i = 0; i < n; ++i) o[i] = pa[i] - pb[i]; break;
                case BinKind::Mul: for (std::int64_t i = 0; i < n; ++i) o[i] = pa[i] * pb[i]; break;
            }
        } else {
            broadcast_walk(out_shape, sa, sb, [&](std::int64_t i, std::int64_t oa, std::int64_t ob) {
                switch (kind) {
                    case BinKind::Add: o[i] = pa[oa] + pb[ob]; break;
                    case BinKind::Sub: o[i] = pa[oa] - pb[ob]; break;
                    case BinKind::Mul: o[i] = pa[oa] * pb[ob]; break;
                }
            });
        }
    }

    auto backprop = [aid = a.id, bid = b.id, kind, out_shape, sa, sb](Graph<Real>& gr,
                                                                      std::int64_t self) {
        const Tensor<Real>& dout = gr.grad(self);
        const Tensor<Real>& av2 = gr.value(aid);
        const Tensor<Real>& bv2 = gr.value(bid);
        Tensor<Real> da = Tensor<Real>::zeros(av2.shape());
        Tensor<Real> db = Tensor<Real>::zeros(bv2.shape());
        const Real* d = dout.data().data();
        const Real* pa = av2.data().data();
        const Real* pb = bv2.data().data();
        Real* ga = da.data().data();
        Real* gb = db.data().data();
        broadcast_walk(out_shape, sa, sb, [&](std::int64_t i, std::int64_t oa, std::int64_t ob) {
            switch (kind) {
                case BinKind::Add: ga[oa] += d[i]; gb[ob] += d[i]; break;
                case BinKind::Sub: ga[oa] += d[i]; gb[ob] -= d[i]; break;
                case BinKind::Mul: ga[oa] += d[i] * pb[ob]; gb[ob] += d[i] * pa[oa]; break;
            }
        });
        gr.accum_grad(aid, da);
        gr.accum_grad(bid, db);
    };
    return g.op(std::move(out), {a.id, b.id}, std::move(backprop), name);
}

}  // namespace detail

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) { return detail::binary(a, b, detail::BinKind::Add, "add"); }
template <class Real>
Var<Real> sub(Var<Real> a, Var<Real> b) { return detail::binary(a, b, detail::BinKind::Sub, "sub"); }
template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) { return detail::binary(a, b, detail::BinKind::Mul, "mul"); }

template <class Real>
Var<Real> operator+(Var<Real> a, Var<Real> b) { return add(a, b); }
template <class Real>
Var<Real> operator-(Var<Real> a, Var<Real> b) { return sub(a, b); }
template <class Real>
Var<Real> operator*(Var<Real> a, Var<Real> b) { return mul(a, b); }

/// Multiply by a compile-time-known constant.
template <class Real>
Var<Real> scale(Var<Real> x, Real c) {
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    Tensor<Real> out(xv.shape());
    for (std::int64_t i = 0; i < xv.numel(); ++i) out.at(i) = xv.at(i) * c;
    auto backprop = [xid = x.id, c](Graph<Real>& gr, std::int64_t self) {
        const Tensor<Real>& dout = gr.grad(self);
        Tensor<Real> dx(dout.shape());
        for (std::int64_t i = 0; i < dout.numel(); ++i) dx.at(i) = dout.at(i) * c;
        gr.accum_grad(xid, dx);
    };
    return g.op(std::move(out), {x.id}, std::move(backprop), "scale");
}

namespace detail {

// Unary elementwise op: value map plus derivative as a function of the
// input (and output where that is cheaper).
template <class Real, class FwdFn, class DervFn>
Var<Real> unary(Var<Real> x, FwdFn fwd, DervFn derv, const char* name) {
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    Tensor<Real> out(xv.shape());
    for (std::int64_t i = 0; i < xv.numel(); ++i) out.at(i) = fwd(xv.at(i));
    auto backprop = [xid = x.id, derv](Graph<Real>& gr, std::int64_t self) {
        const Tensor<Real>& dout = gr.grad(self);
        const Tensor<Real>& xin = gr.value(xid);
        Tensor<Real> dx(xin.shape());
        for (std::int64_t i = 0; i < xin.numel(); ++i) dx.at(i) = dout.at(i) * derv(xin.at(i));
        gr.accum_grad(xid, dx);
    };
    return g.op(std::move(out), {x.id}, std::move(backprop), name);
}

}  // namespace detail

template <class Real>
Var<Real> square(Var<Real> x) {
    return detail::unary(
        x, [](Real v) { return v * v; }, [](Real v) { return Real(2) * v; }, "square");
}

template <class Real>
Var<Real> abs_val(Var<Real> x) {
    return detail::unary(
        x, [](Real v) { return v < Real(0) ? -v : v; },
        [](Real v) { return v < Real(0) ? Real(-1) : Real(1); }, "abs");
}

template <class Real>
Var<Real> relu(Var<Real> x) {
    return detail::unary(
        x, [](Real v) { return v > Real(0) ? v : Real(0); },
        [](Real v) { return v > Real(0) ? Real(1) : Real(0); }, "relu");
}

/// Exact gaussian GELU, x * Phi(x).
template <class Real>
Var<Real> gelu(Var<Real> x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return detail::unary(
        x,
        [=](Real v) {
            const double d = static_cast<double>(v);
            return static_cast<Real>(d * 0.5 * (1.0 + std::erf(d * inv_sqrt2)));
        },
        [=](Real v) {
            const double d = static_cast<double>(v);
            const double phi = 0.5 * (1.0 + std::erf(d * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * d * d);
            return static_cast<Real>(phi + d * pdf);
        },
        "gelu");
}

/// Standard matrix product, 2-D only. dA = dC·Bᵀ, dB = Aᵀ·dC.
template <class Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
    detail::require_same_graph(a, b);
    Graph<Real>& g = *a.g;
    const Tensor<Real>& av = g.value(a.id);
    const Tensor<Real>& bv = g.value(b.id);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
        throw DimensionError("matmul shape mismatch: " + shape_str(av.shape()) + " vs " +
                             shape_str(bv.shape()));
    const std::int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);

    Tensor<Real> out({m, n});
    {
        const Real* pa = av.data().data();
        const Real* pb = bv.data().data();
        Real* po = out.data().data();
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t l = 0; l < k; ++l) {
                const Real aval = pa[i * k + l];
                const Real* brow = pb + l * n;
                Real* orow = po + i * n;
                for (std::int64_t j = 0; j < n; ++j) orow[j] += aval * brow[j];
            }
    }

    auto backprop = [aid = a.id, bid = b.id, m, k, n](Graph<Real>& gr, std::int64_t self) {
        const Real* d = gr.grad(self).data().data();
        const Real* pa = gr.value(aid).data().data();
        const Real* pb = gr.value(bid).data().data();
        Tensor<Real> da({m, k});
        Tensor<Real> db({k, n});
        Real* ga = da.data().data();
        Real* gb = db.data().data();
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t l = 0; l < k; ++l) {
                const Real* drow = d + i * n;
                const Real* brow = pb + l * n;
                Real acc = Real(0);
                for (std::int64_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
                ga[i * k + l] += acc;
            }
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t l = 0; l < k; ++l) {
                const Real aval = pa[i * k + l];
                const Real* drow = d + i * n;
                Real* grow = gb + l * n;
                for (std::int64_t j = 0; j < n; ++j) grow[j] += aval * drow[j];
            }
        gr.accum_grad(aid, da);
        gr.accum_grad(bid, db);
    };
    return g.op(std::move(out), {a.id, b.id}, std::move(backprop), "matmul");
}

template <class Real>
Var<Real> transpose(Var<Real> x) {
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    if (xv.rank() != 2) throw DimensionError("transpose expects rank 2, got " + shape_str(xv.shape()));
    const std::int64_t r = xv.dim(0), c = xv.dim(1);
    Tensor<Real> out({c, r});
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out.at(j, i) = xv.at(i, j);
    auto backprop = [xid = x.id, r, c](Graph<Real>& gr, std::int64_t self) {
        const Tensor<Real>& dout = gr.grad(self);
        Tensor<Real> dx({r, c});
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j) dx.at(i, j) = dout.at(j, i);
        gr.accum_grad(xid, dx);
    };
    return g.op(std::move(out), {x.id}, std::move(backprop), "transpose");
}

/// Row-wise softmax with per-row max subtraction. Stable for any finite
/// input; rows sum to one.
template <class Real>
Var<Real> softmax_rows(Var<Real> x) {
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    if (xv.rank() != 2) throw DimensionError("softmax_rows expects rank 2, got " + shape_str(xv.shape()));
    const std::int64_t r = xv.dim(0), c = xv.dim(1);
    Tensor<Real> out({r, c});
    for (std::int64_t i = 0; i < r; ++i) {
        Real mx = xv.at(i, 0);
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, xv.at(i, j));
        double denom = 0;
        for (std::int64_t j = 0; j < c; ++j) {
            const Real e = static_cast<Real>(std::exp(static_cast<double>(xv.at(i, j) - mx)));
            out.at(i, j) = e;
            denom += static_cast<double>(e);
        }
        for (std::int64_t j = 0; j < c; ++j)
            out.at(i, j) = static_cast<Real>(static_cast<double>(out.at(i, j)) / denom);
    }
    // dx = y ∘ (dy − rowsum(dy ∘ y))
    auto backprop = [xid = x.id, r, c](Graph<Real>& gr, std::int64_t self) {
        const Tensor<Real>& y = gr.value(self);
        const Tensor<Real>& dy = gr.grad(self);
        Tensor<Real> dx({r, c});
        for (std::int64_t i = 0; i < r; ++i) {
            double dot = 0;
            for (std::int64_t j = 0; j < c; ++j)
                dot += static_cast<double>(dy.at(i, j)) * static_cast<double>(y.at(i, j));
            for (std::int64_t j = 0; j < c; ++j)
                dx.at(i, j) = y.at(i, j) * (dy.at(i, j) - static_cast<Real>(dot));
        }
        gr.accum_grad(xid, dx);
    };
    return g.op(std::move(out), {x.id}, std::move(backprop), "softmax_rows");
}

/// Concatenate along an axis; backward splits the gradient at the same
/// offsets.
template <class Real>
Var<Real> concat(const std::vector<Var<Real>>& parts, std::int64_t axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    Graph<Real>& g = *parts.front().g;
    std::vector<Tensor<Real>> values;
    std::vector<std::int64_t> ids;
    std::vector<std::int64_t> widths;
    values.reserve(parts.size());
    for (const auto& p : parts) {
        detail::require_same_graph(parts.front(), p);
        values.push_back(g.value(p.id));
        ids.push_back(p.id);
        if (axis >= 0 && axis < values.back().rank()) widths.push_back(values.back().dim(axis));
    }
    Tensor<Real> out = concat_values(values, axis);

    auto backprop = [ids, widths, axis](Graph<Real>& gr, std::int64_t self) {
        const auto pieces = split_values(gr.grad(self), axis, widths);
        for (std::size_t i = 0; i < ids.size(); ++i) gr.accum_grad(ids[i], pieces[i]);
    };
    return g.op(std::move(out), ids, std::move(backprop), "concat");
}

/// Columns [start, start+len) of a 2-D tensor.
template <class Real>
Var<Real> slice_cols(Var<Real> x, std::int64_t start, std::int64_t len) {
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    if (xv.rank() != 2 || start < 0 || len <= 0 || start + len > xv.dim(1))
        throw DimensionError("slice_cols out of range for " + shape_str(xv.shape()));
    const std::int64_t r = xv.dim(0), c = xv.dim(1);
    Tensor<Real> out({r, len});
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < len; ++j) out.at(i, j) = xv.at(i, start + j);
    auto backprop = [xid = x.id, start, len, r, c](Graph<Real>& gr, std::int64_t self) {
        const Tensor<Real>& dout = gr.grad(self);
        Tensor<Real> dx({r, c});
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < len; ++j) dx.at(i, start + j) = dout.at(i, j);
        gr.accum_grad(xid, dx);
    };
    return g.op(std::move(out), {x.id}, std::move(backprop), "slice_cols");
}

/// Temporal mean over rows: [T,d] → [1,d].
template <class Real>
Var<Real> mean_rows(Var<Real> x) {
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    if (xv.rank() != 2) throw DimensionError("mean_rows expects rank 2, got " + shape_str(xv.shape()));
    const std::int64_t t = xv.dim(0), d = xv.dim(1);
    Tensor<Real> out({1, d});
    for (std::int64_t j = 0; j < d; ++j) {
        double acc = 0;
        for (std::int64_t i = 0; i < t; ++i) acc += static_cast<double>(xv.at(i, j));
        out.at(0, j) = static_cast<Real>(acc / static_cast<double>(t));
    }
    auto backprop = [xid = x.id, t, d](Graph<Real>& gr, std::int64_t self) {
        const Tensor<Real>& dout = gr.grad(self);
        Tensor<Real> dx({t, d});
        for (std::int64_t i = 0; i < t; ++i)
            for (std::int64_t j = 0; j < d; ++j)
                dx.at(i, j) = dout.at(0, j) / static_cast<Real>(t);
        gr.accum_grad(xid, dx);
    };
    return g.op(std::move(out), {x.id}, std::move(backprop), "mean_rows");
}

template <class Real>
Var<Real> sum_all(Var<Real> x) {
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    double acc = 0;
    for (std::int64_t i = 0; i < xv.numel(); ++i) acc += static_cast<double>(xv.at(i));
    auto backprop = [xid = x.id](Graph<Real>& gr, std::int64_t self) {
        const Real d = gr.grad(self).at(0);
        Tensor<Real> dx = Tensor<Real>::full(gr.value(xid).shape(), d);
        gr.accum_grad(xid, dx);
    };
    return g.op(Tensor<Real>::scalar(static_cast<Real>(acc)), {x.id}, std::move(backprop), "sum_all");
}

template <class Real>
Var<Real> mean_all(Var<Real> x) {
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    const std::int64_t n = xv.numel();
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(xv.at(i));
    auto backprop = [xid = x.id, n](Graph<Real>& gr, std::int64_t self) {
        const Real d = gr.grad(self).at(0) / static_cast<Real>(n);
        Tensor<Real> dx = Tensor<Real>::full(gr.value(xid).shape(), d);
        gr.accum_grad(xid, dx);
    };
    return g.op(Tensor<Real>::scalar(static_cast<Real>(acc / static_cast<double>(n))), {x.id},
                std::move(backprop), "mean_all");
}

/// Cut the gradient flow: value passes through, history does not.
template <class Real>
Var<Real> detach(Var<Real> x) {
    return x.g->constant(x.g->value(x.id));
}

/// Linear temporal resampling on the align-endpoints grid: output row t'
/// sits at source position t'·(T−1)/(T'−1). T' == T copies exactly.
template <class Real>
Var<Real> resample(Var<Real> x, std::int64_t t_out) {
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    if (xv.rank() != 2) throw DimensionError("resample expects rank 2, got " + shape_str(xv.shape()));
    if (t_out < 1) throw ContractError("resample target length must be >= 1");
    const std::int64_t t_in = xv.dim(0), d = xv.dim(1);

    if (t_out == t_in) {
        Tensor<Real> out = xv;
        auto backprop = [xid = x.id](Graph<Real>& gr, std::int64_t self) {
            gr.accum_grad(xid, gr.grad(self));
        };
        return g.op(std::move(out), {x.id}, std::move(backprop), "resample");
    }

    std::vector<std::int64_t> i0(static_cast<std::size_t>(t_out));
    std::vector<Real> w(static_cast<std::size_t>(t_out));
    for (std::int64_t t = 0; t < t_out; ++t) {
        double pos = 0.0;
        if (t_out > 1)
            pos = static_cast<double>(t) * static_cast<double>(t_in - 1) /
                  static_cast<double>(t_out - 1);
        std::int64_t lo = static_cast<std::int64_t>(pos);
        if (lo > t_in - 2) lo = std::max<std::int64_t>(0, t_in - 2);
        i0[static_cast<std::size_t>(t)] = lo;
        w[static_cast<std::size_t>(t)] =
            t_in == 1 ? Real(0) : static_cast<Real>(pos - static_cast<double>(lo));
    }

    Tensor<Real> out({t_out, d});
    for (std::int64_t t = 0; t < t_out; ++t) {
        const std::int64_t lo = i0[static_cast<std::size_t>(t)];
        const std::int64_t hi = std::min(lo + 1, t_in - 1);
        const Real wt = w[static_cast<std::size_t>(t)];
        for (std::int64_t j = 0; j < d; ++j)
            out.at(t, j) = (Real(1) - wt) * xv.at(lo, j) + wt * xv.at(hi, j);
    }
    auto backprop = [xid = x.id, i0, w, t_in, t_out, d](Graph<Real>& gr, std::int64_t self) {
        const Tensor<Real>& dout = gr.grad(self);
        Tensor<Real> dx({t_in, d});
        for (std::int64_t t = 0; t < t_out; ++t) {
            const std::int64_t lo = i0[static_cast<std::size_t>(t)];
            const std::int64_t hi = std::min(lo + 1, t_in - 1);
            const Real wt = w[static_cast<std::size_t>(t)];
            for (std::int64_t j = 0; j < d; ++j) {
                dx.at(lo, j) += (Real(1) - wt) * dout.at(t, j);
                dx.at(hi, j) += wt * dout.at(t, j);
            }
        }
        gr.accum_grad(xid, dx);
    };
    return g.op(std::move(out), {x.id}, std::move(backprop), "resample");
}

/// Same-padded 1-D convolution over time. `weight` holds the taps
/// flattened to [kernel·d_in, d_out]; `bias` is [d_out].
template <class Real>
Var<Real> conv1d_same(Var<Real> x, Var<Real> weight, Var<Real> bias, std::int64_t kernel) {
    detail::require_same_graph(x, weight);
    detail::require_same_graph(x, bias);
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    const Tensor<Real>& wv = g.value(weight.id);
    const Tensor<Real>& bv = g.value(bias.id);
    if (xv.rank() != 2 || wv.rank() != 2) throw DimensionError("conv1d_same expects rank-2 x and weight");
    const std::int64_t t = xv.dim(0), d_in = xv.dim(1), d_out = wv.dim(1);
    if (wv.dim(0) != kernel * d_in)
        throw DimensionError("conv1d_same weight " + shape_str(wv.shape()) + " does not match kernel " +
                             std::to_string(kernel) + " x input " + shape_str(xv.shape()));
    if (bv.numel() != d_out) throw DimensionError("conv1d_same bias length mismatch");
    const std::int64_t pad = (kernel - 1) / 2;

    Tensor<Real> out({t, d_out});
    for (std::int64_t i = 0; i < t; ++i) {
        for (std::int64_t j = 0; j < d_out; ++j) out.at(i, j) = bv.at(j);
        for (std::int64_t tap = 0; tap < kernel; ++tap) {
            const std::int64_t src = i + tap - pad;
            if (src < 0 || src >= t) continue;
            for (std::int64_t c = 0; c < d_in; ++c) {
                const Real xval = xv.at(src, c);
                const std::int64_t wrow = tap * d_in + c;
                for (std::int64_t j = 0; j < d_out; ++j) out.at(i, j) += xval * wv.at(wrow, j);
            }
        }
    }
    auto backprop = [xid = x.id, wid = weight.id, bid = bias.id, t, d_in, d_out, kernel,
                     pad](Graph<Real>& gr, std::int64_t self) {
        const Tensor<Real>& dout = gr.grad(self);
        const Tensor<Real>& xin = gr.value(xid);
        const Tensor<Real>& win = gr.value(wid);
        Tensor<Real> dx({t, d_in});
        Tensor<Real> dw({kernel * d_in, d_out});
        Tensor<Real> db({d_out});
        for (std::int64_t i = 0; i < t; ++i) {
            for (std::int64_t j = 0; j < d_out; ++j) db.at(j) += dout.at(i, j);
            for (std::int64_t tap = 0; tap < kernel; ++tap) {
                const std::int64_t src = i + tap - pad;
                if (src < 0 || src >= t) continue;
                for (std::int64_t c = 0; c < d_in; ++c) {
                    const std::int64_t wrow = tap * d_in + c;
                    Real acc = Real(0);
                    for (std::int64_t j = 0; j < d_out; ++j) {
                        acc += dout.at(i, j) * win.at(wrow, j);
                        dw.at(wrow, j) += xin.at(src, c) * dout.at(i, j);
                    }
                    dx.at(src, c) += acc;
                }
            }
        }
        gr.accum_grad(xid, dx);
        gr.accum_grad(wid, dw);
        gr.accum_grad(bid, db);
    };
    return g.op(std::move(out), {x.id, weight.id, bias.id}, std::move(backprop), "conv1d_same");
}

/// Row-wise layer normalization with learned scale and shift.
template <class Real>
Var<Real> layer_norm(Var<Real> x, Var<Real> gamma, Var<Real> beta, Real eps) {
    detail::require_same_graph(x, gamma);
    detail::require_same_graph(x, beta);
    if (eps <= Real(0)) throw ContractError("layer_norm eps must be > 0");
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    if (xv.rank() != 2) throw DimensionError("layer_norm expects rank 2, got " + shape_str(xv.shape()));
    const std::int64_t t = xv.dim(0), d = xv.dim(1);
    const Tensor<Real>& gv = g.value(gamma.id);
    const Tensor<Real>& bv = g.value(beta.id);
    if (gv.numel() != d || bv.numel() != d)
        throw DimensionError("layer_norm gamma/beta length mismatch for " + shape_str(xv.shape()));

    Tensor<Real> xhat({t, d});
    Tensor<Real> inv({t});
    Tensor<Real> out({t, d});
    for (std::int64_t i = 0; i < t; ++i) {
        double mean = 0;
        for (std::int64_t j = 0; j < d; ++j) mean += static_cast<double>(xv.at(i, j));
        mean /= static_cast<double>(d);
        double var = 0;
        for (std::int64_t j = 0; j < d; ++j) {
            const double c = static_cast<double>(xv.at(i, j)) - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double iv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        inv.at(i) = static_cast<Real>(iv);
        for (std::int64_t j = 0; j < d; ++j) {
            const Real h = static_cast<Real>((static_cast<double>(xv.at(i, j)) - mean) * iv);
            xhat.at(i, j) = h;
            out.at(i, j) = gv.at(j) * h + bv.at(j);
        }
    }
    auto backprop = [xid = x.id, gid = gamma.id, bid = beta.id, xhat, inv, t,
                     d](Graph<Real>& gr, std::int64_t self) {
        const Tensor<Real>& dout = gr.grad(self);
        const Tensor<Real>& gv2 = gr.value(gid);
        Tensor<Real> dx({t, d});
        Tensor<Real> dgamma({d});
        Tensor<Real> dbeta({d});
        for (std::int64_t i = 0; i < t; ++i) {
            double m_dh = 0, m_dhh = 0;
            for (std::int64_t j = 0; j < d; ++j) {
                const double dh = static_cast<double>(dout.at(i, j)) * static_cast<double>(gv2.at(j));
                m_dh += dh;
                m_dhh += dh * static_cast<double>(xhat.at(i, j));
                dgamma.at(j) += dout.at(i, j) * xhat.at(i, j);
                dbeta.at(j) += dout.at(i, j);
            }
            m_dh /= static_cast<double>(d);
            m_dhh /= static_cast<double>(d);
            for (std::int64_t j = 0; j < d; ++j) {
                const double dh = static_cast<double>(dout.at(i, j)) * static_cast<double>(gv2.at(j));
                dx.at(i, j) = static_cast<Real>(
                    static_cast<double>(inv.at(i)) *
                    (dh - m_dh - static_cast<double>(xhat.at(i, j)) * m_dhh));
            }
        }
        gr.accum_grad(xid, dx);
        gr.accum_grad(gid, dgamma);
        gr.accum_grad(bid, dbeta);
    };
    return g.op(std::move(out), {x.id, gamma.id, beta.id}, std::move(backprop), "layer_norm");
}

/// Inverted dropout with a fixed keep mask drawn from `rng`. rate == 0 is
/// the identity and adds no node.
template <class Real>
Var<Real> dropout(Var<Real> x, double rate, Rng& rng) {
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw ContractError("dropout rate must be < 1");
    Graph<Real>& g = *x.g;
    const Tensor<Real>& xv = g.value(x.id);
    const Real keep_scale = static_cast<Real>(1.0 / (1.0 - rate));
    Tensor<Real> mask(xv.shape());
    for (std::int64_t i = 0; i < mask.numel(); ++i)
        mask.at(i) = rng.uniform() >= rate ? keep_scale : Real(0);
    Tensor<Real> out(xv.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = xv.at(i) * mask.at(i);
    auto backprop = [xid = x.id, mask](Graph<Real>& gr, std::int64_t self) {
        const Tensor<Real>& dout = gr.grad(self);
        Tensor<Real> dx(dout.shape());
        for (std::int64_t i = 0; i < dx.numel(); ++i) dx.at(i) = dout.at(i) * mask.at(i);
        gr.accum_grad(xid, dx);
    };
    return g.op(std::move(out), {x.id}, std::move(backprop), "dropout");
}

/// Softmax cross-entropy against an integer class for a [C] logit vector.
template <class Real>
Var<Real> cross_entropy_logits(Var<Real> logits, std::int64_t label) {
    Graph<Real>& g = *logits.g;
    const Tensor<Real>& lv = g.value(logits.id);
    const std::int64_t c = lv.numel();
    if (label < 0 || label >= c)
        throw ContractError("label " + std::to_string(label) + " out of range for " +
                            std::to_string(c) + " classes");
    double mx = static_cast<double>(lv.at(0));
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(lv.at(j)));
    double denom = 0;
    for (std::int64_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(lv.at(j)) - mx);
    const double log_z = std::log(denom) + mx;
    const double loss = log_z - static_cast<double>(lv.at(label));

    Tensor<Real> probs({c});
    for (std::int64_t j = 0; j < c; ++j)
        probs.at(j) = static_cast<Real>(std::exp(static_cast<double>(lv.at(j)) - log_z));

    auto backprop = [lid = logits.id, label, probs, c](Graph<Real>& gr, std::int64_t self) {
        const Real d = gr.grad(self).at(0);
        Tensor<Real> dx({c});
        for (std::int64_t j = 0; j < c; ++j)
            dx.at(j) = d * (probs.at(j) - (j == label ? Real(1) : Real(0)));
        gr.accum_grad(lid, dx);
    };
    return g.op(Tensor<Real>::scalar(static_cast<Real>(loss)), {logits.id}, std::move(backprop),
                "cross_entropy");
}

/// Per-class sigmoid binary cross-entropy, summed over classes. Uses the
/// max(x,0) − x·y + log(1+exp(−|x|)) formulation for stability.
template <class Real>
Var<Real> sigmoid_bce_logits(Var<Real> logits, const std::vector<int>& targets) {
    Graph<Real>& g = *logits.g;
    const Tensor<Real>& lv = g.value(logits.id);
    const std::int64_t c = lv.numel();
    if (static_cast<std::int64_t>(targets.size()) != c)
        throw ContractError("binary target count " + std::to_string(targets.size()) +
                            " does not match " + std::to_string(c) + " logits");
    for (int t : targets)
        if (t != 0 && t != 1) throw ContractError("binary targets must be 0 or 1");

    double loss = 0;
    Tensor<Real> sig({c});
    for (std::int64_t j = 0; j < c; ++j) {
        const double x = static_cast<double>(lv.at(j));
        const double y = static_cast<double>(targets[static_cast<std::size_t>(j)]);
        loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
        sig.at(j) = static_cast<Real>(1.0 / (1.0 + std::exp(-x)));
    }
    auto backprop = [lid = logits.id, sig, targets, c](Graph<Real>& gr, std::int64_t self) {
        const Real d = gr.grad(self).at(0);
        Tensor<Real> dx({c});
        for (std::int64_t j = 0; j < c; ++j)
            dx.at(j) = d * (sig.at(j) - static_cast<Real>(targets[static_cast<std::size_t>(j)]));
        gr.accum_grad(lid, dx);
    };
    return g.op(Tensor<Real>::scalar(static_cast<Real>(loss)), {logits.id}, std::move(backprop),
                "sigmoid_bce");
}

/// Central-difference gradient estimate of a scalar function. This is the
/// independent oracle the backward pass is checked against; it only ever
/// calls the forward function.
template <class Real, class Fn>
Tensor<Real> finite_difference_grad(Fn&& f, Tensor<Real> x, Real eps) {
    if (eps <= Real(0)) throw ContractError("finite_difference_grad eps must be > 0");
    Tensor<Real> grad(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const Real saved = x.at(i);
        x.at(i) = saved + eps;
        const Real up = f(static_cast<const Tensor<Real>&>(x));
        x.at(i) = saved - eps;
        const Real down = f(static_cast<const Tensor<Real>&>(x));
        x.at(i) = saved;
        grad.at(i) = (up - down) / (Real(2) * eps);
    }
    return grad;
}

}  // namespace mbkt
