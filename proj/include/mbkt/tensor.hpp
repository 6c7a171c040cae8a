// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "mbkt/errors.hpp"

namespace mbkt {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

/// Dense row-major n-dimensional array. Plain value semantics; the
/// autodiff graph layers gradients on top of this type.
template <class Real>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<std::size_t>(shape_numel(shape_)), Real(0));
    }

    Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, Real v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), Real(1)); }

    static Tensor scalar(Real v) { return Tensor({1}, {v}); }

    static Tensor row(std::initializer_list<Real> vals) {
        return Tensor({static_cast<std::int64_t>(vals.size())}, std::vector<Real>(vals));
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows) {
        const std::int64_t r = static_cast<std::int64_t>(rows.size());
        const std::int64_t c = r ? static_cast<std::int64_t>(rows.begin()->size()) : 0;
        std::vector<Real> data;
        data.reserve(static_cast<std::size_t>(r * c));
        for (const auto& row : rows) {
            if (static_cast<std::int64_t>(row.size()) != c)
                throw DimensionError("ragged matrix literal");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(data));
    }

    /// Identity matrix.
    static Tensor eye(std::int64_t n) {
        Tensor t({n, n});
        for (std::int64_t i = 0; i < n; ++i) t.at(i, i) = Real(1);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::int64_t i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    std::vector<Real>& data() { return data_; }
    const std::vector<Real>& data() const { return data_; }

    Real& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    Real at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    Real& at(std::int64_t i, std::int64_t j) {
        return data_[static_cast<std::size_t>(i * shape_[1] + j)];
    }
    Real at(std::int64_t i, std::int64_t j) const {
        return data_[static_cast<std::size_t>(i * shape_[1] + j)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const Real v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class Other>
    Tensor<Other> cast() const {
        std::vector<Other> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<Other>(data_[i]);
        return Tensor<Other>(shape_, std::move(out));
    }

private:
    void validate_shape() const {
        for (auto d : shape_)
            if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<Real> data_;
};

/// Value-level concatenation along an axis. All off-axis dims must match.
template <class Real>
Tensor<Real> concat_values(const std::vector<Tensor<Real>>& parts, std::int64_t axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    const auto& first = parts.front().shape();
    const std::int64_t rank = static_cast<std::int64_t>(first.size());
    if (axis < 0 || axis >= rank) throw DimensionError("concat axis out of range");

    Shape out_shape = first;
    out_shape[static_cast<std::size_t>(axis)] = 0;
    for (const auto& p : parts) {
        if (p.rank() != rank) throw DimensionError("concat rank mismatch");
        for (std::int64_t d = 0; d < rank; ++d) {
            if (d == axis) continue;
            if (p.dim(d) != first[static_cast<std::size_t>(d)])
                throw DimensionError("concat off-axis mismatch: " + shape_str(p.shape()) +
                                     " vs " + shape_str(first));
        }
        out_shape[static_cast<std::size_t>(axis)] += p.dim(axis);
    }

    // outer = product of dims before axis, inner = product after.
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= first[static_cast<std::size_t>(d)];
    for (std::int64_t d = axis + 1; d < rank; ++d) inner *= first[static_cast<std::size_t>(d)];

    Tensor<Real> out(out_shape);
    const std::int64_t out_axis = out_shape[static_cast<std::size_t>(axis)];
    std::int64_t offset = 0;
    for (const auto& p : parts) {
        const std::int64_t a = p.dim(axis);
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t i = 0; i < a; ++i)
                for (std::int64_t k = 0; k < inner; ++k)
                    out.at((o * out_axis + offset + i) * inner + k) = p.at((o * a + i) * inner + k);
        offset += a;
    }
    return out;
}

/// Inverse of concat_values: cut `x` along `axis` at the given widths.
template <class Real>
std::vector<Tensor<Real>> split_values(const Tensor<Real>& x, std::int64_t axis,
                                       const std::vector<std::int64_t>& widths) {
    const std::int64_t rank = x.rank();
    if (axis < 0 || axis >= rank) throw DimensionError("split axis out of range");
    std::int64_t total = 0;
    for (auto w : widths) total += w;
    if (total != x.dim(axis))
        throw DimensionError("split widths sum to " + std::to_string(total) + ", axis has " +
                             std::to_string(x.dim(axis)));

    std::int64_t outer = 1, inner = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= x.dim(d);
    for (std::int64_t d = axis + 1; d < rank; ++d) inner *= x.dim(d);

    std::vector<Tensor<Real>> out;
    out.reserve(widths.size());
    std::int64_t offset = 0;
    const std::int64_t x_axis = x.dim(axis);
    for (auto w : widths) {
        Shape s = x.shape();
        s[static_cast<std::size_t>(axis)] = w;
        Tensor<Real> part(s);
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t i = 0; i < w; ++i)
                for (std::int64_t k = 0; k < inner; ++k)
                    part.at((o * w + i) * inner + k) = x.at((o * x_axis + offset + i) * inner + k);
        offset += w;
        out.push_back(std::move(part));
    }
    return out;
}

}  // namespace mbkt
