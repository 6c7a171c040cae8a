// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mbkt/errors.hpp"
#include "mbkt/model.hpp"

namespace mbkt {

// Checkpoint layout: magic "MBKT", version u16, entry count u32, then per
// entry: name length u32, name bytes, dtype tag u8 (0 = f32, 1 = f64),
// rank u8, dims u32 each, raw little-endian values.

inline constexpr char kCheckpointMagic[4] = {'M', 'B', 'K', 'T'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const char* what) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError(std::string("truncated checkpoint while reading ") + what);
    return v;
}

template <class Real>
constexpr std::uint8_t dtype_tag() {
    return sizeof(Real) == 4 ? 0 : 1;
}

}  // namespace detail

template <class Real>
void save_checkpoint(ModelParams<Real>& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out.write(kCheckpointMagic, 4);
    detail::write_pod<std::uint16_t>(out, kCheckpointVersion);

    std::uint32_t count = 0;
    params.visit([&](Parameter<Real>&) { ++count; });
    detail::write_pod<std::uint32_t>(out, count);

    params.visit([&](Parameter<Real>& p) {
        detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        detail::write_pod<std::uint8_t>(out, detail::dtype_tag<Real>());
        detail::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.rank()));
        for (std::int64_t d = 0; d < p.value.rank(); ++d)
            detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.dim(d)));
        out.write(reinterpret_cast<const char*>(p.value.data().data()),
                  static_cast<std::streamsize>(p.value.data().size() * sizeof(Real)));
    });
    if (!out) throw FormatError("write failed for '" + path + "'");
}

/// Fill an already-constructed model from a checkpoint. Entries must match
/// the model's parameters in order, name, dtype, and shape; nothing is
/// written into the model until the whole file has validated.
template <class Real>
void load_checkpoint(ModelParams<Real>& params, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint '" + path + "'");

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw FormatError("'" + path + "' is not a checkpoint (bad magic)");
    const auto version = detail::read_pod<std::uint16_t>(in, "version");
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (want " +
                          std::to_string(kCheckpointVersion) + ")");
    const auto count = detail::read_pod<std::uint32_t>(in, "entry count");

    struct Entry {
        std::string name;
        Shape shape;
        std::vector<Real> values;
    };
    std::vector<Entry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        const auto name_len = detail::read_pod<std::uint32_t>(in, "name length");
        e.name.resize(name_len);
        in.read(e.name.data(), name_len);
        if (!in) throw FormatError("truncated checkpoint while reading name");
        const auto tag = detail::read_pod<std::uint8_t>(in, "dtype tag");
        if (tag != detail::dtype_tag<Real>())
            throw FormatError("parameter '" + e.name + "' has dtype tag " + std::to_string(tag) +
                              ", this model stores tag " +
                              std::to_string(detail::dtype_tag<Real>()));
        const auto rank = detail::read_pod<std::uint8_t>(in, "rank");
        std::int64_t numel = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            const auto dim = detail::read_pod<std::uint32_t>(in, "dim");
            e.shape.push_back(static_cast<std::int64_t>(dim));
            numel *= static_cast<std::int64_t>(dim);
        }
        e.values.resize(static_cast<std::size_t>(numel));
        in.read(reinterpret_cast<char*>(e.values.data()),
                static_cast<std::streamsize>(e.values.size() * sizeof(Real)));
        if (!in) throw FormatError("truncated checkpoint while reading values of '" + e.name + "'");
        entries.push_back(std::move(e));
    }

    // Validate against the model before touching any weight.
    std::size_t idx = 0;
    std::string problem;
    params.visit([&](Parameter<Real>& p) {
        if (!problem.empty()) return;
        if (idx >= entries.size()) {
            problem = "checkpoint is missing parameter '" + p.name + "'";
            return;
        }
        const Entry& e = entries[idx++];
        if (e.name != p.name) {
            problem = "parameter name mismatch: model has '" + p.name + "', checkpoint has '" +
                      e.name + "'";
            return;
        }
        if (e.shape != p.value.shape()) {
            problem = "parameter '" + p.name + "' shape mismatch: model " +
                      shape_str(p.value.shape()) + ", checkpoint " + shape_str(e.shape);
        }
    });
    if (problem.empty() && idx != entries.size())
        problem = "checkpoint has " + std::to_string(entries.size() - idx) + " extra parameters";
    if (!problem.empty()) throw FormatError(problem);

    idx = 0;
    params.visit([&](Parameter<Real>& p) {
        p.value = Tensor<Real>(entries[idx].shape, std::move(entries[idx].values));
        ++idx;
    });
}

}  // namespace mbkt
