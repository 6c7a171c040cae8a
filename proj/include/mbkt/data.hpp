// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mbkt/errors.hpp"
#include "mbkt/rng.hpp"
#include "mbkt/tensor.hpp"
#include "mbkt/types.hpp"

namespace mbkt {

// ---------------------------------------------------------------------------
// base64 (feature payloads are base64 of little-endian float32)
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        const unsigned b0 = data[i];
        const unsigned b1 = i + 1 < len ? data[i + 1] : 0;
        const unsigned b2 = i + 2 < len ? data[i + 2] : 0;
        out += kB64Alphabet[b0 >> 2];
        out += kB64Alphabet[((b0 & 0x3) << 4) | (b1 >> 4)];
        out += i + 1 < len ? kB64Alphabet[((b1 & 0xF) << 2) | (b2 >> 6)] : '=';
        out += i + 2 < len ? kB64Alphabet[b2 & 0x3F] : '=';
    }
    return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& s) {
    std::array<int, 256> lut;
    lut.fill(-1);
    for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64Alphabet[i])] = i;
    if (s.size() % 4 != 0) throw DataError("base64 payload length not a multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(s.size() / 4 * 3);
    for (std::size_t i = 0; i < s.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            const char c = s[i + j];
            if (c == '=') {
                vals[j] = 0;
                ++pad;
            } else {
                vals[j] = lut[static_cast<unsigned char>(c)];
                if (vals[j] < 0) throw DataError("invalid base64 character");
                if (pad) throw DataError("base64 padding in the middle of payload");
            }
        }
        const unsigned triple = (static_cast<unsigned>(vals[0]) << 18) |
                                (static_cast<unsigned>(vals[1]) << 12) |
                                (static_cast<unsigned>(vals[2]) << 6) |
                                static_cast<unsigned>(vals[3]);
        out.push_back(static_cast<unsigned char>(triple >> 16));
        if (pad < 2) out.push_back(static_cast<unsigned char>((triple >> 8) & 0xFF));
        if (pad < 1) out.push_back(static_cast<unsigned char>(triple & 0xFF));
    }
    return out;
}

inline std::string encode_floats(const std::vector<float>& v) {
    return base64_encode(reinterpret_cast<const unsigned char*>(v.data()),
                         v.size() * sizeof(float));
}

inline std::vector<float> decode_floats(const std::string& b64) {
    const auto bytes = base64_decode(b64);
    if (bytes.size() % sizeof(float) != 0) throw DataError("payload is not a float32 array");
    std::vector<float> out(bytes.size() / sizeof(float));
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset model
// ---------------------------------------------------------------------------

/// One modality's feature sequence, stored at file precision (float32).
struct ModalitySequence {
    Modality modality = Modality::Vision;
    Tensor<float> features;  // [T, d_raw]

    std::int64_t length() const { return features.dim(0); }
    std::int64_t feature_dim() const { return features.dim(1); }
};

struct Sample {
    std::string id;
    int label_class = -1;                       // sevenclass: 0..6
    std::array<int, 4> label_flags{0, 0, 0, 0};  // multilabel4
    std::optional<ModalitySequence> vision;
    std::optional<ModalitySequence> language;
    std::optional<ModalitySequence> audio;

    const std::optional<ModalitySequence>& get(Modality m) const {
        switch (m) {
            case Modality::Vision: return vision;
            case Modality::Language: return language;
            default: return audio;
        }
    }
    bool has(Modality m) const { return get(m).has_value(); }
};

struct Dataset {
    LabelMode mode = LabelMode::SevenClass;
    bool aligned = false;
    std::int64_t d_v = 0, d_l = 0, d_a = 0;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    std::int64_t raw_dim(Modality m) const {
        switch (m) {
            case Modality::Vision: return d_v;
            case Modality::Language: return d_l;
            default: return d_a;
        }
    }
};

// ---------------------------------------------------------------------------
// JSONL serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json sequence_to_json(const ModalitySequence& seq) {
    std::vector<float> payload(seq.features.data().begin(), seq.features.data().end());
    return {{"shape", {seq.features.dim(0), seq.features.dim(1)}},
            {"data", encode_floats(payload)}};
}

inline ModalitySequence sequence_from_json(const nlohmann::json& j, Modality m, long line) {
    if (!j.contains("shape") || !j.contains("data"))
        throw DataError(std::string(modality_key(m)) + " record missing shape or data", line);
    const auto shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 2)
        throw DataError(std::string(modality_key(m)) + " shape must be [T, d]", line);
    const std::int64_t t = shape[0].get<std::int64_t>();
    const std::int64_t d = shape[1].get<std::int64_t>();
    if (t < 1 || d < 1) throw DataError(std::string(modality_key(m)) + " has empty shape", line);
    std::vector<float> vals;
    try {
        vals = decode_floats(j.at("data").get<std::string>());
    } catch (const DataError& e) {
        throw DataError(std::string(modality_key(m)) + ": " + e.what(), line);
    }
    if (static_cast<std::int64_t>(vals.size()) != t * d)
        throw DataError(std::string(modality_key(m)) + " payload has " +
                            std::to_string(vals.size()) + " values, shape wants " +
                            std::to_string(t * d),
                        line);
    return ModalitySequence{m, Tensor<float>({t, d}, std::move(vals))};
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    nlohmann::json header = {{"dims", {ds.d_v, ds.d_l, ds.d_a}},
                             {"mode", label_mode_name(ds.mode)},
                             {"aligned", ds.aligned}};
    out << header.dump() << "\n";
    for (const auto& s : ds.samples) {
        nlohmann::json j;
        j["id"] = s.id;
        if (ds.mode == LabelMode::SevenClass)
            j["label"] = s.label_class;
        else
            j["label"] = s.label_flags;
        if (s.vision) j["vision"] = detail::sequence_to_json(*s.vision);
        if (s.language) j["language"] = detail::sequence_to_json(*s.language);
        if (s.audio) j["audio"] = detail::sequence_to_json(*s.audio);
        out << j.dump() << "\n";
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

/// Load and validate a JSONL dataset. Samples may lack the audio field
/// (audio-absent flag); every present modality must match the header dims,
/// and an aligned header requires equal lengths inside each sample.
inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset '" + path + "'");

    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw DataError("dataset '" + path + "' is empty");
    ++line_no;

    Dataset ds;
    try {
        const auto header = nlohmann::json::parse(line);
        const auto dims = header.at("dims");
        if (!dims.is_array() || dims.size() != 3)
            throw DataError("header dims must be [d_V, d_L, d_A]", line_no);
        ds.d_v = dims[0].get<std::int64_t>();
        ds.d_l = dims[1].get<std::int64_t>();
        ds.d_a = dims[2].get<std::int64_t>();
        ds.mode = parse_label_mode(header.at("mode").get<std::string>());
        ds.aligned = header.at("aligned").get<bool>();
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(std::string("bad header: ") + e.what(), line_no);
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw DataError(std::string("malformed record: ") + e.what(), line_no);
        }
        Sample s;
        try {
            s.id = j.value("id", "sample" + std::to_string(line_no));
            if (!j.contains("label")) throw DataError("record missing label", line_no);
            if (ds.mode == LabelMode::SevenClass) {
                if (!j["label"].is_number_integer())
                    throw DataError("sevenclass label must be an integer", line_no);
                s.label_class = j["label"].get<int>();
                if (s.label_class < 0 || s.label_class > 6)
                    throw DataError("sevenclass label out of range 0..6", line_no);
            } else {
                if (!j["label"].is_array() || j["label"].size() != 4)
                    throw DataError("multilabel4 label must be 4 binary flags", line_no);
                for (int i = 0; i < 4; ++i) {
                    const int f = j["label"][static_cast<std::size_t>(i)].get<int>();
                    if (f != 0 && f != 1) throw DataError("label flags must be 0/1", line_no);
                    s.label_flags[static_cast<std::size_t>(i)] = f;
                }
            }
            if (j.contains("vision"))
                s.vision = detail::sequence_from_json(j["vision"], Modality::Vision, line_no);
            if (j.contains("language"))
                s.language = detail::sequence_from_json(j["language"], Modality::Language, line_no);
            if (j.contains("audio"))
                s.audio = detail::sequence_from_json(j["audio"], Modality::Audio, line_no);
        } catch (const DataError&) {
            throw;
        } catch (const std::exception& e) {
            throw DataError(std::string("malformed record: ") + e.what(), line_no);
        }

        for (const Modality m : kModalityOrder) {
            const auto& seq = s.get(m);
            if (seq && seq->feature_dim() != ds.raw_dim(m))
                throw DataError(std::string(modality_key(m)) + " dim " +
                                    std::to_string(seq->feature_dim()) + " does not match header " +
                                    std::to_string(ds.raw_dim(m)),
                                line_no);
        }
        if (ds.aligned) {
            std::int64_t t = -1;
            for (const Modality m : kModalityOrder) {
                const auto& seq = s.get(m);
                if (!seq) continue;
                if (t < 0) t = seq->length();
                else if (seq->length() != t)
                    throw DataError("aligned dataset has unequal sequence lengths", line_no);
            }
        }
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw DataError("dataset '" + path + "' has no samples");
    return ds;
}

/// FNV-1a over a file's bytes; recorded in run manifests.
inline std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "' for hashing");
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

/// Latent-factor generator spec. Vision and language are noisy linear views
/// of a per-sample latent z; audio is a fixed linear mix of the realized
/// (time-resampled) vision and language rows plus noise, so a linear
/// regression from (V, L) to A has reconstruction error exactly `noise`.
struct SyntheticSpec {
    std::size_t n_samples = 64;
    std::int64_t t_v_min = 4, t_v_max = 8;
    std::int64_t t_l_min = 4, t_l_max = 8;
    std::int64_t t_a_min = 4, t_a_max = 8;
    std::int64_t d_v = 10, d_l = 12, d_a = 8;
    std::int64_t latent_k = 6;
    double noise = 0.1;        // stddev of the audio residual
    double view_noise = 0.02;  // stddev of per-step noise on V and L
    std::int64_t vision_rank = 0;  // latent dims visible to vision; 0 = all
    LabelMode mode = LabelMode::SevenClass;
    bool aligned = false;
};

namespace detail {

// Align-endpoints linear interpolation, double precision (mirrors the
// model-side resampling convention).
inline std::vector<std::vector<double>> resample_rows(const std::vector<std::vector<double>>& rows,
                                                      std::int64_t t_out) {
    const std::int64_t t_in = static_cast<std::int64_t>(rows.size());
    std::vector<std::vector<double>> out(static_cast<std::size_t>(t_out));
    for (std::int64_t t = 0; t < t_out; ++t) {
        double pos = 0.0;
        if (t_out > 1)
            pos = static_cast<double>(t) * static_cast<double>(t_in - 1) /
                  static_cast<double>(t_out - 1);
        std::int64_t lo = static_cast<std::int64_t>(pos);
        if (lo > t_in - 2) lo = std::max<std::int64_t>(0, t_in - 2);
        const std::int64_t hi = std::min(lo + 1, t_in - 1);
        const double w = t_in == 1 ? 0.0 : pos - static_cast<double>(lo);
        const auto& a = rows[static_cast<std::size_t>(lo)];
        const auto& b = rows[static_cast<std::size_t>(hi)];
        auto& o = out[static_cast<std::size_t>(t)];
        o.resize(a.size());
        for (std::size_t j = 0; j < a.size(); ++j) o[j] = (1.0 - w) * a[j] + w * b[j];
    }
    return out;
}

inline std::vector<std::vector<double>> tensor_rows(const Tensor<float>& t) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(t.dim(0)));
    for (std::int64_t i = 0; i < t.dim(0); ++i) {
        rows[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(t.dim(1)));
        for (std::int64_t j = 0; j < t.dim(1); ++j)
            rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                static_cast<double>(t.at(i, j));
    }
    return rows;
}

}  // namespace detail

inline Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.n_samples == 0) throw ContractError("synthetic spec needs n_samples >= 1");
    if (spec.mode == LabelMode::SevenClass && spec.n_samples < 7)
        throw ContractError("sevenclass synthetic data needs at least 7 samples");
    if (spec.noise < 0 || spec.view_noise < 0) throw ContractError("noise scales must be >= 0");
    if (spec.latent_k < 1) throw ContractError("latent_k must be >= 1");

    const std::int64_t k = spec.latent_k;
    const std::int64_t k_vis = spec.vision_rank > 0 ? std::min(spec.vision_rank, k) : k;

    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng(seed + 0x9e37ull * static_cast<std::uint64_t>(attempt));

        // Dataset-level mixing structure.
        std::vector<double> p_v(static_cast<std::size_t>(spec.d_v * k), 0.0);
        std::vector<double> p_l(static_cast<std::size_t>(spec.d_l * k), 0.0);
        const double scale_z = 1.0 / std::sqrt(static_cast<double>(k));
        for (std::int64_t i = 0; i < spec.d_v; ++i)
            for (std::int64_t j = 0; j < k_vis; ++j)
                p_v[static_cast<std::size_t>(i * k + j)] = rng.normal() * scale_z;
        for (auto& x : p_l) x = rng.normal() * scale_z;

        const double scale_m = 1.0 / std::sqrt(static_cast<double>(spec.d_v + spec.d_l));
        std::vector<double> m_v(static_cast<std::size_t>(spec.d_a * spec.d_v));
        std::vector<double> m_l(static_cast<std::size_t>(spec.d_a * spec.d_l));
        for (auto& x : m_v) x = rng.normal() * scale_m;
        for (auto& x : m_l) x = rng.normal() * scale_m;

        std::vector<double> w_label(static_cast<std::size_t>(k));
        for (auto& x : w_label) x = rng.normal();
        std::vector<std::vector<double>> w_flags(4, std::vector<double>(static_cast<std::size_t>(k)));
        for (auto& wf : w_flags)
            for (auto& x : wf) x = rng.normal();

        Dataset ds;
        ds.mode = spec.mode;
        ds.aligned = spec.aligned;
        ds.d_v = spec.d_v;
        ds.d_l = spec.d_l;
        ds.d_a = spec.d_a;

        std::vector<double> scores;
        scores.reserve(spec.n_samples);

        for (std::size_t si = 0; si < spec.n_samples; ++si) {
            std::vector<double> z(static_cast<std::size_t>(k));
            for (auto& x : z) x = rng.normal();

            std::int64_t t_v = rng.uniform_int(spec.t_v_min, spec.t_v_max);
            std::int64_t t_l = rng.uniform_int(spec.t_l_min, spec.t_l_max);
            std::int64_t t_a = rng.uniform_int(spec.t_a_min, spec.t_a_max);
            if (spec.aligned) t_l = t_a = t_v;

            // One temporal profile per sample: every modality of a clip is
            // modulated by the same underlying dynamics.
            const double phase = rng.uniform(0.0, 6.283185307179586);

            auto emit_view = [&](std::int64_t t_len, std::int64_t d, const std::vector<double>& p,
                                 double phase) {
                std::vector<double> base(static_cast<std::size_t>(d), 0.0);
                for (std::int64_t i = 0; i < d; ++i)
                    for (std::int64_t j = 0; j < k; ++j)
                        base[static_cast<std::size_t>(i)] +=
                            p[static_cast<std::size_t>(i * k + j)] * z[static_cast<std::size_t>(j)];
                Tensor<float> feat({t_len, d});
                for (std::int64_t t = 0; t < t_len; ++t) {
                    const double s =
                        1.0 + 0.5 * std::sin(6.283185307179586 * static_cast<double>(t) /
                                                 static_cast<double>(t_len) +
                                             phase);
                    for (std::int64_t i = 0; i < d; ++i)
                        feat.at(t, i) = static_cast<float>(s * base[static_cast<std::size_t>(i)] +
                                                           spec.view_noise * rng.normal());
                }
                return feat;
            };

            Sample s;
            s.id = "s" + std::to_string(si);
            s.vision = ModalitySequence{Modality::Vision, emit_view(t_v, spec.d_v, p_v, phase)};
            s.language =
                ModalitySequence{Modality::Language, emit_view(t_l, spec.d_l, p_l, phase)};

            // Audio mixes the realized stored rows, resampled to T_A.
            const auto v_rows = detail::resample_rows(detail::tensor_rows(s.vision->features), t_a);
            const auto l_rows = detail::resample_rows(detail::tensor_rows(s.language->features), t_a);
            Tensor<float> audio({t_a, spec.d_a});
            for (std::int64_t t = 0; t < t_a; ++t) {
                for (std::int64_t i = 0; i < spec.d_a; ++i) {
                    double acc = 0.0;
                    for (std::int64_t jv = 0; jv < spec.d_v; ++jv)
                        acc += m_v[static_cast<std::size_t>(i * spec.d_v + jv)] *
                               v_rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(jv)];
                    for (std::int64_t jl = 0; jl < spec.d_l; ++jl)
                        acc += m_l[static_cast<std::size_t>(i * spec.d_l + jl)] *
                               l_rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(jl)];
                    audio.at(t, i) = static_cast<float>(acc + spec.noise * rng.normal());
                }
            }
            s.audio = ModalitySequence{Modality::Audio, std::move(audio)};

            double score = 0.0;
            for (std::int64_t j = 0; j < k; ++j)
                score += w_label[static_cast<std::size_t>(j)] * z[static_cast<std::size_t>(j)];
            scores.push_back(score);
            if (spec.mode == LabelMode::MultiLabel4) {
                for (int f = 0; f < 4; ++f) {
                    double fs = 0.0;
                    for (std::int64_t j = 0; j < k; ++j)
                        fs += w_flags[static_cast<std::size_t>(f)][static_cast<std::size_t>(j)] *
                              z[static_cast<std::size_t>(j)];
                    s.label_flags[static_cast<std::size_t>(f)] = fs > 0 ? 1 : 0;
                }
            }
            ds.samples.push_back(std::move(s));
        }

        if (spec.mode == LabelMode::SevenClass) {
            // Quantile binning of the latent scores: every class occupied.
            std::vector<std::size_t> order(scores.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
            for (std::size_t rank = 0; rank < order.size(); ++rank)
                ds.samples[order[rank]].label_class =
                    static_cast<int>(rank * 7 / order.size());
        } else {
            bool ok = true;
            for (int f = 0; f < 4 && ok; ++f) {
                int pos = 0;
                for (const auto& s : ds.samples) pos += s.label_flags[static_cast<std::size_t>(f)];
                if (pos == 0 || pos == static_cast<int>(ds.samples.size())) ok = false;
            }
            if (!ok) continue;  // re-draw with a derived seed
        }
        return ds;
    }
    throw ContractError("failed to produce a class-covering synthetic dataset");
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Seeded, label-stratified split into train/valid/test. Parts are disjoint
/// and cover the input; per-class allocations follow the fractions within
/// one sample (largest-remainder rounding).
inline std::array<Dataset, 3> split_dataset(const Dataset& ds, std::array<double, 3> fractions,
                                            std::uint64_t seed) {
    double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(sum - 1.0) > 1e-9) throw ContractError("split fractions must sum to 1");
    for (double f : fractions)
        if (f < 0) throw ContractError("split fractions must be >= 0");

    // Group indices by stratum (class, or flag bitmask).
    auto stratum = [&](const Sample& s) {
        if (ds.mode == LabelMode::SevenClass) return s.label_class;
        int key = 0;
        for (int f = 0; f < 4; ++f) key = key * 2 + s.label_flags[static_cast<std::size_t>(f)];
        return key;
    };
    std::vector<std::vector<std::size_t>> groups(ds.mode == LabelMode::SevenClass ? 7 : 16);
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        groups[static_cast<std::size_t>(stratum(ds.samples[i]))].push_back(i);

    Rng rng(seed);
    std::array<std::vector<std::size_t>, 3> part_indices;
    for (auto& g : groups) {
        if (g.empty()) continue;
        for (std::size_t i = g.size(); i > 1; --i) {
            const std::size_t j =
                static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(g[i - 1], g[j]);
        }
        const std::size_t n = g.size();
        std::array<std::size_t, 3> counts;
        std::array<double, 3> rema;
        std::size_t assigned = 0;
        for (int p = 0; p < 3; ++p) {
            const double want = fractions[static_cast<std::size_t>(p)] * static_cast<double>(n);
            counts[static_cast<std::size_t>(p)] = static_cast<std::size_t>(want);
            rema[static_cast<std::size_t>(p)] = want - static_cast<double>(counts[static_cast<std::size_t>(p)]);
            assigned += counts[static_cast<std::size_t>(p)];
        }
        while (assigned < n) {
            int best = 0;
            for (int p = 1; p < 3; ++p)
                if (rema[static_cast<std::size_t>(p)] > rema[static_cast<std::size_t>(best)] + 1e-12)
                    best = p;
            ++counts[static_cast<std::size_t>(best)];
            rema[static_cast<std::size_t>(best)] -= 1.0;
            ++assigned;
        }
        std::size_t cursor = 0;
        for (int p = 0; p < 3; ++p)
            for (std::size_t c = 0; c < counts[static_cast<std::size_t>(p)]; ++c)
                part_indices[static_cast<std::size_t>(p)].push_back(g[cursor++]);
    }

    std::array<Dataset, 3> out;
    for (int p = 0; p < 3; ++p) {
        auto& part = out[static_cast<std::size_t>(p)];
        part.mode = ds.mode;
        part.aligned = ds.aligned;
        part.d_v = ds.d_v;
        part.d_l = ds.d_l;
        part.d_a = ds.d_a;
        auto& idx = part_indices[static_cast<std::size_t>(p)];
        std::sort(idx.begin(), idx.end());
        for (auto i : idx) part.samples.push_back(ds.samples[i]);
        if (fractions[static_cast<std::size_t>(p)] > 0 && part.samples.empty())
            throw ContractError("split produced an empty part for a nonzero fraction");
    }
    return out;
}

}  // namespace mbkt
