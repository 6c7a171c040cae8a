// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "mbkt/data.hpp"
#include "support/oracles.hpp"

using namespace mbkt;

namespace {

std::string temp_path(const std::string& name) {
    return std::string(::testing::TempDir()) + "/" + name;
}

SyntheticSpec small_spec() {
    SyntheticSpec spec;
    spec.n_samples = 24;
    spec.d_v = 4;
    spec.d_l = 5;
    spec.d_a = 3;
    spec.latent_k = 3;
    spec.t_v_min = 3;
    spec.t_v_max = 6;
    spec.t_l_min = 2;
    spec.t_l_max = 5;
    spec.t_a_min = 3;
    spec.t_a_max = 7;
    return spec;
}

// Rows of (resampled V ++ resampled L) against audio rows, pooled over the
// dataset, all in double precision.
void regression_rows(const Dataset& ds, oracle::Mat& x, oracle::Mat& y) {
    for (const auto& s : ds.samples) {
        const auto v = oracle::resample_rows(
            [&] {
                oracle::Mat rows;
                for (std::int64_t t = 0; t < s.vision->length(); ++t) {
                    std::vector<double> row;
                    for (std::int64_t j = 0; j < s.vision->feature_dim(); ++j)
                        row.push_back(s.vision->features.at(t, j));
                    rows.push_back(row);
                }
                return rows;
            }(),
            s.audio->length());
        const auto l = oracle::resample_rows(
            [&] {
                oracle::Mat rows;
                for (std::int64_t t = 0; t < s.language->length(); ++t) {
                    std::vector<double> row;
                    for (std::int64_t j = 0; j < s.language->feature_dim(); ++j)
                        row.push_back(s.language->features.at(t, j));
                    rows.push_back(row);
                }
                return rows;
            }(),
            s.audio->length());
        for (std::int64_t t = 0; t < s.audio->length(); ++t) {
            std::vector<double> xr = v[static_cast<std::size_t>(t)];
            xr.insert(xr.end(), l[static_cast<std::size_t>(t)].begin(),
                      l[static_cast<std::size_t>(t)].end());
            x.push_back(std::move(xr));
            std::vector<double> yr;
            for (std::int64_t j = 0; j < s.audio->feature_dim(); ++j)
                yr.push_back(s.audio->features.at(t, j));
            y.push_back(std::move(yr));
        }
    }
}

double ls_mse(const oracle::Mat& x, const oracle::Mat& y) {
    const auto coef = oracle::least_squares_fit(x, y);
    double mse = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto pred = oracle::ls_predict(coef, x[i]);
        for (std::size_t j = 0; j < pred.size(); ++j) {
            const double d = pred[j] - y[i][j];
            mse += d * d;
            ++count;
        }
    }
    return mse / static_cast<double>(count);
}

double constant_mean_mse(const oracle::Mat& y) {
    const std::size_t q = y[0].size();
    std::vector<double> mean(q, 0.0);
    for (const auto& row : y)
        for (std::size_t j = 0; j < q; ++j) mean[j] += row[j];
    for (auto& m : mean) m /= static_cast<double>(y.size());
    double mse = 0;
    for (const auto& row : y)
        for (std::size_t j = 0; j < q; ++j) mse += (row[j] - mean[j]) * (row[j] - mean[j]);
    return mse / static_cast<double>(y.size() * q);
}

}  // namespace

TEST(DatasetIo, RoundTripIsValueExact) {
    const Dataset ds = generate_synthetic(small_spec(), 4);
    const std::string path = temp_path("roundtrip.jsonl");
    save_dataset(ds, path);
    const Dataset back = load_dataset(path);

    ASSERT_EQ(back.size(), ds.size());
    EXPECT_EQ(back.mode, ds.mode);
    EXPECT_EQ(back.aligned, ds.aligned);
    EXPECT_EQ(back.d_v, ds.d_v);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(back.samples[i].id, ds.samples[i].id);
        EXPECT_EQ(back.samples[i].label_class, ds.samples[i].label_class);
        ASSERT_TRUE(back.samples[i].vision && back.samples[i].audio);
        EXPECT_EQ(back.samples[i].vision->features.data(), ds.samples[i].vision->features.data());
        EXPECT_EQ(back.samples[i].language->features.data(),
                  ds.samples[i].language->features.data());
        EXPECT_EQ(back.samples[i].audio->features.data(), ds.samples[i].audio->features.data());
    }
}

TEST(DatasetIo, MissingAudioFieldLoadsAsAbsent) {
    Dataset ds = generate_synthetic(small_spec(), 5);
    ds.samples[1].audio.reset();
    const std::string path = temp_path("noaudio.jsonl");
    save_dataset(ds, path);
    const Dataset back = load_dataset(path);
    EXPECT_TRUE(back.samples[0].audio.has_value());
    EXPECT_FALSE(back.samples[1].audio.has_value());
}

TEST(DatasetIo, MalformedRecordCitesLineNumber) {
    Dataset ds = generate_synthetic(small_spec(), 6);
    const std::string path = temp_path("malformed.jsonl");
    save_dataset(ds, path);
    {
        // corrupt line 7 (header is line 1, samples start at line 2)
        std::ifstream in(path);
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
        lines[6] = "{not json";
        std::ofstream out(path);
        for (const auto& l : lines) out << l << "\n";
    }
    try {
        load_dataset(path);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_EQ(e.line(), 7);
        EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
    }
}

TEST(DatasetIo, DimMismatchAndUnknownModeAndEmpty) {
    const std::string path = temp_path("bad.jsonl");
    {
        std::ofstream out(path);
        out << R"({"dims":[2,2,2],"mode":"sevenclass","aligned":false})" << "\n";
        out << R"({"id":"a","label":1,"vision":{"shape":[2,3],"data":")"
            << detail::encode_floats(std::vector<float>(6, 0.f)) << R"("}})" << "\n";
    }
    EXPECT_THROW(load_dataset(path), DataError);

    {
        std::ofstream out(path);
        out << R"({"dims":[2,2,2],"mode":"fiveclass","aligned":false})" << "\n";
    }
    EXPECT_THROW(load_dataset(path), DataError);

    {
        std::ofstream out(path);
    }
    EXPECT_THROW(load_dataset(path), DataError);
    EXPECT_THROW(load_dataset(temp_path("does_not_exist.jsonl")), DataError);
}

TEST(DatasetIo, AlignedFlagVerifiedAtLoad) {
    SyntheticSpec spec = small_spec();
    spec.aligned = true;
    Dataset ds = generate_synthetic(spec, 7);
    const std::string path = temp_path("aligned.jsonl");
    save_dataset(ds, path);
    EXPECT_NO_THROW(load_dataset(path));

    // break one sample's alignment by hand
    ds.samples[0].audio->features = Tensor<float>({ds.samples[0].audio->length() + 1, ds.d_a});
    save_dataset(ds, path);
    EXPECT_THROW(load_dataset(path), DataError);
}

TEST(Synthetic, DeterministicPerSeed) {
    const Dataset a = generate_synthetic(small_spec(), 11);
    const Dataset b = generate_synthetic(small_spec(), 11);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.samples[i].label_class, b.samples[i].label_class);
        EXPECT_EQ(a.samples[i].vision->features.data(), b.samples[i].vision->features.data());
        EXPECT_EQ(a.samples[i].audio->features.data(), b.samples[i].audio->features.data());
    }
    const Dataset c = generate_synthetic(small_spec(), 12);
    EXPECT_NE(a.samples[0].vision->features.data(), c.samples[0].vision->features.data());
}

TEST(Synthetic, ZeroNoiseMakesAudioExactlyLinear) {
    SyntheticSpec spec = small_spec();
    spec.noise = 0.0;
    spec.view_noise = 0.0;
    const Dataset ds = generate_synthetic(spec, 13);
    oracle::Mat x, y;
    regression_rows(ds, x, y);
    EXPECT_LT(ls_mse(x, y), 1e-10);
}

TEST(Synthetic, LeastSquaresReachesNoiseFloor) {
    SyntheticSpec spec = small_spec();
    spec.n_samples = 60;
    spec.noise = 0.1;
    const Dataset ds = generate_synthetic(spec, 14);
    oracle::Mat x, y;
    regression_rows(ds, x, y);
    EXPECT_LE(ls_mse(x, y), spec.noise * spec.noise + 1e-3);
}

TEST(Synthetic, MutualStructureBeatsConstantMean) {
    SyntheticSpec spec = small_spec();
    spec.n_samples = 60;
    spec.noise = 0.3;  // below half the unit-scale signal std
    const Dataset ds = generate_synthetic(spec, 15);
    oracle::Mat x, y;
    regression_rows(ds, x, y);
    EXPECT_LE(ls_mse(x, y), 0.5 * constant_mean_mse(y));
}

TEST(Synthetic, AllClassesRepresented) {
    const Dataset ds = generate_synthetic(small_spec(), 16);
    std::vector<int> counts(7, 0);
    for (const auto& s : ds.samples) ++counts[static_cast<std::size_t>(s.label_class)];
    for (int c = 0; c < 7; ++c) EXPECT_GE(counts[static_cast<std::size_t>(c)], 1) << c;

    SyntheticSpec ml = small_spec();
    ml.mode = LabelMode::MultiLabel4;
    const Dataset mds = generate_synthetic(ml, 17);
    for (int f = 0; f < 4; ++f) {
        int pos = 0;
        for (const auto& s : mds.samples) pos += s.label_flags[static_cast<std::size_t>(f)];
        EXPECT_GT(pos, 0);
        EXPECT_LT(pos, static_cast<int>(mds.size()));
    }
}

TEST(Synthetic, AlignedDrawsEqualLengths) {
    SyntheticSpec spec = small_spec();
    spec.aligned = true;
    const Dataset ds = generate_synthetic(spec, 18);
    EXPECT_TRUE(ds.aligned);
    for (const auto& s : ds.samples) {
        EXPECT_EQ(s.vision->length(), s.language->length());
        EXPECT_EQ(s.vision->length(), s.audio->length());
    }
}

TEST(Split, AllInTrainForDegenerateFractions) {
    const Dataset ds = generate_synthetic(small_spec(), 19);
    const auto parts = split_dataset(ds, {1.0, 0.0, 0.0}, 1);
    EXPECT_EQ(parts[0].size(), ds.size());
    EXPECT_EQ(parts[1].size(), 0u);
    EXPECT_EQ(parts[2].size(), 0u);
}

TEST(Split, DisjointAndCovering) {
    const Dataset ds = generate_synthetic(small_spec(), 20);
    const auto parts = split_dataset(ds, {0.5, 0.25, 0.25}, 2);
    EXPECT_EQ(parts[0].size() + parts[1].size() + parts[2].size(), ds.size());
    std::vector<std::string> ids;
    for (const auto& part : parts)
        for (const auto& s : part.samples) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());
    EXPECT_EQ(std::adjacent_find(ids.begin(), ids.end()), ids.end());  // no duplicates
}

TEST(Split, StratifiedWithinOneSample) {
    SyntheticSpec spec = small_spec();
    spec.n_samples = 70;
    const Dataset ds = generate_synthetic(spec, 21);
    const std::array<double, 3> fractions{0.6, 0.2, 0.2};
    const auto parts = split_dataset(ds, fractions, 3);

    for (int c = 0; c < 7; ++c) {
        std::size_t n_class = 0;
        for (const auto& s : ds.samples) n_class += s.label_class == c ? 1 : 0;
        for (int p = 0; p < 3; ++p) {
            std::size_t in_part = 0;
            for (const auto& s : parts[static_cast<std::size_t>(p)].samples)
                in_part += s.label_class == c ? 1 : 0;
            const double want = fractions[static_cast<std::size_t>(p)] * static_cast<double>(n_class);
            EXPECT_LE(std::abs(static_cast<double>(in_part) - want), 1.0)
                << "class " << c << " part " << p;
        }
    }
}

TEST(Split, SeededDeterminism) {
    const Dataset ds = generate_synthetic(small_spec(), 22);
    const auto a = split_dataset(ds, {0.5, 0.25, 0.25}, 9);
    const auto b = split_dataset(ds, {0.5, 0.25, 0.25}, 9);
    for (int p = 0; p < 3; ++p) {
        ASSERT_EQ(a[static_cast<std::size_t>(p)].size(), b[static_cast<std::size_t>(p)].size());
        for (std::size_t i = 0; i < a[static_cast<std::size_t>(p)].size(); ++i)
            EXPECT_EQ(a[static_cast<std::size_t>(p)].samples[i].id,
                      b[static_cast<std::size_t>(p)].samples[i].id);
    }
}

TEST(Split, BadFractionsRejected) {
    const Dataset ds = generate_synthetic(small_spec(), 23);
    EXPECT_THROW(split_dataset(ds, {0.5, 0.2, 0.2}, 1), ContractError);
    // a nonzero fraction that ends up empty is a contract error
    SyntheticSpec tiny = small_spec();
    tiny.n_samples = 7;
    const Dataset seven = generate_synthetic(tiny, 24);
    EXPECT_THROW(split_dataset(seven, {0.999, 0.001, 0.0}, 1), ContractError);
}

TEST(Base64, RoundTripAndValidation) {
    Rng rng(25);
    std::vector<float> values(37);
    for (auto& v : values) v = static_cast<float>(rng.normal());
    const std::string enc = detail::encode_floats(values);
    const auto dec = detail::decode_floats(enc);
    ASSERT_EQ(dec.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) EXPECT_EQ(dec[i], values[i]);  // bitwise
    EXPECT_THROW(detail::decode_floats("@@@@"), DataError);
    EXPECT_THROW(detail::decode_floats("AB"), DataError);
}
