// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mbkt/checkpoint.hpp"
#include "mbkt/train.hpp"

using namespace mbkt;

namespace {

struct CliResult {
    int exit_code;
    std::string out;
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(MBKT_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    EXPECT_NE(pipe, nullptr);
    std::string out;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) out.append(buf, n);
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

std::string temp_path(const std::string& name) {
    return std::string(::testing::TempDir()) + "/" + name;
}

std::vector<char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
}

double parse_kv(const std::string& text, const std::string& key) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string k;
        double v;
        if (ls >> k >> v && k == key) return v;
    }
    ADD_FAILURE() << "key '" << key << "' not found in:\n" << text;
    return -1;
}

}  // namespace

TEST(CliGenData, DeterministicFiles) {
    const std::string p1 = temp_path("gen1.jsonl");
    const std::string p2 = temp_path("gen2.jsonl");
    const std::string flags = "gen-data --n 20 --seed 7 --d-v 3 --d-l 4 --d-a 2 --latent-k 2";
    EXPECT_EQ(run_cli(flags + " --out " + p1).exit_code, 0);
    EXPECT_EQ(run_cli(flags + " --out " + p2).exit_code, 0);
    EXPECT_EQ(read_bytes(p1), read_bytes(p2));
}

TEST(CliGenData, HistogramMatchesRecount) {
    const std::string path = temp_path("gen3.jsonl");
    const auto r = run_cli("gen-data --n 21 --seed 9 --d-v 3 --d-l 3 --d-a 2 --latent-k 2 --out " +
                           path);
    ASSERT_EQ(r.exit_code, 0);
    const Dataset ds = load_dataset(path);
    std::vector<int> counts(7, 0);
    for (const auto& s : ds.samples) ++counts[static_cast<std::size_t>(s.label_class)];
    for (int c = 0; c < 7; ++c) {
        EXPECT_EQ(static_cast<int>(parse_kv(r.out, "class_" + std::to_string(c))),
                  counts[static_cast<std::size_t>(c)]);
    }
}

TEST(CliGenData, MultilabelHeaderMode) {
    const std::string path = temp_path("gen4.jsonl");
    const auto r = run_cli(
        "gen-data --n 16 --seed 3 --mode multilabel4 --d-v 3 --d-l 3 --d-a 2 --latent-k 2 --out " +
        path);
    ASSERT_EQ(r.exit_code, 0);
    EXPECT_EQ(load_dataset(path).mode, LabelMode::MultiLabel4);
    EXPECT_NE(r.out.find("positive_happy"), std::string::npos);
}

class CliTrainEval : public ::testing::Test {
protected:
    void SetUp() override {
        data_ = temp_path("cli_train.jsonl");
        ckpt_ = temp_path("cli_model.mbkt");
        ASSERT_EQ(run_cli("gen-data --n 16 --seed 21 --d-v 3 --d-l 4 --d-a 2 --latent-k 2 "
                          "--t-min 3 --t-max 5 --out " +
                          data_)
                      .exit_code,
                  0);
        const auto r = run_cli(
            "train --data " + data_ + " --out " + ckpt_ +
            " --epochs 2 --batch 8 --d-model 8 --heads 2 --ffn-ratio 2 --seed 11 --precision f64");
        ASSERT_EQ(r.exit_code, 0) << r.out;
    }

    std::string data_, ckpt_;
};

TEST_F(CliTrainEval, ProducesCheckpointManifestAndLog) {
    EXPECT_FALSE(read_bytes(ckpt_).empty());
    EXPECT_FALSE(read_bytes(ckpt_ + ".manifest.json").empty());
    std::ifstream log(ckpt_ + ".log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) ++lines;
    EXPECT_EQ(lines, 2);
}

TEST_F(CliTrainEval, EvalEmitsAllKeysAndMatchesLibrary) {
    const auto r = run_cli("eval --checkpoint " + ckpt_ + " --data " + data_);
    ASSERT_EQ(r.exit_code, 0);
    for (const char* key : {"acc7", "acc2", "f1", "mae", "corr"})
        EXPECT_NE(r.out.find(key), std::string::npos) << key;

    // equality with an in-process evaluation (exact: %.17g round trip)
    std::ifstream mf(ckpt_ + ".manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(mf);
    TrainConfig cfg = train_config_from_json(manifest.at("config"));
    Rng scratch(0);
    ModelParams<double> params(cfg.model, scratch);
    load_checkpoint(params, ckpt_);
    const Dataset ds = load_dataset(data_);
    const MetricsReport want = evaluate(params, ds);
    EXPECT_EQ(parse_kv(r.out, "acc7"), want.acc7);
    EXPECT_EQ(parse_kv(r.out, "acc2"), want.acc2);
    EXPECT_EQ(parse_kv(r.out, "f1"), want.f1);
    EXPECT_EQ(parse_kv(r.out, "mae"), want.mae);
    EXPECT_EQ(parse_kv(r.out, "corr"), want.corr);
}

TEST_F(CliTrainEval, MarkdownFormat) {
    const auto r = run_cli("eval --checkpoint " + ckpt_ + " --data " + data_ +
                           " --format markdown");
    ASSERT_EQ(r.exit_code, 0);
    EXPECT_NE(r.out.find("| Acc7 | Acc2 | F1 | MAE | Corr |"), std::string::npos) << r.out;
}

TEST_F(CliTrainEval, ManifestRerunReproducesMetrics) {
    const std::string ckpt2 = temp_path("cli_model2.mbkt");
    const auto r = run_cli("train --from-manifest " + ckpt_ + ".manifest.json --out " + ckpt2);
    ASSERT_EQ(r.exit_code, 0);
    const auto e1 = run_cli("eval --checkpoint " + ckpt_ + " --data " + data_);
    const auto e2 = run_cli("eval --checkpoint " + ckpt2 + " --data " + data_ + " --manifest " +
                            ckpt2 + ".manifest.json");
    EXPECT_EQ(e1.out, e2.out);
    EXPECT_EQ(read_bytes(ckpt_), read_bytes(ckpt2));  // bitwise equal training
}

TEST_F(CliTrainEval, EvalModeOverride) {
    const auto r = run_cli("eval --checkpoint " + ckpt_ + " --data " + data_ +
                           " --mode full_modality");
    ASSERT_EQ(r.exit_code, 0);
    EXPECT_NE(r.out.find("acc7"), std::string::npos);
}

TEST_F(CliTrainEval, InputDatasetNeverMutated) {
    const auto before = read_bytes(data_);
    run_cli("eval --checkpoint " + ckpt_ + " --data " + data_);
    run_cli("train --data " + data_ + " --out " + temp_path("scratch.mbkt") +
            " --epochs 1 --d-model 8 --heads 2 --seed 1");
    EXPECT_EQ(read_bytes(data_), before);
}

TEST(CliExitCodes, UsageDataNumeric) {
    EXPECT_EQ(run_cli("no-such-command").exit_code, 1);
    EXPECT_EQ(run_cli("train --bogus-flag 1").exit_code, 1);
    EXPECT_EQ(run_cli("eval --checkpoint missing.mbkt --data missing.jsonl").exit_code, 2);
    EXPECT_EQ(run_cli("train --data /does/not/exist.jsonl --out x.mbkt").exit_code, 2);
    // numeric failure: the corrupted-backward fixture must be caught
    EXPECT_EQ(run_cli("gradcheck --op relu --rounds 1 --corrupt-backward").exit_code, 3);
}

TEST(CliGradcheck, FilterAndPass) {
    const auto r = run_cli("gradcheck --op matmul --rounds 2");
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_NE(r.out.find("matmul"), std::string::npos);
    EXPECT_NE(r.out.find("PASS"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(CliAblate, TargetsAndLossRowStructure) {
    const std::string data = temp_path("cli_ablate.jsonl");
    ASSERT_EQ(run_cli("gen-data --n 14 --seed 5 --d-v 3 --d-l 3 --d-a 2 --latent-k 2 "
                      "--t-min 3 --t-max 4 --out " +
                      data)
                  .exit_code,
              0);
    const std::string base = " --data " + data +
                             " --epochs 1 --batch 8 --d-model 8 --heads 2 --ffn-ratio 2 --seed 3 "
                             "--precision f64";

    const auto targets = run_cli("ablate --which targets" + base);
    ASSERT_EQ(targets.exit_code, 0) << targets.out;
    EXPECT_NE(targets.out.find("| Target |"), std::string::npos);
    for (const char* row : {"| Language |", "| Audio |", "| Vision |", "| All |"})
        EXPECT_NE(targets.out.find(row), std::string::npos) << row;

    const auto loss = run_cli("ablate --which loss" + base);
    ASSERT_EQ(loss.exit_code, 0);
    EXPECT_NE(loss.out.find("| L1 |"), std::string::npos);
    EXPECT_NE(loss.out.find("| L2 |"), std::string::npos);

    // a row equals the standalone train+eval with the same seed
    const std::string ck = temp_path("cli_ablate_lang.mbkt");
    ASSERT_EQ(run_cli("train --targets language" + base + " --out " + ck).exit_code, 0);
    const auto ev = run_cli("eval --checkpoint " + ck + " --data " + data + " --format markdown");
    ASSERT_EQ(ev.exit_code, 0);
    // extract the metric cells from both tables' Language rows
    auto row_cells = [](const std::string& table, const std::string& label) {
        const auto pos = table.find("| " + label + " |");
        EXPECT_NE(pos, std::string::npos) << label << " row missing in:\n" << table;
        const auto end = table.find('\n', pos);
        return table.substr(pos + label.size() + 4, end - pos - label.size() - 4);
    };
    EXPECT_EQ(row_cells(targets.out, "Language"), row_cells(ev.out, "missing_audio"));
}

TEST(CliConfigFile, SuppliesDefaultsAndFlagsOverride) {
    const std::string data = temp_path("cli_cfg.jsonl");
    ASSERT_EQ(run_cli("gen-data --n 12 --seed 31 --d-v 3 --d-l 3 --d-a 2 --latent-k 2 "
                      "--t-min 3 --t-max 4 --out " +
                      data)
                  .exit_code,
              0);
    const std::string cfg_path = temp_path("cli_cfg.json");
    {
        std::ofstream out(cfg_path);
        out << R"({"epochs": 2, "seed": 5, "lr": 0.002,
                   "model": {"d_model": 8, "heads": 2, "ffn_ratio": 2}})";
    }
    const std::string ck = temp_path("cli_cfg.mbkt");
    ASSERT_EQ(run_cli("train --data " + data + " --config " + cfg_path + " --epochs 1 --out " + ck)
                  .exit_code,
              0);
    std::ifstream mf(ck + ".manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(mf);
    const TrainConfig resolved = train_config_from_json(manifest.at("config"));
    EXPECT_EQ(resolved.epochs, 1);             // flag overrides config file
    EXPECT_EQ(resolved.seed, 5u);              // config file overrides default
    EXPECT_DOUBLE_EQ(resolved.lr, 0.002);      // config file value
    EXPECT_EQ(resolved.model.d_model, 8);
    std::ifstream log(ck + ".log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) ++lines;
    EXPECT_EQ(lines, 1);
}

TEST(CliSeedEnv, MbSeedOverridesDefault) {
    const std::string p1 = temp_path("env1.jsonl");
    const std::string p2 = temp_path("env2.jsonl");
    const std::string p3 = temp_path("env3.jsonl");
    const std::string flags = "gen-data --n 10 --d-v 3 --d-l 3 --d-a 2 --latent-k 2 --out ";
    {
        const std::string cmd = std::string("MB_SEED=777 ") + MBKT_CLI_PATH + " " + flags + p1 +
                                " > /dev/null 2>&1";
        ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
    }
    {
        const std::string cmd = std::string("MB_SEED=778 ") + MBKT_CLI_PATH + " " + flags + p2 +
                                " > /dev/null 2>&1";
        ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
    }
    {
        // explicit --seed wins over the environment
        const std::string cmd = std::string("MB_SEED=778 ") + MBKT_CLI_PATH + " " + flags + p3 +
                                " --seed 777 > /dev/null 2>&1";
        ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
    }
    EXPECT_NE(read_bytes(p1), read_bytes(p2));
    EXPECT_EQ(read_bytes(p1), read_bytes(p3));
}
