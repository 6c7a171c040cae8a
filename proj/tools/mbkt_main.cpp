// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).
//
// mbkt command line: synthetic data generation, training, evaluation,
// gradient verification, and ablation sweeps for the missing-audio
// multimodal sentiment pipeline.
//
// Exit codes: 0 success, 1 usage, 2 data/config, 3 numeric failure.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mbkt/mbkt.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitDataConfig = 2;
constexpr int kExitNumeric = 3;

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("MB_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw mbkt::ConfigError(std::string("MB_SEED is not an integer: '") + env + "'");
        }
    }
    return 42;
}

mbkt::TargetSet parse_targets_csv(const std::string& csv) {
    mbkt::TargetSet t;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        const std::string item = csv.substr(pos, comma - pos);
        if (item == "vision" || item == "v") t.vision = true;
        else if (item == "language" || item == "l") t.language = true;
        else if (item == "audio" || item == "a") t.audio = true;
        else if (!item.empty())
            throw mbkt::ConfigError("unknown target '" + item + "' (use vision,language,audio)");
        pos = comma + 1;
    }
    return t;
}

struct TrainFlags {
    std::string data_path;
    std::string out_path = "model.mbkt";
    std::string log_path;       // default <out>.log.jsonl
    std::string manifest_path;  // default <out>.manifest.json
    std::string config_path;
    std::string from_manifest;
    std::string mode = "missing_audio";
    std::string consistency = "l2";
    std::string targets_csv;
    std::string precision = "f32";
    std::int64_t epochs = 40;
    std::int64_t max_epochs = 0;
    double lr = 1e-3;
    std::int64_t batch = 16;
    double lambda1 = 1.0, lambda2 = 1.0;
    std::int64_t d_model = 32, heads = 4, ffn_ratio = 4;
    double dropout = 0.0;
    std::uint64_t seed = 42;
    bool detach_consistency = false;
};

void attach_train_options(CLI::App* cmd, TrainFlags& f, bool data_required) {
    auto* data = cmd->add_option("--data", f.data_path, "training dataset (JSONL)");
    if (data_required) data->required();
    cmd->add_option("--out", f.out_path, "checkpoint output path");
    cmd->add_option("--log", f.log_path, "epoch log path (default: <out>.log.jsonl)");
    cmd->add_option("--manifest-out", f.manifest_path,
                    "manifest output path (default: <out>.manifest.json)");
    cmd->add_option("--config", f.config_path, "JSON config file supplying defaults");
    cmd->add_option("--mode", f.mode,
                    "missing_audio|full_modality|vision_only|language_only|language_vision");
    cmd->add_option("--targets", f.targets_csv, "fusion targets, e.g. language or vision,audio");
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--max-epochs", f.max_epochs, "cap on epochs for short runs");
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--batch", f.batch, "batch size");
    cmd->add_option("--lambda1", f.lambda1, "weight of the vision->audio consistency loss");
    cmd->add_option("--lambda2", f.lambda2, "weight of the language->audio consistency loss");
    cmd->add_option("--consistency", f.consistency, "l1|l2");
    cmd->add_option("--d-model", f.d_model, "model width");
    cmd->add_option("--heads", f.heads, "attention heads");
    cmd->add_option("--ffn-ratio", f.ffn_ratio, "feed-forward expansion ratio");
    cmd->add_option("--dropout", f.dropout, "dropout rate");
    cmd->add_option("--seed", f.seed, "random seed (default: MB_SEED env or 42)");
    cmd->add_option("--precision", f.precision, "f32|f64");
    cmd->add_flag("--detach-consistency-target", f.detach_consistency,
                  "stop consistency gradients at the encoded audio target");
}

mbkt::TrainConfig build_train_config(const CLI::App* cmd, const TrainFlags& f) {
    mbkt::TrainConfig cfg;
    if (!f.from_manifest.empty()) {
        std::ifstream in(f.from_manifest);
        if (!in) throw mbkt::ConfigError("cannot open manifest '" + f.from_manifest + "'");
        nlohmann::json j = nlohmann::json::parse(in, nullptr, true, true);
        cfg = mbkt::train_config_from_json(j.at("config"), cfg);
    }
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) throw mbkt::ConfigError("cannot open config '" + f.config_path + "'");
        nlohmann::json j = nlohmann::json::parse(in, nullptr, true, true);
        cfg = mbkt::train_config_from_json(j, cfg);
    }
    auto given = [&](const std::string& name) { return cmd->count(name) > 0; };
    if (given("--mode")) cfg.model.mode = mbkt::parse_modality_mode(f.mode);
    if (given("--targets")) cfg.model.enabled_targets = parse_targets_csv(f.targets_csv);
    if (given("--epochs")) cfg.epochs = f.epochs;
    if (given("--max-epochs")) cfg.max_epochs = f.max_epochs;
    if (given("--lr")) cfg.lr = f.lr;
    if (given("--batch")) cfg.batch_size = f.batch;
    if (given("--lambda1")) cfg.lambda1 = f.lambda1;
    if (given("--lambda2")) cfg.lambda2 = f.lambda2;
    if (given("--consistency")) cfg.consistency = mbkt::parse_consistency(f.consistency);
    if (given("--d-model")) cfg.model.d_model = f.d_model;
    if (given("--heads")) cfg.model.heads = f.heads;
    if (given("--ffn-ratio")) cfg.model.ffn_ratio = f.ffn_ratio;
    if (given("--dropout")) cfg.model.dropout = f.dropout;
    if (given("--seed")) cfg.seed = f.seed;
    else if (f.from_manifest.empty() && f.config_path.empty()) cfg.seed = default_seed();
    if (given("--precision")) cfg.precision = f.precision;
    if (given("--detach-consistency-target")) cfg.detach_consistency_target = f.detach_consistency;
    return cfg;
}

void write_manifest(const std::string& path, const std::string& command,
                    const std::string& data_path, const mbkt::TrainConfig& cfg) {
    nlohmann::json manifest = {
        {"command", command},
        {"timestamp", iso_timestamp()},
        {"dataset", {{"path", data_path}, {"fnv1a64", hex64(mbkt::fnv1a_file(data_path))}}},
        {"config", mbkt::train_config_to_json(cfg)},
    };
    std::ofstream out(path);
    if (!out) throw mbkt::ConfigError("cannot write manifest '" + path + "'");
    out << manifest.dump(2) << "\n";
}

template <class Real>
int run_train_typed(const mbkt::TrainConfig& cfg, const std::string& data_path,
                    const std::string& out_path, const std::string& log_path) {
    const mbkt::Dataset ds = mbkt::load_dataset(data_path);

    std::ofstream log(log_path);
    if (!log) throw mbkt::ConfigError("cannot write log '" + log_path + "'");

    auto result = mbkt::train<Real>(cfg, ds, [&](const mbkt::EpochLog& e) {
        log << mbkt::epoch_log_to_json(e).dump() << "\n";
        std::fprintf(stderr, "epoch %lld  total %.6f  pred %.6f  cons_v %.6f  cons_l %.6f\n",
                     static_cast<long long>(e.epoch), e.loss_total, e.loss_pred, e.loss_cons_v,
                     e.loss_cons_l);
    });
    mbkt::save_checkpoint(result.params, out_path);

    nlohmann::json summary = {{"checkpoint", out_path},
                              {"epochs", static_cast<std::int64_t>(result.log.size())},
                              {"final", mbkt::epoch_log_to_json(result.log.back())}};
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_train(const CLI::App* cmd, TrainFlags& f) {
    mbkt::TrainConfig cfg = build_train_config(cmd, f);
    std::string data_path = f.data_path;
    if (!f.from_manifest.empty() && data_path.empty()) {
        std::ifstream in(f.from_manifest);
        nlohmann::json j = nlohmann::json::parse(in, nullptr, true, true);
        data_path = j.at("dataset").at("path").get<std::string>();
    }
    if (data_path.empty()) throw mbkt::ConfigError("no dataset given (--data or --from-manifest)");

    const std::string log_path = f.log_path.empty() ? f.out_path + ".log.jsonl" : f.log_path;
    const std::string manifest_path =
        f.manifest_path.empty() ? f.out_path + ".manifest.json" : f.manifest_path;

    {
        // Resolve dataset-derived fields so the manifest is self-contained.
        const mbkt::Dataset ds = mbkt::load_dataset(data_path);
        mbkt::resolve_config(cfg, ds);
    }
    write_manifest(manifest_path, "train", data_path, cfg);

    if (cfg.precision == "f64") return run_train_typed<double>(cfg, data_path, f.out_path, log_path);
    return run_train_typed<float>(cfg, data_path, f.out_path, log_path);
}

template <class Real>
int run_eval_typed(const mbkt::TrainConfig& cfg, const std::string& checkpoint_path,
                   const std::string& data_path, mbkt::ModalityMode run_mode,
                   const std::string& format) {
    const mbkt::Dataset ds = mbkt::load_dataset(data_path);
    mbkt::Rng scratch(0);
    mbkt::ModelParams<Real> params(cfg.model, scratch);
    mbkt::load_checkpoint(params, checkpoint_path);
    const mbkt::MetricsReport report = mbkt::evaluate(params, ds, run_mode);
    if (format == "markdown")
        std::cout << mbkt::metrics_to_markdown(report, mbkt::modality_mode_name(run_mode));
    else
        std::cout << mbkt::metrics_to_kv(report);
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             std::string manifest_path, const std::string& mode_flag, const std::string& format) {
    if (manifest_path.empty()) manifest_path = checkpoint_path + ".manifest.json";
    std::ifstream in(manifest_path);
    if (!in)
        throw mbkt::ConfigError("cannot open manifest '" + manifest_path +
                                "' (pass --manifest explicitly)");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, true, true);
    mbkt::TrainConfig cfg = mbkt::train_config_from_json(j.at("config"));

    const mbkt::ModalityMode run_mode =
        mode_flag.empty() ? cfg.model.mode : mbkt::parse_modality_mode(mode_flag);
    if (format != "kv" && format != "markdown")
        throw mbkt::ConfigError("unknown format '" + format + "' (kv|markdown)");

    if (cfg.precision == "f64")
        return run_eval_typed<double>(cfg, checkpoint_path, data_path, run_mode, format);
    return run_eval_typed<float>(cfg, checkpoint_path, data_path, run_mode, format);
}

int cmd_gen_data(std::size_t n, std::uint64_t seed, const std::string& out_path,
                 const std::string& mode, std::int64_t d_v, std::int64_t d_l, std::int64_t d_a,
                 std::int64_t t_min, std::int64_t t_max, std::int64_t latent_k, double noise,
                 double view_noise, std::int64_t vision_rank, bool aligned) {
    mbkt::SyntheticSpec spec;
    spec.n_samples = n;
    spec.mode = mbkt::parse_label_mode(mode);
    spec.d_v = d_v;
    spec.d_l = d_l;
    spec.d_a = d_a;
    spec.t_v_min = spec.t_l_min = spec.t_a_min = t_min;
    spec.t_v_max = spec.t_l_max = spec.t_a_max = t_max;
    spec.latent_k = latent_k;
    spec.noise = noise;
    spec.view_noise = view_noise;
    spec.vision_rank = vision_rank;
    spec.aligned = aligned;

    const mbkt::Dataset ds = mbkt::generate_synthetic(spec, seed);
    mbkt::save_dataset(ds, out_path);

    std::cout << "samples " << ds.size() << "\n";
    std::cout << "dims " << ds.d_v << " " << ds.d_l << " " << ds.d_a << "\n";
    std::cout << "mode " << mbkt::label_mode_name(ds.mode) << "\n";
    std::cout << "aligned " << (ds.aligned ? 1 : 0) << "\n";
    if (ds.mode == mbkt::LabelMode::SevenClass) {
        std::vector<int> counts(7, 0);
        for (const auto& s : ds.samples) ++counts[static_cast<std::size_t>(s.label_class)];
        for (int c = 0; c < 7; ++c)
            std::cout << "class_" << c << " " << counts[static_cast<std::size_t>(c)] << "\n";
    } else {
        for (int fidx = 0; fidx < 4; ++fidx) {
            int pos = 0;
            for (const auto& s : ds.samples) pos += s.label_flags[static_cast<std::size_t>(fidx)];
            std::cout << "positive_" << mbkt::kEmotionNames[static_cast<std::size_t>(fidx)] << " "
                      << pos << "\n";
        }
    }
    return kExitOk;
}

int cmd_gradcheck(const std::string& op_filter, int rounds, double tolerance, bool corrupt) {
    mbkt::GradCheckOptions opt;
    opt.filter = op_filter;
    opt.rounds = rounds;
    opt.tolerance = tolerance;
    opt.corrupt_backward = corrupt;
    const auto results = mbkt::run_gradchecks(opt);
    if (results.empty()) throw mbkt::ConfigError("no gradcheck matches '" + op_filter + "'");
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%-24s %12.3e  %s\n", r.name.c_str(), r.max_rel_err,
                    r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : kExitNumeric;
}

template <class Real>
int run_ablate_typed(mbkt::TrainConfig base, const std::string& which,
                     const std::string& data_path, const std::string& eval_path) {
    const mbkt::Dataset train_ds = mbkt::load_dataset(data_path);
    const mbkt::Dataset eval_ds =
        eval_path.empty() || eval_path == data_path ? train_ds : mbkt::load_dataset(eval_path);

    struct Row {
        std::string label;
        mbkt::TrainConfig cfg;
    };
    std::vector<Row> rows;
    if (which == "targets") {
        auto with_targets = [&](mbkt::TargetSet t) {
            mbkt::TrainConfig c = base;
            c.model.enabled_targets = t;
            return c;
        };
        rows.push_back({"Language", with_targets({false, true, false})});
        rows.push_back({"Audio", with_targets({false, false, true})});
        rows.push_back({"Vision", with_targets({true, false, false})});
        rows.push_back({"All", with_targets(mbkt::TargetSet::all())});
    } else if (which == "loss") {
        auto with_loss = [&](mbkt::ConsistencyKind k) {
            mbkt::TrainConfig c = base;
            c.consistency = k;
            return c;
        };
        rows.push_back({"L1", with_loss(mbkt::ConsistencyKind::L1)});
        rows.push_back({"L2", with_loss(mbkt::ConsistencyKind::L2)});
    } else {
        throw mbkt::ConfigError("unknown ablation '" + which + "' (targets|loss)");
    }

    const char* first_col = which == "targets" ? "Target" : "Loss";
    std::cout << "| " << first_col << " | Acc7 | Acc2 | F1 | MAE | Corr |\n";
    std::cout << "|---|---|---|---|---|---|\n";
    for (auto& row : rows) {
        std::fprintf(stderr, "ablate: training row '%s'\n", row.label.c_str());
        auto result = mbkt::train<Real>(row.cfg, train_ds);
        const mbkt::MetricsReport report =
            mbkt::evaluate(result.params, eval_ds, row.cfg.model.mode);
        std::cout << mbkt::metrics_markdown_row(report, row.label);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"missing-audio multimodal sentiment pipeline"};
    app.require_subcommand(1);
    bool debug_checks_flag = false;
    app.add_flag("--debug-checks", debug_checks_flag, "scan every op output for NaN/Inf");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    std::size_t gen_n = 64;
    std::uint64_t gen_seed = default_seed();
    std::string gen_out = "data.jsonl", gen_mode = "sevenclass";
    std::int64_t gen_dv = 10, gen_dl = 12, gen_da = 8, gen_tmin = 4, gen_tmax = 8, gen_k = 6,
                 gen_vrank = 0;
    double gen_noise = 0.1, gen_view_noise = 0.02;
    bool gen_aligned = false;
    gen->add_option("--n", gen_n, "number of samples");
    gen->add_option("--seed", gen_seed, "random seed");
    gen->add_option("--out", gen_out, "output JSONL path")->required();
    gen->add_option("--mode", gen_mode, "sevenclass|multilabel4");
    gen->add_option("--d-v", gen_dv, "vision feature dim");
    gen->add_option("--d-l", gen_dl, "language feature dim");
    gen->add_option("--d-a", gen_da, "audio feature dim");
    gen->add_option("--t-min", gen_tmin, "min sequence length");
    gen->add_option("--t-max", gen_tmax, "max sequence length");
    gen->add_option("--latent-k", gen_k, "latent dimension");
    gen->add_option("--noise", gen_noise, "audio residual noise stddev");
    gen->add_option("--view-noise", gen_view_noise, "vision/language view noise stddev");
    gen->add_option("--vision-rank", gen_vrank, "latent dims visible to vision (0 = all)");
    gen->add_flag("--aligned", gen_aligned, "equal sequence lengths per sample");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    TrainFlags tf;
    attach_train_options(tr, tf, /*data_required=*/false);
    tr->add_option("--from-manifest", tf.from_manifest, "reproduce a run from its manifest");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_ckpt, ev_data, ev_manifest, ev_mode, ev_format = "kv";
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "evaluation dataset")->required();
    ev->add_option("--manifest", ev_manifest, "manifest path (default: <checkpoint>.manifest.json)");
    ev->add_option("--mode", ev_mode, "override the evaluation modality mode");
    ev->add_option("--format", ev_format, "kv|markdown");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of all blocks");
    std::string gc_op;
    int gc_rounds = 10;
    double gc_tol = 1e-4;
    bool gc_corrupt = false;
    gc->add_option("--op", gc_op, "restrict to checks whose name contains this");
    gc->add_option("--rounds", gc_rounds, "random instances per check");
    gc->add_option("--tolerance", gc_tol, "max relative error");
    gc->add_flag("--corrupt-backward", gc_corrupt, "fixture: break one backward rule on purpose")
        ->group("");  // hidden

    // ablate
    auto* ab = app.add_subcommand("ablate", "train and evaluate an ablation row set");
    TrainFlags af;
    std::string ab_which = "targets", ab_eval_data;
    attach_train_options(ab, af, /*data_required=*/true);
    ab->add_option("--which", ab_which, "targets|loss");
    ab->add_option("--eval-data", ab_eval_data, "evaluation dataset (default: --data)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    mbkt::debug_checks() = debug_checks_flag;

    try {
        if (gen->parsed())
            return cmd_gen_data(gen_n, gen_seed, gen_out, gen_mode, gen_dv, gen_dl, gen_da,
                                gen_tmin, gen_tmax, gen_k, gen_noise, gen_view_noise, gen_vrank,
                                gen_aligned);
        if (tr->parsed()) return cmd_train(tr, tf);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_manifest, ev_mode, ev_format);
        if (gc->parsed()) return cmd_gradcheck(gc_op, gc_rounds, gc_tol, gc_corrupt);
        if (ab->parsed()) {
            mbkt::TrainConfig cfg = build_train_config(ab, af);
            if (cfg.precision == "f64")
                return run_ablate_typed<double>(cfg, ab_which, af.data_path, ab_eval_data);
            return run_ablate_typed<float>(cfg, ab_which, af.data_path, ab_eval_data);
        }
    } catch (const mbkt::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kExitNumeric;
    } catch (const mbkt::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDataConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDataConfig;
    }
    return kExitUsage;
}
