// Batch CLI over the mapfuse library. Every subcommand reads a flat
// key = value config (plus --set overrides), echoes the effective
// configuration to stdout, and writes its artifacts under --out-dir.
//
// Exit codes: 0 success, 1 runtime failure, 2 config/usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mapfuse/grad_suite.hpp"
#include "mapfuse/train.hpp"

namespace fs = std::filesystem;
using namespace mapfuse;

namespace {

KeyValueConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    KeyValueConfig kv = path.empty() ? KeyValueConfig() : KeyValueConfig::from_file(path);
    for (const auto& kvp : overrides) kv.apply_override(kvp);
    return kv;
}

WorldConfig parse_world_config(KeyValueConfig& kv) {
    WorldConfig w;
    w.height = kv.get_int("world.height", w.height);
    w.width = kv.get_int("world.width", w.width);
    w.num_classes = kv.get_int("world.num_classes", w.num_classes);
    w.num_seed_regions = kv.get_int("world.num_seed_regions", w.num_seed_regions);
    w.change_rate_target = kv.get_double("world.change_rate", w.change_rate_target);
    w.change_blob_count = kv.get_int("world.change_blobs", w.change_blob_count);
    w.appearance_noise_sigma = kv.get_double("world.noise_sigma", w.appearance_noise_sigma);
    w.temporal_drift_sigma = kv.get_double("world.drift_sigma", w.temporal_drift_sigma);
    w.seed = static_cast<uint64_t>(kv.get_int("world.seed", 0));
    w.validate();
    return w;
}

void echo_config(const KeyValueConfig& kv) {
    std::cout << "# effective configuration\n";
    kv.echo(std::cout);
}

void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) throw IoError("cannot create --out-dir " + out_dir);
}

// Restores model + optimizer state; returns the step to resume from.
int maybe_load(const std::string& ckpt, MapFormerModel<float>& model, Adam<float>* opt,
               uint64_t config_hash) {
    if (ckpt.empty()) return 0;
    return load_training_checkpoint(ckpt, model.params(), opt, config_hash);
}

int cmd_gen_data(KeyValueConfig& kv, const std::string& out_dir) {
    const WorldConfig w = parse_world_config(kv);
    const int samples = kv.get_int("world.samples", 16);
    kv.reject_unknown();
    echo_config(kv);
    if (samples < 1) throw ConfigError("world.samples must be >= 1");
    const std::string manifest = generate_dataset(w, samples, out_dir);
    nlohmann::json j;
    j["manifest"] = manifest;
    j["samples"] = samples;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_train(KeyValueConfig& kv, const std::string& out_dir, const std::string& resume) {
    ExperimentConfig cfg = parse_experiment_config(kv);
    kv.reject_unknown();
    echo_config(kv);
    ensure_out_dir(out_dir);

    LoadedDataset ds = load_dataset(cfg.data_dir, cfg.train_manifest, cfg.model.num_classes);
    MapFormerModel<float> model(cfg.model, cfg.seed);
    Adam<float> opt(cfg.optimizer);
    const int start_step = maybe_load(resume, model, &opt, cfg.hash());

    std::ofstream log((fs::path(out_dir) / "loss_log.jsonl").string(), std::ios::binary);
    if (!log) throw IoError("cannot write loss log in " + out_dir);
    TrainResult result = train(model, opt, cfg, ds, &log, start_step);
    save_training_checkpoint((fs::path(out_dir) / "checkpoint.cdp").string(), model.params(), opt,
                             start_step + result.steps_run, cfg.hash());

    nlohmann::json j;
    j["steps_run"] = result.steps_run;
    j["first_total"] = result.first_total;
    j["last_total"] = result.last_total;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_eval(KeyValueConfig& kv, const std::string& out_dir, const std::string& ckpt) {
    ExperimentConfig cfg = parse_experiment_config(kv);
    kv.reject_unknown();
    echo_config(kv);
    ensure_out_dir(out_dir);

    MapFormerModel<float> model(cfg.model, cfg.seed);
    maybe_load(ckpt, model, nullptr, cfg.hash());
    const std::string manifest = cfg.eval_manifest.empty() ? cfg.train_manifest : cfg.eval_manifest;
    LoadedDataset ds = load_dataset(cfg.data_dir, manifest, cfg.model.num_classes);
    const EvalResult ev = evaluate(model, cfg, ds);

    nlohmann::json j;
    j["samples"] = ev.samples;
    j["pooled"] = metrics_json(ev.pooled);
    nlohmann::json macro;
    macro["bc"] = ev.per_sample_mean.bc;
    macro["sc"] = ev.per_sample_mean.sc;
    macro["scs"] = ev.per_sample_mean.scs;
    macro["miou"] = ev.per_sample_mean.miou;
    j["per_sample_mean"] = macro;
    std::ofstream f((fs::path(out_dir) / "metrics.json").string(), std::ios::binary);
    if (!f) throw IoError("cannot write metrics.json in " + out_dir);
    f << j.dump(2) << "\n";
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_predict(KeyValueConfig& kv, const std::string& out_dir, const std::string& ckpt) {
    ExperimentConfig cfg = parse_experiment_config(kv);
    kv.reject_unknown();
    echo_config(kv);
    ensure_out_dir(out_dir);

    MapFormerModel<float> model(cfg.model, cfg.seed);
    maybe_load(ckpt, model, nullptr, cfg.hash());
    const std::string manifest = cfg.eval_manifest.empty() ? cfg.train_manifest : cfg.eval_manifest;
    const auto entries = load_manifest((fs::path(cfg.data_dir) / manifest).string());
    const bool semantic = cfg.model.head.scd_placement != ScdPlacement::none;
    for (const auto& e : entries) {
        const Sample s = load_sample(cfg.data_dir, e, cfg.model.num_classes);
        std::optional<SemanticMap> premap;
        if (cfg.model.fusion.uses_map()) {
            premap = cfg.degradation == DegradationKind::predicted_premap
                         ? model.predict_premap_from_image(s.image_pre)
                         : apply_degradation(s.map_pre, cfg);
        }
        Tape<float> tape;
        auto fw = model.forward(tape, s.image_pre, s.image_post, premap, s.change);
        write_raster(to_raster_file(model.predict_change(fw)),
                     (fs::path(out_dir) / (e.id + "_change.cdr")).string());
        if (semantic)
            write_raster(to_raster_file(*model.predict_post_map(fw)),
                         (fs::path(out_dir) / (e.id + "_map_post.cdr")).string());
        std::cout << "predicted " << e.id << "\n";
    }
    return 0;
}

int cmd_export_attention(KeyValueConfig& kv, const std::string& out_dir, const std::string& ckpt,
                         const std::string& sample_id, const std::vector<int>& channels) {
    ExperimentConfig cfg = parse_experiment_config(kv);
    kv.reject_unknown();
    echo_config(kv);
    if (cfg.model.fusion.kind != FusionKind::mapformer)
        throw ConfigError("export-attention needs fusion.kind = mapformer");
    ensure_out_dir(out_dir);

    MapFormerModel<float> model(cfg.model, cfg.seed);
    maybe_load(ckpt, model, nullptr, cfg.hash());
    const std::string manifest = cfg.eval_manifest.empty() ? cfg.train_manifest : cfg.eval_manifest;
    const auto entries = load_manifest((fs::path(cfg.data_dir) / manifest).string());
    const ManifestEntry* entry = nullptr;
    for (const auto& e : entries)
        if (e.id == sample_id) entry = &e;
    if (!entry) throw DataError("sample id '" + sample_id + "' not found in " + manifest);

    const Sample s = load_sample(cfg.data_dir, *entry, cfg.model.num_classes);
    std::optional<SemanticMap> premap = apply_degradation(s.map_pre, cfg);
    Tape<float> tape;
    auto fw = model.forward(tape, s.image_pre, s.image_post, premap, s.change);
    for (size_t sc = 0; sc < fw.attention.size(); ++sc) {
        const auto maps = export_attention_argmax(fw.attention[sc], channels);
        for (size_t ci = 0; ci < channels.size(); ++ci) {
            char name[64];
            std::snprintf(name, sizeof(name), "attn_scale%zu_ch%d.cdr", sc, channels[ci]);
            write_raster(to_raster_file(maps[ci]), (fs::path(out_dir) / name).string());
            std::cout << "wrote " << name << "\n";
        }
    }
    return 0;
}

int cmd_grad_check(uint64_t seed, double tolerance) {
    const auto results = run_grad_suite(seed);
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-45s %.3e %s\n", r.name.c_str(), r.worst_rel_error,
                    r.worst_rel_error < tolerance ? "ok" : "FAIL");
        ok = ok && r.worst_rel_error < tolerance;
    }
    return ok ? 0 : 1;
}

int cmd_metrics(const std::string& data_dir, const std::string& manifest_name,
                const std::string& pred_dir, int num_classes) {
    const auto entries = load_manifest((fs::path(data_dir) / manifest_name).string());
    MetricsAccumulator acc(num_classes);
    bool any_semantic = false;
    for (const auto& e : entries) {
        const Sample s = load_sample(data_dir, e, num_classes);
        const ChangeMask pred_b =
            mask_from_raster(read_raster((fs::path(pred_dir) / (e.id + "_change.cdr")).string()));
        acc.add_binary(s.change, pred_b);
        const fs::path map_path = fs::path(pred_dir) / (e.id + "_map_post.cdr");
        if (fs::exists(map_path)) {
            const SemanticMap pred_m = map_from_raster(read_raster(map_path.string()), num_classes);
            acc.add_semantic(s.map_post, pred_m, s.change);
            any_semantic = true;
        }
    }
    nlohmann::json j = metrics_json(acc.report());
    j["samples"] = entries.size();
    j["has_semantic"] = any_semantic;
    std::cout << j.dump() << "\n";
    return 0;
}

// Grid rows come from `matrix.rows`, a semicolon-separated list of
// regime:fusion_kind:K entries run across `matrix.seeds`.
int cmd_run_matrix(KeyValueConfig& kv, const std::string& config_path,
                   const std::vector<std::string>& overrides, const std::string& out_dir) {
    const std::string rows_spec = kv.get_string("matrix.rows", "");
    const std::vector<int> seeds = kv.get_int_list("matrix.seeds", {0, 1, 2});
    if (rows_spec.empty()) throw ConfigError("run-matrix needs matrix.rows");
    ensure_out_dir(out_dir);

    std::vector<ExperimentConfig> grid;
    std::istringstream rows(rows_spec);
    std::string row;
    while (std::getline(rows, row, ';')) {
        if (row.empty()) continue;
        std::istringstream parts(row);
        std::string regime, kind, k_str;
        if (!std::getline(parts, regime, ':') || !std::getline(parts, kind, ':') ||
            !std::getline(parts, k_str, ':'))
            throw ConfigError("matrix row '" + row + "' is not regime:fusion:K");
        for (int seed : seeds) {
            // re-parse per cell so regime-dependent defaults apply
            KeyValueConfig cell = load_config(config_path, overrides);
            cell.apply_override("regime=" + regime);
            cell.apply_override("fusion.kind=" + kind);
            cell.apply_override("fusion.K=" + k_str);
            cell.apply_override("seed=" + std::to_string(seed));
            cell.get_string("matrix.rows", "");
            cell.get_int_list("matrix.seeds", {});
            grid.push_back(parse_experiment_config(cell));
            cell.reject_unknown();
        }
    }
    echo_config(kv);

    const std::vector<MatrixRow> result = run_matrix(grid, &std::cerr);
    std::ofstream csv((fs::path(out_dir) / "matrix.csv").string(), std::ios::binary);
    if (!csv) throw IoError("cannot write matrix.csv in " + out_dir);
    csv << kMatrixHeader << "\n";
    std::cout << kMatrixHeader << "\n";
    for (const auto& r : result) {
        csv << matrix_row_csv(r) << "\n";
        std::cout << matrix_row_csv(r) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditional / cross-modal change detection toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", checkpoint, resume, sample_id;
    std::vector<std::string> overrides;
    std::vector<int> channels = {0};
    std::string pred_dir, data_dir, manifest_name = "manifest.txt";
    int num_classes = 5;
    uint64_t gc_seed = 7;
    double gc_tolerance = 1e-5;

    auto add_common = [&](CLI::App* sub, bool with_out = true) {
        sub->add_option("--config", config_path, "flat key = value config file");
        sub->add_option("--set", overrides, "override as key=value (repeatable)");
        if (with_out) sub->add_option("--out-dir", out_dir, "artifact output directory");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen);
    CLI::App* train_cmd = app.add_subcommand("train", "train one configuration");
    add_common(train_cmd);
    train_cmd->add_option("--resume", resume, "checkpoint to resume from");
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
    CLI::App* predict_cmd = app.add_subcommand("predict", "write prediction rasters");
    add_common(predict_cmd);
    predict_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
    CLI::App* attn_cmd = app.add_subcommand("export-attention", "write attention argmax rasters");
    add_common(attn_cmd);
    attn_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
    attn_cmd->add_option("--sample", sample_id, "manifest sample id")->required();
    attn_cmd->add_option("--channels", channels, "feature channels to export");
    CLI::App* gc_cmd = app.add_subcommand("grad-check", "finite-difference gradient suite");
    gc_cmd->add_option("--seed", gc_seed, "suite seed");
    gc_cmd->add_option("--tolerance", gc_tolerance, "relative error tolerance");
    CLI::App* metrics_cmd = app.add_subcommand("metrics", "score a prediction directory");
    metrics_cmd->add_option("--data-dir", data_dir, "ground truth dataset directory")->required();
    metrics_cmd->add_option("--manifest", manifest_name, "manifest file name");
    metrics_cmd->add_option("--pred-dir", pred_dir, "prediction directory")->required();
    metrics_cmd->add_option("--num-classes", num_classes, "semantic class count");
    CLI::App* matrix_cmd = app.add_subcommand("run-matrix", "train/eval a grid of configurations");
    add_common(matrix_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        KeyValueConfig kv = load_config(config_path, overrides);
        if (gen->parsed()) return cmd_gen_data(kv, out_dir);
        if (train_cmd->parsed()) return cmd_train(kv, out_dir, resume);
        if (eval_cmd->parsed()) return cmd_eval(kv, out_dir, checkpoint);
        if (predict_cmd->parsed()) return cmd_predict(kv, out_dir, checkpoint);
        if (attn_cmd->parsed()) return cmd_export_attention(kv, out_dir, checkpoint, sample_id, channels);
        if (gc_cmd->parsed()) return cmd_grad_check(gc_seed, gc_tolerance);
        if (metrics_cmd->parsed()) return cmd_metrics(data_dir, manifest_name, pred_dir, num_classes);
        if (matrix_cmd->parsed()) return cmd_run_matrix(kv, config_path, overrides, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        // missing inputs / unwritable outputs are usage errors
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
