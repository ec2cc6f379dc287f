#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <tuple>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mapfuse/config.hpp"
#include "mapfuse/metrics.hpp"
#include "mapfuse/model.hpp"
#include "mapfuse/synthetic.hpp"

namespace mapfuse {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class DegradationKind { none, high_level, low_res, predicted_premap };

inline std::string degradation_name(DegradationKind d) {
    switch (d) {
        case DegradationKind::none: return "none";
        case DegradationKind::high_level: return "high_level";
        case DegradationKind::low_res: return "low_res";
        case DegradationKind::predicted_premap: return "predicted_premap";
    }
    return "?";
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (lr <= 0) throw ConfigError("optimizer.lr must be > 0");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw ConfigError("Adam betas must lie in [0,1)");
        if (eps <= 0) throw ConfigError("optimizer.eps must be > 0");
    }
};

struct ExperimentConfig {
    ModelConfig model;
    AdamConfig optimizer;
    int batch_size = 2;
    int steps = 200;
    int eval_every = 50;
    uint64_t seed = 0;
    std::string data_dir = ".";
    std::string train_manifest = "manifest.txt";
    std::string eval_manifest;
    DegradationKind degradation = DegradationKind::none;
    std::vector<uint8_t> degradation_mapping;  // empty -> halves of the class range
    int degradation_factor = 8;

    void validate() const {
        model.validate();
        optimizer.validate();
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (steps < 1) throw ConfigError("train.steps must be >= 1");
        if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
        if (degradation == DegradationKind::low_res && degradation_factor < 1)
            throw ConfigError("degradation.factor must be >= 1");
        if (degradation == DegradationKind::predicted_premap &&
            model.head.scd_placement != ScdPlacement::on_post_features)
            throw ConfigError("predicted_premap needs head.scd_placement = on_post_features");
    }

    uint64_t hash() const {
        std::ostringstream os;
        os << regime_name(model.fusion.regime) << '|' << fusion_name(model.fusion.kind) << '|'
           << model.fusion.views << '|' << model.fusion.hidden << '|' << model.num_classes << '|'
           << model.encoder.num_scales << '|';
        for (int c : model.encoder.channels) os << c << ',';
        os << '|' << model.encoder.map_channels << '|' << scd_placement_name(model.head.scd_placement)
           << '|' << model.head.contrastive_enabled << model.head.stop_grad_on_map
           << model.head.project_map << '|' << model.head.w_contrastive << ','
           << model.head.w_binary << ',' << model.head.w_semantic << ',' << model.head.w_change
           << '|' << model.head.head_width
           << '|' << optimizer.lr << ',' << optimizer.beta1 << ',' << optimizer.beta2 << ','
           << optimizer.eps << '|' << batch_size << '|' << seed;
        return detail::fnv1a(os.str());
    }
};

inline ExperimentConfig parse_experiment_config(KeyValueConfig& kv) {
    ExperimentConfig cfg;
    const std::string regime = kv.get_string("regime", "conditional");
    if (regime == "bi_temporal")
        cfg.model.fusion.regime = Regime::bi_temporal;
    else if (regime == "conditional")
        cfg.model.fusion.regime = Regime::conditional;
    else if (regime == "cross_modal")
        cfg.model.fusion.regime = Regime::cross_modal;
    else
        throw ConfigError("regime must be bi_temporal, conditional, or cross_modal");

    const std::string kind = kv.get_string("fusion.kind", "mapformer");
    if (kind == "mapformer")
        cfg.model.fusion.kind = FusionKind::mapformer;
    else if (kind == "concat")
        cfg.model.fusion.kind = FusionKind::concat;
    else
        throw ConfigError("fusion.kind must be mapformer or concat");
    cfg.model.fusion.views = kv.get_int("fusion.K", cfg.model.fusion.views);
    cfg.model.fusion.hidden = kv.get_int("fusion.hidden", cfg.model.fusion.hidden);
    cfg.model.tie_fusion_scales = kv.get_bool("fusion.tie_scales", cfg.model.tie_fusion_scales);
    if (cfg.model.fusion.views < 1) throw ConfigError("constraint violated: FusionConfig.K must be >= 1");

    cfg.model.encoder.num_scales = kv.get_int("encoder.num_scales", cfg.model.encoder.num_scales);
    cfg.model.encoder.channels = kv.get_int_list("encoder.channels", cfg.model.encoder.channels);
    cfg.model.encoder.map_channels = kv.get_int("encoder.map_channels", cfg.model.encoder.map_channels);

    const std::string placement =
        kv.get_string("head.scd_placement", scd_placement_name(cfg.model.head.scd_placement));
    if (placement == "on_post_features")
        cfg.model.head.scd_placement = ScdPlacement::on_post_features;
    else if (placement == "on_fused")
        cfg.model.head.scd_placement = ScdPlacement::on_fused;
    else if (placement == "none")
        cfg.model.head.scd_placement = ScdPlacement::none;
    else
        throw ConfigError("head.scd_placement must be on_post_features, on_fused, or none");
    cfg.model.head.contrastive_enabled =
        kv.get_bool("head.contrastive_enabled", cfg.model.fusion.uses_map());
    cfg.model.head.stop_grad_on_map = kv.get_bool("head.stop_grad_on_map", true);
    cfg.model.head.project_map = kv.get_bool("head.project_map", false);
    cfg.model.head.w_contrastive = kv.get_double("head.w_contrastive", 1.0);
    cfg.model.head.w_binary = kv.get_double("head.w_binary", 1.0);
    cfg.model.head.w_change = kv.get_double("head.w_change", 1.0);
    cfg.model.head.w_semantic = kv.get_double("head.w_semantic", 1.0);
    cfg.model.head.head_width = kv.get_int("head.head_width", cfg.model.head.head_width);

    cfg.model.num_classes = kv.get_int("data.num_classes", cfg.model.num_classes);
    cfg.data_dir = kv.get_string("data.dir", cfg.data_dir);
    cfg.train_manifest = kv.get_string("data.train_manifest", cfg.train_manifest);
    cfg.eval_manifest = kv.get_string("data.eval_manifest", cfg.eval_manifest);

    cfg.optimizer.lr = kv.get_double("optimizer.lr", cfg.optimizer.lr);
    cfg.optimizer.beta1 = kv.get_double("optimizer.beta1", cfg.optimizer.beta1);
    cfg.optimizer.beta2 = kv.get_double("optimizer.beta2", cfg.optimizer.beta2);
    cfg.optimizer.eps = kv.get_double("optimizer.eps", cfg.optimizer.eps);

    cfg.batch_size = kv.get_int("train.batch_size", cfg.batch_size);
    cfg.steps = kv.get_int("train.steps", cfg.steps);
    cfg.eval_every = kv.get_int("train.eval_every", cfg.eval_every);
    cfg.seed = static_cast<uint64_t>(kv.get_int("seed", 0));

    const std::string deg = kv.get_string("degradation.kind", "none");
    if (deg == "none")
        cfg.degradation = DegradationKind::none;
    else if (deg == "high_level")
        cfg.degradation = DegradationKind::high_level;
    else if (deg == "low_res")
        cfg.degradation = DegradationKind::low_res;
    else if (deg == "predicted_premap")
        cfg.degradation = DegradationKind::predicted_premap;
    else
        throw ConfigError("degradation.kind must be none, high_level, low_res, or predicted_premap");
    cfg.degradation_factor = kv.get_int("degradation.factor", cfg.degradation_factor);
    const std::vector<int> mapping = kv.get_int_list("degradation.mapping", {});
    for (int m : mapping) {
        if (m < 0 || m >= cfg.model.num_classes)
            throw ConfigError("degradation.mapping entries must be valid class ids");
        cfg.degradation_mapping.push_back(static_cast<uint8_t>(m));
    }
    cfg.validate();
    return cfg;
}

// Relabels/low-passes the pre-change map; the label space is kept at the
// original |C| so the map encoder shapes do not change.
inline SemanticMap apply_degradation(const SemanticMap& m1, const ExperimentConfig& cfg) {
    switch (cfg.degradation) {
        case DegradationKind::none:
        case DegradationKind::predicted_premap:
            return m1;
        case DegradationKind::high_level: {
            std::vector<uint8_t> mapping = cfg.degradation_mapping;
            if (mapping.empty())
                for (int c = 0; c < m1.num_classes; ++c)
                    mapping.push_back(static_cast<uint8_t>(c >= (m1.num_classes + 1) / 2));
            SemanticMap merged = merge_classes(m1, mapping, m1.num_classes);
            merged.num_classes = m1.num_classes;
            return merged;
        }
        case DegradationKind::low_res:
            return degrade_resolution(m1, cfg.degradation_factor);
    }
    return m1;
}

// ---------------------------------------------------------------------------
// Adam optimizer; parameters visited in name order, so updates are
// deterministic.
// ---------------------------------------------------------------------------

template <typename T>
class Adam {
public:
    explicit Adam(const AdamConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

    void step(ParamStore<T>& store) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (auto& [name, p] : const_cast<std::map<std::string, Tensor<T>>&>(store.all())) {
            auto& m = m_[name];
            auto& v = v_[name];
            if (m.empty()) {
                m.assign(p.size(), T(0));
                v.assign(p.size(), T(0));
            }
            auto& data = p.data();
            const auto& grad = p.grad();
            for (int64_t i = 0; i < p.size(); ++i) {
                m[i] = static_cast<T>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i]);
                v[i] = static_cast<T>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i]);
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                data[i] = static_cast<T>(data[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    std::map<std::string, std::vector<T>>& moments_m() { return m_; }
    std::map<std::string, std::vector<T>>& moments_v() { return v_; }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::map<std::string, std::vector<T>> m_, v_;
};

// ---------------------------------------------------------------------------
// Checkpoints: parameters, Adam moments, step counter, config hash
// ---------------------------------------------------------------------------

template <typename T>
void save_training_checkpoint(const std::string& path, const ParamStore<T>& store, Adam<T>& opt,
                              int step, uint64_t config_hash) {
    CheckpointTable table = params_to_table(store);
    for (const auto& [name, m] : opt.moments_m()) {
        CheckpointEntry e;
        e.shape = {static_cast<int>(m.size())};
        for (T x : m) e.data.push_back(static_cast<float>(x));
        table.emplace("opt.m." + name, std::move(e));
    }
    for (const auto& [name, v] : opt.moments_v()) {
        CheckpointEntry e;
        e.shape = {static_cast<int>(v.size())};
        for (T x : v) e.data.push_back(static_cast<float>(x));
        table.emplace("opt.v." + name, std::move(e));
    }
    {
        CheckpointEntry e;
        e.shape = {1};
        e.data = {static_cast<float>(step)};
        table.emplace("opt.step", std::move(e));
    }
    {
        CheckpointEntry e;
        e.shape = {2};
        e.data.resize(2);
        const uint32_t lo = static_cast<uint32_t>(config_hash & 0xffffffffULL);
        const uint32_t hi = static_cast<uint32_t>(config_hash >> 32);
        std::memcpy(&e.data[0], &lo, 4);
        std::memcpy(&e.data[1], &hi, 4);
        table.emplace("config.hash", std::move(e));
    }
    save_checkpoint(table, path);
}

template <typename T>
int load_training_checkpoint(const std::string& path, ParamStore<T>& store, Adam<T>* opt,
                             uint64_t config_hash) {
    CheckpointTable table = load_checkpoint(path);
    auto hit = table.find("config.hash");
    if (hit != table.end()) {
        uint32_t lo, hi;
        std::memcpy(&lo, &hit->second.data[0], 4);
        std::memcpy(&hi, &hit->second.data[1], 4);
        const uint64_t h = (static_cast<uint64_t>(hi) << 32) | lo;
        if (h != config_hash)
            throw DataError("checkpoint " + path + " was written with a different configuration");
    }
    table_to_params(table, store);
    int step = 0;
    auto sit = table.find("opt.step");
    if (sit != table.end()) step = static_cast<int>(sit->second.data[0]);
    if (opt) {
        opt->set_step_count(step);
        for (const auto& [name, p] : store.all()) {
            auto mit = table.find("opt.m." + name);
            auto vit = table.find("opt.v." + name);
            if (mit == table.end() || vit == table.end()) continue;
            auto& m = opt->moments_m()[name];
            auto& v = opt->moments_v()[name];
            m.assign(mit->second.data.begin(), mit->second.data.end());
            v.assign(vit->second.data.begin(), vit->second.data.end());
        }
    }
    return step;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct LoadedDataset {
    std::vector<Sample> samples;
    std::vector<std::string> ids;
};

inline LoadedDataset load_dataset(const std::string& dir, const std::string& manifest,
                                  int num_classes) {
    namespace fs = std::filesystem;
    const std::string path = (fs::path(dir) / manifest).string();
    LoadedDataset ds;
    for (const auto& e : load_manifest(path)) {
        Sample s = load_sample(dir, e, num_classes);
        s.validate();
        ds.samples.push_back(std::move(s));
        ds.ids.push_back(e.id);
    }
    if (ds.samples.empty()) throw DataError("manifest " + path + " lists no samples");
    return ds;
}

struct TrainResult {
    std::vector<std::string> loss_log;  // JSON lines, one per step
    double first_total = 0.0;
    double last_total = 0.0;
    int steps_run = 0;
};

inline std::string loss_report_json(int step, const LossReport& r) {
    nlohmann::json j;
    j["step"] = step;
    j["total"] = r.total;
    if (r.contrastive) j["contrastive"] = *r.contrastive;
    if (r.ce_binary) j["ce_binary"] = *r.ce_binary;
    if (r.ce_semantic) j["ce_semantic"] = *r.ce_semantic;
    return j.dump();
}

template <typename T>
TrainResult train(MapFormerModel<T>& model, Adam<T>& opt, const ExperimentConfig& cfg,
                  const LoadedDataset& ds, std::ostream* log_stream = nullptr,
                  int start_step = 0) {
    cfg.validate();
    if (cfg.degradation == DegradationKind::predicted_premap)
        throw ConfigError("predicted_premap is an evaluation mode, not a training degradation");

    // Degraded pre-change maps are fixed per sample; precompute them.
    std::vector<SemanticMap> premaps;
    premaps.reserve(ds.samples.size());
    for (const auto& s : ds.samples) premaps.push_back(apply_degradation(s.map_pre, cfg));

    Rng shuffle_rng(mix_seed(cfg.seed, 0x5d0f));
    std::vector<size_t> order(ds.samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t cursor = order.size();  // forces a shuffle before the first batch

    TrainResult result;
    std::string last_finite;
    for (int step = start_step + 1; step <= start_step + cfg.steps; ++step) {
        Tape<T> tape;
        model.params().zero_grads();
        Tensor<T> batch_loss = Tensor<T>::scalar(T(0));
        LossReport batch_report;
        int semantic_terms = 0, contrastive_terms = 0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                for (size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
                cursor = 0;
            }
            const size_t idx = order[cursor++];
            const Sample& s = ds.samples[idx];
            auto fw = model.forward(tape, s.image_pre, s.image_post, premaps[idx], s.change);
            LossReport r;
            Tensor<T> loss = model.loss(tape, fw, s.map_post, s.change, r);
            batch_loss = add(tape, batch_loss, loss);
            batch_report.total += r.total;
            if (r.ce_binary) batch_report.ce_binary = batch_report.ce_binary.value_or(0.0) + *r.ce_binary;
            if (r.ce_semantic) {
                batch_report.ce_semantic = batch_report.ce_semantic.value_or(0.0) + *r.ce_semantic;
                ++semantic_terms;
            }
            if (r.contrastive) {
                batch_report.contrastive = batch_report.contrastive.value_or(0.0) + *r.contrastive;
                ++contrastive_terms;
            }
        }
        batch_loss = scale(tape, batch_loss, T(1) / static_cast<T>(cfg.batch_size));
        batch_report.total /= cfg.batch_size;
        if (batch_report.ce_binary) *batch_report.ce_binary /= cfg.batch_size;
        if (batch_report.ce_semantic) *batch_report.ce_semantic /= semantic_terms;
        if (batch_report.contrastive) *batch_report.contrastive /= contrastive_terms;

        if (!std::isfinite(batch_report.total))
            throw ContractError("non-finite loss at step " + std::to_string(step) +
                                "; last finite report: " + (last_finite.empty() ? "none" : last_finite));

        tape.backward(batch_loss);
        opt.step(model.params());

        const std::string line = loss_report_json(step, batch_report);
        last_finite = line;
        result.loss_log.push_back(line);
        if (log_stream) (*log_stream) << line << "\n";
        if (step == start_step + 1) result.first_total = batch_report.total;
        result.last_total = batch_report.total;
        ++result.steps_run;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
    MetricsReport pooled;
    MetricsReport per_sample_mean;  // macro average; only the ratio fields are meaningful
    int samples = 0;
    bool has_semantic = false;
};

template <typename T>
EvalResult evaluate(MapFormerModel<T>& model, const ExperimentConfig& cfg, const LoadedDataset& ds) {
    const bool semantic = model.config().head.scd_placement != ScdPlacement::none;
    MetricsAccumulator pooled(cfg.model.num_classes);
    double sum_bc = 0, sum_sc = 0, sum_scs = 0, sum_miou = 0;
    for (const auto& s : ds.samples) {
        std::optional<SemanticMap> premap;
        if (cfg.model.fusion.uses_map()) {
            if (cfg.degradation == DegradationKind::predicted_premap)
                premap = model.predict_premap_from_image(s.image_pre);
            else
                premap = apply_degradation(s.map_pre, cfg);
        }
        Tape<T> tape;
        auto fw = model.forward(tape, s.image_pre, s.image_post, premap, s.change);
        const ChangeMask pred_b = model.predict_change(fw);
        pooled.add_binary(s.change, pred_b);
        MetricsAccumulator single(cfg.model.num_classes);
        single.add_binary(s.change, pred_b);
        if (semantic) {
            const SemanticMap pred_m2 = *model.predict_post_map(fw);
            pooled.add_semantic(s.map_post, pred_m2, s.change);
            single.add_semantic(s.map_post, pred_m2, s.change);
        }
        const MetricsReport r = single.report();
        sum_bc += r.bc;
        sum_sc += r.sc;
        sum_scs += r.scs;
        sum_miou += r.miou;
    }
    EvalResult out;
    out.samples = static_cast<int>(ds.samples.size());
    out.has_semantic = semantic;
    out.pooled = pooled.report();
    out.per_sample_mean.bc = sum_bc / out.samples;
    out.per_sample_mean.sc = sum_sc / out.samples;
    out.per_sample_mean.scs = sum_scs / out.samples;
    out.per_sample_mean.miou = sum_miou / out.samples;
    return out;
}

inline nlohmann::json metrics_json(const MetricsReport& r) {
    nlohmann::json j;
    j["bc"] = r.bc;
    j["sc"] = r.sc;
    j["scs"] = r.scs;
    j["miou"] = r.miou;
    j["bc_intersection"] = r.bc_intersection;
    j["bc_union"] = r.bc_union;
    j["sc_counted_classes"] = r.sc_counted_classes;
    j["sc_vacuous"] = r.sc_vacuous;
    nlohmann::json per_class = nlohmann::json::array();
    for (size_t c = 0; c < r.sc_per_class.size(); ++c) {
        nlohmann::json jc;
        jc["class"] = c;
        jc["sc_intersection"] = r.sc_per_class[c].intersection;
        jc["sc_union"] = r.sc_per_class[c].union_;
        jc["miou_intersection"] = r.miou_per_class[c].intersection;
        jc["miou_union"] = r.miou_per_class[c].union_;
        per_class.push_back(jc);
    }
    j["per_class"] = per_class;
    return j;
}

// ---------------------------------------------------------------------------
// Experiment matrix
// ---------------------------------------------------------------------------

struct MatrixRow {
    std::string regime, fusion;
    int k = 0;
    uint64_t seed = 0;
    double bc = 0, sc = 0, scs = 0, miou = 0;
    double wall_s = 0;
    bool failed = false;
    std::string error;
};

inline constexpr const char* kMatrixHeader = "regime,fusion,K,seed,bc,sc,scs,miou,wall_s";

inline std::string matrix_row_csv(const MatrixRow& r) {
    char buf[256];
    if (r.failed) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%d,%llu,nan,nan,nan,nan,%.3f", r.regime.c_str(),
                      r.fusion.c_str(), r.k, static_cast<unsigned long long>(r.seed), r.wall_s);
    } else {
        std::snprintf(buf, sizeof(buf), "%s,%s,%d,%llu,%.6f,%.6f,%.6f,%.6f,%.3f", r.regime.c_str(),
                      r.fusion.c_str(), r.k, static_cast<unsigned long long>(r.seed), r.bc, r.sc,
                      r.scs, r.miou, r.wall_s);
    }
    return buf;
}

// Trains and evaluates one configuration end to end.
inline MatrixRow run_experiment(const ExperimentConfig& cfg, std::ostream* log_stream = nullptr) {
    MatrixRow row;
    row.regime = regime_name(cfg.model.fusion.regime);
    row.fusion = fusion_name(cfg.model.fusion.kind);
    row.k = cfg.model.fusion.views;
    row.seed = cfg.seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        cfg.validate();
        LoadedDataset train_ds = load_dataset(cfg.data_dir, cfg.train_manifest, cfg.model.num_classes);
        MapFormerModel<float> model(cfg.model, cfg.seed);
        Adam<float> opt(cfg.optimizer);
        train(model, opt, cfg, train_ds, log_stream);
        const std::string eval_manifest =
            cfg.eval_manifest.empty() ? cfg.train_manifest : cfg.eval_manifest;
        LoadedDataset eval_ds = load_dataset(cfg.data_dir, eval_manifest, cfg.model.num_classes);
        const EvalResult ev = evaluate(model, cfg, eval_ds);
        row.bc = ev.pooled.bc;
        row.sc = ev.pooled.sc;
        row.scs = ev.pooled.scs;
        row.miou = ev.pooled.miou;
    } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
    }
    row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

// One row per config; rows sorted by (regime, fusion_kind, K, seed). Failures
// are recorded per row and the matrix continues.
inline std::vector<MatrixRow> run_matrix(std::vector<ExperimentConfig> grid,
                                         std::ostream* progress = nullptr) {
    std::vector<MatrixRow> rows;
    for (const auto& cfg : grid) {
        MatrixRow row = run_experiment(cfg);
        if (progress) {
            (*progress) << matrix_row_csv(row);
            if (row.failed) (*progress) << "  # " << row.error;
            (*progress) << "\n" << std::flush;
        }
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const MatrixRow& a, const MatrixRow& b) {
        return std::tie(a.regime, a.fusion, a.k, a.seed) < std::tie(b.regime, b.fusion, b.k, b.seed);
    });
    return rows;
}

}  // namespace mapfuse
