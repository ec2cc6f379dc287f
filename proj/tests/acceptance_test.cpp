// Acceptance suite. Each test prints one "[ACCEPTANCE] <criterion>: PASS/FAIL"
// line; the heavy training protocol is shared between the ordering, viability,
// and ablation criteria.

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "mapfuse/grad_suite.hpp"
#include "mapfuse/train.hpp"

using namespace mapfuse;
namespace fs = std::filesystem;

namespace {

void report(const std::string& criterion, bool pass) {
    std::printf("[ACCEPTANCE] %s: %s\n", criterion.c_str(), pass ? "PASS" : "FAIL");
    std::fflush(stdout);
    EXPECT_TRUE(pass) << criterion;
}

double now_s() {
    using clock = std::chrono::steady_clock;
    static const clock::time_point t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Shared training protocol: 64x64, 5 classes, 200 train / 50 test, change
// rate 0.05, drift enabled, 2000 steps per configuration, 3 seeds.
// ---------------------------------------------------------------------------

constexpr int kProtocolSteps = 2000;
const uint64_t kProtocolSeeds[3] = {0, 1, 2};

std::string protocol_data_dir() {
    static std::string dir;
    if (!dir.empty()) return dir;
    dir = (fs::temp_directory_path() / "mapfuse_acceptance_ds").string();
    fs::remove_all(dir);
    WorldConfig w;
    w.height = 64;
    w.width = 64;
    w.num_classes = 5;
    w.change_rate_target = 0.05;
    w.temporal_drift_sigma = 0.2;
    w.seed = 9000;
    generate_dataset(w, 250, dir);
    // split the manifest: first 200 train, last 50 eval
    const auto entries = load_manifest((fs::path(dir) / "manifest.txt").string());
    std::ofstream tr((fs::path(dir) / "manifest_train.txt").string(), std::ios::binary);
    std::ofstream ev((fs::path(dir) / "manifest_eval.txt").string(), std::ios::binary);
    for (size_t i = 0; i < entries.size(); ++i)
        (i < 200 ? tr : ev) << manifest_line(entries[i]) << "\n";
    return dir;
}

ExperimentConfig protocol_config(Regime regime, FusionKind kind, uint64_t seed) {
    ExperimentConfig cfg;
    cfg.model.encoder.num_scales = 3;
    cfg.model.encoder.channels = {4, 8, 16};
    cfg.model.encoder.map_channels = 8;
    cfg.model.head.head_width = 8;
    cfg.model.fusion.views = 4;
    cfg.model.fusion.regime = regime;
    cfg.model.fusion.kind = kind;
    cfg.model.head.contrastive_enabled = cfg.model.fusion.uses_map();
    cfg.model.num_classes = 5;
    cfg.optimizer.lr = 5e-3;
    cfg.batch_size = 1;
    cfg.steps = kProtocolSteps;
    cfg.seed = seed;
    cfg.data_dir = protocol_data_dir();
    cfg.train_manifest = "manifest_train.txt";
    cfg.eval_manifest = "manifest_eval.txt";
    return cfg;
}

double median3(double a, double b, double c) {
    double v[3] = {a, b, c};
    std::sort(v, v + 3);
    return v[1];
}

// Median test BC over the three protocol seeds for one configuration.
double median_bc(std::function<ExperimentConfig(uint64_t)> make_cfg, const std::string& label) {
    double bc[3];
    for (int i = 0; i < 3; ++i) {
        const MatrixRow row = run_experiment(make_cfg(kProtocolSeeds[i]));
        if (row.failed) {
            ADD_FAILURE() << label << " seed " << kProtocolSeeds[i] << ": " << row.error;
            return -1.0;
        }
        bc[i] = row.bc;
        std::printf("  %s seed %llu: bc=%.4f (%.1fs)\n", label.c_str(),
                    static_cast<unsigned long long>(kProtocolSeeds[i]), row.bc, row.wall_s);
        std::fflush(stdout);
    }
    return median3(bc[0], bc[1], bc[2]);
}

struct ProtocolResults {
    double cond_mapformer;
    double cond_concat;
    double bi_concat;
    double cross_mapformer;
    double cond_mapformer_no_contrast;
    double cond_mapformer_high_level;
    double cond_mapformer_low_res;
    double wall_s = 0.0;
};

const ProtocolResults& protocol_results() {
    static ProtocolResults r;
    static bool done = false;
    if (done) return r;
    const double t0 = now_s();
    r.cond_mapformer = median_bc(
        [](uint64_t s) { return protocol_config(Regime::conditional, FusionKind::mapformer, s); },
        "conditional/mapformer");
    r.cond_concat = median_bc(
        [](uint64_t s) { return protocol_config(Regime::conditional, FusionKind::concat, s); },
        "conditional/concat");
    r.bi_concat = median_bc(
        [](uint64_t s) { return protocol_config(Regime::bi_temporal, FusionKind::concat, s); },
        "bi_temporal/concat");
    r.cross_mapformer = median_bc(
        [](uint64_t s) { return protocol_config(Regime::cross_modal, FusionKind::mapformer, s); },
        "cross_modal/mapformer");
    r.cond_mapformer_no_contrast = median_bc(
        [](uint64_t s) {
            ExperimentConfig cfg = protocol_config(Regime::conditional, FusionKind::mapformer, s);
            cfg.model.head.contrastive_enabled = false;
            return cfg;
        },
        "conditional/mapformer no-contrastive");
    r.cond_mapformer_high_level = median_bc(
        [](uint64_t s) {
            ExperimentConfig cfg = protocol_config(Regime::conditional, FusionKind::mapformer, s);
            cfg.degradation = DegradationKind::high_level;
            return cfg;
        },
        "conditional/mapformer high_level");
    r.cond_mapformer_low_res = median_bc(
        [](uint64_t s) {
            ExperimentConfig cfg = protocol_config(Regime::conditional, FusionKind::mapformer, s);
            cfg.degradation = DegradationKind::low_res;
            cfg.degradation_factor = 8;
            return cfg;
        },
        "conditional/mapformer low_res x8");
    r.wall_s = now_s() - t0;
    done = true;
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// gradient suite
// ---------------------------------------------------------------------------

TEST(Acceptance, GradientSuite) {
    const double t0 = now_s();
    const auto results = run_grad_suite(7);
    bool ok = true;
    for (const auto& g : results) {
        std::printf("  %-45s %.3e\n", g.name.c_str(), g.worst_rel_error);
        ok = ok && g.worst_rel_error < 1e-5;
    }
    const double elapsed = now_s() - t0;
    std::printf("  suite time %.1fs\n", elapsed);
    report("gradient suite (rel < 1e-5, < 2 min)", ok && elapsed < 120.0);
}

// ---------------------------------------------------------------------------
// fusion oracle
// ---------------------------------------------------------------------------

namespace {

// Independent scalar triple-loop reference for the attention fusion.
std::vector<double> fusion_oracle(ParamStore<double>& store, const FusionConfig& cfg,
                                  const std::vector<double>& f1, const std::vector<double>& f2,
                                  const std::vector<double>& g1, int d_f, int d_g, int h, int w) {
    const int c_in = 2 * d_f + d_g;
    const int d_h = cfg.hidden > 0 ? cfg.hidden : d_f;
    std::vector<double> out(static_cast<size_t>(d_f) * h * w);
    const auto& aw = store.get("f.attn.w").data();
    const auto& ab = store.get("f.attn.b").data();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int p = i * w + j;
            std::vector<double> joint(c_in);
            for (int c = 0; c < d_f; ++c) joint[c] = f1[c * h * w + p];
            for (int c = 0; c < d_f; ++c) joint[d_f + c] = f2[c * h * w + p];
            for (int c = 0; c < d_g; ++c) joint[2 * d_f + c] = g1[c * h * w + p];
            std::vector<std::vector<double>> views(cfg.views, std::vector<double>(d_f));
            for (int k = 0; k < cfg.views; ++k) {
                const std::string g = "f.view" + std::to_string(k) + ".";
                const auto& w1 = store.get(g + "w1").data();
                const auto& b1 = store.get(g + "b1").data();
                const auto& w2 = store.get(g + "w2").data();
                const auto& b2 = store.get(g + "b2").data();
                std::vector<double> hid(d_h);
                for (int u = 0; u < d_h; ++u) {
                    double s = b1[u];
                    for (int c = 0; c < c_in; ++c) s += w1[u * c_in + c] * joint[c];
                    hid[u] = std::max(0.0, s);
                }
                for (int d = 0; d < d_f; ++d) {
                    double s = b2[d];
                    for (int u = 0; u < d_h; ++u) s += w2[d * d_h + u] * hid[u];
                    views[k][d] = s;
                }
            }
            for (int d = 0; d < d_f; ++d) {
                std::vector<double> logits(cfg.views);
                for (int k = 0; k < cfg.views; ++k) {
                    double s = ab[k * d_f + d];
                    for (int c = 0; c < d_g; ++c) s += aw[(k * d_f + d) * d_g + c] * g1[c * h * w + p];
                    logits[k] = s;
                }
                double m = *std::max_element(logits.begin(), logits.end());
                double z = 0;
                for (double v : logits) z += std::exp(v - m);
                double acc = 0;
                for (int k = 0; k < cfg.views; ++k) acc += std::exp(logits[k] - m) / z * views[k][d];
                out[static_cast<size_t>(d) * h * w + p] = acc;
            }
        }
    return out;
}

}  // namespace

TEST(Acceptance, FusionOracle) {
    const int d_f = 3, d_g = 2, h = 5, w = 4;
    const int k_list[4] = {1, 2, 3, 5};
    bool ok = true;
    for (int instance = 0; instance < 20; ++instance) {
        FusionConfig cfg;
        cfg.views = k_list[instance % 4];
        cfg.regime = Regime::conditional;
        ParamStore<double> store(5000 + instance);
        register_fusion(store, cfg, "f", d_f, d_g);
        Rng rng(7000 + instance);
        Tensor<double> f1 = Tensor<double>::uniform({d_f, h, w}, rng, -1.0, 1.0);
        Tensor<double> f2 = Tensor<double>::uniform({d_f, h, w}, rng, -1.0, 1.0);
        Tensor<double> g1 = Tensor<double>::uniform({d_g, h, w}, rng, -1.0, 1.0);
        Tape<double> tape;
        FusionOutput<double> out = fuse_mapformer(tape, store, cfg, "f",
                                                  std::optional<Tensor<double>>(f1), f2,
                                                  std::optional<Tensor<double>>(g1));
        const auto oracle = fusion_oracle(store, cfg, f1.data(), f2.data(), g1.data(), d_f, d_g, h, w);
        for (size_t i = 0; i < oracle.size(); ++i)
            ok = ok && std::abs(out.fused.data()[i] - oracle[i]) < 1e-6;
        // attention normalization
        for (int d = 0; d < d_f && ok; ++d)
            for (int p = 0; p < h * w; ++p) {
                double s = 0;
                for (int k = 0; k < cfg.views; ++k)
                    s += out.attention->data()[(k * d_f + d) * h * w + p];
                ok = ok && std::abs(s - 1.0) < 1e-6;
            }
    }
    report("fusion matches scalar oracle on 20 instances, attention normalized", ok);
}

// ---------------------------------------------------------------------------
// contrastive closed forms and exact stop-gradient
// ---------------------------------------------------------------------------

TEST(Acceptance, ContrastiveClosedForms) {
    bool ok = true;
    HeadConfig cfg;
    ParamStore<double> store(1);
    register_projection(store, cfg, {2}, 2);
    // identity projection so pi(f) = f for nonnegative f
    for (auto* name : {"contrast.proj.s0.w1", "contrast.proj.s0.w2"}) {
        auto& t = store.get(name);
        std::fill(t.data().begin(), t.data().end(), 0.0);
        t.data()[0] = t.data()[3] = 1.0;
    }
    for (auto* name : {"contrast.proj.s0.b1", "contrast.proj.s0.b2"}) {
        auto& t = store.get(name);
        std::fill(t.data().begin(), t.data().end(), 0.0);
    }
    Rng rng(33);
    Tensor<double> f = Tensor<double>::uniform({2, 4, 4}, rng, 0.1, 1.0, true);
    FeaturePyramid<double> pyr;
    pyr.source = FeatureSource::image_post;
    pyr.levels.push_back({1, f});
    ChangeMask none{4, 4, std::vector<uint8_t>(16, 0)};
    ChangeMask all{4, 4, std::vector<uint8_t>(16, 1)};

    auto run = [&](const ChangeMask& b, bool with_pre) {
        Tape<double> tape;
        std::optional<FeaturePyramid<double>> pre;
        if (with_pre) {
            pre = pyr;
            pre->source = FeatureSource::image_pre;
        }
        return contrastive_loss<double>(tape, store, cfg, {f}, pre, pyr, b).item();
    };
    ok = ok && std::abs(run(none, false) - (-1.0)) < 1e-6;  // aligned, unchanged
    ok = ok && std::abs(run(all, false) - 1.0) < 1e-6;      // aligned, changed
    ok = ok && std::abs(run(none, true) - (-2.0)) < 1e-6;   // pre-image branch adds -1
    {
        // orthogonal features score zero
        Tensor<double> fx = Tensor<double>::zeros({2, 4, 4}, true);
        Tensor<double> gy = Tensor<double>::zeros({2, 4, 4}, true);
        for (int p = 0; p < 16; ++p) {
            fx.data()[p] = 1.0;
            gy.data()[16 + p] = 1.0;
        }
        FeaturePyramid<double> px;
        px.source = FeatureSource::image_post;
        px.levels.push_back({1, fx});
        Tape<double> tape;
        ok = ok && std::abs(contrastive_loss<double>(tape, store, cfg, {gy}, std::nullopt, px, none).item()) < 1e-6;
    }
    {
        // stop-gradient: zero grads into the map features, exactly
        Rng r2(34);
        Tensor<double> g = Tensor<double>::uniform({2, 4, 4}, r2, 0.1, 1.0, true);
        Tape<double> tape;
        Tensor<double> loss = contrastive_loss<double>(tape, store, cfg, {g}, std::nullopt, pyr, none);
        tape.backward(loss);
        for (double v : g.grad()) ok = ok && v == 0.0;
    }
    report("contrastive closed forms (1e-6) and exact stop-gradient", ok);
}

// ---------------------------------------------------------------------------
// metrics oracle
// ---------------------------------------------------------------------------

namespace {

double iou_or(double fallback, int64_t inter, int64_t uni) {
    return uni == 0 ? fallback : static_cast<double>(inter) / uni;
}

}  // namespace

TEST(Acceptance, MetricsOracle) {
    Rng rng(4040);
    bool ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        const int nc = 2 + static_cast<int>(rng.uniform_index(5));
        SemanticMap mt{8, 8, nc, {}}, mp{8, 8, nc, {}};
        mt.labels.resize(64);
        mp.labels.resize(64);
        for (auto& l : mt.labels) l = static_cast<uint8_t>(rng.uniform_index(nc));
        for (auto& l : mp.labels) l = static_cast<uint8_t>(rng.uniform_index(nc));
        ChangeMask bt{8, 8, {}}, bp{8, 8, {}};
        bt.values.resize(64);
        bp.values.resize(64);
        const double rate = rng.uniform(0.0, 0.6);
        for (auto& v : bt.values) v = rng.uniform() < rate ? 1 : 0;
        for (auto& v : bp.values) v = rng.uniform() < rate ? 1 : 0;

        // brute-force counting oracle
        int64_t bi = 0, bu = 0;
        for (int i = 0; i < 64; ++i) {
            bi += bt.values[i] && bp.values[i];
            bu += bt.values[i] || bp.values[i];
        }
        double sc_sum = 0, miou_sum = 0;
        int sc_n = 0, miou_n = 0;
        for (int c = 0; c < nc; ++c) {
            int64_t ci = 0, cu = 0, fi = 0, fu = 0;
            for (int i = 0; i < 64; ++i) {
                const bool t = mt.labels[i] == c, p = mp.labels[i] == c;
                fi += t && p;
                fu += t || p;
                if (bt.values[i]) {
                    ci += t && p;
                    cu += t || p;
                }
            }
            if (cu) {
                sc_sum += static_cast<double>(ci) / cu;
                ++sc_n;
            }
            if (fu) {
                miou_sum += static_cast<double>(fi) / fu;
                ++miou_n;
            }
        }
        const double bc_ref = iou_or(1.0, bi, bu);
        const double sc_ref = sc_n ? sc_sum / sc_n : 1.0;
        const double miou_ref = miou_n ? miou_sum / miou_n : 1.0;

        MetricsAccumulator acc(nc);
        acc.add_binary(bt, bp);
        acc.add_semantic(mt, mp, bt);
        const MetricsReport r = acc.report();
        ok = ok && r.bc == bc_ref && r.sc == sc_ref && r.miou == miou_ref &&
             r.scs == 0.5 * (bc_ref + sc_ref);

        // sc with b == 1 everywhere equals miou
        ChangeMask ones{8, 8, std::vector<uint8_t>(64, 1)};
        MetricsAccumulator acc2(nc);
        acc2.add_semantic(mt, mp, ones);
        const MetricsReport r2 = acc2.report();
        ok = ok && r2.sc == r2.miou;
    }
    report("metrics equal brute-force oracle exactly on 100 instances; sc(b=1) == miou", ok);
}

// ---------------------------------------------------------------------------
// training protocol
// ---------------------------------------------------------------------------

TEST(Acceptance, OrderingExperiment) {
    const ProtocolResults& r = protocol_results();
    std::printf("  median bc: cond/mapformer=%.4f cond/concat=%.4f bi/concat=%.4f (%.0fs total)\n",
                r.cond_mapformer, r.cond_concat, r.bi_concat, r.wall_s);
    const bool ordering = r.cond_mapformer > r.cond_concat && r.cond_concat > r.bi_concat;
    const bool margin = r.cond_mapformer - r.bi_concat >= 0.05;
    report("ordering: conditional-mapformer > conditional-concat > bi-temporal-concat", ordering);
    report("margin: conditional-mapformer exceeds bi-temporal-concat by >= 5 IoU points", margin);
    report("protocol runtime < 30 min", r.wall_s < 1800.0);
}

TEST(Acceptance, CrossModalViability) {
    const ProtocolResults& r = protocol_results();
    std::printf("  median bc: cross/mapformer=%.4f bi/concat=%.4f\n", r.cross_mapformer, r.bi_concat);
    report("cross-modal-mapformer > bi-temporal-concat", r.cross_mapformer > r.bi_concat);
}

TEST(Acceptance, AblationDirections) {
    const ProtocolResults& r = protocol_results();
    std::printf("  median bc: full=%.4f no-contrast=%.4f high_level=%.4f low_res=%.4f\n",
                r.cond_mapformer, r.cond_mapformer_no_contrast, r.cond_mapformer_high_level,
                r.cond_mapformer_low_res);
    report("disabling contrastive loss does not improve median bc",
           r.cond_mapformer_no_contrast <= r.cond_mapformer);
    report("degradation monotonicity: bc(none) >= bc(high_level) and bc(none) >= bc(low_res x8)",
           r.cond_mapformer >= r.cond_mapformer_high_level &&
               r.cond_mapformer >= r.cond_mapformer_low_res);
    report("degraded runs still above bi-temporal-concat",
           r.cond_mapformer_high_level > r.bi_concat && r.cond_mapformer_low_res > r.bi_concat);
}

// ---------------------------------------------------------------------------
// determinism
// ---------------------------------------------------------------------------

namespace {

std::vector<char> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Acceptance, Determinism) {
    bool ok = true;
    // datasets
    WorldConfig w;
    w.height = 24;
    w.width = 24;
    w.seed = 5050;
    const std::string d1 = (fs::temp_directory_path() / "mapfuse_det_a").string();
    const std::string d2 = (fs::temp_directory_path() / "mapfuse_det_b").string();
    fs::remove_all(d1);
    fs::remove_all(d2);
    generate_dataset(w, 6, d1);
    generate_dataset(w, 6, d2);
    for (const auto& e : fs::directory_iterator(d1)) {
        const std::string name = e.path().filename().string();
        ok = ok && slurp(e.path().string()) == slurp((fs::path(d2) / name).string());
    }

    // loss logs and metric reports
    ExperimentConfig cfg;
    cfg.model.encoder.num_scales = 2;
    cfg.model.encoder.channels = {4, 6};
    cfg.model.encoder.map_channels = 4;
    cfg.model.head.head_width = 6;
    cfg.model.fusion.views = 2;
    cfg.steps = 5;
    cfg.batch_size = 2;
    cfg.seed = 3;
    cfg.data_dir = d1;
    std::string log_a, log_b, metrics_a, metrics_b;
    for (int run = 0; run < 2; ++run) {
        MapFormerModel<float> model(cfg.model, cfg.seed);
        Adam<float> opt(cfg.optimizer);
        LoadedDataset ds = load_dataset(cfg.data_dir, cfg.train_manifest, cfg.model.num_classes);
        std::ostringstream log;
        train(model, opt, cfg, ds, &log);
        const EvalResult ev = evaluate(model, cfg, ds);
        (run == 0 ? log_a : log_b) = log.str();
        (run == 0 ? metrics_a : metrics_b) = metrics_json(ev.pooled).dump();
    }
    ok = ok && log_a == log_b && metrics_a == metrics_b;
    fs::remove_all(d1);
    fs::remove_all(d2);
    report("byte-identical datasets, loss logs, and metric reports across two runs", ok);
}

// ---------------------------------------------------------------------------
// raster format
// ---------------------------------------------------------------------------

TEST(Acceptance, RasterFormat) {
    bool ok = true;
    Rng rng(8);
    {
        RasterFile r;
        r.dtype = 0;
        r.channels = 3;
        r.height = 5;
        r.width = 7;
        r.u8_data.resize(105);
        for (auto& v : r.u8_data) v = static_cast<uint8_t>(rng.uniform_index(256));
        const RasterFile back = decode_raster(encode_raster(r));
        ok = ok && back.u8_data == r.u8_data && back.channels == 3 && back.height == 5 && back.width == 7;
    }
    {
        RasterFile r;
        r.dtype = 1;
        r.channels = 2;
        r.height = 4;
        r.width = 6;
        r.f32_data.resize(48);
        for (auto& v : r.f32_data) v = static_cast<float>(rng.uniform());
        const RasterFile back = decode_raster(encode_raster(r));
        for (size_t i = 0; i < r.f32_data.size(); ++i) {
            uint32_t a, b;
            std::memcpy(&a, &r.f32_data[i], 4);
            std::memcpy(&b, &back.f32_data[i], 4);
            ok = ok && a == b;
        }
    }
    {
        RasterFile r;
        r.dtype = 0;
        r.channels = 1;
        r.height = 2;
        r.width = 2;
        r.u8_data = {1, 2, 3, 4};
        ok = ok && encode_raster(r).size() == 19;
    }
    report("CDR1 round-trip bit-exact for both dtypes; 2x2 u8 file is 19 bytes", ok);
}
