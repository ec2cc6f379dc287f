#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mapfuse/encoders.hpp"
#include "mapfuse/fusion.hpp"

namespace mapfuse {

enum class ScdPlacement { on_post_features, on_fused, none };

inline std::string scd_placement_name(ScdPlacement p) {
    switch (p) {
        case ScdPlacement::on_post_features: return "on_post_features";
        case ScdPlacement::on_fused: return "on_fused";
        case ScdPlacement::none: return "none";
    }
    return "?";
}

struct HeadConfig {
    ScdPlacement scd_placement = ScdPlacement::on_post_features;
    bool contrastive_enabled = true;
    bool stop_grad_on_map = true;
    bool project_map = false;
    double w_contrastive = 1.0;
    double w_binary = 1.0;
    double w_semantic = 1.0;
    // Weight of the changed class inside the binary CE; counters the heavy
    // unchanged/changed imbalance that otherwise favors the all-unchanged
    // collapse.
    double w_change = 1.0;
    int head_width = 32;

    void validate() const {
        if (w_contrastive < 0 || w_binary < 0 || w_semantic < 0)
            throw ConfigError("loss weights must be >= 0");
        if (!(w_change > 0)) throw ConfigError("w_change must be positive");
        if (head_width < 1) throw ConfigError("head_width must be positive");
    }
};

// ---------------------------------------------------------------------------
// Prediction heads: per-scale pointwise linear to a common width, bilinear
// upsample to full resolution, channel concat, ReLU, final pointwise linear.
// ---------------------------------------------------------------------------

template <typename T>
void register_head(ParamStore<T>& store, const std::string& prefix, const std::vector<int>& in_channels,
                   int head_width, int out_channels) {
    for (size_t s = 0; s < in_channels.size(); ++s) {
        const std::string p = prefix + ".s" + std::to_string(s) + ".";
        store.create(p + "w", {head_width, in_channels[s]}, in_channels[s]);
        store.create_zeros(p + "b", {head_width});
    }
    const int cat = head_width * static_cast<int>(in_channels.size());
    store.create(prefix + ".final.w", {out_channels, cat}, cat);
    store.create_zeros(prefix + ".final.b", {out_channels});
}

template <typename T>
Tensor<T> head_forward(Tape<T>& tape, ParamStore<T>& store, const std::string& prefix,
                       const FeaturePyramid<T>& pyramid, int out_h, int out_w) {
    pyramid.validate();
    std::vector<Tensor<T>> ups;
    for (size_t s = 0; s < pyramid.levels.size(); ++s) {
        const std::string p = prefix + ".s" + std::to_string(s) + ".";
        Tensor<T> proj = pointwise_linear(tape, pyramid.levels[s].features, store.get(p + "w"),
                                          store.get(p + "b"));
        ups.push_back(bilinear_resize(tape, proj, out_h, out_w));
    }
    Tensor<T> cat = ups.size() == 1 ? ups[0] : concat_channels(tape, ups);
    cat = relu(tape, cat);
    return pointwise_linear(tape, cat, store.get(prefix + ".final.w"), store.get(prefix + ".final.b"));
}

template <typename T>
Tensor<T> predict_binary(Tape<T>& tape, ParamStore<T>& store, const FeaturePyramid<T>& fused,
                         int out_h, int out_w) {
    if (fused.source != FeatureSource::fused)
        throw ConfigError("predict_binary expects fused features");
    return head_forward(tape, store, "head.binary", fused, out_h, out_w);
}

template <typename T>
Tensor<T> predict_semantic(Tape<T>& tape, ParamStore<T>& store, const HeadConfig& cfg,
                           const FeaturePyramid<T>& source, int out_h, int out_w) {
    if (cfg.scd_placement == ScdPlacement::none)
        throw ConfigError("semantic head is disabled (scd_placement=none)");
    const bool fused_source = source.source == FeatureSource::fused;
    if (cfg.scd_placement == ScdPlacement::on_fused && !fused_source)
        throw ConfigError("semantic head placed on fused features, got uni-temporal source");
    if (cfg.scd_placement == ScdPlacement::on_post_features && fused_source)
        throw ConfigError("semantic head placed on uni-temporal features, got fused source");
    return head_forward(tape, store, "head.semantic", source, out_h, out_w);
}

// Predicted pre-change map: argmax of the uni-temporal semantic head on f1
// (ties to the smallest class id). Used when m1 is withheld at evaluation.
template <typename T>
SemanticMap predict_premap(Tape<T>& tape, ParamStore<T>& store, const HeadConfig& cfg,
                           const FeaturePyramid<T>& f1, int num_classes, int out_h, int out_w) {
    if (cfg.scd_placement != ScdPlacement::on_post_features)
        throw ConfigError("predict_premap needs a semantic head trained on uni-temporal features");
    Tensor<T> logits = predict_semantic(tape, store, cfg, f1, out_h, out_w);
    if (logits.dim(0) != num_classes)
        throw ConfigError("semantic head class count " + std::to_string(logits.dim(0)) +
                          " does not match " + std::to_string(num_classes));
    SemanticMap m;
    m.height = out_h;
    m.width = out_w;
    m.num_classes = num_classes;
    m.labels = argmax_channels(logits);
    return m;
}

// ---------------------------------------------------------------------------
// Projection head and supervised cross-modal contrastive loss
// ---------------------------------------------------------------------------

template <typename T>
void register_projection(ParamStore<T>& store, const HeadConfig& cfg,
                         const std::vector<int>& in_channels, int d_g) {
    for (size_t s = 0; s < in_channels.size(); ++s) {
        const std::string p = "contrast.proj.s" + std::to_string(s) + ".";
        // Positive biases keep pi(f) away from the zero vector at init: with
        // zero biases the hidden ReLU starts mostly dead, the projected
        // features sit at the cosine norm clamp, and the clamp's enormous
        // gradients can wreck the encoder in the first training steps.
        store.create(p + "w1", {d_g, in_channels[s]}, in_channels[s]);
        store.create_const(p + "b1", {d_g}, T(0.2));
        store.create(p + "w2", {d_g, d_g}, d_g);
        store.create_const(p + "b2", {d_g}, T(0.2));
        if (cfg.project_map) {
            const std::string mp = "contrast.mapproj.s" + std::to_string(s) + ".";
            store.create(mp + "w", {d_g, d_g}, d_g);
            store.create_zeros(mp + "b", {d_g});
        }
    }
}

// pi: shared between the two image branches, independent per scale.
template <typename T>
Tensor<T> project_features(Tape<T>& tape, ParamStore<T>& store, int scale, const Tensor<T>& f) {
    const std::string p = "contrast.proj.s" + std::to_string(scale) + ".";
    Tensor<T> h = relu(tape, pointwise_linear(tape, f, store.get(p + "w1"), store.get(p + "b1")));
    return pointwise_linear(tape, h, store.get(p + "w2"), store.get(p + "b2"));
}

// Coarse pixel is changed if any covered fine pixel changed.
inline ChangeMask max_pool_mask(const ChangeMask& b, int out_h, int out_w) {
    ChangeMask out;
    out.height = out_h;
    out.width = out_w;
    out.values.assign(static_cast<size_t>(out_h) * out_w, 0);
    for (int i = 0; i < out_h; ++i) {
        const int y0 = i * b.height / out_h;
        const int y1 = std::max(y0 + 1, (i + 1) * b.height / out_h);
        for (int j = 0; j < out_w; ++j) {
            const int x0 = j * b.width / out_w;
            const int x1 = std::max(x0 + 1, (j + 1) * b.width / out_w);
            uint8_t v = 0;
            for (int y = y0; y < y1 && !v; ++y)
                for (int x = x0; x < x1; ++x)
                    if (b.at(y, x)) {
                        v = 1;
                        break;
                    }
            out.values[static_cast<size_t>(i) * out_w + j] = v;
        }
    }
    return out;
}

// Per pixel: -sim(g, pi(f1)) [omitted without a pre-change image], plus
// -sim(g, pi(f2)) on unchanged pixels and max(sim(g, pi(f2)), 0) on changed
// ones; mean over pixels, then mean over scales.
template <typename T>
Tensor<T> contrastive_loss(Tape<T>& tape, ParamStore<T>& store, const HeadConfig& cfg,
                           const std::vector<Tensor<T>>& g_scales,
                           const std::optional<FeaturePyramid<T>>& f1, const FeaturePyramid<T>& f2,
                           const ChangeMask& b, T eps = T(1e-8)) {
    cfg.validate();
    f2.validate();
    if (g_scales.size() != f2.levels.size())
        throw DimensionError("contrastive_loss: map features per scale vs pyramid depth mismatch");
    if (f1 && f1->levels.size() != f2.levels.size())
        throw DimensionError("contrastive_loss: pyramid depth mismatch");
    Tensor<T> total = Tensor<T>::scalar(T(0));
    for (size_t s = 0; s < f2.levels.size(); ++s) {
        const Tensor<T>& f2s = f2.levels[s].features;
        const int h = f2s.dim(1), w = f2s.dim(2);
        if (g_scales[s].dim(1) != h || g_scales[s].dim(2) != w)
            throw DimensionError("contrastive_loss: g not aligned at scale " + std::to_string(s));

        Tensor<T> g = g_scales[s];
        if (cfg.stop_grad_on_map) g = stop_gradient(g);
        if (cfg.project_map) {
            const std::string mp = "contrast.mapproj.s" + std::to_string(s) + ".";
            g = pointwise_linear(tape, g, store.get(mp + "w"), store.get(mp + "b"));
        }

        const ChangeMask bs = max_pool_mask(b, h, w);
        std::vector<T> changed(bs.values.size()), unchanged(bs.values.size());
        for (size_t i = 0; i < bs.values.size(); ++i) {
            changed[i] = static_cast<T>(bs.values[i]);
            unchanged[i] = static_cast<T>(1 - bs.values[i]);
        }
        Tensor<T> mask1 = Tensor<T>::from({h, w}, std::move(changed));
        Tensor<T> mask0 = Tensor<T>::from({h, w}, std::move(unchanged));

        Tensor<T> sim2 = cosine_similarity_map(tape, g, project_features(tape, store, static_cast<int>(s), f2s), eps);
        Tensor<T> loss_map = add(tape, mul(tape, mask0, scale(tape, sim2, T(-1))),
                                 mul(tape, mask1, relu(tape, sim2)));
        if (f1) {
            Tensor<T> sim1 = cosine_similarity_map(
                tape, g, project_features(tape, store, static_cast<int>(s), f1->levels[s].features), eps);
            loss_map = add(tape, loss_map, scale(tape, sim1, T(-1)));
        }
        total = add(tape, total, mean_all(tape, loss_map));
    }
    return scale(tape, total, T(1) / static_cast<T>(f2.levels.size()));
}

// ---------------------------------------------------------------------------
// Total loss
// ---------------------------------------------------------------------------

struct LossReport {
    double total = 0.0;
    std::optional<double> contrastive;
    std::optional<double> ce_binary;
    std::optional<double> ce_semantic;
};

template <typename T>
Tensor<T> total_loss(Tape<T>& tape, const HeadConfig& cfg, const std::optional<Tensor<T>>& contrastive,
                     const std::optional<Tensor<T>>& ce_binary,
                     const std::optional<Tensor<T>>& ce_semantic, LossReport& report) {
    cfg.validate();
    if (!ce_binary.has_value()) throw ConfigError("total_loss: binary CE term is required");
    if (cfg.contrastive_enabled && !contrastive.has_value())
        throw ConfigError("total_loss: contrastive term enabled but missing");
    if (cfg.scd_placement != ScdPlacement::none && !ce_semantic.has_value())
        throw ConfigError("total_loss: semantic CE term enabled but missing");

    Tensor<T> total = scale(tape, *ce_binary, static_cast<T>(cfg.w_binary));
    report = LossReport{};
    report.ce_binary = static_cast<double>(ce_binary->item());
    if (cfg.contrastive_enabled) {
        report.contrastive = static_cast<double>(contrastive->item());
        total = add(tape, total, scale(tape, *contrastive, static_cast<T>(cfg.w_contrastive)));
    }
    if (cfg.scd_placement != ScdPlacement::none) {
        report.ce_semantic = static_cast<double>(ce_semantic->item());
        total = add(tape, total, scale(tape, *ce_semantic, static_cast<T>(cfg.w_semantic)));
    }
    report.total = static_cast<double>(total.item());
    return total;
}

}  // namespace mapfuse
