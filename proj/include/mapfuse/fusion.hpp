#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mapfuse/encoders.hpp"
#include "mapfuse/ops.hpp"

namespace mapfuse {

enum class Regime { bi_temporal, conditional, cross_modal };
enum class FusionKind { mapformer, concat };

inline std::string regime_name(Regime r) {
    switch (r) {
        case Regime::bi_temporal: return "bi_temporal";
        case Regime::conditional: return "conditional";
        case Regime::cross_modal: return "cross_modal";
    }
    return "?";
}

inline std::string fusion_name(FusionKind k) {
    return k == FusionKind::mapformer ? "mapformer" : "concat";
}

struct FusionConfig {
    int views = 4;       // K
    int hidden = 0;      // D_h per group; 0 means D_f
    Regime regime = Regime::conditional;
    FusionKind kind = FusionKind::mapformer;

    void validate() const {
        if (views < 1) throw ConfigError("FusionConfig.K must be >= 1");
        if (hidden < 0) throw ConfigError("FusionConfig.hidden must be >= 0");
        if (kind == FusionKind::mapformer && regime == Regime::bi_temporal)
            throw ConfigError("mapformer fusion requires a map input; bi_temporal regime has none");
    }

    bool uses_map() const { return regime != Regime::bi_temporal; }
    bool uses_pre_image() const { return regime != Regime::cross_modal; }
};

template <typename T>
struct FusionOutput {
    Tensor<T> fused;                      // [D_f, H_s, W_s]
    std::optional<Tensor<T>> attention;   // [K, D_f, H_s, W_s], mapformer only
};

namespace detail {

inline int fusion_in_channels(const FusionConfig& cfg, int d_f, int d_g) {
    int c = d_f;  // f2 always present
    if (cfg.uses_pre_image()) c += d_f;
    if (cfg.uses_map()) c += d_g;
    return c;
}

}  // namespace detail

// Registers one fusion module; modules at different scales get independent
// parameters under distinct prefixes.
template <typename T>
void register_fusion(ParamStore<T>& store, const FusionConfig& cfg, const std::string& prefix,
                     int d_f, int d_g) {
    cfg.validate();
    const int c_in = detail::fusion_in_channels(cfg, d_f, d_g);
    const int d_h = cfg.hidden > 0 ? cfg.hidden : d_f;
    if (cfg.kind == FusionKind::mapformer) {
        for (int k = 0; k < cfg.views; ++k) {
            const std::string g = prefix + ".view" + std::to_string(k) + ".";
            store.create(g + "w1", {d_h, c_in}, c_in);
            store.create_zeros(g + "b1", {d_h});
            store.create(g + "w2", {d_f, d_h}, d_h);
            store.create_zeros(g + "b2", {d_f});
        }
        store.create(prefix + ".attn.w", {cfg.views * d_f, d_g}, d_g);
        store.create_zeros(prefix + ".attn.b", {cfg.views * d_f});
    } else {
        store.create(prefix + ".mlp.w1", {d_h, c_in}, c_in);
        store.create_zeros(prefix + ".mlp.b1", {d_h});
        store.create(prefix + ".mlp.w2", {d_f, d_h}, d_h);
        store.create_zeros(prefix + ".mlp.b2", {d_f});
    }
}

// Eq.-style restricted channelwise attention fusion: K parameter-disjoint
// two-layer MLPs produce views h_k from the concatenated inputs; attention
// logits come from the map features alone through one pointwise linear layer,
// softmaxed over K; each output channel attends across the K views.
template <typename T>
FusionOutput<T> fuse_mapformer(Tape<T>& tape, ParamStore<T>& store, const FusionConfig& cfg,
                               const std::string& prefix, const std::optional<Tensor<T>>& f1,
                               const Tensor<T>& f2, const std::optional<Tensor<T>>& g1) {
    cfg.validate();
    if (!g1.has_value()) throw ConfigError("fuse_mapformer: map features g1 are required");
    if (cfg.uses_pre_image() != f1.has_value())
        throw ConfigError("fuse_mapformer: pre-change image features " +
                          std::string(f1.has_value() ? "present" : "absent") + " in regime " +
                          regime_name(cfg.regime));
    const int h = f2.dim(1), w = f2.dim(2);
    if (g1->dim(1) != h || g1->dim(2) != w)
        throw DimensionError("fuse_mapformer: g1 spatial " + shape_str(g1->shape()) +
                             " vs f2 " + shape_str(f2.shape()));
    if (f1 && (f1->dim(1) != h || f1->dim(2) != w))
        throw DimensionError("fuse_mapformer: f1 spatial mismatch");

    std::vector<Tensor<T>> parts;
    if (f1) parts.push_back(*f1);
    parts.push_back(f2);
    parts.push_back(*g1);
    Tensor<T> joint = parts.size() == 1 ? parts[0] : concat_channels(tape, parts);

    std::vector<GroupMlpParams<T>> groups;
    for (int k = 0; k < cfg.views; ++k) {
        const std::string g = prefix + ".view" + std::to_string(k) + ".";
        groups.push_back({store.get(g + "w1"), store.get(g + "b1"), store.get(g + "w2"),
                          store.get(g + "b2")});
    }
    const int d_f = groups[0].w2.dim(0);
    Tensor<T> views = reshape(tape, grouped_pointwise_mlp(tape, joint, groups),
                              {cfg.views, d_f, h, w});

    Tensor<T> logits = pointwise_linear(tape, *g1, store.get(prefix + ".attn.w"),
                                        store.get(prefix + ".attn.b"));
    Tensor<T> attn = softmax(tape, reshape(tape, logits, {cfg.views, d_f, h, w}), 0);

    FusionOutput<T> out;
    out.fused = sum_axis0(tape, mul(tape, attn, views));
    out.attention = attn;
    return out;
}

// Concatenation baseline: channel concat of the present inputs, then a
// two-layer pointwise MLP down to D_f channels.
template <typename T>
FusionOutput<T> fuse_concat(Tape<T>& tape, ParamStore<T>& store, const FusionConfig& cfg,
                            const std::string& prefix, const std::optional<Tensor<T>>& f1,
                            const std::optional<Tensor<T>>& f2, const std::optional<Tensor<T>>& g1) {
    cfg.validate();
    if (!f1.has_value() && !f2.has_value())
        throw ConfigError("fuse_concat: at least one image feature input is required");
    std::vector<Tensor<T>> parts;
    if (f1) parts.push_back(*f1);
    if (f2) parts.push_back(*f2);
    if (g1) parts.push_back(*g1);
    Tensor<T> joint = parts.size() == 1 ? parts[0] : concat_channels(tape, parts);
    Tensor<T> hidden = relu(tape, pointwise_linear(tape, joint, store.get(prefix + ".mlp.w1"),
                                                   store.get(prefix + ".mlp.b1")));
    FusionOutput<T> out;
    out.fused = pointwise_linear(tape, hidden, store.get(prefix + ".mlp.w2"),
                                 store.get(prefix + ".mlp.b2"));
    return out;
}

// Per requested channel d: label raster over {0..K-1} with argmax over the
// view axis, ties to the smallest k.
template <typename T>
std::vector<SemanticMap> export_attention_argmax(const Tensor<T>& attention,
                                                 const std::vector<int>& channel_ids) {
    if (attention.rank() != 4) throw DimensionError("attention must be [K,D_f,H,W]");
    const int k = attention.dim(0), d_f = attention.dim(1);
    const int h = attention.dim(2), w = attention.dim(3);
    const int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<SemanticMap> out;
    for (int d : channel_ids) {
        if (d < 0 || d >= d_f)
            throw ConfigError("attention channel " + std::to_string(d) + " out of range [0," +
                              std::to_string(d_f) + ")");
        SemanticMap m;
        m.height = h;
        m.width = w;
        m.num_classes = k;
        m.labels.resize(plane);
        for (int64_t i = 0; i < plane; ++i) {
            int best = 0;
            T bv = attention.data()[(static_cast<int64_t>(0) * d_f + d) * plane + i];
            for (int kk = 1; kk < k; ++kk) {
                const T v = attention.data()[(static_cast<int64_t>(kk) * d_f + d) * plane + i];
                if (v > bv) {
                    bv = v;
                    best = kk;
                }
            }
            m.labels[i] = static_cast<uint8_t>(best);
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace mapfuse
