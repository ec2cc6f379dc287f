#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mapfuse/encoders.hpp"
#include "mapfuse/fusion.hpp"
#include "mapfuse/heads.hpp"
#include "mapfuse/synthetic.hpp"

namespace mapfuse {

struct ModelConfig {
    EncoderConfig encoder;
    FusionConfig fusion;
    HeadConfig head;
    int num_classes = 5;
    bool tie_fusion_scales = false;

    void validate() const {
        encoder.validate();
        fusion.validate();
        head.validate();
        if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
        if (head.contrastive_enabled && !fusion.uses_map())
            throw ConfigError("contrastive loss needs map features; disable it in bi_temporal regime");
        if (tie_fusion_scales)
            for (int c : encoder.channels)
                if (c != encoder.channels[0])
                    throw ConfigError("tie_fusion_scales requires equal channels at every scale");
    }
};

// Full network: shared image encoder, optional map encoder, per-scale fusion,
// prediction heads, projection head.
template <typename T>
class MapFormerModel {
public:
    MapFormerModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg), store_(seed) {
        cfg_.validate();
        register_image_encoder(store_, cfg_.encoder);
        if (cfg_.fusion.uses_map()) register_map_encoder(store_, cfg_.encoder, cfg_.num_classes);
        for (int s = 0; s < cfg_.encoder.num_scales; ++s) {
            if (cfg_.tie_fusion_scales && s > 0) break;
            register_fusion(store_, cfg_.fusion, fusion_prefix(s), cfg_.encoder.channels[s],
                            cfg_.encoder.map_channels);
        }
        register_head(store_, "head.binary", cfg_.encoder.channels, cfg_.head.head_width, 2);
        if (cfg_.head.scd_placement != ScdPlacement::none)
            register_head(store_, "head.semantic", cfg_.encoder.channels, cfg_.head.head_width,
                          cfg_.num_classes);
        if (cfg_.head.contrastive_enabled)
            register_projection(store_, cfg_.head, cfg_.encoder.channels, cfg_.encoder.map_channels);
    }

    struct Forward {
        Tensor<T> binary_logits;                    // [2,H,W]
        std::optional<Tensor<T>> semantic_logits;   // [|C|,H,W]
        std::optional<Tensor<T>> contrastive;       // scalar
        std::vector<Tensor<T>> attention;           // per scale, mapformer only
        std::optional<FeaturePyramid<T>> f1;
        FeaturePyramid<T> f2;
    };

    // `premap` is the effective pre-change map (possibly degraded or
    // predicted); `change` is only consulted for the contrastive targets.
    Forward forward(Tape<T>& tape, const ImageRaster& image_pre, const ImageRaster& image_post,
                    const std::optional<SemanticMap>& premap, const ChangeMask& change) {
        Forward fw{.f2 = image_encode(tape, store_, cfg_.encoder, image_to_tensor<T>(image_post),
                                      FeatureSource::image_post)};
        if (cfg_.fusion.uses_pre_image())
            fw.f1 = image_encode(tape, store_, cfg_.encoder, image_to_tensor<T>(image_pre),
                                 FeatureSource::image_pre);

        std::vector<Tensor<T>> g_scales;
        if (cfg_.fusion.uses_map()) {
            if (!premap.has_value()) throw ConfigError("regime requires a pre-change map input");
            if (premap->num_classes != cfg_.num_classes)
                throw DataError("pre-change map class count mismatch");
            Tensor<T> g_full = map_encode(tape, store_, cfg_.encoder, one_hot<T>(*premap));
            g_scales = resize_map_features(tape, g_full, fw.f2);
        }

        FeaturePyramid<T> fused;
        fused.source = FeatureSource::fused;
        for (size_t s = 0; s < fw.f2.levels.size(); ++s) {
            std::optional<Tensor<T>> f1s;
            if (cfg_.fusion.uses_pre_image()) f1s = fw.f1->levels[s].features;
            std::optional<Tensor<T>> g1s;
            if (cfg_.fusion.uses_map()) g1s = g_scales[s];
            FusionOutput<T> fo =
                cfg_.fusion.kind == FusionKind::mapformer
                    ? fuse_mapformer(tape, store_, cfg_.fusion, fusion_prefix(static_cast<int>(s)),
                                     f1s, fw.f2.levels[s].features, g1s)
                    : fuse_concat(tape, store_, cfg_.fusion, fusion_prefix(static_cast<int>(s)),
                                  f1s, std::optional<Tensor<T>>(fw.f2.levels[s].features), g1s);
            fused.levels.push_back({fw.f2.levels[s].stride, fo.fused});
            if (fo.attention) fw.attention.push_back(*fo.attention);
        }

        const int out_h = image_post.height, out_w = image_post.width;
        fw.binary_logits = predict_binary(tape, store_, fused, out_h, out_w);
        if (cfg_.head.scd_placement == ScdPlacement::on_post_features)
            fw.semantic_logits = predict_semantic(tape, store_, cfg_.head, fw.f2, out_h, out_w);
        else if (cfg_.head.scd_placement == ScdPlacement::on_fused)
            fw.semantic_logits = predict_semantic(tape, store_, cfg_.head, fused, out_h, out_w);

        if (cfg_.head.contrastive_enabled) {
            std::optional<FeaturePyramid<T>> f1_for_loss;
            if (cfg_.fusion.uses_pre_image()) f1_for_loss = fw.f1;
            fw.contrastive =
                contrastive_loss(tape, store_, cfg_.head, g_scales, f1_for_loss, fw.f2, change);
        }
        return fw;
    }

    Tensor<T> loss(Tape<T>& tape, const Forward& fw, const SemanticMap& map_post,
                   const ChangeMask& change, LossReport& report) {
        const std::vector<T> bin_weights = {T(1), static_cast<T>(cfg_.head.w_change)};
        std::optional<Tensor<T>> ce_b = cross_entropy(tape, fw.binary_logits, change.values,
                                                      /*ignore_label=*/255, bin_weights);
        std::optional<Tensor<T>> ce_s;
        if (fw.semantic_logits)
            ce_s = cross_entropy(tape, *fw.semantic_logits, map_post.labels, /*ignore_label=*/255);
        return total_loss(tape, cfg_.head, fw.contrastive, ce_b, ce_s, report);
    }

    ChangeMask predict_change(const Forward& fw) const {
        ChangeMask b;
        b.height = fw.binary_logits.dim(1);
        b.width = fw.binary_logits.dim(2);
        b.values = argmax_channels(fw.binary_logits);
        return b;
    }

    std::optional<SemanticMap> predict_post_map(const Forward& fw) const {
        if (!fw.semantic_logits) return std::nullopt;
        SemanticMap m;
        m.height = fw.semantic_logits->dim(1);
        m.width = fw.semantic_logits->dim(2);
        m.num_classes = cfg_.num_classes;
        m.labels = argmax_channels(*fw.semantic_logits);
        return m;
    }

    // Evaluation fallback when m1 is withheld: argmax of the uni-temporal
    // semantic head on the pre-change image features.
    SemanticMap predict_premap_from_image(const ImageRaster& image_pre) {
        Tape<T> tape;
        FeaturePyramid<T> f1 = image_encode(tape, store_, cfg_.encoder,
                                            image_to_tensor<T>(image_pre), FeatureSource::image_pre);
        return predict_premap(tape, store_, cfg_.head, f1, cfg_.num_classes, image_pre.height,
                              image_pre.width);
    }

    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }

private:
    std::string fusion_prefix(int s) const {
        return cfg_.tie_fusion_scales ? "fusion.shared" : "fusion.s" + std::to_string(s);
    }

    ModelConfig cfg_;
    ParamStore<T> store_;
};

}  // namespace mapfuse
