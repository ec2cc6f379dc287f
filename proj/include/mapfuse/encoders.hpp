#pragma once

#include <string>
#include <vector>

#include "mapfuse/ops.hpp"
#include "mapfuse/params.hpp"
#include "mapfuse/raster.hpp"

namespace mapfuse {

enum class FeatureSource { image_pre, image_post, map_pre, fused };

template <typename T>
struct FeaturePyramid {
    struct Level {
        int stride;
        Tensor<T> features;  // [D_s, ceil(H/stride), ceil(W/stride)]
    };
    FeatureSource source = FeatureSource::image_pre;
    std::vector<Level> levels;

    void validate() const {
        if (levels.empty()) throw ContractError("empty feature pyramid");
        for (size_t i = 1; i < levels.size(); ++i)
            if (levels[i].stride <= levels[i - 1].stride)
                throw ContractError("pyramid strides must be strictly increasing");
    }
};

struct EncoderConfig {
    int num_scales = 3;
    std::vector<int> channels = {16, 32, 64};  // per scale
    int map_channels = 32;                     // D_g
    int image_channels = 3;

    void validate() const {
        if (num_scales < 1) throw ConfigError("num_scales must be >= 1");
        if (static_cast<int>(channels.size()) != num_scales)
            throw ConfigError("channels list must have num_scales entries");
        for (int c : channels)
            if (c < 1) throw ConfigError("encoder channel counts must be positive");
        if (map_channels < 1) throw ConfigError("map_channels must be positive");
        if (image_channels < 1) throw ConfigError("image_channels must be positive");
    }
};

// ---------------------------------------------------------------------------
// Image encoder: per scale a stride-2 conv followed by two residual conv
// blocks (dilation 1, then 2) with ReLU. One parameter set shared between the
// bi-temporal branches.
// ---------------------------------------------------------------------------

template <typename T>
void register_image_encoder(ParamStore<T>& store, const EncoderConfig& cfg) {
    cfg.validate();
    int c_prev = cfg.image_channels;
    for (int s = 0; s < cfg.num_scales; ++s) {
        const int c = cfg.channels[s];
        const std::string p = "encoder.image.s" + std::to_string(s) + ".";
        store.create(p + "down.w", {c, c_prev, 3, 3}, c_prev * 9);
        store.create_zeros(p + "down.b", {c});
        store.create(p + "res1.w", {c, c, 3, 3}, c * 9);
        store.create_zeros(p + "res1.b", {c});
        store.create(p + "res2.w", {c, c, 3, 3}, c * 9);
        store.create_zeros(p + "res2.b", {c});
        c_prev = c;
    }
}

template <typename T>
FeaturePyramid<T> image_encode(Tape<T>& tape, ParamStore<T>& store, const EncoderConfig& cfg,
                               const Tensor<T>& image, FeatureSource source) {
    cfg.validate();
    if (image.rank() != 3 || image.dim(0) != cfg.image_channels)
        throw ConfigError("image_encode: expected " + std::to_string(cfg.image_channels) +
                          " input channels, got " + shape_str(image.shape()));
    FeaturePyramid<T> pyr;
    pyr.source = source;
    Tensor<T> x = image;
    int stride = 1;
    for (int s = 0; s < cfg.num_scales; ++s) {
        const std::string p = "encoder.image.s" + std::to_string(s) + ".";
        x = relu(tape, conv2d(tape, x, store.get(p + "down.w"), store.get(p + "down.b"), 2, 1));
        x = relu(tape, add(tape, x, conv2d(tape, x, store.get(p + "res1.w"), store.get(p + "res1.b"), 1, 1)));
        x = relu(tape, add(tape, x, conv2d(tape, x, store.get(p + "res2.w"), store.get(p + "res2.b"), 1, 2)));
        stride *= 2;
        pyr.levels.push_back({stride, x});
    }
    return pyr;
}

// ---------------------------------------------------------------------------
// Map encoder: pointwise conv -> ReLU -> conv k=5 d=2 -> ReLU -> conv k=5 d=2,
// full input resolution preserved.
// ---------------------------------------------------------------------------

template <typename T>
void register_map_encoder(ParamStore<T>& store, const EncoderConfig& cfg, int num_classes) {
    cfg.validate();
    const int d = cfg.map_channels;
    store.create("encoder.map.pw.w", {d, num_classes}, num_classes);
    store.create_zeros("encoder.map.pw.b", {d});
    store.create("encoder.map.conv1.w", {d, d, 5, 5}, d * 25);
    store.create_zeros("encoder.map.conv1.b", {d});
    store.create("encoder.map.conv2.w", {d, d, 5, 5}, d * 25);
    store.create_zeros("encoder.map.conv2.b", {d});
}

template <typename T>
Tensor<T> map_encode(Tape<T>& tape, ParamStore<T>& store, const EncoderConfig& cfg,
                     const Tensor<T>& map_one_hot) {
    cfg.validate();
    if (map_one_hot.rank() != 3 || map_one_hot.dim(0) != store.get("encoder.map.pw.w").dim(1))
        throw ConfigError("map_encode: one-hot channel count " + shape_str(map_one_hot.shape()) +
                          " does not match registered class count");
    Tensor<T> x = relu(tape, pointwise_linear(tape, map_one_hot, store.get("encoder.map.pw.w"),
                                              store.get("encoder.map.pw.b")));
    x = relu(tape, conv2d(tape, x, store.get("encoder.map.conv1.w"), store.get("encoder.map.conv1.b"), 1, 2));
    x = conv2d(tape, x, store.get("encoder.map.conv2.w"), store.get("encoder.map.conv2.b"), 1, 2);
    return x;
}

// Bilinearly resizes the full-resolution map features to every pyramid level.
template <typename T>
std::vector<Tensor<T>> resize_map_features(Tape<T>& tape, const Tensor<T>& map_features,
                                           const FeaturePyramid<T>& pyramid) {
    pyramid.validate();
    std::vector<Tensor<T>> out;
    out.reserve(pyramid.levels.size());
    for (const auto& level : pyramid.levels)
        out.push_back(bilinear_resize(tape, map_features, level.features.dim(1), level.features.dim(2)));
    return out;
}

}  // namespace mapfuse
