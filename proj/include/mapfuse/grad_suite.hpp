#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mapfuse/grad_check.hpp"
#include "mapfuse/model.hpp"

namespace mapfuse {

struct GradCheckResult {
    std::string name;
    double worst_rel_error = 0.0;
};

namespace detail {

inline Tensor<double> suite_tensor(Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    return Tensor<double>::uniform(std::move(shape), rng, lo, hi, true);
}

inline ModelConfig suite_model_config(Regime regime, FusionKind kind) {
    ModelConfig cfg;
    cfg.encoder.num_scales = 2;
    cfg.encoder.channels = {2, 3};
    cfg.encoder.map_channels = 3;
    cfg.head.head_width = 3;
    cfg.fusion.views = 2;
    cfg.fusion.regime = regime;
    cfg.fusion.kind = kind;
    cfg.head.contrastive_enabled = cfg.fusion.uses_map();
    // stop_gradient is exact-zero by construction; disabling it here routes
    // gradients through the map encoder so the check covers that path too.
    cfg.head.stop_grad_on_map = false;
    cfg.num_classes = 3;
    return cfg;
}

inline GradCheckResult check_model_regime(Regime regime, FusionKind kind, uint64_t seed) {
    const ModelConfig cfg = suite_model_config(regime, kind);
    MapFormerModel<double> model(cfg, seed);

    // Lift the projection biases so pi(f) stays clear of zero vectors. At the
    // fan-in init the projection ReLU can be mostly dead, which parks the
    // cosine term at its norm clamp where the loss is non-smooth and finite
    // differences are meaningless.
    for (auto& [name, t] : model.params().all())
        if (name.find("contrast.proj.") == 0 && (name.ends_with(".b1") || name.ends_with(".b2"))) {
            auto& tt = const_cast<Tensor<double>&>(t);
            for (size_t i = 0; i < tt.data().size(); ++i)
                tt.data()[i] = 0.25 + 0.05 * static_cast<double>(i % 3);
        }

    WorldConfig world;
    world.height = 16;
    world.width = 16;
    world.num_classes = cfg.num_classes;
    world.seed = seed;
    const Sample sample = generate_sample(world, 0);

    std::vector<Tensor<double>> inputs;
    for (const auto& [name, t] : model.params().all()) inputs.push_back(t);
    auto fn = [&](Tape<double>& tape) {
        auto fw = model.forward(tape, sample.image_pre, sample.image_post,
                                cfg.fusion.uses_map() ? std::optional(sample.map_pre) : std::nullopt,
                                sample.change);
        LossReport report;
        return model.loss(tape, fw, sample.map_post, sample.change, report);
    };
    return {regime_name(regime) + "/" + fusion_name(kind) + " end-to-end loss",
            grad_check(fn, inputs)};
}

}  // namespace detail

// Finite-difference checks for every differentiable operation plus the three
// end-to-end regimes on seeded 16x16 inputs. All results should land well
// under 1e-5 relative error in float64.
inline std::vector<GradCheckResult> run_grad_suite(uint64_t seed = 7) {
    using detail::suite_tensor;
    std::vector<GradCheckResult> results;

    {
        Tensor<double> x = suite_tensor({3, 4, 4}, seed);
        Tensor<double> y = suite_tensor({3, 4, 4}, seed + 1);
        auto fn = [&](Tape<double>& t) {
            return sum_all(t, mul(t, add(t, x, y), sub(t, x, y)));
        };
        results.push_back({"add/sub/mul/sum_all", grad_check(fn, {x, y})});
    }
    {
        Tensor<double> x = suite_tensor({2, 4, 4}, seed + 2);
        auto fn = [&](Tape<double>& t) {
            return mean_all(t, relu(t, scale(t, x, 1.7)));
        };
        results.push_back({"relu/scale/mean_all", grad_check(fn, {x})});
    }
    {
        Tensor<double> x = suite_tensor({3, 4, 4}, seed + 3);
        Tensor<double> w = suite_tensor({2, 3}, seed + 4, -0.5, 0.5);
        Tensor<double> b = suite_tensor({2}, seed + 5, -0.5, 0.5);
        auto fn = [&](Tape<double>& t) { return sum_all(t, pointwise_linear(t, x, w, b)); };
        results.push_back({"pointwise_linear", grad_check(fn, {x, w, b})});
    }
    {
        Tensor<double> x = suite_tensor({2, 6, 6}, seed + 6);
        Tensor<double> w = suite_tensor({2, 2, 3, 3}, seed + 7, -0.3, 0.3);
        Tensor<double> b = suite_tensor({2}, seed + 8, -0.3, 0.3);
        auto fn = [&](Tape<double>& t) { return sum_all(t, conv2d(t, x, w, b, 1, 1)); };
        results.push_back({"conv2d k=3", grad_check(fn, {x, w, b})});
    }
    {
        Tensor<double> x = suite_tensor({2, 6, 6}, seed + 9);
        Tensor<double> w = suite_tensor({2, 2, 5, 5}, seed + 10, -0.2, 0.2);
        Tensor<double> b = suite_tensor({2}, seed + 11, -0.2, 0.2);
        auto fn = [&](Tape<double>& t) { return sum_all(t, conv2d(t, x, w, b, 2, 2)); };
        results.push_back({"conv2d k=5 stride=2 dilation=2", grad_check(fn, {x, w, b})});
    }
    {
        Tensor<double> x = suite_tensor({4, 3, 3}, seed + 12);
        Tensor<double> pick = suite_tensor({4, 3, 3}, seed + 13);
        auto fn = [&](Tape<double>& t) {
            return sum_all(t, mul(t, softmax(t, x, 0), stop_gradient(pick)));
        };
        results.push_back({"softmax", grad_check(fn, {x})});
    }
    {
        Tensor<double> u = suite_tensor({2, 3, 3}, seed + 14, 0.2, 1.0);
        Tensor<double> v = suite_tensor({2, 3, 3}, seed + 15, 0.2, 1.0);
        auto fn = [&](Tape<double>& t) { return sum_all(t, cosine_similarity_map(t, u, v)); };
        results.push_back({"cosine_similarity_map", grad_check(fn, {u, v})});
    }
    {
        Tensor<double> logits = suite_tensor({3, 3, 3}, seed + 16);
        std::vector<uint8_t> target = {0, 1, 2, 1, 255, 0, 2, 2, 1};
        auto fn = [&](Tape<double>& t) { return cross_entropy(t, logits, target); };
        results.push_back({"cross_entropy", grad_check(fn, {logits})});
    }
    {
        Tensor<double> x = suite_tensor({2, 3, 4}, seed + 17);
        auto fn = [&](Tape<double>& t) {
            Tensor<double> y = bilinear_resize(t, x, 6, 5);
            return sum_all(t, mul(t, y, y));
        };
        results.push_back({"bilinear_resize", grad_check(fn, {x})});
    }
    {
        Tensor<double> a = suite_tensor({2, 3, 3}, seed + 18);
        Tensor<double> b = suite_tensor({3, 3, 3}, seed + 19);
        auto fn = [&](Tape<double>& t) {
            Tensor<double> c = concat_channels(t, {a, b});
            Tensor<double> r = reshape(t, c, {5 * 9});
            return sum_all(t, mul(t, r, r));
        };
        results.push_back({"concat_channels/reshape", grad_check(fn, {a, b})});
    }
    {
        Tensor<double> x = suite_tensor({3, 3, 3}, seed + 20);
        auto fn = [&](Tape<double>& t) {
            Tensor<double> s = sum_axis0(t, x);
            return sum_all(t, mul(t, s, s));
        };
        results.push_back({"sum_axis0", grad_check(fn, {x})});
    }
    {
        Tensor<double> x = suite_tensor({4, 3, 3}, seed + 21);
        std::vector<GroupMlpParams<double>> groups;
        for (int k = 0; k < 2; ++k)
            groups.push_back({suite_tensor({3, 4}, seed + 22 + 4 * k, -0.5, 0.5),
                              suite_tensor({3}, seed + 23 + 4 * k, -0.3, 0.3),
                              suite_tensor({2, 3}, seed + 24 + 4 * k, -0.5, 0.5),
                              suite_tensor({2}, seed + 25 + 4 * k, -0.3, 0.3)});
        std::vector<Tensor<double>> inputs = {x};
        for (auto& g : groups) {
            inputs.push_back(g.w1);
            inputs.push_back(g.b1);
            inputs.push_back(g.w2);
            inputs.push_back(g.b2);
        }
        auto fn = [&](Tape<double>& t) { return sum_all(t, grouped_pointwise_mlp(t, x, groups)); };
        results.push_back({"grouped_pointwise_mlp", grad_check(fn, inputs)});
    }

    results.push_back(detail::check_model_regime(Regime::bi_temporal, FusionKind::concat, seed + 40));
    results.push_back(detail::check_model_regime(Regime::conditional, FusionKind::mapformer, seed + 41));
    results.push_back(detail::check_model_regime(Regime::cross_modal, FusionKind::mapformer, seed + 42));
    return results;
}

}  // namespace mapfuse
