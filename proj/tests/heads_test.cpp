#include <gtest/gtest.h>

#include "mapfuse/grad_check.hpp"
#include "mapfuse/heads.hpp"

using namespace mapfuse;

namespace {

Tensor<double> rand_tensor(Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    return Tensor<double>::uniform(std::move(shape), rng, lo, hi, true);
}

// Projection parameters wired to the identity so pi(f) = f for f >= 0.
void make_identity_projection(ParamStore<double>& store, const HeadConfig& cfg, int d) {
    register_projection(store, cfg, {d}, d);
    auto& w1 = store.get("contrast.proj.s0.w1");
    auto& w2 = store.get("contrast.proj.s0.w2");
    auto& b1 = store.get("contrast.proj.s0.b1");
    auto& b2 = store.get("contrast.proj.s0.b2");
    std::fill(w1.data().begin(), w1.data().end(), 0.0);
    std::fill(w2.data().begin(), w2.data().end(), 0.0);
    std::fill(b1.data().begin(), b1.data().end(), 0.0);
    std::fill(b2.data().begin(), b2.data().end(), 0.0);
    for (int i = 0; i < d; ++i) {
        w1.data()[i * d + i] = 1.0;
        w2.data()[i * d + i] = 1.0;
    }
}

// Overwrites projection parameters with positive, well-spread values so the
// ReLU stage is active everywhere and pi(f) stays away from the cosine eps
// clamp. The default fan-in init at this width can leave the hidden layer
// dead, which makes several gradients legitimately (but uselessly) zero.
void condition_projection(ParamStore<double>& store, const HeadConfig& cfg, int d) {
    auto fill = [](Tensor<double>& t, double base) {
        for (size_t i = 0; i < t.data().size(); ++i)
            t.data()[i] = base + 0.07 * static_cast<double>(i % 5);
    };
    fill(store.get("contrast.proj.s0.w1"), 0.2);
    fill(store.get("contrast.proj.s0.b1"), 0.3);
    fill(store.get("contrast.proj.s0.w2"), 0.15);
    fill(store.get("contrast.proj.s0.b2"), 0.1);
    if (cfg.project_map) {
        fill(store.get("contrast.mapproj.s0.w"), 0.25);
        fill(store.get("contrast.mapproj.s0.b"), 0.1);
    }
    (void)d;
}

FeaturePyramid<double> one_level(const Tensor<double>& f, FeatureSource src) {
    FeaturePyramid<double> pyr;
    pyr.source = src;
    pyr.levels.push_back({2, f});
    return pyr;
}

ChangeMask const_mask(int h, int w, uint8_t v) {
    ChangeMask b;
    b.height = h;
    b.width = w;
    b.values.assign(static_cast<size_t>(h) * w, v);
    return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// Contrastive loss closed forms
// ---------------------------------------------------------------------------

TEST(ContrastiveLoss, AlignedUnchangedGivesMinusOne) {
    HeadConfig cfg;
    ParamStore<double> store(1);
    make_identity_projection(store, cfg, 2);
    Tensor<double> f2 = rand_tensor({2, 3, 3}, 5, 0.1, 1.0);  // positive -> pi is identity
    FeaturePyramid<double> pyr = one_level(f2, FeatureSource::image_post);
    Tape<double> tape;
    Tensor<double> loss =
        contrastive_loss<double>(tape, store, cfg, {f2}, std::nullopt, pyr, const_mask(6, 6, 0));
    EXPECT_NEAR(loss.item(), -1.0, 1e-9);
}

TEST(ContrastiveLoss, AlignedChangedGivesPlusOne) {
    HeadConfig cfg;
    ParamStore<double> store(1);
    make_identity_projection(store, cfg, 2);
    Tensor<double> f2 = rand_tensor({2, 3, 3}, 6, 0.1, 1.0);
    FeaturePyramid<double> pyr = one_level(f2, FeatureSource::image_post);
    Tape<double> tape;
    Tensor<double> loss =
        contrastive_loss<double>(tape, store, cfg, {f2}, std::nullopt, pyr, const_mask(6, 6, 1));
    EXPECT_NEAR(loss.item(), 1.0, 1e-9);
}

TEST(ContrastiveLoss, OrthogonalFeaturesScoreZero) {
    HeadConfig cfg;
    ParamStore<double> store(1);
    make_identity_projection(store, cfg, 2);
    // f2 lives on axis 0, g on axis 1 -> cosine 0 everywhere
    Tensor<double> f2 = Tensor<double>::zeros({2, 3, 3}, true);
    Tensor<double> g = Tensor<double>::zeros({2, 3, 3}, true);
    for (int p = 0; p < 9; ++p) {
        f2.data()[p] = 1.0;
        g.data()[9 + p] = 1.0;
    }
    FeaturePyramid<double> pyr = one_level(f2, FeatureSource::image_post);
    Tape<double> tape;
    Tensor<double> l0 = contrastive_loss<double>(tape, store, cfg, {g}, std::nullopt, pyr, const_mask(6, 6, 0));
    Tensor<double> l1 = contrastive_loss<double>(tape, store, cfg, {g}, std::nullopt, pyr, const_mask(6, 6, 1));
    EXPECT_NEAR(l0.item(), 0.0, 1e-9);
    EXPECT_NEAR(l1.item(), 0.0, 1e-9);
}

TEST(ContrastiveLoss, PreImageBranchAddsAlignmentTerm) {
    HeadConfig cfg;
    ParamStore<double> store(1);
    make_identity_projection(store, cfg, 2);
    Tensor<double> f = rand_tensor({2, 3, 3}, 7, 0.1, 1.0);
    FeaturePyramid<double> pyr2 = one_level(f, FeatureSource::image_post);
    FeaturePyramid<double> pyr1 = one_level(f, FeatureSource::image_pre);
    Tape<double> tape;
    Tensor<double> loss = contrastive_loss<double>(tape, store, cfg, {f},
                                           std::optional<FeaturePyramid<double>>(pyr1), pyr2,
                                           const_mask(6, 6, 0));
    EXPECT_NEAR(loss.item(), -2.0, 1e-9);
}

TEST(ContrastiveLoss, MixedMaskAveragesPerPixel) {
    HeadConfig cfg;
    ParamStore<double> store(1);
    make_identity_projection(store, cfg, 2);
    Tensor<double> f2 = rand_tensor({2, 2, 2}, 8, 0.1, 1.0);
    FeaturePyramid<double> pyr = one_level(f2, FeatureSource::image_post);
    ChangeMask b = const_mask(2, 2, 0);
    b.values = {1, 0, 0, 0};  // one changed pixel of four
    Tape<double> tape;
    Tensor<double> loss = contrastive_loss<double>(tape, store, cfg, {f2}, std::nullopt, pyr, b);
    // 3 unchanged pixels at -1, 1 changed at +1 -> mean = -0.5
    EXPECT_NEAR(loss.item(), -0.5, 1e-9);
}

TEST(ContrastiveLoss, StopGradientOnMapIsExact) {
    HeadConfig cfg;
    cfg.stop_grad_on_map = true;
    ParamStore<double> store(2);
    register_projection(store, cfg, {2}, 2);
    condition_projection(store, cfg, 2);
    Tensor<double> f2 = rand_tensor({2, 3, 3}, 9, 0.1, 1.0);
    Tensor<double> g = rand_tensor({2, 3, 3}, 10, 0.1, 1.0);
    FeaturePyramid<double> pyr = one_level(f2, FeatureSource::image_post);
    Tape<double> tape;
    Tensor<double> loss = contrastive_loss<double>(tape, store, cfg, {g}, std::nullopt, pyr, const_mask(6, 6, 0));
    tape.backward(loss);
    for (double v : g.grad()) EXPECT_DOUBLE_EQ(v, 0.0);
    double psum = 0.0;
    for (double v : store.get("contrast.proj.s0.w1").grad()) psum += std::abs(v);
    EXPECT_GT(psum, 0.0);
    double fsum = 0.0;
    for (double v : f2.grad()) fsum += std::abs(v);
    EXPECT_GT(fsum, 0.0);
}

TEST(ContrastiveLoss, WithoutStopGradMapReceivesGradient) {
    HeadConfig cfg;
    cfg.stop_grad_on_map = false;
    ParamStore<double> store(2);
    register_projection(store, cfg, {2}, 2);
    Tensor<double> f2 = rand_tensor({2, 3, 3}, 11, 0.1, 1.0);
    Tensor<double> g = rand_tensor({2, 3, 3}, 12, 0.1, 1.0);
    FeaturePyramid<double> pyr = one_level(f2, FeatureSource::image_post);
    Tape<double> tape;
    Tensor<double> loss = contrastive_loss<double>(tape, store, cfg, {g}, std::nullopt, pyr, const_mask(6, 6, 0));
    tape.backward(loss);
    double gsum = 0.0;
    for (double v : g.grad()) gsum += std::abs(v);
    EXPECT_GT(gsum, 0.0);
}

TEST(ContrastiveLoss, MapProjectionParticipates) {
    HeadConfig cfg;
    cfg.project_map = true;
    ParamStore<double> store(3);
    register_projection(store, cfg, {2}, 2);
    condition_projection(store, cfg, 2);
    Tensor<double> f2 = rand_tensor({2, 3, 3}, 13, 0.1, 1.0);
    Tensor<double> g = rand_tensor({2, 3, 3}, 14, 0.1, 1.0);
    FeaturePyramid<double> pyr = one_level(f2, FeatureSource::image_post);
    Tape<double> tape;
    Tensor<double> loss = contrastive_loss<double>(tape, store, cfg, {g}, std::nullopt, pyr, const_mask(6, 6, 0));
    tape.backward(loss);
    double msum = 0.0;
    for (double v : store.get("contrast.mapproj.s0.w").grad()) msum += std::abs(v);
    EXPECT_GT(msum, 0.0);
}

TEST(ContrastiveLoss, GradCheck) {
    HeadConfig cfg;
    cfg.stop_grad_on_map = false;
    ParamStore<double> store(4);
    register_projection(store, cfg, {2}, 2);
    condition_projection(store, cfg, 2);
    Tensor<double> f2 = rand_tensor({2, 2, 2}, 15, 0.2, 1.0);
    Tensor<double> f1 = rand_tensor({2, 2, 2}, 16, 0.2, 1.0);
    Tensor<double> g = rand_tensor({2, 2, 2}, 17, 0.2, 1.0);
    ChangeMask b = const_mask(4, 4, 0);
    b.values[5] = 1;
    std::vector<Tensor<double>> inputs = {f1, f2, g};
    for (const auto& [name, t] : store.all()) inputs.push_back(t);
    auto fn = [&](Tape<double>& t) {
        FeaturePyramid<double> p2 = one_level(f2, FeatureSource::image_post);
        FeaturePyramid<double> p1 = one_level(f1, FeatureSource::image_pre);
        return contrastive_loss<double>(t, store, cfg, {g}, std::optional<FeaturePyramid<double>>(p1), p2, b);
    };
    EXPECT_LT(grad_check(fn, inputs), 1e-5);
}

// ---------------------------------------------------------------------------
// max_pool_mask
// ---------------------------------------------------------------------------

TEST(MaxPoolMask, AnyCoverageSetsCoarsePixel) {
    ChangeMask b = const_mask(4, 4, 0);
    b.values[0] = 1;   // block (0,0)
    b.values[15] = 1;  // block (1,1)
    ChangeMask c = max_pool_mask(b, 2, 2);
    EXPECT_EQ(c.values, (std::vector<uint8_t>{1, 0, 0, 1}));
}

TEST(MaxPoolMask, SameSizeIsIdentity) {
    ChangeMask b = const_mask(3, 5, 0);
    b.values[7] = 1;
    ChangeMask c = max_pool_mask(b, 3, 5);
    EXPECT_EQ(c.values, b.values);
}

TEST(MaxPoolMask, NonDivisibleSizesCoverEverything) {
    ChangeMask b = const_mask(7, 5, 1);
    ChangeMask c = max_pool_mask(b, 3, 2);
    for (uint8_t v : c.values) EXPECT_EQ(v, 1);
}

// ---------------------------------------------------------------------------
// Prediction heads
// ---------------------------------------------------------------------------

TEST(Heads, BinaryHeadShapeAndSourceCheck) {
    ParamStore<double> store(5);
    register_head(store, "head.binary", {3, 4}, 6, 2);
    FeaturePyramid<double> fused;
    fused.source = FeatureSource::fused;
    fused.levels.push_back({2, rand_tensor({3, 4, 4}, 18)});
    fused.levels.push_back({4, rand_tensor({4, 2, 2}, 19)});
    Tape<double> tape;
    Tensor<double> logits = predict_binary(tape, store, fused, 8, 8);
    EXPECT_EQ(logits.shape(), (Shape{2, 8, 8}));
    fused.source = FeatureSource::image_post;
    EXPECT_THROW(predict_binary(tape, store, fused, 8, 8), ConfigError);
}

TEST(Heads, SemanticPlacementEnforced) {
    ParamStore<double> store(6);
    register_head(store, "head.semantic", {3}, 6, 5);
    FeaturePyramid<double> post;
    post.source = FeatureSource::image_post;
    post.levels.push_back({2, rand_tensor({3, 4, 4}, 20)});
    HeadConfig cfg;
    Tape<double> tape;
    Tensor<double> logits = predict_semantic(tape, store, cfg, post, 8, 8);
    EXPECT_EQ(logits.shape(), (Shape{5, 8, 8}));

    FeaturePyramid<double> fused = post;
    fused.source = FeatureSource::fused;
    EXPECT_THROW(predict_semantic(tape, store, cfg, fused, 8, 8), ConfigError);
    cfg.scd_placement = ScdPlacement::on_fused;
    EXPECT_THROW(predict_semantic(tape, store, cfg, post, 8, 8), ConfigError);
    predict_semantic(tape, store, cfg, fused, 8, 8);
    cfg.scd_placement = ScdPlacement::none;
    EXPECT_THROW(predict_semantic(tape, store, cfg, post, 8, 8), ConfigError);
}

TEST(Heads, PredictPremapArgmax) {
    ParamStore<double> store(7);
    register_head(store, "head.semantic", {3}, 6, 4);
    FeaturePyramid<double> f1;
    f1.source = FeatureSource::image_pre;
    f1.levels.push_back({2, rand_tensor({3, 3, 3}, 21)});
    HeadConfig cfg;
    Tape<double> tape;
    SemanticMap m = predict_premap(tape, store, cfg, f1, 4, 6, 6);
    EXPECT_EQ(m.height, 6);
    EXPECT_EQ(m.width, 6);
    m.validate();
    EXPECT_THROW(predict_premap(tape, store, cfg, f1, 7, 6, 6), ConfigError);
    cfg.scd_placement = ScdPlacement::on_fused;
    EXPECT_THROW(predict_premap(tape, store, cfg, f1, 4, 6, 6), ConfigError);
}

TEST(ArgmaxChannels, TiesToSmallestClass) {
    Tensor<float> logits = Tensor<float>::zeros({3, 1, 2});
    // pixel 0: all equal -> 0; pixel 1: class 2 wins
    logits.data() = {0.5f, 0.1f, 0.5f, 0.1f, 0.5f, 0.9f};
    std::vector<uint8_t> labels = argmax_channels(logits);
    EXPECT_EQ(labels, (std::vector<uint8_t>{0, 2}));
}

// ---------------------------------------------------------------------------
// Total loss
// ---------------------------------------------------------------------------

TEST(TotalLoss, WeightsAndReport) {
    HeadConfig cfg;
    cfg.w_binary = 2.0;
    cfg.w_semantic = 0.5;
    cfg.w_contrastive = 3.0;
    Tape<double> tape;
    std::optional<Tensor<double>> contrastive = Tensor<double>::scalar(0.25);
    std::optional<Tensor<double>> ce_b = Tensor<double>::scalar(0.5);
    std::optional<Tensor<double>> ce_s = Tensor<double>::scalar(1.0);
    LossReport report;
    Tensor<double> total = total_loss(tape, cfg, contrastive, ce_b, ce_s, report);
    EXPECT_NEAR(total.item(), 2.0 * 0.5 + 0.5 * 1.0 + 3.0 * 0.25, 1e-12);
    EXPECT_NEAR(*report.contrastive, 0.25, 1e-12);
    EXPECT_NEAR(*report.ce_binary, 0.5, 1e-12);
    EXPECT_NEAR(*report.ce_semantic, 1.0, 1e-12);
    EXPECT_NEAR(report.total, total.item(), 1e-12);
}

TEST(TotalLoss, MissingTermsRejected) {
    HeadConfig cfg;
    Tape<double> tape;
    std::optional<Tensor<double>> ce_b = Tensor<double>::scalar(0.5);
    LossReport report;
    EXPECT_THROW(total_loss<double>(tape, cfg, std::nullopt, ce_b, std::nullopt, report), ConfigError);
    cfg.contrastive_enabled = false;
    EXPECT_THROW(total_loss<double>(tape, cfg, std::nullopt, ce_b, std::nullopt, report), ConfigError);
    cfg.scd_placement = ScdPlacement::none;
    total_loss<double>(tape, cfg, std::nullopt, ce_b, std::nullopt, report);
    EXPECT_FALSE(report.ce_semantic.has_value());
    EXPECT_THROW(total_loss<double>(tape, cfg, std::nullopt, std::nullopt, std::nullopt, report),
                 ConfigError);
}
