#include <cmath>
#include <functional>
#include <limits>

#include <gtest/gtest.h>

#include "oracles/loss_cases.hpp"

using namespace oslab;

namespace {

Tensor<double> row(std::vector<double> v) {
    const std::size_t k = v.size();
    return Tensor<double>({1, k}, std::move(v));
}

/// Direct per-row log-softmax without max subtraction; fine for the small logits used here.
std::vector<double> log_softmax_row(const std::vector<double>& z) {
    double s = 0.0;
    for (double v : z) s += std::exp(v);
    std::vector<double> out;
    for (double v : z) out.push_back(v - std::log(s));
    return out;
}

} // namespace

TEST(CrossEntropy, UniformLogitsGiveLogK) {
    for (std::size_t k : {2u, 7u, 100u}) {
        Tensor<double> z({3, k}, 1.5);
        Rng rng(k);
        EXPECT_NEAR(cross_entropy(z, oracle::random_distribution_rows(3, k, rng)).item(), std::log(static_cast<double>(k)), 1e-12);
    }
}

TEST(CrossEntropy, SaturatedIsNearZero) {
    auto z = row({30.0, 0.0, 0.0});
    EXPECT_LT(cross_entropy(z, row({1, 0, 0})).item(), 1e-9);
}

TEST(CrossEntropy, TwoClassClosedForm) {
    EXPECT_NEAR(cross_entropy(row({1, 0}), row({1, 0})).item(), std::log1p(std::exp(-1.0)), 1e-15);
    EXPECT_NEAR(cross_entropy(row({1, 0}), row({1, 0})).item(), 0.3133, 5e-5);
}

TEST(CrossEntropy, Errors) {
    auto nan = row({std::numeric_limits<double>::quiet_NaN(), 0.0});
    EXPECT_THROW(cross_entropy(nan, row({1, 0})), DomainError);
    EXPECT_THROW(cross_entropy(row({1, 0}), row({1, 0, 0})), ShapeError);
}

TEST(TemperedMixupLoss, LambdaOneIsCrossEntropy) {
    Rng rng(1);
    auto z = oracle::random_logits(4, 5, rng);
    auto y = oracle::random_distribution_rows(4, 5, rng);
    for (double zeta : {0.0, 1.0, 3.0})
        EXPECT_NEAR(tempered_mixup_loss(z, y, {1, 1, 1, 1}, zeta).item(), cross_entropy(z, y).item(), 1e-14);
}

TEST(TemperedMixupLoss, LambdaHalfIsZetaTimesMeanNegLog) {
    for (double zeta : {0.0, 0.5, 1.0, 2.0}) {
        EXPECT_NEAR(tempered_mixup_loss(Tensor<double>({2, 10}, 0.3), one_hot<double>({1, 4}, 10), {0.5, 0.5}, zeta).item(),
                    zeta * std::log(10.0), 1e-12);
        auto z = row({0.4, -1.0, 2.0});
        auto ls = log_softmax_row({0.4, -1.0, 2.0});
        EXPECT_NEAR(tempered_mixup_loss(z, row({0.5, 0.5, 0}), {0.5}, zeta).item(), -zeta * (ls[0] + ls[1] + ls[2]) / 3.0, 1e-12);
    }
}

TEST(TemperedMixupLoss, MatchesTemperedTargetsAtThreeQuarters) {
    Rng rng(2);
    auto x = Tensor<double>({2, 1, 1, 1}, std::vector<double>{0.1, 0.9});
    auto m = mixup_batch(x, std::vector<int>{3, 8}, 10, {0.75, 0.75}, {1, 0});
    auto z = oracle::random_logits(2, 10, rng);
    EXPECT_NEAR(tempered_mixup_loss(z, m.y_linear, m.lambda, 1.0).item(), cross_entropy(z, m.y_tempered).item(), 1e-12);
    EXPECT_NEAR(m.y_tempered[3], 0.5 * 0.75 + 0.05, 1e-15);
}

TEST(TemperedMixupLoss, IdentityOnRandomDraws) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t b = 1 + rng.below(8), k = 2 + rng.below(20);
        Tensor<double> x({b, 1, 1, 1});
        auto m = mix_batch(MixConfig{MixScheme::mixup, 0.2 + 2 * rng.uniform(), true}, x,
                           one_hot<double>(oracle::random_labels(b, k, rng), k), rng);
        auto z = oracle::random_logits(b, k, rng, 5.0);
        EXPECT_NEAR(tempered_mixup_loss(z, m.y_linear, m.lambda, 1.0).item(), cross_entropy(z, m.y_tempered).item(), 1e-10);
    }
}

TEST(TemperedMixupLoss, EndpointsReduceToDominantSample) {
    Rng rng(4);
    Tensor<double> x({3, 1, 1, 1});
    const std::vector<int> labels{0, 1, 2};
    auto z = oracle::random_logits(3, 4, rng);
    for (double zeta : {0.0, 0.7, 2.0}) {
        auto m = mixup_batch(x, labels, 4, {0.0, 1.0, 0.0}, {1, 2, 0});
        // rows 0 and 2 take their partner's label, row 1 keeps its own
        EXPECT_NEAR(tempered_mixup_loss(z, m.y_linear, m.lambda, zeta).item(),
                    cross_entropy(z, one_hot<double>({1, 1, 0}, 4)).item(), 1e-14);
    }
}

TEST(TemperedMixupLoss, Errors) {
    EXPECT_THROW(tempered_mixup_loss(row({0, 0}), row({1, 0}), {0.5}, -0.1), DomainError);
    EXPECT_THROW(tempered_mixup_loss(row({0, 0}), row({1, 0}), {1.5}, 1.0), DomainError);
    EXPECT_THROW(tempered_mixup_loss(row({0, 0}), row({1, 0}), {0.5, 0.5}, 1.0), ShapeError);
    LossConfig c;
    c.zeta = -1.0;
    EXPECT_THROW(c.validate(), DomainError);
}

TEST(ConfidenceLoss, EmptyBackgroundIsCrossEntropy) {
    Rng rng(5);
    auto z = oracle::random_logits(3, 4, rng);
    auto t = one_hot<double>({0, 3, 1}, 4);
    EXPECT_EQ(confidence_loss(z, t, Tensor<double>({0, 4}), 4).item(), cross_entropy(z, t).item());
}

TEST(ConfidenceLoss, UniformBackgroundIsMinimal) {
    EXPECT_NEAR(uniform_target_loss(Tensor<double>({1, 10}, -2.0)).item(), std::log(10.0), 1e-13);
    Rng rng(6);
    for (int i = 0; i < 100; ++i) EXPECT_GE(uniform_target_loss(oracle::random_logits(1, 10, rng)).item(), std::log(10.0) - 1e-13);
}

TEST(ConfidenceLoss, BackgroundTermDirect) {
    std::vector<double> z(10, 0.0);
    z[0] = 2.0;
    auto ls = log_softmax_row(z);
    double expect = 0.0;
    for (double v : ls) expect -= v / 10.0;
    EXPECT_NEAR(uniform_target_loss(row(z)).item(), expect, 1e-14);
    const double closed = std::log(std::exp(2.0) + 9.0) - 0.2;
    EXPECT_NEAR(expect, closed, 1e-14);
    auto zk = row({1, 0});
    EXPECT_NEAR(confidence_loss(zk, row({1, 0}), row({0, 0}), 2).item(), std::log1p(std::exp(-1.0)) + std::log(2.0), 1e-14);
    EXPECT_THROW(confidence_loss(Tensor<double>({0, 2}), Tensor<double>({0, 2}), Tensor<double>({0, 2}), 2), DomainError);
}

TEST(ConfidenceLoss, GradientDescentFindsUniform) {
    Rng rng(7);
    auto z = oracle::random_logits(1, 6, rng, 4.0);
    z.set_requires_grad();
    for (int step = 0; step < 3000; ++step) {
        z.clear_grad();
        uniform_target_loss(z).backward();
        for (std::size_t c = 0; c < 6; ++c) z[c] -= 5.0 * z.grad()[c];
    }
    NoGradGuard guard;
    auto p = exp(log_softmax(z));
    for (double v : p.data()) EXPECT_NEAR(v, 1.0 / 6.0, 1e-9);
    EXPECT_NEAR(uniform_target_loss(z).item(), std::log(6.0), 1e-12);
}

TEST(LabelSmoothing, Examples) {
    EXPECT_EQ(label_smoothing_targets<double>({2}, 0.0, 4).values(), one_hot<double>({2}, 4).values());
    auto t = label_smoothing_targets<double>({0}, 0.1, 10);
    EXPECT_NEAR(t[0], 0.91, 1e-15);
    for (std::size_t c = 1; c < 10; ++c) EXPECT_NEAR(t[c], 0.01, 1e-15);
    auto near = label_smoothing_targets<double>({0}, 0.9999, 10);
    for (double v : near.data()) EXPECT_NEAR(v, 0.1, 1e-4);
    EXPECT_THROW(label_smoothing_targets<double>({0}, 1.0, 10), DomainError);
    EXPECT_THROW(label_smoothing_targets<double>({0}, -0.1, 10), DomainError);
}

TEST(OneVsRest, Examples) {
    EXPECT_NEAR(one_vs_rest_loss(Tensor<double>({2, 5}), {0, 4}).item(), std::log(2.0), 1e-15);
    EXPECT_LT(one_vs_rest_loss(row({-30, 30, -30}), {1}).item(), 1e-12);
    EXPECT_NEAR(one_vs_rest_loss(row({1, -1}), {0}).item(), std::log1p(std::exp(-1.0)), 1e-15);
    EXPECT_THROW(one_vs_rest_loss(row({1, -1}), {0, 1}), ShapeError);
    EXPECT_THROW(one_vs_rest_loss(row({1, -1}), {2}), DomainError);
}

TEST(CenterLoss, Examples) {
    CenterState<double> s(3, 2, 0.5);
    s.centers = Tensor<double>({3, 2}, std::vector<double>{0, 0, 1, 1, -2, 3});
    auto at_centers = Tensor<double>({2, 2}, std::vector<double>{1, 1, -2, 3});
    EXPECT_EQ(center_loss(at_centers, {1, 2}, s, 0.7).item(), 0.0);
    auto f = row({4.0, 5.0});  // distance 5 from center 1
    EXPECT_NEAR(center_loss(f, {1}, s, 0.3).item(), 0.3 * 25.0 / 2.0, 1e-14);
    f.set_requires_grad();
    center_loss(f, {1}, s, 0.3).backward();
    EXPECT_NEAR(f.grad()[0], 0.3 * 3.0, 1e-14);
    EXPECT_NEAR(f.grad()[1], 0.3 * 4.0, 1e-14);
    EXPECT_THROW(center_loss(row({0, 0}), {3}, s, 1.0), DomainError);
}

TEST(CenterLoss, EmaUpdate) {
    CenterState<double> s(2, 2, 0.5);
    auto f = Tensor<double>({3, 2}, std::vector<double>{2, 0, 4, 2, 8, 8});
    center_update(s, f, {0, 0, 1});
    EXPECT_EQ(s.centers.values(), (std::vector<double>{1.5, 0.5, 4, 4}));
    center_update(s, row({1.5, 0.5}), {0});
    EXPECT_EQ(s.centers.values(), (std::vector<double>{1.5, 0.5, 4, 4}));
}

TEST(Objectosphere, MagnitudeTerm) {
    auto z = Tensor<double>({1, 3}, std::vector<double>{0.2, -0.1, 0.5});
    auto t = one_hot<double>({2}, 3);
    const double entropic = cross_entropy(z, t).item();
    EXPECT_NEAR(objectosphere_loss(row({3, 4}), z, t, {false}, 5.0, 1.0).item(), entropic, 1e-14);
    EXPECT_NEAR(objectosphere_loss(row({0.6, 0.8}), z, t, {false}, 3.0, 1.0).item(), entropic + 4.0, 1e-14);
    EXPECT_NEAR(objectosphere_loss(row({0, 0}), z, t, {true}, 3.0, 1.0).item(), uniform_target_loss(z).item(), 1e-14);
    EXPECT_NEAR(objectosphere_loss(row({1, 2}), z, t, {true}, 3.0, 0.5).item(), uniform_target_loss(z).item() + 2.5, 1e-14);
    EXPECT_THROW(objectosphere_loss(row({1, 2}), z, t, {true}, -1.0, 0.5), DomainError);
}

TEST(Objectosphere, MixedBatchMatchesConfidenceLoss) {
    Rng rng(8);
    auto z = oracle::random_logits(4, 3, rng);
    auto t = one_hot<double>({0, 1, 2, 0}, 3);
    Tensor<double> far({4, 2}, 100.0);
    const std::vector<bool> bg{false, true, false, true};
    // known rows 0 and 2 are CE, background rows 1 and 3 are uniform-target
    auto known = Tensor<double>({2, 3}, std::vector<double>{z[0], z[1], z[2], z[6], z[7], z[8]});
    auto back = Tensor<double>({2, 3}, std::vector<double>{z[3], z[4], z[5], z[9], z[10], z[11]});
    auto tk = one_hot<double>({0, 2}, 3);
    const double magnitude = 0.25 * (2 * 20000.0) / 4.0;
    EXPECT_NEAR(objectosphere_loss(far, z, t, bg, 1.0, 0.25).item(), confidence_loss(known, tk, back, 3).item() + magnitude, 1e-9);
}

TEST(Hybrid, PureBackgroundIsUniformTarget) {
    auto z = row({0.3, 1.0, -2.0, 0.0});
    auto x = Tensor<double>({1, 1, 1, 1});
    auto m = mixup_batch(x, hybrid_targets<double>({0}, {true}, 4), {1.0}, {0});
    EXPECT_NEAR(hybrid_tempered_bg_loss(z, m, 1.0).item(), uniform_target_loss(z).item(), 1e-14);
}

TEST(Hybrid, KnownPairsMatchTemperedMixup) {
    Rng rng(9);
    Tensor<double> x({3, 1, 2, 2});
    auto m = mix_batch(MixConfig{MixScheme::mixup, 1.0, true}, x, hybrid_targets<double>({0, 2, 1}, {false, false, false}, 3), rng);
    auto z = oracle::random_logits(3, 3, rng);
    EXPECT_EQ(hybrid_tempered_bg_loss(z, m, 0.8).item(), tempered_mixup_loss(z, m.y_linear, m.lambda, 0.8).item());
}

TEST(Hybrid, KnownBackgroundPairDirect) {
    Rng rng(10);
    auto x = Tensor<double>({2, 1, 1, 1});
    auto m = mixup_batch(x, hybrid_targets<double>({7, 0}, {false, true}, 10), {0.6, 1.0}, {1, 0});
    std::vector<double> y(10, 0.04);
    y[7] = 0.64;
    for (std::size_t c = 0; c < 10; ++c) EXPECT_NEAR(m.y_linear[c], y[c], 1e-15);
    for (std::size_t c = 0; c < 10; ++c) EXPECT_NEAR(m.y_linear[10 + c], 0.1, 1e-15);
    auto zr = oracle::random_logits(2, 10, rng);
    std::vector<double> z0(zr.data().begin(), zr.data().begin() + 10), z1(zr.data().begin() + 10, zr.data().end());
    auto l0 = log_softmax_row(z0), l1 = log_softmax_row(z1);
    const double zeta = 1.5, keep = 0.2;
    double first = 0.0, second = 0.0;
    for (std::size_t c = 0; c < 10; ++c) {
        first += -keep * y[c] * l0[c] - zeta * (1 - keep) / 10.0 * l0[c];
        second += -0.1 * l1[c];
    }
    EXPECT_NEAR(hybrid_tempered_bg_loss(zr, m, zeta).item(), (first + second) / 2.0, 1e-12);
}

TEST(Losses, NonNegative) {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t b = 1 + rng.below(6), k = 2 + rng.below(10);
        auto z = oracle::random_logits(b, k, rng, 10.0);
        auto labels = oracle::random_labels(b, k, rng);
        auto y = one_hot<double>(labels, k);
        EXPECT_GE(cross_entropy(z, oracle::random_distribution_rows(b, k, rng)).item(), 0.0);
        EXPECT_GE(tempered_mixup_loss(z, y, sample_lambdas(b, 1.0, rng), 2.0 * rng.uniform()).item(), 0.0);
        EXPECT_GE(confidence_loss(z, y, z, k).item(), 0.0);
        EXPECT_GE(cross_entropy(z, label_smoothing_targets<double>(labels, 0.2, k)).item(), 0.0);
        EXPECT_GE(one_vs_rest_loss(z, labels).item(), 0.0);
        CenterState<double> s(k, 2, 0.5);
        EXPECT_GE(center_loss(oracle::random_logits(b, 2, rng), labels, s, 0.1).item(), 0.0);
        std::vector<bool> bg(b);
        for (std::size_t i = 0; i < b; ++i) bg[i] = i % 2 == 1;
        if (b < 2) continue;
        EXPECT_GE(objectosphere_loss(oracle::random_logits(b, 2, rng), z, y, bg, 2.0, 0.1).item(), 0.0);
    }
}

TEST(Losses, GradientsMatchFiniteDifferences) {
    Rng rng(12);
    for (const auto& name : oracle::gradient_loss_names())
        for (int i = 0; i < 10; ++i) EXPECT_LE(oracle::loss_gradient_error(name, rng), 1e-6) << name;
}

TEST(LossConfig, JsonAndValidation) {
    LossConfig c;
    c.kind = LossKind::objectosphere;
    c.margin = 2.5;
    nlohmann::json j = c;
    auto back = j.get<LossConfig>();
    EXPECT_EQ(back.kind, LossKind::objectosphere);
    EXPECT_EQ(back.margin, 2.5);
    EXPECT_THROW(parse_loss_kind("focal"), DomainError);
    for (auto mutate : std::vector<std::function<void(LossConfig&)>>{
             [](LossConfig& x) { x.smoothing = 1.0; }, [](LossConfig& x) { x.center_weight = -1; },
             [](LossConfig& x) { x.center_lr = 0; }, [](LossConfig& x) { x.margin = -0.5; },
             [](LossConfig& x) { x.objecto_weight = -1; }}) {
        LossConfig bad;
        mutate(bad);
        EXPECT_THROW(bad.validate(), DomainError);
    }
    EXPECT_TRUE(uses_background(LossKind::hybrid_tempered_bg));
    EXPECT_FALSE(uses_background(LossKind::tempered_mixup));
}
