#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <boost/math/distributions/beta.hpp>
#include <gtest/gtest.h>

#include "oslab/augment.hpp"

using namespace oslab;

namespace {

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        // doubles cannot resolve mass within an ulp of 0 or 1, so those samples only count through the ranks
        if (xs[i] < 1e-9 || xs[i] > 1.0 - 1e-9) continue;
        const double f = cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

void expect_distribution_rows(const Tensor<double>& y) {
    const std::size_t k = y.shape()[1];
    for (std::size_t i = 0; i < y.shape()[0]; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            EXPECT_GE(y[i * k + c], 0.0);
            s += y[i * k + c];
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

Tensor<double> random_images(std::size_t n, std::size_t h, std::size_t w, Rng& rng) {
    Tensor<double> x({n, 1, h, w});
    for (auto& v : x.data()) v = rng.uniform();
    return x;
}

} // namespace

TEST(SampleLambda, AlphaOneIsUniform) {
    Rng rng(1);
    auto xs = sample_lambdas(100000, 1.0, rng);
    EXPECT_LT(ks_statistic(xs, [](double x) { return x; }), 0.01);
}

TEST(SampleLambda, MatchesBetaCdf) {
    for (double alpha : {0.05, 0.2, 0.5, 2.0, 8.0}) {
        Rng rng(static_cast<std::uint64_t>(alpha * 1000));
        auto xs = sample_lambdas(50000, alpha, rng);
        boost::math::beta_distribution<double> dist(alpha, alpha);
        // 1.95/sqrt(n) is the 0.1% critical value of the one-sample KS test
        EXPECT_LT(ks_statistic(xs, [&](double x) { return boost::math::cdf(dist, x); }), 1.95 / std::sqrt(50000.0)) << alpha;
    }
}

TEST(SampleLambda, SmallAlphaConcentratesAtEnds) {
    Rng rng(2);
    auto small = sample_lambdas(100000, 0.2, rng);
    auto flat = sample_lambdas(100000, 1.0, rng);
    auto tails = [](const std::vector<double>& v) {
        return static_cast<double>(std::count_if(v.begin(), v.end(), [](double l) { return l < 0.1 || l > 0.9; })) /
               static_cast<double>(v.size());
    };
    const double mean = std::accumulate(small.begin(), small.end(), 0.0) / static_cast<double>(small.size());
    EXPECT_NEAR(mean, 0.5, 0.01);
    EXPECT_GT(tails(small), tails(flat));
    boost::math::beta_distribution<double> dist(0.2, 0.2);
    EXPECT_NEAR(tails(small), 2.0 * boost::math::cdf(dist, 0.1), 0.01);
}

TEST(SampleLambda, RangeAndDeterminism) {
    Rng a(7), b(7);
    for (int i = 0; i < 1000; ++i) {
        const double x = sample_lambda(0.01, a);
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
        EXPECT_EQ(x, sample_lambda(0.01, b));
    }
    EXPECT_THROW(sample_lambda(0.0, a), DomainError);
    EXPECT_THROW(sample_lambda(-1.0, a), DomainError);
    MixConfig bad{MixScheme::mixup, 0.0, false};
    EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Mixup, LambdaOneKeepsSample) {
    Rng rng(3);
    auto x = random_images(3, 4, 4, rng);
    auto m = mixup_batch(x, std::vector<int>{0, 1, 2}, 5, {1.0, 1.0, 1.0}, {2, 0, 1});
    EXPECT_EQ(m.inputs.values(), x.values());
    EXPECT_EQ(m.y_linear.values(), one_hot<double>({0, 1, 2}, 5).values());
}

TEST(Mixup, SameClassPairKeepsOneHot) {
    Rng rng(3);
    auto x = random_images(2, 3, 3, rng);
    auto m = mixup_batch(x, std::vector<int>{4, 4}, 6, {0.5, 0.5}, {1, 0});
    EXPECT_EQ(m.y_linear.values(), one_hot<double>({4, 4}, 6).values());
    for (std::size_t p = 0; p < 9; ++p) EXPECT_DOUBLE_EQ(m.inputs[p], 0.5 * (x[p] + x[9 + p]));
}

TEST(Mixup, CrossClassTargets) {
    Rng rng(3);
    auto x = random_images(2, 2, 2, rng);
    auto m = mixup_batch(x, std::vector<int>{0, 1}, 10, {0.8, 0.8}, {1, 0});
    std::vector<double> expect(10, 0.0);
    expect[0] = 0.8;
    expect[1] = 0.2;
    for (std::size_t c = 0; c < 10; ++c) EXPECT_NEAR(m.y_linear[c], expect[c], 1e-15);
}

TEST(Mixup, Errors) {
    Rng rng(3);
    auto x = random_images(2, 2, 2, rng);
    EXPECT_THROW(mixup_batch(x, std::vector<int>{0, 1}, 3, {1.2, 0.5}, {1, 0}), DomainError);
    EXPECT_THROW(mixup_batch(x, std::vector<int>{0, 1}, 3, {-0.1, 0.5}, {1, 0}), DomainError);
    EXPECT_THROW(mixup_batch(x, std::vector<int>{0, 1}, 3, {0.5, 0.5}, {1, 1}), DomainError);
    EXPECT_THROW(mixup_batch(x, std::vector<int>{0, 1}, 3, {0.5, 0.5}, {0, 2}), DomainError);
}

TEST(Mixup, PixelConvexityAndValidity) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 8, k = 5;
        auto x = random_images(n, 5, 5, rng);
        std::vector<int> labels(n);
        for (auto& l : labels) l = static_cast<int>(rng.below(k));
        auto m = mix_batch(MixConfig{MixScheme::mixup, 0.7, false}, x, one_hot<double>(labels, k), rng);
        expect_distribution_rows(m.y_linear);
        expect_distribution_rows(m.y_tempered);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t nonzero = 0;
            for (std::size_t c = 0; c < k; ++c) nonzero += m.y_linear[i * k + c] > 0.0 ? 1 : 0;
            EXPECT_LE(nonzero, 2u);
            const double floor = (1.0 - temper_weight(m.lambda[i])) / static_cast<double>(k);
            for (std::size_t c = 0; c < k; ++c) EXPECT_GE(m.y_tempered[i * k + c], floor - 1e-15);
            const std::size_t j = m.partner[i];
            for (std::size_t p = 0; p < 25; ++p) {
                const double a = x[i * 25 + p], b = x[j * 25 + p];
                EXPECT_GE(m.inputs[i * 25 + p], std::min(a, b) - 1e-15);
                EXPECT_LE(m.inputs[i * 25 + p], std::max(a, b) + 1e-15);
            }
        }
        auto sorted = m.partner;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(sorted[i], i);
    }
}

TEST(Temper, HalfIsUniform) {
    auto y = one_hot<double>({3}, 7);
    auto t = temper_targets(y, {0.5}, 7);
    for (double v : t.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 7.0);
}

TEST(Temper, OneIsIdentity) {
    Tensor<double> y({1, 4}, std::vector<double>{0.1, 0.2, 0.3, 0.4});
    EXPECT_EQ(temper_targets(y, {1.0}, 4).values(), y.values());
    EXPECT_EQ(temper_targets(y, {0.0}, 4).values(), y.values());
}

TEST(Temper, HandExample) {
    Tensor<double> y({1, 10});
    y[0] = 0.8;
    y[1] = 0.2;
    auto t = temper_targets(y, {0.8}, 10);
    EXPECT_NEAR(t[0], 0.52, 1e-12);
    EXPECT_NEAR(t[1], 0.16, 1e-12);
    for (std::size_t c = 2; c < 10; ++c) EXPECT_NEAR(t[c], 0.04, 1e-12);
}

TEST(Temper, WidthMismatch) {
    EXPECT_THROW(temper_targets(one_hot<double>({0}, 4), {0.5}, 5), ShapeError);
    EXPECT_THROW(temper_targets(one_hot<double>({0, 1}, 4), {0.5}, 4), ShapeError);
}

TEST(Entropy, Endpoints) {
    for (std::size_t k : {2u, 10u, 500u, 1000u}) {
        auto c = target_entropy_curve(k, {0.5, 1.0}, false);
        EXPECT_NEAR(c[0].h_tempered, std::log(static_cast<double>(k)), 1e-12);
        EXPECT_EQ(c[1].h_linear, 0.0);
        EXPECT_EQ(c[1].h_tempered, 0.0);
    }
}

TEST(Entropy, HandExample) {
    std::vector<double> p{0.52, 0.16, 0.04, 0.04, 0.04, 0.04, 0.04, 0.04, 0.04, 0.04};
    const double direct = -(0.52 * std::log(0.52) + 0.16 * std::log(0.16) + 8 * 0.04 * std::log(0.04));
    EXPECT_NEAR(entropy<double>(p), direct, 1e-15);
    EXPECT_NEAR(entropy<double>(p), 1.6632950612090192, 1e-12);
    EXPECT_NEAR(target_entropy_curve(10, {0.8}, false)[0].h_tempered, direct, 1e-12);
}

TEST(Entropy, TemperingDominatesOnRandomTargets) {
    Rng rng(8);
    for (std::size_t k : {3u, 10u, 1000u}) {
        for (int trial = 0; trial < 50; ++trial) {
            Tensor<double> y({1, k});
            double s = 0.0;
            for (auto& v : y.data()) s += (v = rng.uniform() < 0.3 ? rng.uniform() : 0.0);
            if (s == 0.0) y[0] = s = 1.0;
            for (auto& v : y.data()) v /= s;
            const double l = rng.uniform();
            auto t = temper_targets(y, {l}, k);
            EXPECT_GE(entropy<double>(t.data()), entropy<double>(y.data()) - 1e-12);
        }
    }
}

TEST(Entropy, MonotoneInTemperWeight) {
    for (bool same : {false, true})
        for (std::size_t k : {2u, 10u, 1000u}) {
            auto upper = target_entropy_curve(k, linspace(0.5, 1.0, 201), same);
            for (std::size_t i = 1; i < upper.size(); ++i) EXPECT_LE(upper[i].h_tempered, upper[i - 1].h_tempered + 1e-12);
            auto lower = target_entropy_curve(k, linspace(0.0, 0.5, 201), same);
            for (std::size_t i = 1; i < lower.size(); ++i) EXPECT_GE(lower[i].h_tempered, lower[i - 1].h_tempered - 1e-12);
        }
}

TEST(Entropy, SameClassTemperedAboveLinear) {
    auto c = target_entropy_curve(10, linspace(0.0, 1.0, 101), true);
    for (const auto& p : c) {
        EXPECT_EQ(p.h_linear, 0.0);
        if (p.lambda > 0.0 && p.lambda < 1.0) EXPECT_GT(p.h_tempered, p.h_linear);
    }
    EXPECT_THROW(target_entropy_curve(1, {0.5}, false), DomainError);
}

TEST(Cutmix, FullPatchTakesPartner) {
    Rng rng(5);
    auto x = random_images(2, 6, 6, rng);
    auto m = cutmix_with_boxes(x, one_hot<double>({0, 1}, 3), {1, 0}, {Box{0, 0, 6, 6}, Box{0, 0, 6, 6}});
    EXPECT_EQ(m.lambda[0], 0.0);
    for (std::size_t p = 0; p < 36; ++p) EXPECT_EQ(m.inputs[p], x[36 + p]);
    EXPECT_EQ(m.y_linear[0], 0.0);
    EXPECT_EQ(m.y_linear[1], 1.0);
}

TEST(Cutmix, ZeroAreaKeepsInput) {
    Rng rng(5);
    auto x = random_images(2, 6, 6, rng);
    auto m = cutmix_with_boxes(x, one_hot<double>({0, 1}, 3), {1, 0}, {Box{2, 2, 0, 0}, Box{0, 0, 0, 3}});
    EXPECT_EQ(m.lambda, (std::vector<double>{1.0, 1.0}));
    EXPECT_EQ(m.inputs.values(), x.values());
}

TEST(Cutmix, QuarterPatch) {
    Rng rng(5);
    auto x = random_images(1, 28, 28, rng);
    auto m = cutmix_with_boxes(x, one_hot<double>({0}, 2), {0}, {Box{7, 7, 14, 14}});
    EXPECT_DOUBLE_EQ(m.lambda[0], 1.0 - 196.0 / 784.0);
    EXPECT_DOUBLE_EQ(m.lambda[0], 0.75);
}

TEST(Cutmix, SampledBoxesStayInBoundsAndDefineLambda) {
    Rng rng(6);
    for (int i = 0; i < 2000; ++i) {
        auto b = sample_box(28, 20, rng.uniform(), rng);
        EXPECT_LE(b.y0 + b.h, 28u);
        EXPECT_LE(b.x0 + b.w, 20u);
    }
    auto x = random_images(16, 12, 12, rng);
    std::vector<int> labels(16);
    for (auto& l : labels) l = static_cast<int>(rng.below(4));
    auto m = cutmix_batch(x, one_hot<double>(labels, 4), 1.0, rng);
    expect_distribution_rows(m.y_linear);
    expect_distribution_rows(m.y_tempered);
    for (std::size_t i = 0; i < 16; ++i) {
        std::size_t changed = 0;
        for (std::size_t p = 0; p < 144; ++p) changed += m.inputs[i * 144 + p] != x[i * 144 + p] ? 1 : 0;
        if (m.partner[i] != i) EXPECT_EQ(changed, static_cast<std::size_t>(std::lround((1.0 - m.lambda[i]) * 144)));
    }
}

TEST(Cutout, ZeroesPatchWithUniformPartner) {
    Rng rng(5);
    auto x = random_images(1, 4, 4, rng);
    auto m = cutout_with_boxes(x, one_hot<double>({2}, 4), {Box{0, 0, 2, 4}});
    EXPECT_DOUBLE_EQ(m.lambda[0], 0.5);
    for (std::size_t p = 0; p < 8; ++p) EXPECT_EQ(m.inputs[p], 0.0);
    for (std::size_t p = 8; p < 16; ++p) EXPECT_EQ(m.inputs[p], x[p]);
    EXPECT_DOUBLE_EQ(m.y_linear[2], 0.5 + 0.5 / 4);
    EXPECT_DOUBLE_EQ(m.y_linear[0], 0.5 / 4);
    for (double v : m.y_tempered.data()) EXPECT_DOUBLE_EQ(v, 0.25);
    auto sampled = cutout_batch(random_images(8, 6, 6, rng), one_hot<double>({0, 1, 2, 3, 0, 1, 2, 3}, 4), 1.0, rng);
    expect_distribution_rows(sampled.y_linear);
    expect_distribution_rows(sampled.y_tempered);
}

TEST(MixBatch, NoneIsIdentity) {
    Rng rng(5);
    auto x = random_images(3, 4, 4, rng);
    auto y = one_hot<double>({0, 1, 2}, 3);
    auto m = mix_batch(MixConfig{}, x, y, rng);
    EXPECT_EQ(m.inputs.values(), x.values());
    EXPECT_EQ(m.y_linear.values(), y.values());
    EXPECT_EQ(m.y_tempered.values(), y.values());
    EXPECT_EQ(parse_mix_scheme("cutmix"), MixScheme::cutmix);
    EXPECT_THROW(parse_mix_scheme("manifold"), DomainError);
}
