#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include <gtest/gtest.h>

#include "oracles/finite_diff.hpp"
#include "oslab/checkpoint.hpp"
#include "oslab/ops.hpp"
#include "oslab/optim.hpp"
#include "oslab/rng.hpp"

using namespace oslab;
using T64 = Tensor<double>;

namespace {

T64 random_tensor(Shape shape, oslab::Rng& rng, double lo = -1.0, double hi = 1.0) {
    T64 t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Scalarizes an op output with fixed random weights so every output element matters.
T64 weighted_sum(const T64& y, std::uint64_t seed) {
    oslab::Rng rng(seed);
    return sum(mul(y, random_tensor(y.shape(), rng)));
}

} // namespace

TEST(Tensor, ShapeAndDataAgree) {
    T64 t({2, 3, 4});
    EXPECT_EQ(t.numel(), 24u);
    EXPECT_EQ(t.data().size(), numel_of(t.shape()));
    EXPECT_THROW(T64({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    EXPECT_EQ(T64::scalar(3.0).rank(), 0u);
    EXPECT_DOUBLE_EQ(T64::scalar(3.0).item(), 3.0);
}

TEST(Tensor, HandlesAliasAndCloneCopies) {
    T64 a({2}, std::vector<double>{1, 2});
    T64 b = a;
    b[0] = 5;
    EXPECT_EQ(a[0], 5);
    auto c = a.clone();
    c[1] = 9;
    EXPECT_EQ(a[1], 2);
}

TEST(Ops, MatmulShape) {
    Rng rng(1);
    auto y = matmul(random_tensor({2, 3}, rng), random_tensor({3, 4}, rng));
    EXPECT_EQ(y.shape(), (Shape{2, 4}));
    T64 a({2, 2}, std::vector<double>{1, 2, 3, 4}), b({2, 2}, std::vector<double>{5, 6, 7, 8});
    EXPECT_EQ(matmul(a, b).values(), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Ops, Relu) {
    T64 x({3}, std::vector<double>{-1, 0, 2});
    EXPECT_EQ(relu(x).values(), (std::vector<double>{0, 0, 2}));
}

TEST(Ops, ConvAllOnes) {
    auto y = conv2d(T64::full({1, 1, 5, 5}, 1.0), T64::full({1, 1, 3, 3}, 1.0), T64(), {1, 0});
    ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
    for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 9.0);
}

TEST(Ops, ConvMatchesDirectLoops) {
    Rng rng(4);
    const std::size_t n = 2, c = 3, h = 7, w = 6, o = 4, k = 3;
    for (Conv2dParams p : {Conv2dParams{1, 0}, Conv2dParams{1, 1}, Conv2dParams{2, 1}, Conv2dParams{2, 2}}) {
        auto x = random_tensor({n, c, h, w}, rng);
        auto wt = random_tensor({o, c, k, k}, rng);
        auto b = random_tensor({o}, rng);
        auto y = conv2d(x, wt, b, p);
        const std::size_t oh = (h + 2 * p.padding - k) / p.stride + 1, ow = (w + 2 * p.padding - k) / p.stride + 1;
        ASSERT_EQ(y.shape(), (Shape{n, o, oh, ow}));
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t oc = 0; oc < o; ++oc)
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        double acc = b[oc];
                        for (std::size_t ic = 0; ic < c; ++ic)
                            for (std::size_t i = 0; i < k; ++i)
                                for (std::size_t j = 0; j < k; ++j) {
                                    const long iy = static_cast<long>(oy * p.stride + i) - static_cast<long>(p.padding);
                                    const long ix = static_cast<long>(ox * p.stride + j) - static_cast<long>(p.padding);
                                    if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                                    acc += x[((s * c + ic) * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] *
                                           wt[((oc * c + ic) * k + i) * k + j];
                                }
                        EXPECT_NEAR(y[((s * o + oc) * oh + oy) * ow + ox], acc, 1e-12);
                    }
    }
}

TEST(Ops, MaxPoolPicksWindowMax) {
    T64 x({1, 1, 2, 4}, std::vector<double>{1, 5, 2, 0, 3, 4, 8, 7});
    EXPECT_EQ(max_pool2d(x, 2, 2).values(), (std::vector<double>{5, 8}));
}

TEST(Ops, ShapeErrorsNameOpAndShapes) {
    T64 a({2, 3}), b({3, 2});
    try {
        (void)matmul(a, T64({2, 2}));
        FAIL();
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("matmul"), std::string::npos);
        EXPECT_NE(msg.find("[2,3]"), std::string::npos);
        EXPECT_NE(msg.find("[2,2]"), std::string::npos);
    }
    EXPECT_THROW((void)add(a, b), ShapeError);
    EXPECT_THROW((void)sub(a, T64({3})), ShapeError);
    EXPECT_THROW((void)reshape(a, {5}), ShapeError);
    EXPECT_THROW((void)conv2d(T64({1, 2, 5, 5}), T64({1, 3, 3, 3}), T64(), {}), ShapeError);
    EXPECT_THROW((void)max_pool2d(T64({1, 1, 1, 1}), 2, 2), ShapeError);
}

TEST(Ops, TrailingBroadcast) {
    T64 a({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}), b({3}, std::vector<double>{10, 20, 30});
    EXPECT_EQ(add(a, b).values(), (std::vector<double>{11, 22, 33, 14, 25, 36}));
    EXPECT_EQ(mul(a, b).values(), (std::vector<double>{10, 40, 90, 40, 100, 180}));
}

TEST(Ops, LogSoftmaxShiftInvariant) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        auto x = random_tensor({4, 10}, rng, -20, 20);
        const double c = rng.uniform(-500, 500);
        auto a = log_softmax(x), b = log_softmax(add_scalar(x, c));
        for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
    }
}

TEST(Ops, NoGradGuardRecordsNothing) {
    T64 x({3}, 1.0);
    x.set_requires_grad();
    {
        NoGradGuard g;
        auto y = sum(square(x));
        EXPECT_FALSE(y.requires_grad());
        EXPECT_THROW(y.backward(), Error);
    }
    EXPECT_TRUE(grad_enabled());
    EXPECT_TRUE(sum(x).requires_grad());
}

TEST(Backward, SumGivesOnes) {
    T64 x({3}, std::vector<double>{4, 5, 6});
    x.set_requires_grad();
    sum(x).backward();
    EXPECT_EQ(x.grad_tensor().values(), (std::vector<double>{1, 1, 1}));
}

TEST(Backward, SquareGivesTwoX) {
    T64 x({3}, std::vector<double>{1, 2, 3});
    x.set_requires_grad();
    sum(mul(x, x)).backward();
    EXPECT_EQ(x.grad_tensor().values(), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, RepeatedCallsAccumulate) {
    T64 x({2}, std::vector<double>{1, 2});
    x.set_requires_grad();
    sum(square(x)).backward();
    sum(square(x)).backward();
    EXPECT_EQ(x.grad_tensor().values(), (std::vector<double>{4, 8}));
    x.zero_grad();
    EXPECT_EQ(x.grad_tensor().values(), (std::vector<double>{0, 0}));
}

TEST(Backward, RejectsNonScalar) {
    T64 x({3}, 1.0);
    x.set_requires_grad();
    EXPECT_THROW(square(x).backward(), ShapeError);
    auto one = reshape(sum(x), {1});
    EXPECT_NO_THROW(one.backward());
}

TEST(Backward, EveryReachableLeafGetsGrad) {
    Rng rng(3);
    auto a = random_tensor({2, 3}, rng), b = random_tensor({3, 2}, rng), unused = random_tensor({2}, rng);
    for (auto* t : {&a, &b, &unused}) t->set_requires_grad();
    sum(matmul(a, b)).backward();
    EXPECT_TRUE(a.has_grad());
    EXPECT_TRUE(b.has_grad());
    EXPECT_FALSE(unused.has_grad());
    EXPECT_EQ(a.grad().size(), a.numel());
}

TEST(Backward, DiamondGraph) {
    T64 x({1}, std::vector<double>{3});
    x.set_requires_grad();
    auto y = square(x);
    sum(add(mul(y, x), y)).backward();  // x^3 + x^2
    EXPECT_DOUBLE_EQ(x.grad()[0], 27 + 6);
}

struct GradCase {
    std::string name;
    std::function<double(Rng&)> run;
};

void PrintTo(const GradCase& c, std::ostream* os) { *os << c.name; }

class OpGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
    Rng rng(11);
    for (int trial = 0; trial < 3; ++trial) EXPECT_LE(GetParam().run(rng), 1e-6) << GetParam().name;
}

namespace {

GradCase unary_case(std::string name, std::function<T64(const T64&)> op, double lo = -2, double hi = 2) {
    return {name, [op, lo, hi](Rng& rng) {
                auto x = random_tensor({3, 4}, rng, lo, hi);
                return oracle::gradient_error({x}, [&] { return weighted_sum(op(x), 5); });
            }};
}

std::vector<GradCase> grad_cases() {
    std::vector<GradCase> c;
    c.push_back({"add", [](Rng& r) {
                     auto a = random_tensor({3, 4}, r), b = random_tensor({3, 4}, r);
                     return oracle::gradient_error({a, b}, [&] { return weighted_sum(add(a, b), 1); });
                 }});
    c.push_back({"add_broadcast", [](Rng& r) {
                     auto a = random_tensor({3, 4}, r), b = random_tensor({4}, r);
                     return oracle::gradient_error({a, b}, [&] { return weighted_sum(add(a, b), 1); });
                 }});
    c.push_back({"sub", [](Rng& r) {
                     auto a = random_tensor({3, 4}, r), b = random_tensor({3, 4}, r);
                     return oracle::gradient_error({a, b}, [&] { return weighted_sum(sub(a, b), 1); });
                 }});
    c.push_back({"mul", [](Rng& r) {
                     auto a = random_tensor({3, 4}, r), b = random_tensor({3, 4}, r);
                     return oracle::gradient_error({a, b}, [&] { return weighted_sum(mul(a, b), 1); });
                 }});
    c.push_back({"mul_broadcast", [](Rng& r) {
                     auto a = random_tensor({2, 3, 4}, r), b = random_tensor({3, 4}, r);
                     return oracle::gradient_error({a, b}, [&] { return weighted_sum(mul(a, b), 1); });
                 }});
    c.push_back(unary_case("scale", [](const T64& x) { return scale(x, 2.5); }));
    c.push_back(unary_case("add_scalar", [](const T64& x) { return add_scalar(x, -1.5); }));
    c.push_back(unary_case("neg", [](const T64& x) { return neg(x); }));
    c.push_back(unary_case("square", [](const T64& x) { return square(x); }));
    c.push_back(unary_case("log", [](const T64& x) { return log(x); }, 0.5, 3.0));
    c.push_back(unary_case("exp", [](const T64& x) { return exp(x); }));
    c.push_back(unary_case("relu", [](const T64& x) { return relu(x); }));
    c.push_back(unary_case("maximum", [](const T64& x) { return maximum(x, 0.3); }));
    c.push_back(unary_case("sigmoid", [](const T64& x) { return sigmoid(x); }));
    c.push_back(unary_case("softplus", [](const T64& x) { return softplus(x); }, -30, 30));
    c.push_back(unary_case("reshape", [](const T64& x) { return reshape(x, {2, 6}); }));
    c.push_back(unary_case("slice_rows", [](const T64& x) { return slice_rows(x, 1, 3); }));
    c.push_back(unary_case("sum", [](const T64& x) { return sum(x); }));
    c.push_back(unary_case("mean", [](const T64& x) { return mean(x); }));
    c.push_back(unary_case("sum_rows", [](const T64& x) { return sum_rows(x); }));
    c.push_back(unary_case("row_l2_norm", [](const T64& x) { return row_l2_norm(x); }));
    c.push_back(unary_case("log_softmax", [](const T64& x) { return log_softmax(x); }, -5, 5));
    c.push_back({"prelu_channel", [](Rng& r) {
                     auto x = random_tensor({2, 3, 2, 2}, r), s = random_tensor({3}, r, 0, 0.5);
                     return oracle::gradient_error({x, s}, [&] { return weighted_sum(prelu(x, s), 2); });
                 }});
    c.push_back({"prelu_shared", [](Rng& r) {
                     auto x = random_tensor({2, 3}, r), s = random_tensor({1}, r, 0, 0.5);
                     return oracle::gradient_error({x, s}, [&] { return weighted_sum(prelu(x, s), 2); });
                 }});
    c.push_back({"matmul", [](Rng& r) {
                     auto a = random_tensor({3, 5}, r), b = random_tensor({5, 2}, r);
                     return oracle::gradient_error({a, b}, [&] { return weighted_sum(matmul(a, b), 3); });
                 }});
    c.push_back({"linear", [](Rng& r) {
                     auto x = random_tensor({4, 5}, r), w = random_tensor({3, 5}, r), b = random_tensor({3}, r);
                     return oracle::gradient_error({x, w, b}, [&] { return weighted_sum(linear(x, w, b), 3); });
                 }});
    c.push_back({"linear_no_bias", [](Rng& r) {
                     auto x = random_tensor({4, 5}, r), w = random_tensor({3, 5}, r);
                     return oracle::gradient_error({x, w}, [&] { return weighted_sum(linear(x, w, T64()), 3); });
                 }});
    c.push_back({"conv2d_pad", [](Rng& r) {
                     auto x = random_tensor({2, 2, 6, 6}, r), w = random_tensor({3, 2, 5, 5}, r), b = random_tensor({3}, r);
                     return oracle::gradient_error({x, w, b}, [&] { return weighted_sum(conv2d(x, w, b, {1, 2}), 4); });
                 }});
    c.push_back({"conv2d_stride", [](Rng& r) {
                     auto x = random_tensor({2, 3, 7, 7}, r), w = random_tensor({2, 3, 3, 3}, r), b = random_tensor({2}, r);
                     return oracle::gradient_error({x, w, b}, [&] { return weighted_sum(conv2d(x, w, b, {2, 1}), 4); });
                 }});
    c.push_back({"max_pool2d", [](Rng& r) {
                     auto x = random_tensor({2, 2, 6, 5}, r);
                     return oracle::gradient_error({x}, [&] { return weighted_sum(max_pool2d(x, 2, 2), 6); });
                 }});
    return c;
}

} // namespace

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::ValuesIn(grad_cases()),
                         [](const auto& info) { return info.param.name; });

TEST(Sgd, VanillaStep) {
    T64 p({1}, std::vector<double>{1.0});
    p.set_requires_grad();
    std::vector<T64> params{p};
    OptimState<double> st(0.1, 0.0, 0.0);
    sum(scale(p, 2.0)).backward();
    sgd_step(params, st);
    EXPECT_NEAR(p[0], 0.8, 1e-15);
    EXPECT_EQ(p.grad()[0], 0.0);
}

TEST(Sgd, MomentumUnrollsTwoSteps) {
    T64 p({1}, std::vector<double>{0.0});
    p.set_requires_grad();
    std::vector<T64> params{p};
    OptimState<double> st(1.0, 0.9, 0.0);
    const double g = 3.0;
    for (int i = 0; i < 2; ++i) {
        sum(scale(p, g)).backward();
        sgd_step(params, st);
    }
    EXPECT_NEAR(st.velocity[0][0], 1.9 * g, 1e-12);
    EXPECT_NEAR(p[0], -(g + 1.9 * g), 1e-12);
}

TEST(Sgd, PureDecay) {
    T64 p({1}, std::vector<double>{1.0});
    p.set_requires_grad();
    std::vector<T64> params{p};
    OptimState<double> st(0.1, 0.0, 0.0001);
    sum(scale(p, 0.0)).backward();
    sgd_step(params, st);
    EXPECT_NEAR(p[0], 0.99999, 1e-15);
}

TEST(Sgd, MissingGradIsAnError) {
    T64 p({2}, 1.0), q({2}, 1.0);
    p.set_requires_grad();
    q.set_requires_grad();
    std::vector<T64> params{p, q};
    OptimState<double> st;
    sum(p).backward();
    EXPECT_THROW(sgd_step(params, st), Error);
}

TEST(Sgd, VelocityShapesFollowParameters) {
    T64 a({2, 3}, 1.0), b({4}, 1.0);
    a.set_requires_grad();
    b.set_requires_grad();
    std::vector<T64> params{a, b};
    OptimState<double> st;
    add(sum(a), sum(b)).backward();
    sgd_step(params, st);
    ASSERT_EQ(st.velocity.size(), 2u);
    EXPECT_EQ(st.velocity[0].size(), 6u);
    EXPECT_EQ(st.velocity[1].size(), 4u);
}

TEST(Sgd, ScheduleMultipliesDecayPoints) {
    OptimState<double> st(0.1, 0.9, 0.0, {{5, 0.1}, {8, 0.5}});
    EXPECT_DOUBLE_EQ(st.learning_rate_at(0), 0.1);
    EXPECT_DOUBLE_EQ(st.learning_rate_at(5), 0.1 * 0.1);
    EXPECT_DOUBLE_EQ(st.learning_rate_at(9), 0.1 * 0.1 * 0.5);
    EXPECT_THROW(OptimState<double>(0.0, 0.9, 0.0), DomainError);
    EXPECT_THROW(OptimState<double>(0.1, 1.0, 0.0), DomainError);
    EXPECT_THROW(OptimState<double>(0.1, 0.5, -1.0), DomainError);
}

TEST(Determinism, SameSeedSameParametersAfterSteps) {
    auto run = [] {
        Rng rng(99);
        auto w = random_tensor({4, 6}, rng), x = random_tensor({8, 6}, rng);
        w.set_requires_grad();
        std::vector<T64> params{w};
        OptimState<double> st(0.05, 0.9, 1e-4);
        for (int i = 0; i < 20; ++i) {
            mean(square(matmul(x, reshape(w, {6, 4})))).backward();
            sgd_step(params, st);
        }
        return w.values();
    };
    EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Rng rng(5);
    Checkpoint<double> ck;
    ck.tensors.push_back({"a", random_tensor({2, 3}, rng)});
    ck.tensors.push_back({"scalar", T64::scalar(std::nextafter(1.0, 2.0))});
    ck.tensors.push_back({"empty", T64({0, 4})});
    ck.metadata["note"] = "x";
    auto path = (std::filesystem::temp_directory_path() / "oslab_ckpt_test.bin").string();
    save_checkpoint(path, ck);
    auto back = load_checkpoint<double>(path);
    ASSERT_EQ(back.tensors.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back.tensors[i].name, ck.tensors[i].name);
        EXPECT_EQ(back.tensors[i].tensor.shape(), ck.tensors[i].tensor.shape());
        EXPECT_EQ(back.tensors[i].tensor.values(), ck.tensors[i].tensor.values());
    }
    EXPECT_EQ(back.metadata, ck.metadata);
    const auto bytes = read_file_bytes(path);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), "OSLAB1");
    EXPECT_EQ(bytes[6], 8);
    std::filesystem::remove(path);
}

TEST(Checkpoint, Float32RoundTrip) {
    Checkpoint<float> ck;
    ck.tensors.push_back({"w", Tensor<float>({3}, std::vector<float>{0.1f, -2.5f, 3e-8f})});
    auto bytes = encode_checkpoint(ck);
    EXPECT_EQ(bytes[6], 4);
    auto back = decode_checkpoint<float>(bytes);
    EXPECT_EQ(back.tensors[0].tensor.values(), ck.tensors[0].tensor.values());
}

TEST(Checkpoint, RejectsCorruptInput) {
    Checkpoint<double> ck;
    ck.tensors.push_back({"w", T64({2}, 1.0)});
    auto bytes = encode_checkpoint(ck);
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_checkpoint<double>(bad), IoError);
    for (std::size_t cut = 0; cut < bytes.size(); ++cut)
        EXPECT_THROW(decode_checkpoint<double>(std::vector<char>(bytes.begin(), bytes.begin() + static_cast<long>(cut))), IoError)
            << "prefix " << cut;
    bad = bytes;
    bad.push_back(0);
    EXPECT_THROW(decode_checkpoint<double>(bad), IoError);
}
