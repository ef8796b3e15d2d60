#include <gtest/gtest.h>

#include "modnet/gradcheck.hpp"
#include "modnet/nn_ops.hpp"
#include "modnet/rng.hpp"
#include "modnet/tape.hpp"

using namespace modnet;

TEST(Tensor, ShapeMatchesData) {
    Tensor<float> t(Shape{2, 3});
    EXPECT_EQ(t.size(), 6u);
    EXPECT_THROW(Tensor<float>(Shape{2, 3}, std::vector<float>(5, 0.f)), ShapeError);
    EXPECT_THROW(Tensor<float>(Shape{0, 3}), ShapeError);
}

TEST(Tensor, NonFiniteDetected) {
    std::vector<float> vals = {1.f, 2.f, std::numeric_limits<float>::quiet_NaN()};
    EXPECT_FALSE(all_finite(vals.data(), vals.size()));
    vals[2] = std::numeric_limits<float>::infinity();
    EXPECT_FALSE(all_finite(vals.data(), vals.size()));
    vals[2] = 3.f;
    EXPECT_TRUE(all_finite(vals.data(), vals.size()));
}

TEST(Tape, SumGradientIsOnes) {
    Tape<double> tape;
    Rng rng(7);
    Tensor<double> x(Shape{3, 4});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    auto vx = tape.leaf(x, true);
    auto loss = sum(tape, vx);
    tape.backward(loss);
    const auto& g = tape.grad(vx);
    ASSERT_EQ(g.size(), x.size());
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 1.0);
}

TEST(Tape, HalfSquaredNormGradientIsX) {
    Tape<double> tape;
    Rng rng(8);
    Tensor<double> x(Shape{5});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    auto vx = tape.leaf(x, true);
    auto loss = scale(tape, sum(tape, mul(tape, vx, vx)), 0.5);
    tape.backward(loss);
    const auto& g = tape.grad(vx);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], x[i], 1e-12);
}

TEST(Tape, ComposedGraphMatchesFiniteDifferences) {
    // relu(conv) -> maxpool -> dense composition against central differences
    Rng rng(21);
    Tensor<double> x(Shape{2, 2, 12});
    Tensor<double> w(Shape{3, 2, 3});
    Tensor<double> b(Shape{3});
    Tensor<double> wd(Shape{4, 18});
    Tensor<double> bd(Shape{4});
    for (auto* t : {&x, &w, &wd})
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = rng.normal() * 0.7;
    for (auto* t : {&b, &bd})
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = rng.normal() * 0.1;

    auto build = [](Tape<double>& t, const std::vector<Var<double>>& v) {
        auto y = relu(t, conv1d(t, v[0], v[1], v[2]));
        auto p = maxpool1d(t, y, 2, 2);
        auto flat = reshape(t, p, Shape{2, 18});
        return dense(t, flat, v[3], v[4]);
    };
    auto report = gradcheck(build, {x, w, b, wd, bd});
    EXPECT_LT(report.max_rel_err, 1e-4) << report.describe();
}

TEST(Tape, BackwardTwiceRejected) {
    Tape<double> tape;
    auto vx = tape.leaf(Tensor<double>(Shape{3}, {1.0, 2.0, 3.0}), true);
    auto loss = sum(tape, vx);
    tape.backward(loss);
    EXPECT_THROW(tape.backward(loss), StateError);
}

TEST(Tape, BackwardWithoutForwardRejected) {
    Tape<double> tape;
    EXPECT_THROW(tape.backward(Var<double>{}), StateError);
}

TEST(Tape, BackwardRequiresScalarLoss) {
    Tape<double> tape;
    auto vx = tape.leaf(Tensor<double>(Shape{3}, {1.0, 2.0, 3.0}), true);
    EXPECT_THROW(tape.backward(vx), ShapeError);
}

TEST(Tape, BackwardIsLinear) {
    // grad of (a*loss1 + b*loss2) == a*grad1 + b*grad2
    const double a = 1.7, b = -0.4;
    Rng rng(11);
    Tensor<double> x(Shape{6});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();

    auto grad_of = [&](int which, double ca, double cb) {
        Tape<double> t;
        auto vx = t.leaf(x, true);
        auto l1 = sum(t, mul(t, vx, vx));
        auto l2 = sum(t, relu(t, vx));
        Var<double> loss;
        if (which == 1) loss = l1;
        else if (which == 2) loss = l2;
        else loss = add(t, scale(t, l1, ca), scale(t, l2, cb));
        t.backward(loss);
        return t.grad(vx);
    };

    auto g1 = grad_of(1, 0, 0);
    auto g2 = grad_of(2, 0, 0);
    auto gc = grad_of(3, a, b);
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_NEAR(gc[i], a * g1[i] + b * g2[i], 1e-6);
}

TEST(Tape, NonFiniteOpOutputRaises) {
    Tape<float> tape;
    auto vx = tape.leaf(Tensor<float>(Shape{2}, {1e30f, 1e30f}), true);
    EXPECT_THROW(mul(tape, vx, vx), NumericError);

    Tape<float> tape2;
    Tensor<float> bad(Shape{2}, {1.f, 2.f});
    bad[0] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(tape2.leaf(bad, false), NumericError);
}

TEST(Tape, GradientShapeMatchesValueShape) {
    Tape<double> tape;
    Tensor<double> x(Shape{3, 5}, std::vector<double>(15, 0.5));
    auto vx = tape.leaf(x, true);
    auto loss = mean(tape, mul(tape, vx, vx));
    tape.backward(loss);
    EXPECT_EQ(tape.grad(vx).shape(), x.shape());
}

TEST(Rng, SubstreamsAreStableAndDistinct) {
    Rng a = Rng::substream(42, "dataset", 3);
    Rng b = Rng::substream(42, "dataset", 3);
    Rng c = Rng::substream(42, "dataset", 4);
    Rng d = Rng::substream(42, "shuffle", 3);
    auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
    EXPECT_NE(x, d.next_u64());
}

TEST(Rng, NormalMomentsSane) {
    Rng r(123);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double v = r.normal();
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
