#include <gtest/gtest.h>

#include "modnet/gradcheck.hpp"
#include "modnet/rng.hpp"

using namespace modnet;

namespace {

Tensor<double> randn(Shape s, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(s));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
    return t;
}

}  // namespace

TEST(GradCheck, DenseLayer) {
    Rng rng(101);
    auto report = gradcheck(
        [](Tape<double>& t, const std::vector<Var<double>>& v) {
            return dense(t, v[0], v[1], v[2]);
        },
        {randn(Shape{2, 8}, rng), randn(Shape{5, 8}, rng), randn(Shape{5}, rng, 0.1)});
    EXPECT_LT(report.max_rel_err, 1e-6) << report.describe();
}

TEST(GradCheck, ConvLayerThreeTaps) {
    Rng rng(102);
    auto report = gradcheck(
        [](Tape<double>& t, const std::vector<Var<double>>& v) {
            return conv1d(t, v[0], v[1], v[2]);
        },
        {randn(Shape{2, 2, 12}, rng), randn(Shape{3, 2, 3}, rng), randn(Shape{3}, rng, 0.1)});
    EXPECT_LT(report.max_rel_err, 1e-6) << report.describe();
}

TEST(GradCheck, LstmFourTimesteps) {
    Rng rng(103);
    const int h = 4;
    auto report = gradcheck(
        [](Tape<double>& t, const std::vector<Var<double>>& v) {
            return lstm(t, v[0], v[1], v[2], v[3], true);
        },
        {randn(Shape{4, 2, 3}, rng, 0.8), randn(Shape{4 * h, 3}, rng, 0.5),
         randn(Shape{4 * h, h}, rng, 0.5), randn(Shape{4 * h}, rng, 0.2)});
    EXPECT_LT(report.max_rel_err, 1e-5) << report.describe();
}

TEST(GradCheck, MaxPool) {
    Rng rng(104);
    auto report = gradcheck(
        [](Tape<double>& t, const std::vector<Var<double>>& v) {
            return maxpool1d(t, v[0], 3, 2);
        },
        {randn(Shape{2, 3, 11}, rng)});
    EXPECT_LT(report.max_rel_err, 1e-6) << report.describe();
}

TEST(GradCheck, ReluInferPath) {
    Rng rng(105);
    auto report = gradcheck(
        [](Tape<double>& t, const std::vector<Var<double>>& v) { return relu(t, v[0]); },
        {randn(Shape{4, 9}, rng)});
    EXPECT_LT(report.max_rel_err, 1e-6) << report.describe();
}

TEST(GradCheck, ResidualAddAndConcat) {
    Rng rng(106);
    auto r1 = gradcheck(
        [](Tape<double>& t, const std::vector<Var<double>>& v) { return add(t, v[0], v[1]); },
        {randn(Shape{2, 3, 7}, rng), randn(Shape{2, 3, 7}, rng)});
    EXPECT_LT(r1.max_rel_err, 1e-6) << r1.describe();

    auto r2 = gradcheck(
        [](Tape<double>& t, const std::vector<Var<double>>& v) {
            return concat_channels(t, v[0], v[1]);
        },
        {randn(Shape{2, 3, 7}, rng), randn(Shape{2, 2, 7}, rng)});
    EXPECT_LT(r2.max_rel_err, 1e-6) << r2.describe();
}

TEST(GradCheck, SoftmaxCrossEntropyHead) {
    Rng rng(107);
    auto report = gradcheck(
        [](Tape<double>& t, const std::vector<Var<double>>& v) {
            auto p = softmax_op(t, v[0]);
            return cross_entropy_op(t, p, {2, 0, 4});
        },
        {randn(Shape{3, 5}, rng, 1.5)});
    EXPECT_LT(report.max_rel_err, 1e-5) << report.describe();
}

TEST(GradCheck, SampledSubsetIsDeterministic) {
    Rng rng(108);
    auto x = randn(Shape{3, 40}, rng);
    auto w = randn(Shape{6, 40}, rng);
    auto b = randn(Shape{6}, rng, 0.1);
    auto build = [](Tape<double>& t, const std::vector<Var<double>>& v) {
        return dense(t, v[0], v[1], v[2]);
    };
    auto r1 = gradcheck(build, {x, w, b}, 1e-5, 20, 777);
    auto r2 = gradcheck(build, {x, w, b}, 1e-5, 20, 777);
    EXPECT_EQ(r1.entries_checked, r2.entries_checked);
    EXPECT_DOUBLE_EQ(r1.max_rel_err, r2.max_rel_err);
    EXPECT_LT(r1.max_rel_err, 1e-6);
    EXPECT_EQ(r1.entries_checked, 20u + 20u + 6u);  // bias has only 6 entries
}
