#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "op_cases.hpp"
#include "synres/autograd.hpp"
#include "synres/errors.hpp"
#include "synres/grad_check.hpp"

using namespace synres;
using synres::testing::op_cases;
using synres::testing::random_tensor;

namespace {

Tensor2<double> eval_unary(Var<double> (*op)(Var<double>), Tensor2<double> x) {
  Graph<double> g;
  return op(g.constant(std::move(x))).value();
}

}  // namespace

// ---- matmul ---------------------------------------------------------------------

TEST(Matmul, HandOracle) {
  Graph<double> g;
  auto c = matmul(g.constant({{1, 2}, {3, 4}}), g.constant({{5}, {6}}));
  EXPECT_EQ(c.value(), Tensor2<double>({{17}, {39}}));
}

TEST(Matmul, IdentityAndZero) {
  Graph<double> g;
  auto b = g.constant({{5}, {6}});
  EXPECT_EQ(matmul(g.constant(Tensor2<double>::identity(2)), b).value(), b.value());
  auto z = matmul(g.constant(Tensor2<double>(2, 3)), g.constant(random_tensor<double>(3, 1, 4)));
  EXPECT_EQ(z.value(), Tensor2<double>({{0}, {0}}));
}

TEST(Matmul, IdentityIsBitwiseNeutral) {
  Graph<float> g;
  auto a = g.constant(random_tensor<float>(5, 7, 11));
  EXPECT_TRUE(bitwise_equal(matmul(a, g.constant(Tensor2<float>::identity(7))).value(), a.value()));
  EXPECT_TRUE(bitwise_equal(matmul(g.constant(Tensor2<float>::identity(5)), a).value(), a.value()));
}

TEST(Matmul, ShapeMismatchThrows) {
  Graph<double> g;
  EXPECT_THROW(matmul(g.constant(Tensor2<double>(2, 3)), g.constant(Tensor2<double>(2, 3))), DimensionError);
}

TEST(Matmul, NonFiniteResultThrows) {
  Graph<double> g;
  const double big = 1e300;
  EXPECT_THROW(matmul(g.constant({{big, big}}), g.constant({{big}, {big}})), NumericError);
}

// ---- softmax --------------------------------------------------------------------

TEST(Softmax, Examples) {
  auto s = eval_unary(softmax_rows<double>, {{0, 0}});
  EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.5);

  s = eval_unary(softmax_rows<double>, {{1000, 0}});
  EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-12);
  EXPECT_TRUE(s.all_finite());

  s = eval_unary(softmax_rows<double>, {{1, 2, 3}});
  EXPECT_NEAR(s(0, 0), 0.09003, 1e-5);
  EXPECT_NEAR(s(0, 1), 0.24473, 1e-5);
  EXPECT_NEAR(s(0, 2), 0.66524, 1e-5);
}

TEST(Softmax, RowsSumToOne) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto x = random_tensor<double>(4, 1 + seed % 9, seed, 1.0 + 10.0 * (seed % 5));
    auto s = eval_unary(softmax_rows<double>, x);
    for (std::size_t r = 0; r < s.rows(); ++r) {
      auto row = s.row(r);
      EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-6);
    }
  }
}

// ---- sigmoid --------------------------------------------------------------------

TEST(Sigmoid, Examples) {
  auto s = eval_unary(sigmoid<double>, Tensor2<double>(2, 3));
  for (double v : s.values()) EXPECT_EQ(v, 0.5);
  s = eval_unary(sigmoid<double>, {{1e4, -1e4}});
  EXPECT_NEAR(s(0, 0), 1.0, 1e-6);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-6);
  EXPECT_TRUE(s.all_finite());
  EXPECT_NEAR(eval_unary(sigmoid<double>, {{2}})(0, 0), 0.880797, 1e-6);
}

TEST(Sigmoid, OpenIntervalAndSymmetry) {
  // Strictness is checked where the result is representable away from 0 and 1.
  auto x = random_tensor<double>(20, 20, 3, 8.0);
  Tensor2<double> neg = x;
  for (auto& v : neg.values()) v = -v;
  auto s = eval_unary(sigmoid<double>, x);
  auto sn = eval_unary(sigmoid<double>, neg);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_GT(s.values()[i], 0.0);
    EXPECT_LT(s.values()[i], 1.0);
    EXPECT_NEAR(sn.values()[i], 1.0 - s.values()[i], 1e-6);
  }
}

TEST(Sigmoid, StableAt32Bit) {
  Graph<float> g;
  auto s = sigmoid(g.constant({{1e4f, -1e4f, 0.0f}})).value();
  EXPECT_TRUE(s.all_finite());
  EXPECT_NEAR(s(0, 0), 1.0f, 1e-6f);
  EXPECT_NEAR(s(0, 1), 0.0f, 1e-6f);
}

// ---- hadamard / frobenius ----------------------------------------------------------

TEST(Hadamard, Examples) {
  Graph<double> g;
  auto x = g.constant(random_tensor<double>(3, 4, 2));
  EXPECT_EQ(hadamard(x, g.constant(Tensor2<double>(3, 4, 1.0))).value(), x.value());
  EXPECT_EQ(hadamard(g.constant(Tensor2<double>(3, 4)), x).value(), Tensor2<double>(3, 4));
  EXPECT_EQ(hadamard(g.constant({{2, -4}}), g.constant({{0.5, 0.25}})).value(), Tensor2<double>({{1, -1}}));
}

TEST(Hadamard, CommutativeBitwise) {
  Graph<float> g;
  auto a = g.constant(random_tensor<float>(6, 5, 8));
  auto b = g.constant(random_tensor<float>(6, 5, 9));
  EXPECT_TRUE(bitwise_equal(hadamard(a, b).value(), hadamard(b, a).value()));
  EXPECT_THROW(hadamard(a, g.constant(Tensor2<float>(5, 6))), DimensionError);
}

TEST(Frobenius, Examples) {
  EXPECT_EQ(eval_unary(frobenius_sq<double>, Tensor2<double>(3, 3))(0, 0), 0.0);
  EXPECT_EQ(eval_unary(frobenius_sq<double>, Tensor2<double>::identity(3))(0, 0), 3.0);
  EXPECT_EQ(eval_unary(frobenius_sq<double>, {{1, 2}, {3, 4}})(0, 0), 30.0);
}

// ---- cross entropy ----------------------------------------------------------------

TEST(CrossEntropy, Examples) {
  Graph<double> g;
  std::vector<std::int32_t> t0{0};
  std::vector<std::uint8_t> m1{1};
  EXPECT_LT(cross_entropy_logits(g.constant({{10, -10}}), t0, m1).value()(0, 0), 1e-4);

  std::vector<std::int32_t> t1{1};
  EXPECT_NEAR(cross_entropy_logits(g.constant({{0.3, 0.3}}), t1, m1).value()(0, 0), std::log(2.0), 1e-6);

  // Row 0 puts 0.5 on target 0; row 1 puts 0.25 on target 1.
  auto logits = g.constant({{std::log(2.0), std::log(1.0), std::log(1.0)},
                            {std::log(1.0), std::log(1.0), std::log(2.0)}});
  std::vector<std::int32_t> t{0, 1};
  std::vector<std::uint8_t> m{1, 1};
  EXPECT_NEAR(cross_entropy_logits(logits, t, m).value()(0, 0), 1.03972, 1e-5);
}

TEST(CrossEntropy, MaskAndErrors) {
  Graph<double> g;
  auto logits = g.constant({{0, 0}, {5, -5}});
  std::vector<std::int32_t> t{1, 1};
  std::vector<std::uint8_t> only_first{1, 0};
  EXPECT_NEAR(cross_entropy_logits(logits, t, only_first).value()(0, 0), std::log(2.0), 1e-12);
  std::vector<std::uint8_t> none{0, 0};
  EXPECT_THROW(cross_entropy_logits(logits, t, none), std::invalid_argument);
  std::vector<std::int32_t> bad{0, 2};
  std::vector<std::uint8_t> all{1, 1};
  EXPECT_THROW(cross_entropy_logits(logits, bad, all), std::invalid_argument);
}

// ---- layer norm ---------------------------------------------------------------------

TEST(LayerNorm, Examples) {
  Graph<double> g;
  auto gain = g.constant(Tensor2<double>(1, 2, 1.0));
  auto bias = g.constant(Tensor2<double>(1, 2));
  auto y = layer_norm(g.constant({{1, 3}}), gain, bias).value();
  EXPECT_NEAR(y(0, 0), -1.0, 1e-3);
  EXPECT_NEAR(y(0, 1), 1.0, 1e-3);

  auto c = layer_norm(g.constant({{7, 7}}), gain, bias).value();
  EXPECT_EQ(c, Tensor2<double>(1, 2));

  auto g4 = g.constant(Tensor2<double>(1, 4, 1.0));
  auto b4 = g.constant(Tensor2<double>(1, 4));
  Tensor2<double> unit{{1, -1, 1, -1}};
  auto u = layer_norm(g.constant(unit), g4, b4).value();
  EXPECT_LT(synres::testing::max_abs_diff(u, unit), 1e-4);
}

// ---- backward -------------------------------------------------------------------------

TEST(Backward, FrobeniusGradientIsTwoW) {
  Graph<double> g;
  auto w = g.leaf({{1, 2}, {3, 4}});
  g.backward(frobenius_sq(w));
  EXPECT_EQ(g.grad(w), Tensor2<double>({{2, 4}, {6, 8}}));
}

TEST(Backward, UnreachableLeafGetsExactZero) {
  Graph<double> g;
  auto w = g.leaf({{1, 2}});
  auto other = g.leaf({{5, 6, 7}});
  g.backward(frobenius_sq(w));
  EXPECT_EQ(g.grad(other), Tensor2<double>(1, 3));
}

TEST(Backward, HadamardProductRule) {
  Graph<double> g;
  auto x = g.leaf(random_tensor<double>(3, 2, 1));
  auto y = g.constant(random_tensor<double>(3, 2, 2));
  g.backward(sum(hadamard(x, y)));
  EXPECT_EQ(g.grad(x), y.value());
}

TEST(Backward, FanOutAccumulates) {
  // x feeds two branches; the gradient is the sum of the single-branch ones.
  const auto x0 = random_tensor<double>(3, 3, 5);
  const auto w0 = random_tensor<double>(3, 3, 6);
  auto branch_a = [&](Graph<double>& g, Var<double> x) { return frobenius_sq(matmul(x, g.constant(w0))); };
  auto branch_b = [](Graph<double>&, Var<double> x) { return sum(sigmoid(x)); };

  Graph<double> ga;
  auto xa = ga.leaf(x0);
  ga.backward(branch_a(ga, xa));
  Graph<double> gb;
  auto xb = gb.leaf(x0);
  gb.backward(branch_b(gb, xb));
  Graph<double> gs;
  auto xs = gs.leaf(x0);
  gs.backward(add(branch_a(gs, xs), branch_b(gs, xs)));

  auto expected = ga.grad(xa);
  for (std::size_t i = 0; i < expected.size(); ++i) expected.values()[i] += gb.grad(xb).values()[i];
  EXPECT_LT(synres::testing::max_abs_diff(gs.grad(xs), expected), 1e-12);
}

TEST(Backward, NonScalarRootThrows) {
  Graph<double> g;
  auto w = g.leaf({{1, 2}});
  EXPECT_THROW(g.backward(w), DimensionError);
}

// ---- randn ------------------------------------------------------------------------------

TEST(Randn, ZeroSigmaAndDeterminism) {
  Rng r(3);
  EXPECT_EQ(randn<double>(4, 4, 0.0, r), Tensor2<double>(4, 4));
  Rng a(99), b(99);
  EXPECT_TRUE(bitwise_equal(randn<float>(8, 8, 0.5, a), randn<float>(8, 8, 0.5, b)));
  EXPECT_THROW(randn<double>(1, 1, -1.0, r), std::invalid_argument);
}

TEST(Randn, MonteCarloMoments) {
  Rng rng(2024);
  auto x = randn<double>(1000, 100, 1.0, rng);
  double mean = 0, sq = 0;
  for (double v : x.values()) mean += v;
  mean /= double(x.size());
  for (double v : x.values()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / double(x.size() - 1));
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_GE(sd, 0.98);
  EXPECT_LE(sd, 1.02);
}

TEST(Rng, SplitIsIndependentOfParentPosition) {
  Rng a(5);
  Rng c1 = a.split(3);
  a.next_u64();
  EXPECT_EQ(a.split(3), c1);
  EXPECT_NE(a.split(3).next_u64(), a.split(4).next_u64());
  for (int i = 0; i < 1000; ++i) EXPECT_LT(a.below(7), 7u);
}

// ---- determinism --------------------------------------------------------------------------

TEST(Determinism, OpsAreBitwiseRepeatable) {
  auto run = [] {
    Graph<float> g;
    auto x = g.leaf(random_tensor<float>(6, 8, 1));
    auto w = g.leaf(random_tensor<float>(8, 8, 2));
    auto gain = g.leaf(Tensor2<float>(1, 8, 1.0f));
    auto bias = g.leaf(Tensor2<float>(1, 8));
    auto h = layer_norm(gelu(matmul(x, w)), gain, bias);
    auto a = multihead_attention(h, h, h, 2, 3, true);
    auto loss = add(frobenius_sq(softmax_rows(a)), sum(sigmoid(h)));
    g.backward(loss);
    return std::make_pair(loss.value(), g.grad(w));
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  EXPECT_TRUE(bitwise_equal(l1, l2));
  EXPECT_TRUE(bitwise_equal(g1, g2));
}

// ---- gradient checks ------------------------------------------------------------------------


TEST(GradCheck, FrobeniusExample) {
  ScalarFn<double> f = [](Graph<double>&, std::span<const Var<double>> in) { return frobenius_sq(in[0]); };
  EXPECT_LT(grad_check<double>(f, {random_tensor<double>(3, 3, 1)}, 1e-3).max_rel_error, 1e-6);
}

TEST(GradCheck, CrossEntropyExample) {
  std::vector<std::int32_t> t{1, 4, 6, 0};
  std::vector<std::uint8_t> m{1, 1, 1, 1};
  ScalarFn<double> f = [&](Graph<double>&, std::span<const Var<double>> in) {
    return cross_entropy_logits(in[0], std::span<const std::int32_t>(t), std::span<const std::uint8_t>(m));
  };
  EXPECT_LT(grad_check<double>(f, {random_tensor<double>(4, 7, 2)}, 1e-5).max_rel_error, 1e-5);
}

TEST(GradCheck, EveryOp64Bit) {
  for (const auto& c : op_cases()) {
    std::vector<Tensor2<double>> inputs;
    std::uint64_t seed = 100;
    for (auto [r, k] : c.shapes) inputs.push_back(random_tensor<double>(r, k, seed++));
    const auto res = grad_check<double>(c.f64, inputs, 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-5) << c.name;
  }
}

TEST(GradCheck, EveryOp32Bit) {
  for (const auto& c : op_cases()) {
    std::vector<Tensor2<float>> inputs;
    std::uint64_t seed = 100;
    for (auto [r, k] : c.shapes) inputs.push_back(random_tensor<float>(r, k, seed++));
    const auto res = grad_check_mixed(c.f32, c.f64, inputs, 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-2) << c.name;
  }
}

TEST(GradCheck, EveryOp32BitFiniteDifferencesInFloat) {
  for (const auto& c : op_cases()) {
    std::vector<Tensor2<float>> inputs;
    std::uint64_t seed = 100;
    for (auto [r, k] : c.shapes) inputs.push_back(random_tensor<float>(r, k, seed++));
    const auto res = grad_check<float>(c.f32, inputs, 1e-2f);
    EXPECT_LT(res.max_rel_error, 1e-2) << c.name << " analytic " << res.analytic << " numeric " << res.numeric;
  }
}
