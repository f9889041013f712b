#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "aghmn/autodiff.hpp"
#include "test_support.hpp"

using namespace aghmn;
using namespace aghmn::testkit;
using ad::Var;

namespace {

constexpr double kTol = 1e-4;
constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct Primitive {
  const char* name;
  std::vector<Shape> inputs;
  std::function<Var(const std::vector<Var>&)> fn;
  double lo = -1.0;
  double hi = 1.0;
};

std::vector<Primitive> primitives() {
  using In = const std::vector<Var>&;
  static const std::vector<std::size_t> ids{2, 0, 2, 3};
  return {
      {"matmul_mm", {{3, 4}, {4, 2}}, [](In v) { return ad::matmul(v[0], v[1]); }},
      {"matmul_mv", {{3, 4}, {4}}, [](In v) { return ad::matmul(v[0], v[1]); }},
      {"matmul_vm", {{4}, {4, 3}}, [](In v) { return ad::matmul(v[0], v[1]); }},
      {"add", {{5}, {5}}, [](In v) { return v[0] + v[1]; }},
      {"sub", {{2, 3}, {2, 3}}, [](In v) { return v[0] - v[1]; }},
      {"mul", {{4}, {4}}, [](In v) { return v[0] * v[1]; }},
      {"scalar_mul", {{4}}, [](In v) { return ad::scalar_mul(v[0], -1.7); }},
      {"scale_by", {{4}, {1}}, [](In v) { return ad::scale_by(v[0], v[1]); }},
      {"concat_vec", {{2}, {3}}, [](In v) { return ad::concat(v[0], v[1]); }},
      {"concat_mat", {{3, 2}, {3, 1}}, [](In v) { return ad::concat(v[0], v[1]); }},
      {"tanh", {{6}}, [](In v) { return ad::tanh(v[0]); }, -2.0, 2.0},
      {"sigmoid", {{6}}, [](In v) { return ad::sigmoid(v[0]); }, -3.0, 3.0},
      {"relu", {{8}}, [](In v) { return ad::relu(v[0]); }},
      {"softmax_vec", {{5}}, [](In v) { return ad::softmax(v[0]); }, -2.0, 2.0},
      {"softmax_mat", {{3, 4}}, [](In v) { return ad::softmax(v[0]); }, -2.0, 2.0},
      {"max_over_time", {{5, 3}}, [](In v) { return ad::max_over_time(v[0]); }},
      {"dot", {{4}, {4}}, [](In v) { return ad::dot(v[0], v[1]); }},
      {"embedding", {{4, 3}}, [](In v) { return ad::embedding_lookup(v[0], ids); }},
      {"conv1d", {{6, 3}, {2, 3, 3}, {2}}, [](In v) { return ad::conv1d_valid(v[0], v[1], v[2]); }},
      {"dropout_train", {{10}},
       [](In v) {
         Rng mask(99);
         return ad::dropout(v[0], 0.4, true, mask);
       }},
      {"sum", {{2, 3}}, [](In v) { return ad::sum(v[0]); }},
      {"mean", {{7}}, [](In v) { return ad::mean(v[0]); }},
      {"stack_rows", {{3}, {3}, {3}}, [](In v) { return ad::stack_rows(v); }},
      {"row", {{3, 2}}, [](In v) { return ad::row(v[0], 1); }},
      {"element", {{5}}, [](In v) { return ad::element(v[0], 3); }},
      {"neg_log", {{4}}, [](In v) { return ad::neg_log(v[0], 2, 1e-12); }, 0.1, 1.0},
  };
}

}  // namespace

TEST(AutodiffForward, TanhOfZero) {
  const Var y = ad::tanh(Var::constant(Tensor::vector({0.0, 0.0})));
  EXPECT_EQ(y.value(), Tensor::vector({0.0, 0.0}));
}

TEST(AutodiffForward, SoftmaxOfEqualScoresIsUniform) {
  const Var y = ad::softmax(Var::constant(Tensor::vector({1.0, 1.0, 1.0})));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y.value()[i], 1.0 / 3.0, 1e-15);
}

TEST(AutodiffForward, MaxOverTimeMatchesColumnMax) {
  const Var y = ad::max_over_time(Var::constant(Tensor::matrix(2, 2, {1, 5, 3, 2})));
  EXPECT_EQ(y.value(), Tensor::vector({3.0, 5.0}));

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({1 + rng.below(6), 1 + rng.below(5)}, rng);
    const Var m = ad::max_over_time(Var::constant(x));
    for (std::size_t j = 0; j < x.dim(1); ++j) {
      double best = x.at(0, j);
      for (std::size_t r = 1; r < x.dim(0); ++r) best = std::max(best, x.at(r, j));
      EXPECT_EQ(m.value()[j], best);
    }
  }
}

TEST(AutodiffForward, MaxOverTimeTieRoutesToFirstRow) {
  const Var x = Var::parameter(Tensor::matrix(3, 1, {2.0, 2.0, 1.0}));
  ad::backward(ad::sum(ad::max_over_time(x)));
  EXPECT_EQ(x.grad(), Tensor::matrix(3, 1, {1.0, 0.0, 0.0}));
}

TEST(AutodiffForward, ConvolutionMatchesSlidingWindow) {
  Rng rng(8);
  const Tensor x = random_tensor({5, 2}, rng);
  const Tensor w = random_tensor({3, 2, 2}, rng);
  const Tensor b = random_tensor({3}, rng);
  const Var y = ad::conv1d_valid(Var::constant(x), Var::constant(w), Var::constant(b));
  ASSERT_EQ(y.shape(), (Shape{4, 3}));
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t f = 0; f < 3; ++f) {
      double acc = b[f];
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t c = 0; c < 2; ++c) acc += w[(f * 2 + s) * 2 + c] * x.at(t + s, c);
      EXPECT_NEAR(y.value().at(t, f), acc, 1e-14);
    }
}

TEST(AutodiffBackward, SumGradientIsOnes) {
  const Var x = Var::parameter(Tensor::vector({0.3, -2.0, 7.0}));
  ad::backward(ad::sum(x));
  EXPECT_EQ(x.grad(), Tensor::vector({1.0, 1.0, 1.0}));
}

TEST(AutodiffBackward, SelfDotGradientIsTwiceInput) {
  const Var x = Var::parameter(Tensor::vector({2.0, -1.0}));
  ad::backward(ad::dot(x, x));
  EXPECT_EQ(x.grad(), Tensor::vector({4.0, -2.0}));
}

TEST(AutodiffBackward, NonScalarLossIsContractError) {
  const Var x = Var::parameter(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(ad::backward(ad::tanh(x)), ContractError);
}

TEST(AutodiffBackward, GradShapesMatchValues) {
  ad::ParamSet ps;
  Rng rng(3);
  const Var a = ps.add("a", random_tensor({3, 4}, rng));
  const Var b = ps.add("b", random_tensor({4}, rng));
  const Var h = ad::tanh(ad::matmul(a, b));
  ad::backward(ad::sum(ad::softmax(h)));
  EXPECT_EQ(a.grad().shape(), a.shape());
  EXPECT_EQ(b.grad().shape(), b.shape());
  EXPECT_EQ(h.grad().shape(), h.shape());
}

TEST(AutodiffBackward, RepeatedBackwardDoesNotAccumulateAcrossCalls) {
  const Var x = Var::parameter(Tensor::vector({1.0, 2.0}));
  const Var loss = ad::dot(x, x);
  ad::backward(loss);
  ad::backward(loss);
  EXPECT_EQ(x.grad(), Tensor::vector({2.0, 4.0}));
}

TEST(AutodiffBackward, FrozenEmbeddingRowGetsNoGradient) {
  const Var table = Var::parameter(Tensor::matrix(3, 2, {0, 0, 1, 2, 3, 4}));
  const std::vector<std::size_t> ids{0, 1, 0, 2};
  ad::backward(ad::sum(ad::embedding_lookup(table, ids, 0)));
  EXPECT_EQ(table.grad(), Tensor::matrix(3, 2, {0, 0, 1, 1, 1, 1}));
}

TEST(AutodiffBackward, CorruptionHookBreaksGradient) {
  ad::ParamSet ps;
  Rng rng(2);
  ps.add("a", random_tensor({4}, rng));
  const auto build = [&] { return ad::sum(ad::tanh(ps.at("a"))); };
  EXPECT_LT(gradient_error(ps, build), kTol);
  ad::debug::corrupt_backward(ad::OpKind::tanh, 1.01);
  const double corrupted = gradient_error(ps, build);
  ad::debug::corrupt_backward(std::nullopt);
  EXPECT_GT(corrupted, kTol);
}

TEST(AutodiffErrors, ShapeMismatchNamesOpAndExtents) {
  const Var a = Var::constant(Tensor({2, 3}));
  const Var b = Var::constant(Tensor({2, 3}));
  try {
    ad::matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
    EXPECT_NE(msg.find('3'), std::string::npos) << msg;
  }
  EXPECT_THROW(ad::add(Var::constant(Tensor({3})), Var::constant(Tensor({4}))), DimensionError);
  EXPECT_THROW(ad::dot(Var::constant(Tensor({3})), Var::constant(Tensor({2}))), DimensionError);
  EXPECT_THROW(ad::max_over_time(Var::constant(Tensor({3}))), DimensionError);
  EXPECT_THROW(ad::scale_by(Var::constant(Tensor({3})), Var::constant(Tensor({2}))), DimensionError);
  EXPECT_THROW(ad::conv1d_valid(Var::constant(Tensor({2, 3})), Var::constant(Tensor({1, 3, 3})),
                                Var::constant(Tensor({1}))),
               DimensionError);
  const std::vector<std::size_t> bad{5};
  EXPECT_THROW(ad::embedding_lookup(Var::constant(Tensor({3, 2})), bad), DimensionError);
}

TEST(AutodiffErrors, TensorRejectsEmptyExtents) {
  EXPECT_THROW(Tensor(Shape{}), DimensionError);
  EXPECT_THROW(Tensor(Shape{2, 0}), DimensionError);
  EXPECT_THROW(Tensor(Shape{2}, std::vector<double>{1.0}), DimensionError);
}

TEST(FiniteDifference, SquareAtThree) {
  ad::ParamSet ps;
  ps.add("theta", Tensor::scalar(3.0));
  const auto g = ad::finite_diff_grad(
      [](const ad::ParamSet& p) {
        const double t = p.at("theta").value()[0];
        return t * t;
      },
      ps, 1e-5);
  EXPECT_NEAR(g.at("theta")[0], 6.0, 1e-6);
  EXPECT_EQ(ps.at("theta").value()[0], 3.0);
}

TEST(FiniteDifference, SigmoidSlopeAtZero) {
  ad::ParamSet ps;
  ps.add("theta", Tensor::scalar(0.0));
  const auto g = ad::finite_diff_grad(
      [](const ad::ParamSet& p) { return ad::sigmoid(p.at("theta")).value()[0]; }, ps);
  EXPECT_NEAR(g.at("theta")[0], 0.25, 1e-6);
}

TEST(FiniteDifference, RejectsNonPositiveStep) {
  ad::ParamSet ps;
  ps.add("theta", Tensor::scalar(0.0));
  EXPECT_THROW(ad::finite_diff_grad([](const ad::ParamSet&) { return 0.0; }, ps, 0.0), ContractError);
}

TEST(AutodiffGradients, EveryPrimitiveMatchesFiniteDifferences) {
  for (const auto& prim : primitives()) {
    for (std::uint64_t seed : kSeeds) {
      ad::ParamSet ps;
      Rng rng(seed);
      std::vector<Var> leaves;
      for (std::size_t i = 0; i < prim.inputs.size(); ++i) {
        leaves.push_back(ps.add("in" + std::to_string(i), random_tensor(prim.inputs[i], rng, prim.lo, prim.hi)));
      }
      const auto build = [&] { return project(prim.fn(leaves), seed + 100); };
      EXPECT_LT(gradient_error(ps, build), kTol) << prim.name << " seed " << seed;
    }
  }
}

TEST(AutodiffProperties, SoftmaxIsNormalizedAndNonnegative) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor x = random_tensor({1 + rng.below(4), 1 + rng.below(9)}, rng, -30.0, 30.0);
    const Var y = ad::softmax(Var::constant(x));
    for (std::size_t r = 0; r < x.dim(0); ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < x.dim(1); ++j) {
        EXPECT_GE(y.value().at(r, j), 0.0);
        total += y.value().at(r, j);
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(AutodiffProperties, SharedSubexpressionEqualsDuplicatedTree) {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor w = random_tensor({3, 3}, rng);
    const Tensor xv = random_tensor({3}, rng);

    const Var w1 = Var::parameter(w), x1 = Var::parameter(xv);
    const Var shared = ad::tanh(ad::matmul(w1, x1));
    ad::backward(ad::dot(shared, ad::sigmoid(shared)) + ad::sum(shared * shared));

    const Var w2 = Var::parameter(w), x2 = Var::parameter(xv);
    const auto fresh = [&] { return ad::tanh(ad::matmul(w2, x2)); };
    ad::backward(ad::dot(fresh(), ad::sigmoid(fresh())) + ad::sum(fresh() * fresh()));

    EXPECT_LT(max_abs_diff(w1.grad(), w2.grad()), 1e-13);
    EXPECT_LT(max_abs_diff(x1.grad(), x2.grad()), 1e-13);
  }
}

TEST(AutodiffProperties, DropoutIdentityCases) {
  Rng rng(5);
  const Var x = Var::parameter(random_tensor({12}, rng));
  Rng drop(1);
  EXPECT_EQ(ad::dropout(x, 0.5, false, drop).value(), x.value());
  EXPECT_EQ(ad::dropout(x, 0.0, true, drop).value(), x.value());
  EXPECT_EQ(ad::dropout(x, 0.0, false, drop).value(), x.value());
  EXPECT_THROW(ad::dropout(x, 1.0, true, drop), ContractError);
  EXPECT_THROW(ad::dropout(x, -0.1, true, drop), ContractError);
}

TEST(AutodiffProperties, DropoutKeepsOrZeroesWithInvertedScale) {
  const Var x = Var::constant(Tensor(Shape{4000}, 1.0));
  Rng drop(6);
  const Var y = ad::dropout(x, 0.3, true, drop);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    if (y.value()[i] == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(y.value()[i], 1.0 / 0.7);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 4000.0, 0.3, 0.03);
}

TEST(AutodiffProperties, ForwardValuesStayFinite) {
  Rng rng(31);
  for (const auto& prim : primitives()) {
    std::vector<Var> leaves;
    for (const auto& shape : prim.inputs) leaves.push_back(Var::constant(random_tensor(shape, rng, prim.lo, prim.hi)));
    EXPECT_TRUE(prim.fn(leaves).value().all_finite()) << prim.name;
  }
}

TEST(ParamSetTest, NamesAreUniqueAndOrdered) {
  ad::ParamSet ps(42);
  ps.add("b", Tensor({2}));
  ps.add("a", Tensor({3}));
  EXPECT_THROW(ps.add("a", Tensor({1})), ContractError);
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps.entries()[0].first, "b");
  EXPECT_EQ(ps.scalar_count(), 5u);
  EXPECT_EQ(ps.seed(), 42u);
  EXPECT_THROW(ps.at("c"), ContractError);
}

TEST(ParamSetTest, SnapshotRestoreRoundTrip) {
  ad::ParamSet ps;
  Rng rng(9);
  ps.add("w", random_tensor({2, 2}, rng));
  const auto snap = ps.snapshot();
  Var w = ps.at("w");
  w.mutable_value().fill(0.0);
  ps.restore(snap);
  EXPECT_EQ(ps.at("w").value(), snap.at("w"));
  ad::GradMap wrong{{"w", Tensor({3})}};
  EXPECT_THROW(ps.restore(wrong), DimensionError);
}
