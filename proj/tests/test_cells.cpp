#include <gtest/gtest.h>

#include <algorithm>

#include "aghmn/cells.hpp"
#include "test_support.hpp"

using namespace aghmn;
using namespace aghmn::testkit;
using ad::Var;

namespace {

cells::GruParams zero_gru(std::size_t in, std::size_t h) {
  return cells::GruParams::from_tensors({Tensor({h, in}), Tensor({h, in}), Tensor({h, in}), Tensor({h, h}),
                                         Tensor({h, h}), Tensor({h, h}), Tensor({h}), Tensor({h}), Tensor({h})});
}

cells::AgruParams zero_agru(std::size_t in, std::size_t h) {
  return cells::AgruParams::from_tensors(
      {Tensor({h, in}), Tensor({h, in}), Tensor({h, h}), Tensor({h, h}), Tensor({h}), Tensor({h})});
}

Var scalar(double a) { return Var::constant(Tensor::scalar(a)); }

}  // namespace

TEST(GruStep, ZeroParamsZeroStateGivesZero) {
  const auto p = zero_gru(3, 2);
  const Var h = cells::gru_step(cvar({0.4, -1.0, 2.0}), cells::zero_state(2), p);
  EXPECT_EQ(to_vec(h.value()), (Vec{0.0, 0.0}));
}

TEST(GruStep, ZeroParamsHalvesPreviousState) {
  const auto p = zero_gru(3, 2);
  const Var h = cells::gru_step(cvar({0.4, -1.0, 2.0}), cvar({0.8, -0.6}), p);
  EXPECT_NEAR(h.value()[0], 0.4, 1e-15);
  EXPECT_NEAR(h.value()[1], -0.3, 1e-15);
}

TEST(GruStep, MatchesScalarOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t in = 1 + rng.below(5), hidden = 1 + rng.below(5);
    const auto g = ScalarGru::random(in, hidden, rng);
    const Vec x = random_vec(in, rng), hp = random_vec(hidden, rng);
    const Var h = cells::gru_step(cvar(x), cvar(hp), cells::GruParams::from_tensors(g.tensors()));
    EXPECT_LT(linf(to_vec(h.value()), g.step(x, hp)), 1e-12);
  }
}

TEST(GruStep, DimensionMismatch) {
  const auto p = zero_gru(3, 2);
  EXPECT_THROW(cells::gru_step(cvar({1.0, 2.0}), cells::zero_state(2), p), DimensionError);
  EXPECT_THROW(cells::gru_step(cvar({1.0, 2.0, 3.0}), cells::zero_state(3), p), DimensionError);
  EXPECT_ANY_THROW(cells::GruParams::from_tensors({Tensor({2, 3}), Tensor({2, 3}), Tensor({2, 3}), Tensor({2, 2}),
                                                   Tensor({2, 2}), Tensor({3, 3}), Tensor({2}), Tensor({2}),
                                                   Tensor({2})}));
}

TEST(GruParamsTest, InitWithinBound) {
  ad::ParamSet ps;
  Rng rng(3);
  const auto p = cells::GruParams::create(ps, "g", 7, 16, rng);
  EXPECT_EQ(ps.size(), 9u);
  EXPECT_TRUE(ps.contains("g.Uh"));
  for (const auto& [name, v] : ps.entries())
    for (double x : v.value().data()) EXPECT_LE(std::abs(x), 0.25) << name;
  EXPECT_EQ(p.input_size(), 7u);
  EXPECT_EQ(p.hidden_size(), 16u);
}

TEST(BiGru, LengthOneSymmetric) {
  Rng rng(5);
  const auto g = ScalarGru::random(3, 4, rng);
  const auto pf = cells::GruParams::from_tensors(g.tensors());
  const auto pb = cells::GruParams::from_tensors(g.tensors());
  const auto seq = const_vars({random_vec(3, rng)});
  const auto states = cells::bigru_encode(seq, pf, pb);
  ASSERT_EQ(states.fwd.size(), 1u);
  EXPECT_EQ(states.fwd[0].value(), states.bwd[0].value());
}

TEST(BiGru, ForwardStatesAreRunningFold) {
  Rng rng(6);
  const auto gf = ScalarGru::random(3, 4, rng);
  const auto gb = ScalarGru::random(3, 4, rng);
  std::vector<Vec> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(random_vec(3, rng));
  const auto states =
      cells::bigru_encode(const_vars(xs), cells::GruParams::from_tensors(gf.tensors()),
                          cells::GruParams::from_tensors(gb.tensors()));
  const auto oracle = gf.run(xs);
  ASSERT_EQ(states.fwd.size(), xs.size());
  ASSERT_EQ(states.bwd.size(), xs.size());
  for (std::size_t n = 0; n < xs.size(); ++n) EXPECT_LT(linf(to_vec(states.fwd[n].value()), oracle[n]), 1e-12);
}

TEST(BiGru, BackwardStatesAreReversedForwardOfReversedSequence) {
  Rng rng(7);
  const auto gf = ScalarGru::random(2, 3, rng);
  const auto gb = ScalarGru::random(2, 3, rng);
  std::vector<Vec> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(random_vec(2, rng));
  std::vector<Vec> rev(xs.rbegin(), xs.rend());
  const auto pf = cells::GruParams::from_tensors(gf.tensors());
  const auto pb = cells::GruParams::from_tensors(gb.tensors());
  const auto a = cells::bigru_encode(const_vars(xs), pf, pb);
  const auto b = cells::bigru_encode(const_vars(rev), pb, pf);
  for (std::size_t n = 0; n < xs.size(); ++n) {
    EXPECT_EQ(a.bwd[n].value(), b.fwd[xs.size() - 1 - n].value());
    EXPECT_EQ(a.fwd[n].value(), b.bwd[xs.size() - 1 - n].value());
  }
}

TEST(BiGru, EmptySequenceIsContractError) {
  const auto p = zero_gru(2, 2);
  EXPECT_THROW(cells::bigru_encode({}, p, p), ContractError);
  EXPECT_THROW(cells::gru_encode({}, p), ContractError);
}

TEST(AgruStep, EndpointsAreExact) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = ScalarAgru::random(4, 3, rng);
    const auto p = cells::AgruParams::from_tensors(g.tensors());
    const Var m = cvar(random_vec(4, rng)), hp = cvar(random_vec(3, rng));
    const Var h0 = cells::agru_step(m, scalar(0.0), hp, p);
    EXPECT_EQ(h0.value(), hp.value());
    const Var h1 = cells::agru_step(m, scalar(1.0), hp, p);
    EXPECT_EQ(h1.value(), cells::agru_candidate(m, hp, p).value());
    const Vec cand = g.candidate(to_vec(m.value()), to_vec(hp.value()));
    EXPECT_LT(linf(to_vec(h1.value()), cand), 1e-12);
  }
}

TEST(AgruStep, HalfWeightZeroParamsHalvesState) {
  const auto p = zero_agru(2, 3);
  const Var h = cells::agru_step(cvar({1.0, -1.0}), scalar(0.5), cvar({0.2, -0.4, 1.0}), p);
  EXPECT_EQ(to_vec(h.value()), (Vec{0.1, -0.2, 0.5}));
}

TEST(AgruStep, WeightOutsideUnitIntervalIsContractError) {
  const auto p = zero_agru(2, 2);
  EXPECT_THROW(cells::agru_step(cvar({1, 1}), scalar(1.5), cvar({0, 0}), p), ContractError);
  EXPECT_THROW(cells::agru_step(cvar({1, 1}), scalar(-0.01), cvar({0, 0}), p), ContractError);
}

TEST(AgruStep, MatchesScalarOracle) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = ScalarAgru::random(3, 4, rng);
    const Vec m = random_vec(3, rng), hp = random_vec(4, rng);
    const double a = rng.uniform();
    const Var h = cells::agru_step(cvar(m), scalar(a), cvar(hp), cells::AgruParams::from_tensors(g.tensors()));
    EXPECT_LT(linf(to_vec(h.value()), g.step(m, a, hp)), 1e-12);
  }
}

TEST(AgruSummarize, ZeroWeightsGiveZeroContext) {
  Rng rng(14);
  const auto g = ScalarAgru::random(3, 2, rng);
  const auto mems = const_vars({random_vec(3, rng), random_vec(3, rng), random_vec(3, rng)});
  const Var c = cells::agru_summarize(mems, cvar({0.0, 0.0, 0.0}), cells::AgruParams::from_tensors(g.tensors()));
  EXPECT_EQ(to_vec(c.value()), (Vec{0.0, 0.0}));
}

TEST(AgruSummarize, SingleMemoryFullWeightIsCandidate) {
  Rng rng(15);
  const auto g = ScalarAgru::random(3, 2, rng);
  const Vec m = random_vec(3, rng);
  const Var c = cells::agru_summarize(const_vars({m}), cvar({1.0}), cells::AgruParams::from_tensors(g.tensors()));
  EXPECT_LT(linf(to_vec(c.value()), g.candidate(m, Vec(2, 0.0))), 1e-15);
}

TEST(AgruSummarize, MatchesUnrolledLoop) {
  Rng rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = ScalarAgru::random(4, 3, rng);
    const std::vector<Vec> mems{random_vec(4, rng), random_vec(4, rng), random_vec(4, rng)};
    const Vec w = random_simplex(3, rng);
    const Vec h1 = g.step(mems[0], w[0], Vec(3, 0.0));
    const Vec h2 = g.step(mems[1], w[1], h1);
    const Vec h3 = g.step(mems[2], w[2], h2);
    const Var c = cells::agru_summarize(const_vars(mems), cvar(w), cells::AgruParams::from_tensors(g.tensors()));
    EXPECT_LT(linf(to_vec(c.value()), h3), 1e-12);
  }
}

TEST(AgruSummarize, ErrorCases) {
  const auto p = zero_agru(2, 2);
  EXPECT_THROW(cells::agru_summarize({}, cvar({1.0}), p), ContractError);
  const auto mems = const_vars({{1, 2}, {3, 4}});
  EXPECT_THROW(cells::agru_summarize(mems, cvar({1.0}), p), DimensionError);
}

TEST(BiAgru, PalindromeWithSharedParamsIsSymmetric) {
  Rng rng(17);
  const auto g = ScalarAgru::random(3, 3, rng);
  const Vec a = random_vec(3, rng), b = random_vec(3, rng);
  const auto mems = const_vars({a, b, a});
  const auto p = cells::AgruParams::from_tensors(g.tensors());
  const auto ctx = cells::biagru_summarize(mems, cvar({0.3, 0.4, 0.3}), p, p);
  EXPECT_EQ(ctx.forward.value(), ctx.backward.value());
}

TEST(BiAgru, BackwardIsSummaryOfReversedInputs) {
  Rng rng(18);
  const auto gf = ScalarAgru::random(3, 2, rng);
  const auto gb = ScalarAgru::random(3, 2, rng);
  const std::vector<Vec> mems{random_vec(3, rng), random_vec(3, rng), random_vec(3, rng), random_vec(3, rng)};
  const Vec w = random_simplex(4, rng);
  const auto pf = cells::AgruParams::from_tensors(gf.tensors());
  const auto pb = cells::AgruParams::from_tensors(gb.tensors());
  const auto ctx = cells::biagru_summarize(const_vars(mems), cvar(w), pf, pb);
  const std::vector<Vec> rmems(mems.rbegin(), mems.rend());
  const Vec rw(w.rbegin(), w.rend());
  EXPECT_EQ(ctx.backward.value(), cells::agru_summarize(const_vars(rmems), cvar(rw), pb).value());
  EXPECT_EQ(ctx.forward.value(), cells::agru_summarize(const_vars(mems), cvar(w), pf).value());
}

TEST(BiAgru, MatchesUnrolledOracles) {
  Rng rng(19);
  for (int trial = 0; trial < 30; ++trial) {
    const auto gf = ScalarAgru::random(3, 4, rng);
    const auto gb = ScalarAgru::random(3, 4, rng);
    std::vector<Vec> mems;
    for (int k = 0; k < 4; ++k) mems.push_back(random_vec(3, rng));
    const Vec w = random_simplex(4, rng);
    Vec hf(4, 0.0), hb(4, 0.0);
    for (std::size_t k = 0; k < 4; ++k) hf = gf.step(mems[k], w[k], hf);
    for (std::size_t k = 4; k-- > 0;) hb = gb.step(mems[k], w[k], hb);
    const auto ctx = cells::biagru_summarize(const_vars(mems), cvar(w), cells::AgruParams::from_tensors(gf.tensors()),
                                             cells::AgruParams::from_tensors(gb.tensors()));
    EXPECT_LT(linf(to_vec(ctx.forward.value()), hf), 1e-12);
    EXPECT_LT(linf(to_vec(ctx.backward.value()), hb), 1e-12);
  }
}

TEST(CellProperties, JointPermutationChangesAgruSummary) {
  Rng rng(20);
  int changed = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const auto g = ScalarAgru::random(4, 4, rng);
    std::vector<Vec> mems;
    for (int k = 0; k < 3; ++k) mems.push_back(random_vec(4, rng));
    const Vec w = random_simplex(3, rng);
    std::vector<std::size_t> perm{2, 0, 1};
    std::vector<Vec> pm;
    Vec pw;
    for (auto i : perm) {
      pm.push_back(mems[i]);
      pw.push_back(w[i]);
    }
    const auto p = cells::AgruParams::from_tensors(g.tensors());
    const Vec c1 = to_vec(cells::agru_summarize(const_vars(mems), cvar(w), p).value());
    const Vec c2 = to_vec(cells::agru_summarize(const_vars(pm), cvar(pw), p).value());
    if (linf(c1, c2) > 1e-8) ++changed;
  }
  EXPECT_GE(changed, 99);
}

TEST(CellProperties, SummaryIsContinuousInWeights) {
  Rng rng(21);
  const auto g = ScalarAgru::random(3, 3, rng);
  const auto p = cells::AgruParams::from_tensors(g.tensors());
  std::vector<Vec> mems;
  for (int k = 0; k < 4; ++k) mems.push_back(random_vec(3, rng));
  const Vec w = random_simplex(4, rng);
  const Vec base = to_vec(cells::agru_summarize(const_vars(mems), cvar(w), p).value());
  double prev_ratio = -1.0;
  for (double eps : {1e-3, 1e-4, 1e-5, 1e-6}) {
    Vec pw = w;
    pw[1] += eps;
    const Vec moved = to_vec(cells::agru_summarize(const_vars(mems), cvar(pw), p).value());
    const double ratio = linf(base, moved) / eps;
    EXPECT_LT(ratio, 10.0);
    EXPECT_GT(ratio, 0.0);
    if (prev_ratio > 0) {
      EXPECT_NEAR(ratio, prev_ratio, 0.05 * prev_ratio + 1e-6);
    }
    prev_ratio = ratio;
  }
}

TEST(CellProperties, GradientsReachMemoriesAndWeights) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    ad::ParamSet ps;
    const auto g = ScalarAgru::random(3, 3, rng);
    std::vector<Var> mems;
    for (int k = 0; k < 4; ++k) mems.push_back(ps.add("m" + std::to_string(k), random_tensor({3}, rng)));
    const Var w = ps.add("w", Tensor::vector(random_simplex(4, rng)));
    const auto pf = cells::AgruParams::from_tensors(g.tensors());
    const auto pb = cells::AgruParams::from_tensors(ScalarAgru::random(3, 3, rng).tensors());
    EXPECT_LT(gradient_error(ps, [&] { return project(cells::agru_summarize(mems, w, pf), seed); }), 1e-4);
    EXPECT_LT(gradient_error(ps,
                             [&] {
                               const auto ctx = cells::biagru_summarize(mems, w, pf, pb);
                               return project(ad::concat(ctx.forward, ctx.backward), seed);
                             }),
              1e-4);
    EXPECT_GT(std::abs(w.grad()[0]) + std::abs(w.grad()[3]), 0.0);
  }
}

TEST(CellProperties, GradientsReachAllCellWeights) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed + 40);
    ad::ParamSet ps;
    const auto gp = cells::GruParams::create(ps, "gru", 3, 4, rng);
    const auto ap = cells::AgruParams::create(ps, "agru", 4, 4, rng);
    std::vector<Var> seq;
    for (int n = 0; n < 3; ++n) seq.push_back(Var::constant(random_tensor({3}, rng)));
    const Var w = Var::constant(Tensor::vector(random_simplex(3, rng)));
    const auto build = [&] {
      const auto states = cells::bigru_encode(seq, gp, gp);
      return project(cells::agru_summarize(states.fwd, w, ap), seed);
    };
    EXPECT_LT(gradient_error(ps, build), 1e-4);
  }
}
