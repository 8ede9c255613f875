#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "xlingmap/optim.hpp"

using namespace xlingmap;

namespace {
std::vector<Param*> ptrs(std::vector<Param>& ps) {
  std::vector<Param*> out;
  for (auto& p : ps) out.push_back(&p);
  return out;
}
}  // namespace

TEST(Adam, ZeroGradientLeavesParametersButCountsTheStep) {
  std::vector<Param> ps{Param("a", xlingmap::testing::random_matrix(3, 2, 1))};
  const Matrix before = ps[0].value;
  Adam opt;
  opt.step(ptrs(ps));
  EXPECT_EQ(ps[0].value, before);
  EXPECT_EQ(opt.t, 1u);
}

TEST(Adam, FirstStepOnScalarMatchesHandComputation) {
  std::vector<Param> ps{Param("x", Matrix{{0.0}})};
  ps[0].grad(0, 0) = 1.0;
  Adam opt(AdamConfig{.learning_rate = 0.001});
  opt.step(ptrs(ps));
  // m̂ = 1, v̂ = 1, so the step is α / (1 + eps).
  const double expected = -0.001 / (1.0 + 1e-8);
  EXPECT_NEAR(ps[0].value(0, 0), expected, 1e-15);
  EXPECT_NEAR(ps[0].value(0, 0), -0.001, 1e-10);
}

TEST(Adam, MatchesScalarReferenceOverManySteps) {
  const double alpha = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<Param> ps{Param("x", Matrix{{0.5}})};
  Adam opt(AdamConfig{.learning_rate = alpha});
  double x = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 200; ++t) {
    const double g = std::sin(0.3 * t) + 0.2 * x;
    ps[0].grad(0, 0) = g;
    opt.step(ptrs(ps));
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    x -= alpha * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    ASSERT_NEAR(ps[0].value(0, 0), x, 1e-14) << "step " << t;
  }
}

TEST(Adam, FirstStepMovesAgainstTheGradientSign) {
  Rng rng(5);
  std::vector<Param> ps{Param("w", Matrix(4, 4))};
  ps[0].grad = random_normal(4, 4, rng);
  ps[0].grad(0, 0) = 0.0;
  Adam opt;
  opt.step(ptrs(ps));
  for (std::size_t i = 0; i < 16; ++i) {
    const double g = ps[0].grad.data()[i];
    const double w = ps[0].value.data()[i];
    if (g > 0) {
      EXPECT_LT(w, 0.0);
    }
    if (g < 0) {
      EXPECT_GT(w, 0.0);
    }
    if (g == 0) {
      EXPECT_EQ(w, 0.0);
    }
  }
}

TEST(Adam, StepSizeBoundedByLearningRate) {
  Rng rng(6);
  std::vector<Param> ps{Param("w", random_normal(5, 5, rng))};
  Adam opt(AdamConfig{.learning_rate = 0.001});
  for (int step = 0; step < 1000; ++step) {
    ps[0].grad = random_normal(5, 5, rng, std::exp(rng.uniform(-5.0, 5.0)));
    const Matrix before = ps[0].value;
    opt.step(ptrs(ps));
    // With β1² < β2 the bias-corrected ratio |m̂|/√v̂ stays near or below 1;
    // allow a modest excess for heavy-tailed gradient sequences.
    EXPECT_LE(max_abs(ps[0].value - before), 0.001 * (1.0 + 2.0)) << "step " << step;
  }
}

TEST(Adam, NonFiniteGradientIsReportedByNameAndNothingChanges) {
  std::vector<Param> ps{Param("good", Matrix{{1.0}}), Param("bad", Matrix{{2.0}})};
  ps[0].grad(0, 0) = 1.0;
  ps[1].grad(0, 0) = std::nan("");
  Adam opt;
  try {
    opt.step(ptrs(ps));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'bad'"), std::string::npos);
  }
  EXPECT_EQ(ps[0].value(0, 0), 1.0);
  EXPECT_EQ(opt.t, 0u);
  EXPECT_TRUE(opt.m.empty());
}

TEST(Adam, IdenticalInputsGiveIdenticalTrajectories) {
  auto run = [](int steps) {
    Rng rng(7);
    std::vector<Param> ps{Param("a", random_normal(3, 3, rng)), Param("b", random_normal(1, 3, rng))};
    Adam opt;
    for (int s = 0; s < steps; ++s) {
      for (auto& p : ps) p.grad = random_normal(p.value.rows(), p.value.cols(), rng);
      opt.step(ptrs(ps));
    }
    return std::make_pair(ps, opt);
  };
  const auto a = run(50);
  const auto b = run(50);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Adam, CopiedStateContinuesBitIdentically) {
  Rng rng(8);
  std::vector<Param> ps{Param("a", random_normal(3, 3, rng))};
  Adam opt;
  std::vector<Matrix> grads;
  for (int s = 0; s < 40; ++s) grads.push_back(random_normal(3, 3, rng));
  for (int s = 0; s < 20; ++s) {
    ps[0].grad = grads[s];
    opt.step(ptrs(ps));
  }
  std::vector<Param> ps2 = ps;
  Adam opt2;
  opt2.config = opt.config;
  opt2.t = opt.t;
  opt2.names = opt.names;
  opt2.m = opt.m;
  opt2.v = opt.v;
  for (int s = 20; s < 40; ++s) {
    ps[0].grad = grads[s];
    ps2[0].grad = grads[s];
    opt.step(ptrs(ps));
    opt2.step(ptrs(ps2));
  }
  EXPECT_EQ(ps[0].value, ps2[0].value);
}

TEST(Adam, RejectsAChangedParameterSet) {
  std::vector<Param> ps{Param("a", Matrix(2, 2))};
  Adam opt;
  opt.step(ptrs(ps));
  std::vector<Param> other{Param("b", Matrix(2, 2))};
  EXPECT_THROW(opt.step(ptrs(other)), ShapeError);
}
