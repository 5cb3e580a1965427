#include <gtest/gtest.h>

#include <random>

#include "bigroc/pgd.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bigroc;
using bigroc::testing::linear_classifier;
using bigroc::testing::random_image;
using bigroc::testing::small_cnn;

namespace {

PGDConfig cfg(double alpha, int steps) {
  PGDConfig c;
  c.alpha = alpha;
  c.steps = steps;
  return c;
}

}  // namespace

TEST(TargetedPgd, ZeroEpsilonAndZeroStepsReturnInput) {
  auto clf = small_cnn<float>(1);
  std::mt19937_64 rng(2);
  Vec<float> x = random_image<float>(clf.input_shape().size(), rng);
  auto [a, ta] = targeted_pgd(clf, x, 1, ThreatModel(Norm::L2, 0.0), cfg(0.5, 10));
  EXPECT_TRUE((a.array() == x.array()).all());
  EXPECT_EQ(ta.final_norm, 0.0);
  auto [b, tb] = targeted_pgd(clf, x, 1, ThreatModel(Norm::L2, 3.0), cfg(0.5, 0));
  EXPECT_TRUE((b.array() == x.array()).all());
  EXPECT_EQ(tb.losses.size(), 1u);
}

TEST(TargetedPgd, TraceLengthAndFeasibility) {
  auto clf = small_cnn<double>(3);
  std::mt19937_64 rng(4);
  Vec<double> x = random_image<double>(clf.input_shape().size(), rng);
  for (Norm n : {Norm::L2, Norm::Linf}) {
    const double eps = n == Norm::L2 ? 1.0 : 0.05;
    auto [out, tr] = targeted_pgd(clf, x, 2, ThreatModel(n, eps), cfg(eps / 2, 12));
    ASSERT_EQ(tr.losses.size(), 13u);
    ASSERT_EQ(tr.norms.size(), 13u);
    for (double v : tr.norms) EXPECT_LE(v, eps * (1 + 1e-6));
    EXPECT_LE(tr.final_norm, eps * (1 + 1e-6));
    EXPECT_EQ(tr.returned_iterate, 12);
    EXPECT_LE(out.maxCoeff(), 1.0);
    EXPECT_GE(out.minCoeff(), -1.0);
    EXPECT_LT(tr.losses.back(), tr.losses.front());
  }
}

TEST(TargetedPgd, ClampHappensAfterProjection) {
  // Image sitting on the upper range edge: any positive step is clamped away,
  // so the applied perturbation can be shorter than epsilon.
  Eigen::MatrixXd W(2, 2);
  W << 0.0, 0.0, 1.0, 1.0;
  auto clf = linear_classifier<double>(W, Eigen::VectorXd::Zero(2), PixelRange(0.0, 1.0));
  Vec<double> x(2);
  x << 1.0, 0.5;
  auto [out, tr] = targeted_pgd(clf, x, 1, ThreatModel(Norm::L2, 0.4), cfg(10.0, 5));
  EXPECT_EQ(out[0], 1.0);
  EXPECT_GT(out[1], 0.75);
  EXPECT_LT(tr.final_norm, 0.4 - 0.05);
  for (double v : tr.norms) EXPECT_LE(v, 0.4 * (1 + 1e-6));
}

TEST(TargetedPgd, ReproducibleWithRandomInit) {
  auto clf = small_cnn<float>(5);
  std::mt19937_64 rng(6);
  Vec<float> x = random_image<float>(clf.input_shape().size(), rng);
  PGDConfig c = cfg(0.2, 5);
  c.init = PGDInit::UniformBall;
  c.seed = 42;
  const ThreatModel tm(Norm::L2, 1.0);
  auto [a, ta] = targeted_pgd(clf, x, 3, tm, c);
  auto [b, tb] = targeted_pgd(clf, x, 3, tm, c);
  EXPECT_TRUE((a.array() == b.array()).all());
  EXPECT_EQ(ta.losses, tb.losses);
  c.seed = 43;
  auto [d, td] = targeted_pgd(clf, x, 3, tm, c);
  EXPECT_FALSE((a.array() == d.array()).all());
  EXPECT_LE(td.norms.front(), 1.0 * (1 + 1e-6));
}

TEST(TargetedPgd, BestIterateNeverWorseThanStart) {
  auto clf = small_cnn<double>(7);
  std::mt19937_64 rng(8);
  for (int t = 0; t < 5; ++t) {
    Vec<double> x = random_image<double>(clf.input_shape().size(), rng);
    PGDConfig c = cfg(50.0, 6);  // deliberately oversized raw step
    c.return_best_iterate = true;
    auto [out, tr] = targeted_pgd(clf, x, t % 5, ThreatModel(Norm::L2, 2.0), c);
    const double start = nn::cross_entropy(clf.logits(x), t % 5);
    const double got = nn::cross_entropy(clf.logits(out), t % 5);
    EXPECT_LE(got, start);
    EXPECT_DOUBLE_EQ(got, tr.losses[tr.returned_iterate]);
    EXPECT_DOUBLE_EQ(got, *std::min_element(tr.losses.begin(), tr.losses.end()));
  }
}

TEST(TargetedPgd, ToyMatchesGridOptimum) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  for (int inst = 0; inst < 5; ++inst) {
    Eigen::MatrixXd W(3, 2);
    for (auto& v : W.reshaped()) v = nd(rng);
    Eigen::VectorXd b(3);
    for (auto& v : b) v = nd(rng);
    auto clf = linear_classifier<double>(W, b, PixelRange(-10.0, 10.0));
    Vec<double> x(2);
    x << nd(rng), nd(rng);
    auto [out, tr] = targeted_pgd(clf, x, 0, ThreatModel(Norm::L2, 1.0), cfg(1.0, 50));
    const double p = nn::softmax(clf.logits(out))[0];
    const double best = oracle::grid_max_target_prob(W, b, Eigen::Vector2d(x[0], x[1]), 0, 1.0, 200, 2000);
    EXPECT_NEAR(p, best, 1e-3);
  }
}

TEST(TargetedPgd, AbortsOnNonFiniteGradient) {
  int calls = 0;
  Objective<double> f = [&](const Vec<double>& x, Vec<double>* g) {
    ++calls;
    if (g) {
      *g = Vec<double>::Ones(x.size());
      if (calls == 4) (*g)[1] = std::nan("");
    }
    return x.sum();
  };
  Vec<double> x = Vec<double>::Zero(3);
  auto [out, tr] = pgd_minimize<double>(f, x, ThreatModel(Norm::L2, 10.0), PixelRange(-5, 5), cfg(0.1, 10));
  EXPECT_TRUE(tr.aborted);
  EXPECT_NE(tr.message.find("iteration 3"), std::string::npos);
  EXPECT_EQ(tr.losses.size(), 3u);
  EXPECT_EQ(tr.returned_iterate, 2);
  EXPECT_NEAR(out[0], -0.2, 1e-12);
  EXPECT_TRUE(out.allFinite());
}

TEST(PgdConfig, Validation) {
  const ThreatModel tm(Norm::L2, 1.0);
  Objective<double> f = [](const Vec<double>& x, Vec<double>* g) {
    if (g) *g = x;
    return 0.5 * x.squaredNorm();
  };
  Vec<double> x = Vec<double>::Ones(2) * 0.5;
  EXPECT_THROW(pgd_minimize<double>(f, x, tm, PixelRange(), cfg(0.0, 3)), InvalidArgument);
  EXPECT_THROW(pgd_minimize<double>(f, x, tm, PixelRange(), cfg(0.1, -1)), InvalidArgument);
  EXPECT_NO_THROW(pgd_minimize<double>(f, x, tm, PixelRange(), cfg(0.0, 0)));
  auto s = PGDConfig::refinement_schedule(25.0);
  EXPECT_EQ(s.steps, 7);
  EXPECT_DOUBLE_EQ(s.alpha, 1.5 * 25.0 / 7);
  EXPECT_EQ(s.init, PGDInit::Zero);
  EXPECT_FALSE(s.return_best_iterate);
  EXPECT_EQ(s.resolved_rule(Norm::L2), StepRule::Raw);
  EXPECT_EQ(s.resolved_rule(Norm::Linf), StepRule::Sign);
}

TEST(UntargetedPgd, ZeroEpsilonReturnsInput) {
  auto clf = small_cnn<float>(1);
  std::mt19937_64 rng(2);
  Vec<float> x = random_image<float>(clf.input_shape().size(), rng);
  auto [a, ta] = untargeted_pgd(clf, x, 1, ThreatModel(Norm::Linf, 0.0), cfg(0.5, 10));
  EXPECT_TRUE((a.array() == x.array()).all());
}

TEST(UntargetedPgd, LinearBinaryConvergesToClosedFormWorstCase) {
  Eigen::MatrixXd W(2, 3);
  W << 0.0, 0.0, 0.0, 0.8, -1.1, 0.4;
  auto clf = linear_classifier<double>(W, Eigen::VectorXd::Zero(2), PixelRange(-10, 10));
  Vec<double> x(3);
  x << 0.3, -0.2, 0.7;
  const double eps = 0.75;
  auto [out, tr] = untargeted_pgd(clf, x, 1, ThreatModel(Norm::L2, eps), cfg(0.5, 100));
  Eigen::VectorXd w = W.row(1).transpose();
  Eigen::VectorXd expected = x - eps * w / w.norm();
  EXPECT_LE((out - expected).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_GT(tr.losses.back(), tr.losses.front());
}

TEST(UntargetedPgd, LinfToyIncreasesLoss) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 20; ++i) {
    Eigen::MatrixXd W(3, 2);
    for (auto& v : W.reshaped()) v = nd(rng);
    auto clf = linear_classifier<double>(W, Eigen::VectorXd::Zero(3), PixelRange(-5, 5));
    Vec<double> x(2);
    x << nd(rng), nd(rng);
    auto [out, tr] = untargeted_pgd(clf, x, i % 3, ThreatModel(Norm::Linf, 0.05), cfg(0.01, 10));
    EXPECT_GE(nn::cross_entropy(clf.logits(out), i % 3), nn::cross_entropy(clf.logits(x), i % 3));
    EXPECT_LE((out - x).cwiseAbs().maxCoeff(), 0.05 * (1 + 1e-6));
  }
}

// On two classes, descending CE(., 1) and ascending CE(., 0) point along the
// same direction; with scale-free steps the iterates coincide, and the two
// traces are mirror images: CE0 = -log(1 - exp(-CE1)).
TEST(PgdDuality, TwoClassTargetedEqualsUntargeted) {
  std::mt19937_64 rng(9);
  nn::Network<double> net(nn::Shape{2, 3, 3});
  net.conv(3).act(nn::ActFn::SiLU).gap().linear(2);
  net.init_params(4);
  Classifier<double> clf(std::move(net), PixelRange(-1, 1));
  for (StepRule rule : {StepRule::Normalized, StepRule::Sign}) {
    for (int t = 0; t < 3; ++t) {
      Vec<double> x = random_image<double>(clf.input_shape().size(), rng, -0.5, 0.5);
      PGDConfig c = cfg(0.05, 8);
      c.step_rule = rule;
      const ThreatModel tm(rule == StepRule::Sign ? Norm::Linf : Norm::L2, 0.3);
      auto [a, ta] = targeted_pgd(clf, x, 1, tm, c);
      auto [b, tb] = untargeted_pgd(clf, x, 0, tm, c);
      EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
      ASSERT_EQ(ta.losses.size(), tb.losses.size());
      for (std::size_t i = 0; i < ta.losses.size(); ++i)
        EXPECT_NEAR(tb.losses[i], -std::log(-std::expm1(-ta.losses[i])), 1e-9);
    }
  }
}

TEST(PgdBatch, WorkerCountDoesNotChangeResults) {
  auto clf = small_cnn<float>(12);
  std::mt19937_64 rng(13);
  ImageBatch<float> batch(clf.input_shape(), clf.pixel_range(), 7);
  for (int i = 0; i < 7; ++i) batch.set_image(i, random_image<float>(batch.shape.size(), rng));
  std::vector<int> targets{0, 1, 2, 3, 4, 0, 1};
  PGDConfig c = cfg(0.3, 4);
  c.init = PGDInit::UniformBall;
  c.seed = 5;
  const ThreatModel tm(Norm::L2, 1.0);
  auto r1 = targeted_pgd_batch(clf, batch, targets, tm, c, 1);
  auto r3 = targeted_pgd_batch(clf, batch, targets, tm, c, 3);
  EXPECT_TRUE((r1.images.pixels.array() == r3.images.pixels.array()).all());
  for (int i = 0; i < 7; ++i) EXPECT_EQ(r1.traces[i].losses, r3.traces[i].losses);
  EXPECT_THROW(targeted_pgd_batch(clf, batch, {0, 1}, tm, c), InvalidArgument);
  auto u = untargeted_pgd_batch(clf, batch, targets, tm, c, 2);
  EXPECT_EQ(u.traces.size(), 7u);
}
