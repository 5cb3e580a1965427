#include <gtest/gtest.h>

#include <random>

#include "bigroc/refiner.hpp"
#include "support.hpp"

using namespace bigroc;
using bigroc::testing::linear_classifier;
using bigroc::testing::random_image;
using bigroc::testing::small_cnn;

namespace {

template <class T>
ImageBatch<T> random_batch(const nn::Shape& s, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ImageBatch<T> b(s, PixelRange(-1.0, 1.0), n);
  for (int i = 0; i < n; ++i) b.set_image(i, random_image<T>(s.size(), rng));
  return b;
}

// Logits W x + b on 4-dimensional inputs, 3 classes, with a bias toward class 0.
Classifier<double> biased_linear() {
  Eigen::MatrixXd W(3, 4);
  W << 1.0, -0.5, 0.2, 0.0,
       -0.3, 1.2, 0.0, 0.4,
       0.1, 0.3, -1.0, 0.8;
  Eigen::VectorXd b(3);
  b << 1.5, 0.0, -0.2;
  return linear_classifier<double>(W, b);
}

PGDConfig schedule(double eps, int steps) { return PGDConfig::refinement_schedule(eps, steps); }

}  // namespace

TEST(DebiasVector, EqualMeanLogitsGiveUniformShift) {
  Eigen::VectorXd b = Eigen::VectorXd::Constant(4, 0.7);
  auto clf = linear_classifier<double>(Eigen::MatrixXd::Zero(4, 2), b);
  auto calib = random_batch<double>({2, 1, 1}, 10, 1);
  auto d = compute_debias_vector(clf, calib, 1.0);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(d.d[c], 0.3, 1e-15);
}

TEST(DebiasVector, TwoClassArithmetic) {
  Eigen::VectorXd b(2);
  b << 2.0, 0.0;
  auto clf = linear_classifier<double>(Eigen::MatrixXd::Zero(2, 3), b);
  auto d = compute_debias_vector(clf, random_batch<double>({3, 1, 1}, 5, 2), 1.0);
  EXPECT_DOUBLE_EQ(d.d[0], -1.0);
  EXPECT_DOUBLE_EQ(d.d[1], 1.0);
  EXPECT_EQ(d.calib_size, 5);
  EXPECT_EQ(d.calib_fingerprint.size(), 64u);
}

TEST(DebiasVector, CalibrationIdentity) {
  auto clf = small_cnn<float>(3, 6);
  auto calib = random_batch<float>(clf.input_shape(), 64, 4);
  for (double a : {1.0, -2.5}) {
    auto d = compute_debias_vector(clf, calib, a, 3);
    const Eigen::MatrixXd L = clf.predict_logits(calib);
    for (int c = 0; c < clf.class_count(); ++c)
      EXPECT_NEAR(L.col(c).mean() + d.d[c], a, 1e-5);
  }
}

TEST(DebiasVector, RejectsEmptyCalibrationSet) {
  auto clf = small_cnn<float>(3, 6);
  ImageBatch<float> empty(clf.input_shape(), PixelRange(-1, 1), 0);
  EXPECT_THROW(compute_debias_vector(clf, empty), InvalidArgument);
}

TEST(DebiasVector, JsonRoundTrip) {
  auto clf = small_cnn<float>(5, 4);
  auto d = compute_debias_vector(clf, random_batch<float>(clf.input_shape(), 8, 6), 1.0);
  const auto j = d.to_json();
  for (const char* k : {"d_c", "a", "calib_size", "calib_fingerprint"}) EXPECT_TRUE(j.contains(k));
  auto back = DebiasVector::from_json(nn::json::parse(j.dump()));
  EXPECT_EQ(back.d, d.d);
  EXPECT_EQ(back.calib_fingerprint, d.calib_fingerprint);
  EXPECT_THROW(DebiasVector::from_json({{"d_c", {1.0}}}), InvalidArgument);
}

TEST(EstimateLabels, ZeroShiftIsPlainArgmaxAndTiesGoLow) {
  Eigen::MatrixXd L(3, 2);
  L << 2.0, 0.0,
       0.0, 0.5,
       1.0, 1.0;
  DebiasVector zero;
  zero.d = Eigen::VectorXd::Zero(2);
  EXPECT_EQ(estimate_labels_from_logits(L, &zero), estimate_labels_from_logits(L, nullptr));
  EXPECT_EQ(estimate_labels_from_logits(L, nullptr), (std::vector<int>{0, 1, 0}));
  DebiasVector d;
  d.d = Eigen::Vector2d(-1.0, 1.0);
  EXPECT_EQ(estimate_labels_from_logits(L.topRows(1), &d), (std::vector<int>{0}));
  DebiasVector wrong;
  wrong.d = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(estimate_labels_from_logits(L, &wrong), InvalidArgument);
}

TEST(EstimateLabels, ShiftInvariance) {
  auto clf = small_cnn<float>(7, 5);
  auto x = random_batch<float>(clf.input_shape(), 50, 8);
  auto d = compute_debias_vector(clf, random_batch<float>(clf.input_shape(), 40, 9));
  DebiasVector shifted = d;
  shifted.d.array() += 3.75;
  EXPECT_EQ(estimate_labels(clf, x, &d), estimate_labels(clf, x, &shifted));
}

TEST(EstimateLabels, DebiasingReducesChiSquareOnBiasedSet) {
  auto clf = biased_linear();
  auto calib = random_batch<double>({4, 1, 1}, 1024, 10);
  auto x = random_batch<double>({4, 1, 1}, 600, 11);
  auto d = compute_debias_vector(clf, calib);
  const double plain = chi_square_to_uniform(label_histogram(estimate_labels(clf, x, nullptr), 3));
  const double debiased = chi_square_to_uniform(label_histogram(estimate_labels(clf, x, &d), 3));
  EXPECT_LT(debiased, plain);
}

TEST(Boost, ZeroEpsilonOrZeroStepsLeavesImagesUnchanged) {
  auto clf = small_cnn<float>(12, 5);
  auto x = random_batch<float>(clf.input_shape(), 6, 13);
  for (auto [eps, steps] : {std::pair{0.0, 7}, std::pair{2.0, 0}}) {
    PGDConfig c = steps > 0 ? schedule(eps, steps) : PGDConfig{};
    c.steps = steps;
    auto r = boost(clf, x, nullptr, ThreatModel(Norm::L2, eps), c);
    EXPECT_TRUE((r.images.pixels.array() == x.pixels.array()).all());
    EXPECT_EQ(r.report.max_norm, 0.0);
  }
}

TEST(Boost, FeasibleDeterministicAndWorkerIndependent) {
  auto clf = small_cnn<float>(14, 5);
  auto x = random_batch<float>(clf.input_shape(), 12, 15);
  const ThreatModel tm(Norm::L2, 1.5);
  auto a = boost(clf, x, nullptr, tm, schedule(1.5, 7));
  auto b = boost(clf, x, nullptr, tm, schedule(1.5, 7), nullptr, 4);
  EXPECT_TRUE((a.images.pixels.array() == b.images.pixels.array()).all());
  EXPECT_EQ(a.report.to_json().dump(), b.report.to_json().dump());
  for (int i = 0; i < x.size(); ++i) {
    const Vec<float> delta = a.images.image(i) - x.image(i);
    EXPECT_LE(l2_norm<float>(nn::as_span(delta)), 1.5 * (1 + 1e-6));
    EXPECT_LE(a.report.images[i].norm, 1.5 * (1 + 1e-6));
  }
  EXPECT_GT(a.report.mean_p_after, a.report.mean_p_before);
  EXPECT_EQ(a.report.mode, "pl");
  EXPECT_EQ(a.images.labels, estimate_labels(clf, x, nullptr));

  auto inf = boost(clf, x, nullptr, ThreatModel(Norm::Linf, 0.05), schedule(0.05, 5));
  EXPECT_LE((inf.images.pixels - x.pixels).cwiseAbs().maxCoeff(), 0.05 * (1 + 1e-6));
}

TEST(Boost, GroundTruthPathIgnoresDebiasVector) {
  auto clf = small_cnn<float>(16, 5);
  auto x = random_batch<float>(clf.input_shape(), 8, 17);
  const std::vector<int> y{0, 1, 2, 3, 4, 0, 1, 2};
  DebiasVector poison;
  poison.d = Eigen::VectorXd::Constant(5, 1e6);
  poison.d[3] = -1e9;
  const ThreatModel tm(Norm::L2, 1.0);
  auto clean = boost(clf, x, &y, tm, schedule(1.0, 7), nullptr);
  auto poisoned = boost(clf, x, &y, tm, schedule(1.0, 7), &poison);
  EXPECT_TRUE((clean.images.pixels.array() == poisoned.images.pixels.array()).all());
  EXPECT_EQ(clean.report.mode, "gt");
  EXPECT_EQ(poisoned.images.labels, y);
}

TEST(Boost, PseudoLabelPathUsesDebiasedLabels) {
  auto clf = small_cnn<float>(18, 5);
  auto x = random_batch<float>(clf.input_shape(), 30, 19);
  auto d = compute_debias_vector(clf, random_batch<float>(clf.input_shape(), 60, 20));
  auto r = boost(clf, x, nullptr, ThreatModel(Norm::L2, 1.0), schedule(1.0, 3), &d);
  EXPECT_EQ(r.report.mode, "pl-debiased");
  EXPECT_EQ(r.images.labels, estimate_labels(clf, x, &d));
  EXPECT_EQ(r.report.histogram_debiased, label_histogram(estimate_labels(clf, x, &d), 5));
  EXPECT_EQ(r.report.histogram_plain, label_histogram(estimate_labels(clf, x, nullptr), 5));
  for (const auto& im : r.report.images) EXPECT_EQ(im.undebiased_label, estimate_labels(clf, x, nullptr)[im.index]);
}

TEST(Boost, RejectsBadInputs) {
  auto clf = small_cnn<float>(21, 5);
  auto x = random_batch<float>(clf.input_shape(), 4, 22);
  const ThreatModel tm(Norm::L2, 1.0);
  const std::vector<int> short_labels{0, 1};
  EXPECT_THROW(boost(clf, x, &short_labels, tm, schedule(1.0, 7)), InvalidArgument);
  const std::vector<int> bad_labels{0, 1, 2, 9};
  EXPECT_THROW(boost(clf, x, &bad_labels, tm, schedule(1.0, 7)), InvalidArgument);
  auto self = compute_debias_vector(clf, x);
  EXPECT_THROW(boost(clf, x, nullptr, tm, schedule(1.0, 7), &self), InvalidArgument);
  ImageBatch<float> wrong({3, 4, 4}, PixelRange(-1, 1), 2);
  EXPECT_THROW(boost(clf, wrong, nullptr, tm, schedule(1.0, 7)), InvalidArgument);
}

TEST(Boost, NonFiniteImageIsFlaggedNotDropped) {
  auto clf = small_cnn<float>(23, 5);
  auto x = random_batch<float>(clf.input_shape(), 3, 24);
  x.pixels(5, 1) = std::numeric_limits<float>::quiet_NaN();
  const std::vector<int> y{0, 1, 2};
  auto r = boost(clf, x, &y, ThreatModel(Norm::L2, 1.0), schedule(1.0, 3));
  ASSERT_EQ(r.report.images.size(), 3u);
  EXPECT_EQ(r.report.failures, 1);
  EXPECT_TRUE(r.report.images[1].failed);
  EXPECT_FALSE(r.report.images[1].message.empty());
  EXPECT_FALSE(r.report.images[0].failed);
  EXPECT_FALSE(r.report.images[2].failed);
}

TEST(EpsilonPresets, RescaleToImageSizeAndRange) {
  const PixelRange sym(-1, 1), unit(0, 1);
  EXPECT_DOUBLE_EQ(preset_epsilon("cifar10/vae", {3, 32, 32}, sym), 25.0);
  EXPECT_DOUBLE_EQ(preset_epsilon("cifar10/vae", {3, 16, 16}, sym), 12.5);
  EXPECT_DOUBLE_EQ(preset_epsilon("cifar10/dcgan", {3, 32, 32}, unit), 2.5);
  EXPECT_DOUBLE_EQ(preset_epsilon("imagenet256/biggan-deep", {3, 256, 256}, sym), 2.0);
  EXPECT_THROW(preset_epsilon("cifar10/nope", {3, 32, 32}, sym), InvalidArgument);
  // eps = 5 on 32x32x3 is a mean per-pixel change of about 0.1.
  EXPECT_NEAR(preset_epsilon("cifar10/dcgan", {3, 32, 32}, sym) / std::sqrt(3072.0), 0.09, 0.001);
}
