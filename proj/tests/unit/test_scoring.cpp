#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gridcascade/scoring.hpp"

using namespace gridcascade;

namespace {

Scene square_scene() {
  Scene s;
  s.id = 2;
  s.bounds = ImageBounds(400, 400);
  GroundTruth g;
  g.box = BBox(0, 0, 100, 100);
  g.full_extent = BBox(-50, 0, 100, 100);
  g.truncated = true;
  s.gts.push_back(g);
  return s;
}

}  // namespace

TEST(FusedScore, HandEvaluated) {
  const double expected = std::exp(0.8 * std::log(0.9 * 0.8) + 0.2 * std::log(0.7));
  EXPECT_NEAR(fused_score({0.9, 0.8, 0.7}, 0.8), expected, 1e-12);
  EXPECT_NEAR(fused_score({0.9, 0.8, 0.7}, 0.8), 0.7160, 5e-5);
}

TEST(FusedScore, ExponentEndpoints) {
  EXPECT_EQ(fused_score({0.9, 0.8, 0.7}, 1.0), 0.9 * 0.8);
  EXPECT_EQ(fused_score({0.9, 0.8, 0.7}, 0.0), 0.7);
  EXPECT_EQ(fused_score({0.0, 0.8, 0.0}, 1.0), 0.0);
  EXPECT_EQ(fused_score({0.5, 0.5, 0.0}, 1.0), 0.25);
}

TEST(FusedScore, RejectsOutOfRange) {
  EXPECT_THROW(fused_score({1.2, 0.5, 0.5}, 0.8), std::invalid_argument);
  EXPECT_THROW(fused_score({0.5, 0.5, 0.5}, 1.5), std::invalid_argument);
  EXPECT_THROW(fused_score({0.5, std::nan(""), 0.5}, 0.5), std::invalid_argument);
}

TEST(FusedScore, PropertyBoundedAndMonotone) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const ScoreTriple t{u(rng), u(rng), u(rng)};
    const double g = u(rng);
    const double f = fused_score(t, g);
    ASSERT_GE(f, 0.0);
    ASSERT_LE(f, 1.0);
    ScoreTriple up = t;
    up.cls = std::min(1.0, t.cls + 0.1);
    ASSERT_GE(fused_score(up, g), f);
    up = t;
    up.iou = std::min(1.0, t.iou + 0.1);
    ASSERT_GE(fused_score(up, g), f);
    up = t;
    up.resample = std::min(1.0, t.resample + 0.1);
    ASSERT_GE(fused_score(up, g), f);
  }
}

TEST(ScoringConfig, Validation) {
  ScoringConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ScoringConfig{};
  c.lambda3 = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(IouOracle, ReportsTrueIou) {
  const Scene s = square_scene();
  const auto p = IouScoreOracle().predict(BBox(0, 0, 100, 83), s);
  EXPECT_NEAR(p.foreground, 0.83, 1e-12);
  EXPECT_NEAR(p.background, 0.17, 1e-12);
}

TEST(IouOracle, BackgroundBox) {
  const auto p = IouScoreOracle().predict(BBox(200, 200, 250, 250), square_scene());
  EXPECT_EQ(p.foreground, 0.0);
  EXPECT_EQ(p.background, 1.0);
}

TEST(IouOracle, FullExtentPenalizesTruncatedObjects) {
  const Scene s = square_scene();
  const auto visible = IouScoreOracle(IouScoreOracle::Reference::Visible).predict(s.gts[0].box, s);
  const auto full = IouScoreOracle(IouScoreOracle::Reference::FullExtent).predict(s.gts[0].box, s);
  EXPECT_EQ(visible.foreground, 1.0);
  EXPECT_NEAR(full.foreground, 100.0 / 150.0, 1e-12);
}

TEST(IouScoreModel, UntrainedModelRefuses) {
  const IouScoreModel m;
  const std::vector<double> f(kIouFeatureSize, 0.0);
  EXPECT_THROW(m.predict(f), std::logic_error);
  EXPECT_THROW(IouScoreModel(Mlp({3, 2}), true), std::invalid_argument);
}

TEST(IouLoss, ClosedForms) {
  const std::vector<double> t{0.3, 0.9};
  const std::vector<double> fg{0.3, 0.9};
  const std::vector<double> bg{0.7, 0.1};
  EXPECT_NEAR(iou_score_loss(fg, bg, t), 0.0, 1e-15);
  const std::vector<double> half{0.5};
  const std::vector<double> one{1.0};
  EXPECT_NEAR(iou_score_loss(half, half, one), 0.5, 1e-15);
  const std::vector<double> half2{0.5, 0.5};
  const std::vector<double> one2{1.0, 1.0};
  EXPECT_NEAR(iou_score_loss(half2, half2, one2), 0.5, 1e-15);
  EXPECT_EQ(iou_score_loss({}, {}, {}), 0.0);
  EXPECT_THROW(iou_score_loss(half, half2, one), std::invalid_argument);
}

TEST(IouLoss, GradientThroughModelMatchesFiniteDifferences) {
  Mlp net({kIouFeatureSize, 32, 16, 2});
  net.initialize(12);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> xs(8, std::vector<double>(kIouFeatureSize));
  std::vector<double> targets(8);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (auto& v : xs[i]) v = u(rng);
    targets[i] = u(rng);
  }
  auto loss_with = [&](const Mlp& m, std::vector<double>* grad) {
    std::vector<double> fg;
    std::vector<double> bg;
    std::vector<Mlp::Cache> caches;
    for (const auto& x : xs) {
      caches.push_back(m.forward(x));
      fg.push_back(caches.back().activations.back()[0]);
      bg.push_back(caches.back().activations.back()[1]);
    }
    std::vector<double> gf;
    std::vector<double> gb;
    const double l = iou_score_loss(fg, bg, targets, &gf, &gb);
    if (grad != nullptr) {
      grad->assign(m.parameter_count(), 0.0);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const std::vector<double> dy{gf[i], gb[i]};
        m.backward(caches[i], dy, *grad);
      }
    }
    return l;
  };
  std::vector<double> grad;
  loss_with(net, &grad);
  auto loss_at = [&](std::span<const double> p) {
    Mlp probe = net;
    std::copy(p.begin(), p.end(), probe.parameters().begin());
    return loss_with(probe, nullptr);
  };
  const std::vector<double> point(net.parameters().begin(), net.parameters().end());
  const auto coords = sample_coordinates(point.size(), 100, 14);
  const auto r = gradcheck(loss_at, point, grad, coords, 1e-4);
  EXPECT_TRUE(r.passed) << r.summary();
}

TEST(ResampleOracle, CalibratedLogistic) {
  const Scene s = square_scene();
  EXPECT_NEAR(resample_oracle(BBox(0, 0, 100, 50), s), 0.5, 1e-12);
  EXPECT_LE(resample_oracle(BBox(200, 200, 260, 260), s), 0.02);
  EXPECT_GT(resample_oracle(s.gts[0].box, s), 0.98);
}

TEST(ResampleScoreModel, UntrainedModelRefuses) {
  const ResampleScoreModel m;
  const std::vector<double> d(kRoiDescriptorSize, 0.0);
  EXPECT_THROW(m.predict(d), std::logic_error);
}

TEST(ClassificationLoss, ClosedForms) {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> y{1.0, 0.0};
  EXPECT_NEAR(classification_loss(p, y), std::log(2.0), 1e-12);
  const std::vector<double> sure{1.0, 0.0};
  EXPECT_LE(classification_loss(sure, y), 2e-6);
}

TEST(JointLoss, WeightedSums) {
  EXPECT_EQ(scoring_loss(0, 0, 1, 1), 0.0);
  EXPECT_EQ(scoring_loss(2, 3, 0.5, 2), 7.0);
  ScoringConfig c;
  EXPECT_EQ(total_loss(0, 0, 0, 0, c), 0.0);
  EXPECT_EQ(total_loss(1, 2, 3, 4, c), 10.0);
  c.lambda4 = 0.5;
  EXPECT_EQ(total_loss(1, 2, 3, 4, c), 8.0);
  EXPECT_THROW(total_loss(-1, 0, 0, 0, c), std::invalid_argument);
}

TEST(RocAuc, KnownValues) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> l{0, 0, 1, 1};
  EXPECT_NEAR(roc_auc(s, l), 0.75, 1e-12);
  const std::vector<double> tied{0.5, 0.5};
  const std::vector<int> tl{0, 1};
  EXPECT_NEAR(roc_auc(tied, tl), 0.5, 1e-12);
  const std::vector<double> perfect{0.1, 0.9};
  EXPECT_EQ(roc_auc(perfect, tl), 1.0);
}
