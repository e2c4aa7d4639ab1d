#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gridcascade/cascade.hpp"
#include "gridcascade/rng.hpp"

using namespace gridcascade;

namespace {

const GridLayout kLayout{};

Scene one_gt_scene(const BBox& box) {
  Scene s;
  s.id = 4;
  s.bounds = ImageBounds(300, 300);
  GroundTruth g;
  g.box = box;
  g.full_extent = box;
  s.gts.push_back(g);
  return s;
}

OraclePredictor exact_oracle(bool truncate = true) {
  OracleParams p;
  p.noise_sigma = 0.0;
  p.truncate = truncate;
  return OraclePredictor(p);
}

class ThrowingPredictor final : public HeatmapPredictor {
 public:
  HeatmapSet predict(const Scene&, const BBox&, double, const GridLayout&,
                     std::uint64_t) const override {
    throw std::runtime_error("predictor exploded");
  }
};

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct CorpusRun {
  std::vector<Scene> scenes;
  std::vector<std::vector<BBox>> proposals;
};

CorpusRun seeded_corpus(std::uint64_t seed, int n_scenes, double jitter, int per_gt) {
  SceneParams sp;
  sp.truncated_fraction = 0.0;
  CorpusRun run;
  run.scenes = generate_corpus(seed, n_scenes, sp);
  ProposalParams pp;
  pp.jitter_sigma = jitter;
  pp.per_gt = per_gt;
  pp.n_background = 0;
  pp.seed = seed;
  for (const auto& s : run.scenes) run.proposals.push_back(generate_proposals(s, pp));
  return run;
}

HeatmapSet filled(const BBox& prop, double v) {
  HeatmapSet h(prop, 2.0, kLayout);
  for (auto& x : h.values()) x = v;
  return h;
}

}  // namespace

TEST(CascadeConfig, StandardSchedule) {
  const auto c = CascadeConfig::standard();
  ASSERT_EQ(c.stages.size(), 3u);
  EXPECT_EQ(c.stages[0].mapping_ratio, 2.0);
  EXPECT_EQ(c.stages[1].mapping_ratio, 1.5);
  EXPECT_EQ(c.stages[2].mapping_ratio, 1.25);
  EXPECT_EQ(c.stages[1].loss_weight, 0.5);
  EXPECT_EQ(c.stages[2].loss_weight, 0.25);
  EXPECT_NO_THROW(c.validate());
}

TEST(CascadeConfig, RejectsIncreasingRatiosAndBadCounts) {
  const std::vector<double> up{1.25, 1.5, 2.0};
  EXPECT_THROW(CascadeConfig::standard().with_ratios(up).validate(), std::invalid_argument);
  CascadeConfig none = CascadeConfig::standard();
  none.stages.clear();
  EXPECT_THROW(none.validate(), std::invalid_argument);
  CascadeConfig many = CascadeConfig::standard();
  many.stages.resize(6, StageConfig{1.0, 0.5, 1.0});
  EXPECT_THROW(many.validate(), std::invalid_argument);
  const std::vector<double> shrink{0.9, 0.9, 0.9};
  EXPECT_THROW(CascadeConfig::standard().with_ratios(shrink).validate(), std::invalid_argument);
}

TEST(RunStage, ExactOracleRecoversGt) {
  const BBox gt(100, 120, 180, 170);
  const Scene s = one_gt_scene(gt);
  const std::vector<BBox> boxes{BBox(95, 115, 190, 176)};
  const auto out = run_stage(StageConfig{2.0, 0.5, 1.0}, boxes, exact_oracle(), s, kLayout, 1);
  ASSERT_EQ(out.boxes.size(), 1u);
  EXPECT_FALSE(out.pass_through[0]);
  const BBox r = expand(boxes[0], 2.0);
  const double bound = std::max(r.width(), r.height()) / kLayout.resolution;
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(out.boxes[0].coords()[c], gt.coords()[c], bound);
}

TEST(RunStage, FarProposalPassesThrough) {
  const Scene s = one_gt_scene(BBox(10, 10, 40, 40));
  const std::vector<BBox> boxes{BBox(200, 200, 260, 250)};
  const auto out = run_stage(StageConfig{}, boxes, exact_oracle(), s, kLayout, 1);
  EXPECT_TRUE(out.pass_through[0]);
  EXPECT_EQ(out.boxes[0], boxes[0]);
  for (const double v : out.heatmaps[0].values()) ASSERT_EQ(v, 0.0);
}

TEST(RunStage, EmptyInputGivesEmptyOutput) {
  const Scene s = one_gt_scene(BBox(10, 10, 40, 40));
  const auto out = run_stage(StageConfig{}, {}, exact_oracle(), s, kLayout, 1);
  EXPECT_TRUE(out.boxes.empty());
  EXPECT_TRUE(out.heatmaps.empty());
}

TEST(RunStage, PredictorFailureFlagsBox) {
  const Scene s = one_gt_scene(BBox(10, 10, 40, 40));
  const std::vector<BBox> boxes{BBox(12, 12, 44, 41)};
  const auto out = run_stage(StageConfig{}, boxes, ThrowingPredictor{}, s, kLayout, 1);
  EXPECT_TRUE(out.pass_through[0]);
  EXPECT_EQ(out.boxes[0], boxes[0]);
}

TEST(SelectPositives, IdenticalBoxSelected) {
  const std::vector<BBox> gts{BBox(50, 50, 60, 60), BBox(0, 0, 2, 2)};
  const std::vector<BBox> boxes{BBox(0, 0, 2, 2)};
  const auto sel = select_positives(boxes, gts, 0.5);
  ASSERT_EQ(sel.indices.size(), 1u);
  EXPECT_EQ(sel.matched_gt[0], 1u);
}

TEST(SelectPositives, LowOverlapRejected) {
  const std::vector<BBox> gts{BBox(0, 0, 2, 2)};
  const std::vector<BBox> boxes{BBox(1, 1, 3, 3)};
  EXPECT_TRUE(select_positives(boxes, gts, 0.5).indices.empty());
  EXPECT_EQ(select_positives(boxes, gts, 1.0 / 7.0 - 1e-12).indices.size(), 1u);
}

TEST(SelectPositives, EmptyGtsSelectNothing) {
  const std::vector<BBox> boxes{BBox(1, 1, 3, 3)};
  EXPECT_TRUE(select_positives(boxes, {}, 0.5).indices.empty());
}

TEST(SelectPositives, TieGoesToLowestGt) {
  const std::vector<BBox> gts{BBox(0, 0, 2, 2), BBox(0, 0, 2, 2)};
  const std::vector<BBox> boxes{BBox(0, 0, 2, 2)};
  EXPECT_EQ(select_positives(boxes, gts, 0.5).matched_gt[0], 0u);
}

TEST(RunCascade, SingleStageEqualsRunStage) {
  SceneParams sp;
  const Scene s = generate_scene(3, 2, sp);
  ProposalParams pp;
  pp.seed = 3;
  const auto props = generate_proposals(s, pp);
  const OraclePredictor oracle(OracleParams{});
  const auto cfg = CascadeConfig::standard().truncated_to(1);
  const auto res = run_cascade(cfg, props, oracle, s, 77);
  const auto out = run_stage(cfg.stages[0], props, oracle, s, cfg.layout, 77, 0);
  EXPECT_EQ(res.boxes, out.boxes);
  EXPECT_EQ(res.pass_through, out.pass_through);
  ASSERT_EQ(res.trace.size(), 1u);
  EXPECT_EQ(res.trace[0].input, props);
}

TEST(RunCascade, PassThroughBoxesStayFixed) {
  SceneParams sp;
  const Scene s = generate_scene(3, 2, sp);
  ProposalParams pp;
  pp.seed = 3;
  const auto props = generate_proposals(s, pp);
  const auto res = run_cascade(CascadeConfig::standard(), props, exact_oracle(), s, 5);
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < props.size(); ++i) {
    bool seen = false;
    for (std::size_t j = 0; j < res.trace.size(); ++j) {
      if (seen) {
        EXPECT_TRUE(res.trace[j].pass_through[i]);
        EXPECT_EQ(res.trace[j].output[i], res.trace[j].input[i]);
      }
      seen = seen || res.trace[j].pass_through[i];
    }
    if (res.pass_through[i]) {
      ++flagged;
      EXPECT_EQ(res.boxes[i], res.trace.back().input[i]);
    }
  }
  EXPECT_GT(flagged, 0u);
}

TEST(RunCascade, StageErrorNamesStage) {
  const Scene s = one_gt_scene(BBox(10, 10, 40, 40));
  const std::vector<BBox> boxes{BBox(5, 5, 5, 9)};
  try {
    run_cascade(CascadeConfig::standard(), boxes, exact_oracle(), s, 1);
    FAIL() << "expected failure";
  } catch (const std::runtime_error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("stage 0:", 0), 0u) << e.what();
  }
}

TEST(CascadeProperty, ExactOracleMeanIouNonDecreasing) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto run = seeded_corpus(seed, 10, 0.15, 10);
    std::vector<std::vector<double>> per_stage(3);
    for (std::size_t k = 0; k < run.scenes.size(); ++k) {
      const auto res = run_cascade(CascadeConfig::standard(), run.proposals[k], exact_oracle(),
                                   run.scenes[k], seed);
      for (std::size_t i = 0; i < res.boxes.size(); ++i) {
        if (res.pass_through[i]) continue;
        for (std::size_t j = 0; j < 3; ++j) per_stage[j].push_back(res.trace[j].output_iou[i]);
      }
    }
    EXPECT_LE(mean(per_stage[0]), mean(per_stage[1]) + 1e-12) << "seed " << seed;
    EXPECT_LE(mean(per_stage[1]), mean(per_stage[2]) + 1e-12) << "seed " << seed;
  }
}

TEST(CascadeProperty, SmallRatioTruncationLowersIou) {
  const auto run = seeded_corpus(11, 20, 0.25, 25);
  const OraclePredictor oracle(OracleParams{});
  std::vector<double> small_ratio;
  std::vector<double> large_ratio;
  std::size_t n = 0;
  for (std::size_t k = 0; k < run.scenes.size(); ++k) {
    const auto& s = run.scenes[k];
    const auto a = run_stage(StageConfig{1.0, 0.5, 1.0}, run.proposals[k], oracle, s, kLayout, 3);
    const auto b = run_stage(StageConfig{2.0, 0.5, 1.0}, run.proposals[k], oracle, s, kLayout, 3);
    for (std::size_t i = 0; i < a.boxes.size(); ++i) {
      small_ratio.push_back(best_match(a.boxes[i], s).iou);
      large_ratio.push_back(best_match(b.boxes[i], s).iou);
    }
    n += a.boxes.size();
  }
  ASSERT_GE(n, 500u);
  EXPECT_LT(mean(small_ratio), mean(large_ratio));
}

TEST(CascadeProperty, CoarseToFineBeatsFixedTightRatio) {
  const auto run = seeded_corpus(5, 40, 0.11, 10);
  std::size_t outside = 0;
  std::size_t points = 0;
  for (std::size_t k = 0; k < run.scenes.size(); ++k) {
    for (const auto& p : run.proposals[k]) {
      const auto& gt = run.scenes[k].gts[static_cast<std::size_t>(best_match(p, run.scenes[k]).index)];
      for (const auto& pt : grid_points(gt.box)) {
        const CellPoint c = image_to_cell(pt, p, 1.25, kLayout.resolution);
        int r = 0;
        int col = 0;
        if (!cell_index(c, kLayout.resolution, r, col)) ++outside;
        ++points;
      }
    }
  }
  const double fraction = static_cast<double>(outside) / static_cast<double>(points);
  RecordProperty("outside_fraction", std::to_string(fraction));
  EXPECT_GT(fraction, 0.1);
  EXPECT_LT(fraction, 0.3);

  const OraclePredictor oracle(OracleParams{});
  const std::vector<double> fixed{1.25, 1.25, 1.25};
  const auto tight = CascadeConfig::standard().with_ratios(fixed);
  std::vector<double> coarse_iou;
  std::vector<double> tight_iou;
  for (std::size_t k = 0; k < run.scenes.size(); ++k) {
    const auto& s = run.scenes[k];
    for (const auto& b : run_cascade(CascadeConfig::standard(), run.proposals[k], oracle, s, 9).boxes) {
      coarse_iou.push_back(best_match(b, s).iou);
    }
    for (const auto& b : run_cascade(tight, run.proposals[k], oracle, s, 9).boxes) {
      tight_iou.push_back(best_match(b, s).iou);
    }
  }
  EXPECT_GT(mean(coarse_iou), mean(tight_iou));
}

TEST(HeatmapBce, UniformHalfGivesLn2PerStage) {
  const auto cfg = CascadeConfig::standard();
  const BBox prop(10, 10, 40, 40);
  std::vector<std::vector<HeatmapSet>> pred(3);
  std::vector<std::vector<HeatmapSet>> tgt(3);
  for (int j = 0; j < 3; ++j) {
    pred[static_cast<std::size_t>(j)].push_back(filled(prop, 0.5));
    tgt[static_cast<std::size_t>(j)].push_back(encode_target(BBox(15, 12, 35, 42), prop, 2.0, kLayout));
  }
  const double expected = cfg.grid_loss_weight * (1.0 + 0.5 + 0.25) * std::log(2.0);
  EXPECT_NEAR(cmm_loss(pred, tgt, cfg), expected, 1e-12);
}

TEST(HeatmapBce, PerfectPredictionNearZero) {
  const BBox prop(10, 10, 40, 40);
  const HeatmapSet t = encode_target(BBox(15, 12, 35, 42), prop, 2.0, kLayout);
  HeatmapSet p = t;
  for (auto& v : p.values()) v = std::clamp(v, kBceEpsilon, 1.0 - kBceEpsilon);
  const std::vector<HeatmapSet> pv{p};
  const std::vector<HeatmapSet> tv{t};
  EXPECT_LE(heatmap_bce(pv, tv), 2e-5);
}

TEST(HeatmapBce, AllMaskedGivesZero) {
  const BBox prop(10, 10, 40, 40);
  const HeatmapSet t = encode_target(BBox(200, 200, 220, 220), prop, 2.0, kLayout);
  const std::vector<HeatmapSet> pv{filled(prop, 0.3)};
  const std::vector<HeatmapSet> tv{t};
  std::vector<std::vector<double>> grads;
  EXPECT_EQ(heatmap_bce(pv, tv, &grads), 0.0);
  for (const double g : grads[0]) ASSERT_EQ(g, 0.0);
  EXPECT_EQ(heatmap_bce({}, {}), 0.0);
}

TEST(HeatmapBce, MaskedChannelsExcluded) {
  const BBox prop(10, 10, 40, 40);
  const HeatmapSet t = encode_target(BBox(20, 20, 60, 60), prop, 1.25, kLayout);
  int unmasked = 0;
  for (int k = 0; k < kGridPoints; ++k) unmasked += t.masked(k) ? 0 : 1;
  ASSERT_GT(unmasked, 0);
  ASSERT_LT(unmasked, kGridPoints);
  HeatmapSet p(prop, 1.25, kLayout);
  for (int k = 0; k < kGridPoints; ++k) {
    for (auto& v : p.channel(k)) v = t.masked(k) ? 0.999 : 0.5;
  }
  const std::vector<HeatmapSet> pv{p};
  const std::vector<HeatmapSet> tv{t};
  EXPECT_NEAR(heatmap_bce(pv, tv), std::log(2.0), 1e-12);
}

TEST(HeatmapBce, ValueGradientMatchesFiniteDifferences) {
  const BBox prop(10, 10, 40, 40);
  const HeatmapSet t = encode_target(BBox(14, 11, 36, 39), prop, 1.5, kLayout);
  HeatmapSet p(prop, 1.5, kLayout);
  Rng rng(6);
  for (auto& v : p.values()) v = rng.uniform(0.05, 0.95);
  const std::vector<HeatmapSet> tv{t};
  std::vector<std::vector<double>> grads;
  const std::vector<HeatmapSet> pv{p};
  heatmap_bce(pv, tv, &grads);
  auto loss_at = [&](std::span<const double> values) {
    HeatmapSet q = p;
    std::copy(values.begin(), values.end(), q.values().begin());
    const std::vector<HeatmapSet> qv{q};
    return heatmap_bce(qv, tv);
  };
  const std::vector<double> point(p.values().begin(), p.values().end());
  const auto coords = sample_coordinates(point.size(), 100, 2);
  const auto r = gradcheck(loss_at, point, grads[0], coords, 1e-4, 1e-6);
  EXPECT_TRUE(r.passed) << r.summary();
}
