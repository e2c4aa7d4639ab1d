#include "gridcascade/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "gridcascade/rng.hpp"

namespace gridcascade {

namespace {

[[noreturn]] void shape_abort(const char* what) {
  std::fprintf(stderr, "gridcascade: heatmap loss shape mismatch: %s\n", what);
  std::abort();
}

}  // namespace

void StageConfig::validate() const {
  if (!(mapping_ratio >= 1.0) || !std::isfinite(mapping_ratio)) {
    throw std::invalid_argument("stage mapping_ratio must be >= 1");
  }
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw std::invalid_argument("stage iou_threshold must lie in [0,1]");
  }
  if (!(loss_weight >= 0.0)) throw std::invalid_argument("stage loss_weight must be >= 0");
}

CascadeConfig CascadeConfig::standard() {
  CascadeConfig cfg;
  cfg.stages = {{2.0, 0.5, 1.0}, {1.5, 0.6, 0.5}, {1.25, 0.7, 0.25}};
  return cfg;
}

CascadeConfig CascadeConfig::truncated_to(std::size_t n) const {
  CascadeConfig out = *this;
  if (n < out.stages.size()) out.stages.resize(n);
  return out;
}

CascadeConfig CascadeConfig::with_ratios(std::span<const double> ratios) const {
  if (ratios.size() != stages.size()) {
    throw std::invalid_argument("ratio schedule length differs from the stage count");
  }
  CascadeConfig out = *this;
  for (std::size_t i = 0; i < ratios.size(); ++i) out.stages[i].mapping_ratio = ratios[i];
  return out;
}

void CascadeConfig::validate() const {
  if (stages.empty() || stages.size() > kMaxStages) {
    std::ostringstream msg;
    msg << "cascade needs 1.." << kMaxStages << " stages, got " << stages.size();
    throw std::invalid_argument(msg.str());
  }
  for (std::size_t i = 0; i < stages.size(); ++i) {
    stages[i].validate();
    if (i > 0 && stages[i].mapping_ratio > stages[i - 1].mapping_ratio) {
      throw std::invalid_argument("mapping ratios must be non-increasing across stages");
    }
  }
  if (!(grid_loss_weight >= 0.0)) throw std::invalid_argument("grid_loss_weight must be >= 0");
  layout.validate();
}

std::uint64_t stage_box_seed(std::uint64_t seed, int scene_id, std::size_t stage, std::size_t box) {
  return derive_seed(seed, {0xCA5CADE, static_cast<std::uint64_t>(scene_id), stage, box});
}

StageOutput run_stage(const StageConfig& cfg, std::span<const BBox> boxes,
                      const HeatmapPredictor& predictor, const Scene& scene,
                      const GridLayout& layout, std::uint64_t seed, std::size_t stage_index,
                      const std::vector<bool>& frozen) {
  cfg.validate();
  StageOutput out;
  out.boxes.reserve(boxes.size());
  out.heatmaps.reserve(boxes.size());
  out.pass_through.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BBox& box = boxes[i];
    if (!box.has_positive_area()) {
      throw std::invalid_argument("cascade input boxes must have positive area");
    }
    const bool was_frozen = i < frozen.size() && frozen[i];
    try {
      HeatmapSet h = predictor.predict(scene, box, cfg.mapping_ratio, layout,
                                       stage_box_seed(seed, scene.id, stage_index, i));
      bool flagged = was_frozen;
      BBox refined = box;
      if (!flagged) {
        try {
          const BBox fused = clip(points_to_box(decode_points(h), layout), scene.bounds);
          if (fused.has_positive_area()) {
            refined = fused;
          } else {
            flagged = true;
          }
        } catch (const UndecodableBoxError&) {
          flagged = true;
        }
      }
      out.boxes.push_back(refined);
      out.heatmaps.push_back(std::move(h));
      out.pass_through.push_back(flagged);
    } catch (const std::exception&) {
      // Predictor failure: flagged pass-through with an empty map.
      out.boxes.push_back(box);
      out.heatmaps.emplace_back(box, cfg.mapping_ratio, layout);
      out.pass_through.push_back(true);
    }
  }
  return out;
}

PositiveSelection select_positives(std::span<const BBox> boxes, std::span<const BBox> gts,
                                   double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw std::invalid_argument("iou_threshold must lie in [0,1]");
  }
  PositiveSelection sel;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    std::size_t best = 0;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(boxes[i], gts[g]);
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (gts.empty()) continue;
    // A zero threshold still demands actual overlap.
    const bool keep = iou_threshold > 0.0 ? best_iou >= iou_threshold : best_iou > 0.0;
    if (keep) {
      sel.indices.push_back(i);
      sel.matched_gt.push_back(best);
    }
  }
  return sel;
}

CascadeResult run_cascade(const CascadeConfig& cfg, std::span<const BBox> proposals,
                          const HeatmapPredictor& predictor, const Scene& scene,
                          std::uint64_t seed) {
  cfg.validate();
  CascadeResult result;
  std::vector<BBox> current(proposals.begin(), proposals.end());
  std::vector<bool> flagged(current.size(), false);
  for (std::size_t j = 0; j < cfg.stages.size(); ++j) {
    StageOutput out;
    try {
      out = run_stage(cfg.stages[j], current, predictor, scene, cfg.layout, seed, j, flagged);
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "stage " << j << ": " << e.what();
      throw std::runtime_error(msg.str());
    }
    StageTrace trace;
    trace.input = current;
    trace.output = out.boxes;
    trace.pass_through = out.pass_through;
    trace.output_iou.reserve(out.boxes.size());
    for (const auto& b : out.boxes) trace.output_iou.push_back(best_match(b, scene).iou);
    trace.heatmaps = std::move(out.heatmaps);
    flagged = out.pass_through;
    current = std::move(out.boxes);
    result.trace.push_back(std::move(trace));
  }
  result.boxes = std::move(current);
  result.pass_through = std::move(flagged);
  return result;
}

double heatmap_bce(std::span<const HeatmapSet> predicted, std::span<const HeatmapSet> targets,
                   std::vector<std::vector<double>>* value_grads) {
  if (predicted.size() != targets.size()) shape_abort("batch sizes differ");
  std::size_t count = 0;
  double sum = 0.0;
  for (std::size_t b = 0; b < predicted.size(); ++b) {
    const auto& p = predicted[b];
    const auto& t = targets[b];
    if (p.channels() != t.channels() || p.resolution() != t.resolution()) {
      shape_abort("heatmap dimensions differ");
    }
    for (int c = 0; c < t.channels(); ++c) {
      if (t.masked(c)) continue;
      const auto pv = p.channel(c);
      const auto tv = t.channel(c);
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const double q = std::clamp(pv[i], kBceEpsilon, 1.0 - kBceEpsilon);
        sum -= tv[i] * std::log(q) + (1.0 - tv[i]) * std::log(1.0 - q);
      }
      count += pv.size();
    }
  }
  if (count == 0) {
    if (value_grads != nullptr) {
      value_grads->assign(predicted.size(), {});
      for (std::size_t b = 0; b < predicted.size(); ++b) {
        (*value_grads)[b].assign(predicted[b].values().size(), 0.0);
      }
    }
    return 0.0;
  }
  const double inv = 1.0 / static_cast<double>(count);
  if (value_grads != nullptr) {
    value_grads->assign(predicted.size(), {});
    for (std::size_t b = 0; b < predicted.size(); ++b) {
      const auto& p = predicted[b];
      const auto& t = targets[b];
      auto& g = (*value_grads)[b];
      g.assign(p.values().size(), 0.0);
      const std::size_t cells = p.cells_per_channel();
      for (int c = 0; c < t.channels(); ++c) {
        if (t.masked(c)) continue;
        const auto pv = p.channel(c);
        const auto tv = t.channel(c);
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const double q = pv[i];
          if (q <= kBceEpsilon || q >= 1.0 - kBceEpsilon) continue;
          g[static_cast<std::size_t>(c) * cells + i] = inv * (-tv[i] / q + (1.0 - tv[i]) / (1.0 - q));
        }
      }
    }
  }
  return sum * inv;
}

double cmm_loss(std::span<const std::vector<HeatmapSet>> predicted,
                std::span<const std::vector<HeatmapSet>> targets, const CascadeConfig& cfg,
                std::vector<std::vector<std::vector<double>>>* value_grads) {
  if (predicted.size() != targets.size() || predicted.size() > cfg.stages.size()) {
    shape_abort("stage counts differ");
  }
  double total = 0.0;
  if (value_grads != nullptr) value_grads->assign(predicted.size(), {});
  for (std::size_t j = 0; j < predicted.size(); ++j) {
    const double w = cfg.stages[j].loss_weight * cfg.grid_loss_weight;
    auto* grads = value_grads != nullptr ? &(*value_grads)[j] : nullptr;
    total += w * heatmap_bce(predicted[j], targets[j], grads);
    if (grads != nullptr) {
      for (auto& g : *grads) {
        for (auto& v : g) v *= w;
      }
    }
  }
  return total;
}

}  // namespace gridcascade
