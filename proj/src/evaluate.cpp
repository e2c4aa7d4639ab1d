#include "gridcascade/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gridcascade {

namespace {

std::string format_threshold(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool same_threshold(double a, double b) { return std::abs(a - b) < 1e-9; }

std::vector<std::size_t> ranking(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(dets[a], dets[b]);
  });
  return order;
}

}  // namespace

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.fused != b.fused) return a.fused > b.fused;
  if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
  return a.local_id < b.local_id;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw std::invalid_argument("nms threshold must lie in [0,1]");
  }
  const auto order = ranking(dets);
  std::vector<bool> suppressed(dets.size(), false);
  std::vector<Detection> kept;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!suppressed[j] && iou(dets[i].box, dets[j].box) > iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

std::vector<Detection> cap_rois(std::span<const Detection> dets, std::size_t max_count) {
  const auto order = ranking(dets);
  std::vector<Detection> out;
  for (std::size_t k = 0; k < order.size() && k < max_count; ++k) out.push_back(dets[order[k]]);
  return out;
}

MatchResult match(std::span<const Detection> ranked, std::span<const BBox> gts,
                  double iou_threshold, std::span<const bool> gt_ignored, double area_lo,
                  double area_hi) {
  auto ignored_gt = [&](std::size_t g) { return g < gt_ignored.size() && gt_ignored[g]; };
  MatchResult r;
  r.gt_index.assign(ranked.size(), -1);
  r.true_positive.assign(ranked.size(), false);
  r.ignored.assign(ranked.size(), false);
  std::vector<bool> used(gts.size(), false);
  for (std::size_t d = 0; d < ranked.size(); ++d) {
    int best = -1;
    double best_iou = -1.0;
    bool best_ignored = true;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double v = iou(ranked[d].box, gts[g]);
      if (v < iou_threshold || v <= 0.0) continue;
      const bool ign = ignored_gt(g);
      const bool better = best < 0 || (best_ignored && !ign) ||
                          (best_ignored == ign && v > best_iou);
      if (better) {
        best = static_cast<int>(g);
        best_iou = v;
        best_ignored = ign;
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      r.gt_index[d] = best;
      if (best_ignored) {
        r.ignored[d] = true;
      } else {
        r.true_positive[d] = true;
      }
    } else {
      const double a = ranked[d].box.area();
      r.ignored[d] = a < area_lo || a > area_hi;
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!used[g] && !ignored_gt(g)) ++r.unmatched_gts;
  }
  return r;
}

std::array<double, kRecallPoints> interpolated_precision(std::span<const bool> tp_flags,
                                                         std::size_t n_gt) {
  std::array<double, kRecallPoints> out{};
  const std::size_t n = tp_flags.size();
  if (n == 0 || n_gt == 0) return out;
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp_flags[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  for (std::size_t i = n - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);

  out[0] = tp_flags[0] ? 1.0 : 0.0;
  std::size_t i = 0;
  for (int k = 1; k < kRecallPoints; ++k) {
    const double r = k / 100.0;
    while (i < n && recall[i] < r) ++i;
    if (i == n) break;
    out[static_cast<std::size_t>(k)] = precision[i];
  }
  return out;
}

double average_precision(std::span<const bool> tp_flags, std::size_t n_gt) {
  if (n_gt == 0) return tp_flags.empty() ? 1.0 : 0.0;
  const auto p = interpolated_precision(tp_flags, n_gt);
  return std::accumulate(p.begin(), p.end(), 0.0) / kRecallPoints;
}

std::vector<double> EvalSettings::coco_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50 + 5 * k) / 100.0);
  return t;
}

double pooled_ap(std::span<const Detection> dets, std::span<const GroundTruthSet> gts,
                 double threshold, double area_lo, double area_hi,
                 std::array<double, kRecallPoints>* precision) {
  std::map<int, std::size_t> scene_index;
  for (std::size_t s = 0; s < gts.size(); ++s) scene_index[gts[s].scene_id] = s;
  std::vector<std::vector<Detection>> per_scene(gts.size());
  for (const auto& d : dets) {
    const auto it = scene_index.find(d.scene_id);
    if (it == scene_index.end()) {
      std::ostringstream msg;
      msg << "detection refers to unknown scene id " << d.scene_id;
      throw std::invalid_argument(msg.str());
    }
    per_scene[it->second].push_back(d);
  }

  struct Scored {
    const Detection* det;
    bool tp;
  };
  std::vector<Scored> pooled;
  std::size_t n_gt = 0;
  for (std::size_t s = 0; s < gts.size(); ++s) {
    auto& sd = per_scene[s];
    std::stable_sort(sd.begin(), sd.end(), ranks_before);
    std::vector<bool> ignore_buf(gts[s].boxes.size());
    for (std::size_t g = 0; g < gts[s].boxes.size(); ++g) {
      const double a = gts[s].boxes[g].area();
      ignore_buf[g] = a < area_lo || a > area_hi;
      if (!ignore_buf[g]) ++n_gt;
    }
    std::unique_ptr<bool[]> ignore(new bool[ignore_buf.size() + 1]);
    for (std::size_t g = 0; g < ignore_buf.size(); ++g) ignore[g] = ignore_buf[g];
    const auto m = match(sd, gts[s].boxes, threshold,
                         std::span<const bool>(ignore.get(), ignore_buf.size()), area_lo, area_hi);
    for (std::size_t d = 0; d < sd.size(); ++d) {
      if (!m.ignored[d]) pooled.push_back({&sd[d], m.true_positive[d]});
    }
  }
  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const Scored& a, const Scored& b) { return ranks_before(*a.det, *b.det); });
  std::unique_ptr<bool[]> flags(new bool[pooled.size() + 1]);
  for (std::size_t i = 0; i < pooled.size(); ++i) flags[i] = pooled[i].tp;
  const std::span<const bool> fs(flags.get(), pooled.size());
  if (precision != nullptr) *precision = interpolated_precision(fs, n_gt);
  return average_precision(fs, n_gt);
}

EvalResult evaluate(std::span<const Detection> dets, std::span<const GroundTruthSet> gts,
                    const EvalSettings& settings) {
  if (settings.thresholds.empty()) throw std::invalid_argument("no evaluation thresholds");
  std::vector<double> all = settings.thresholds;
  for (const double t : {0.5, 0.75}) {
    if (std::none_of(all.begin(), all.end(), [&](double x) { return same_threshold(x, t); })) {
      all.push_back(t);
    }
  }
  std::sort(all.begin(), all.end());

  EvalResult r;
  for (const double t : all) {
    ThresholdResult tr;
    tr.threshold = t;
    tr.ap = pooled_ap(dets, gts, t, 0.0, std::numeric_limits<double>::infinity(), &tr.precision);
    r.per_threshold.push_back(tr);
  }
  r.ap50 = r.ap_at(0.5);
  r.ap75 = r.ap_at(0.75);
  double sum = 0.0;
  double s_small = 0.0;
  double s_medium = 0.0;
  double s_large = 0.0;
  const auto& bins = settings.scale_bins;
  for (const double t : settings.thresholds) {
    sum += r.ap_at(t);
    s_small += pooled_ap(dets, gts, t, 0.0, bins.small_max);
    s_medium += pooled_ap(dets, gts, t, bins.small_max, bins.medium_max);
    s_large += pooled_ap(dets, gts, t, bins.medium_max, std::numeric_limits<double>::infinity());
  }
  const double n = static_cast<double>(settings.thresholds.size());
  r.ap = sum / n;
  r.ap_small = s_small / n;
  r.ap_medium = s_medium / n;
  r.ap_large = s_large / n;
  return r;
}

double EvalResult::ap_at(double threshold) const {
  for (const auto& t : per_threshold) {
    if (same_threshold(t.threshold, threshold)) return t.ap;
  }
  throw std::out_of_range("threshold " + format_threshold(threshold) + " was not evaluated");
}

std::string EvalResult::to_csv(const std::string& config_hash, std::uint64_t seed) const {
  std::ostringstream out;
  out << "config_hash,seed,metric,value\n";
  auto row = [&](const std::string& name, double v) {
    out << config_hash << ',' << seed << ',' << name << ',' << format_value(v) << '\n';
  };
  row("AP", ap);
  row("AP50", ap50);
  row("AP75", ap75);
  row("AP_S", ap_small);
  row("AP_M", ap_medium);
  row("AP_L", ap_large);
  for (const auto& t : per_threshold) row("AP@" + format_threshold(t.threshold), t.ap);
  return out.str();
}

std::string EvalResult::to_json(const std::string& config_hash, std::uint64_t seed) const {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["overall"] = {{"AP", ap}, {"AP50", ap50}, {"AP75", ap75}};
  j["by_scale"] = {{"small", ap_small}, {"medium", ap_medium}, {"large", ap_large}};
  nlohmann::ordered_json by_t = nlohmann::ordered_json::object();
  for (const auto& t : per_threshold) {
    by_t[format_threshold(t.threshold)] = {{"AP", t.ap},
                                           {"precision", std::vector<double>(t.precision.begin(),
                                                                             t.precision.end())}};
  }
  j["by_threshold"] = std::move(by_t);
  return j.dump(2) + "\n";
}

std::string EvalResult::pr_curve_csv(const std::string& config_hash, std::uint64_t seed) const {
  std::ostringstream out;
  out << "config_hash,seed,threshold,recall,precision\n";
  for (const auto& t : per_threshold) {
    for (int k = 0; k < kRecallPoints; ++k) {
      out << config_hash << ',' << seed << ',' << format_threshold(t.threshold) << ','
          << format_value(k / 100.0) << ','
          << format_value(t.precision[static_cast<std::size_t>(k)]) << '\n';
    }
  }
  return out.str();
}

}  // namespace gridcascade
