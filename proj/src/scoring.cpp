#include "gridcascade/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gridcascade {

namespace {

bool in_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

double pow0(double base, double exponent) {
  if (exponent == 0.0) return 1.0;
  return std::pow(base, exponent);
}

void require_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    std::ostringstream msg;
    msg << name << " must be a non-negative finite value, got " << v;
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

void ScoreTriple::validate() const {
  if (!in_unit(cls) || !in_unit(iou) || !in_unit(resample)) {
    std::ostringstream msg;
    msg << "scores must lie in [0,1], got (" << cls << ", " << iou << ", " << resample << ")";
    throw std::invalid_argument(msg.str());
  }
}

void ScoringConfig::validate() const {
  if (!in_unit(gamma)) throw std::invalid_argument("gamma must lie in [0,1]");
  for (const double w : {alpha1, alpha2, lambda1, lambda2, lambda3, lambda4}) {
    require_non_negative(w, "loss weight");
  }
}

double fused_score(const ScoreTriple& t, double gamma) {
  t.validate();
  if (!in_unit(gamma)) throw std::invalid_argument("gamma must lie in [0,1]");
  return std::clamp(pow0(t.cls * t.iou, gamma) * pow0(t.resample, 1.0 - gamma), 0.0, 1.0);
}

std::vector<double> iou_features(const HeatmapSet& h, const BBox& box, const ImageBounds& bounds) {
  const auto points = decode_points(h);
  const double s = h.resolution();
  std::vector<double> f;
  f.reserve(kIouFeatureSize);
  for (int k = 0; k < h.channels(); ++k) {
    const auto ch = h.channel(k);
    const auto& p = points[static_cast<std::size_t>(k)];
    f.push_back(p.confidence);
    f.push_back((p.col + 0.5) / s);
    f.push_back((p.row + 0.5) / s);
    f.push_back(std::accumulate(ch.begin(), ch.end(), 0.0) / static_cast<double>(ch.size()));
  }
  const double W = bounds.width;
  const double H = bounds.height;
  f.push_back(box.width() / W);
  f.push_back(box.height() / H);
  f.push_back(box.has_positive_area() ? std::log(box.width() / box.height()) : 0.0);
  f.push_back(std::sqrt(box.area() / (W * H)));
  return f;
}

IouPrediction IouScoreOracle::predict(const BBox& box, const Scene& scene) const {
  const auto m = best_match(box, scene);
  if (m.index < 0 || m.iou <= 0.0) return {0.0, 1.0};
  double fg = m.iou;
  if (ref_ == Reference::FullExtent) {
    fg = iou(box, scene.gts[static_cast<std::size_t>(m.index)].full_extent);
  }
  return {fg, 1.0 - fg};
}

IouScoreModel::IouScoreModel() : net_({kIouFeatureSize, 32, 16, 2}) {}

IouScoreModel::IouScoreModel(Mlp net, bool trained) : net_(std::move(net)), trained_(trained) {
  if (net_.input_size() != kIouFeatureSize || net_.output_size() != 2) {
    throw std::invalid_argument("IoU score network must map the feature vector to two outputs");
  }
}

IouPrediction IouScoreModel::predict(std::span<const double> features) const {
  if (!trained_) throw std::logic_error("IoU score model used before training");
  const auto y = net_.predict(features);
  return {y[0], y[1]};
}

double iou_score_loss(std::span<const double> pred_fg, std::span<const double> pred_bg,
                      std::span<const double> target_iou, std::vector<double>* grad_fg,
                      std::vector<double>* grad_bg) {
  if (pred_fg.size() != pred_bg.size() || pred_fg.size() != target_iou.size()) {
    throw std::invalid_argument("IoU loss inputs differ in length");
  }
  const std::size_t n = pred_fg.size();
  if (grad_fg != nullptr) grad_fg->assign(n, 0.0);
  if (grad_bg != nullptr) grad_bg->assign(n, 0.0);
  if (n == 0) return 0.0;
  double sum = 0.0;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = target_iou[i];
    if (!in_unit(t)) throw std::invalid_argument("IoU targets must lie in [0,1]");
    const double ef = pred_fg[i] - t;
    const double eb = pred_bg[i] - (1.0 - t);
    sum += ef * ef + eb * eb;
    if (grad_fg != nullptr) (*grad_fg)[i] = 2.0 * ef * inv;
    if (grad_bg != nullptr) (*grad_bg)[i] = 2.0 * eb * inv;
  }
  return sum * inv;
}

double resample_oracle(const BBox& box, const Scene& scene) {
  return sigmoid(8.0 * (best_match(box, scene).iou - 0.5));
}

ResampleScoreModel::ResampleScoreModel() : net_({kRoiDescriptorSize, 8, 1}) {}

ResampleScoreModel::ResampleScoreModel(Mlp net, bool trained)
    : net_(std::move(net)), trained_(trained) {
  if (net_.input_size() != kRoiDescriptorSize || net_.output_size() != 1) {
    throw std::invalid_argument("resample score network must map a RoI descriptor to one output");
  }
}

double ResampleScoreModel::predict(std::span<const double> descriptor) const {
  if (!trained_) throw std::logic_error("resample score model used before training");
  return net_.predict(descriptor)[0];
}

double ResampleScoreModel::predict(const BBox& box, const Scene& scene, std::uint64_t seed) const {
  const auto d = roi_descriptor(box, scene, seed);
  return predict(d);
}

double classification_loss(std::span<const double> prob, std::span<const double> label,
                           std::vector<double>* grad) {
  if (prob.size() != label.size()) throw std::invalid_argument("classification loss size mismatch");
  const std::size_t n = prob.size();
  if (grad != nullptr) grad->assign(n, 0.0);
  if (n == 0) return 0.0;
  constexpr double eps = 1e-6;
  const double inv = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::clamp(prob[i], eps, 1.0 - eps);
    const double y = label[i];
    sum -= y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
    if (grad != nullptr && prob[i] > eps && prob[i] < 1.0 - eps) {
      (*grad)[i] = inv * (-y / q + (1.0 - y) / (1.0 - q));
    }
  }
  return sum * inv;
}

double scoring_loss(double resample_loss, double iou_loss, double alpha1, double alpha2) {
  require_non_negative(resample_loss, "resample loss");
  require_non_negative(iou_loss, "IoU loss");
  return alpha1 * resample_loss + alpha2 * iou_loss;
}

double total_loss(double rpn_loss, double cls_loss, double scoring, double grid_loss,
                  const ScoringConfig& cfg) {
  require_non_negative(rpn_loss, "rpn loss");
  require_non_negative(cls_loss, "classification loss");
  require_non_negative(scoring, "scoring loss");
  require_non_negative(grid_loss, "grid loss");
  return cfg.lambda1 * rpn_loss + cfg.lambda2 * cls_loss + cfg.lambda3 * scoring +
         cfg.lambda4 * grid_loss;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tie groups, then Mann-Whitney U.
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  double pos = 0.0;
  double neg = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0) {
      pos += 1.0;
      rank_sum += rank[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) return 0.5;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

}  // namespace gridcascade
