#include "gridcascade/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "gridcascade/rng.hpp"

namespace gridcascade {

void OracleParams::validate() const {
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  if (!(peak_decay > 0.0)) throw std::invalid_argument("peak_decay must be > 0");
  if (!(background_level >= 0.0 && background_level < 0.5)) {
    throw std::invalid_argument("background_level must lie in [0, 0.5)");
  }
  if (!(background_level < std::exp(-peak_decay))) {
    throw std::invalid_argument("background_level must stay below the decayed peak at radius 1");
  }
}

OraclePredictor::OraclePredictor(OracleParams params) : params_(params) { params_.validate(); }

HeatmapSet OraclePredictor::predict(const Scene& scene, const BBox& box, double ratio,
                                    const GridLayout& layout, std::uint64_t seed) const {
  HeatmapSet h(box, ratio, layout);
  const double bg = params_.background_level;
  const auto match = best_match(box, scene);
  if (match.index < 0 || match.iou < kOracleMatchIou) {
    std::fill(h.values().begin(), h.values().end(), bg);
    return h;
  }

  const int s = layout.resolution;
  std::vector<double> falloff(static_cast<std::size_t>(s) * s);
  for (int dr = 0; dr < s; ++dr) {
    for (int dc = 0; dc < s; ++dc) {
      falloff[static_cast<std::size_t>(dr * s + dc)] =
          std::max(bg, std::exp(-params_.peak_decay * std::hypot(dr, dc)));
    }
  }

  Rng rng(seed);
  const auto pts = grid_points(scene.gts[static_cast<std::size_t>(match.index)].box);
  for (int k = 0; k < layout.n_points; ++k) {
    CellPoint cp = image_to_cell(pts[static_cast<std::size_t>(k)], box, ratio, s);
    cp.u += params_.noise_sigma * rng.normal();
    cp.v += params_.noise_sigma * rng.normal();
    int row = 0;
    int col = 0;
    if (!cell_index(cp, s, row, col)) {
      if (!params_.truncate) {
        auto ch = h.channel(k);
        std::fill(ch.begin(), ch.end(), bg);
        continue;
      }
      cp.u = std::clamp(cp.u, 0.0, static_cast<double>(s));
      cp.v = std::clamp(cp.v, 0.0, static_cast<double>(s));
      cell_index(cp, s, row, col);
    }
    for (int r = 0; r < s; ++r) {
      for (int c = 0; c < s; ++c) {
        h.at(k, r, c) = falloff[static_cast<std::size_t>(std::abs(r - row) * s + std::abs(c - col))];
      }
    }
  }
  return h;
}

HeatmapNet::HeatmapNet(int hidden, GridLayout layout) : hidden_(hidden), layout_(layout) {
  layout_.validate();
  if (hidden_ <= 0) throw std::invalid_argument("heatmap net needs a positive hidden width");
  params_.assign(b2() + static_cast<std::size_t>(factor_count()), 0.0);
}

void HeatmapNet::initialize(std::uint64_t seed) {
  Rng rng(seed);
  const double l1 = std::sqrt(6.0 / (kInputs + hidden_));
  const double l2 = std::sqrt(6.0 / (hidden_ + factor_count()));
  for (std::size_t i = w1(); i < b1(); ++i) params_[i] = rng.uniform(-l1, l1);
  for (std::size_t i = b1(); i < w2(); ++i) params_[i] = 0.0;
  for (std::size_t i = w2(); i < b2(); ++i) params_[i] = rng.uniform(-l2, l2);
  for (std::size_t i = b2(); i < params_.size(); ++i) params_[i] = 0.0;
}

std::vector<double> HeatmapNet::features(const Scene& scene, const BBox& box, double ratio) {
  const double W = scene.bounds.width;
  const double H = scene.bounds.height;
  const double aspect = box.has_positive_area() ? std::log(box.width() / box.height()) : 0.0;
  return {box.center_x() / W, box.center_y() / H, box.width() / W, box.height() / H, aspect,
          ratio - 1.0};
}

HeatmapSet HeatmapNet::forward(const Scene& scene, const BBox& box, double ratio,
                               Cache* cache) const {
  const auto x = features(scene, box, ratio);
  std::vector<double> hid(static_cast<std::size_t>(hidden_));
  for (int j = 0; j < hidden_; ++j) {
    double z = params_[b1() + static_cast<std::size_t>(j)];
    for (int i = 0; i < kInputs; ++i) {
      z += params_[w1() + static_cast<std::size_t>(j * kInputs + i)] * x[static_cast<std::size_t>(i)];
    }
    hid[static_cast<std::size_t>(j)] = std::tanh(z);
  }
  const int f = factor_count();
  std::vector<double> factors(static_cast<std::size_t>(f));
  for (int o = 0; o < f; ++o) {
    double z = params_[b2() + static_cast<std::size_t>(o)];
    const double* w = params_.data() + w2() + static_cast<std::size_t>(o) * hidden_;
    for (int j = 0; j < hidden_; ++j) z += w[j] * hid[static_cast<std::size_t>(j)];
    factors[static_cast<std::size_t>(o)] = z;
  }

  HeatmapSet h(box, ratio, layout_);
  const int s = layout_.resolution;
  for (int k = 0; k < layout_.n_points; ++k) {
    const double* rows = factors.data() + static_cast<std::ptrdiff_t>(2 * k) * s;
    const double* cols = rows + s;
    for (int r = 0; r < s; ++r) {
      for (int c = 0; c < s; ++c) {
        const double p = 1.0 / (1.0 + std::exp(-(rows[r] + cols[c])));
        if (!std::isfinite(p)) {
          std::ostringstream msg;
          msg << "heatmap net produced a non-finite value at channel " << k << " cell (" << r
              << "," << c << "); row logit " << rows[r] << ", col logit " << cols[c];
          throw std::runtime_error(msg.str());
        }
        h.at(k, r, c) = p;
      }
    }
  }
  if (cache != nullptr) {
    cache->input = x;
    cache->hidden = std::move(hid);
  }
  return h;
}

void HeatmapNet::backward(const Cache& cache, const HeatmapSet& output,
                          std::span<const double> value_grad, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer size mismatch");
  const int s = layout_.resolution;
  const int f = factor_count();
  std::vector<double> dfactor(static_cast<std::size_t>(f), 0.0);
  for (int k = 0; k < layout_.n_points; ++k) {
    double* drows = dfactor.data() + static_cast<std::ptrdiff_t>(2 * k) * s;
    double* dcols = drows + s;
    for (int r = 0; r < s; ++r) {
      for (int c = 0; c < s; ++c) {
        const double p = output.at(k, r, c);
        const std::size_t flat = (static_cast<std::size_t>(k) * s + r) * s + c;
        const double dz = value_grad[flat] * p * (1.0 - p);
        drows[r] += dz;
        dcols[c] += dz;
      }
    }
  }
  std::vector<double> dhid(static_cast<std::size_t>(hidden_), 0.0);
  for (int o = 0; o < f; ++o) {
    const double d = dfactor[static_cast<std::size_t>(o)];
    grad[b2() + static_cast<std::size_t>(o)] += d;
    const std::size_t row = w2() + static_cast<std::size_t>(o) * hidden_;
    for (int j = 0; j < hidden_; ++j) {
      grad[row + static_cast<std::size_t>(j)] += d * cache.hidden[static_cast<std::size_t>(j)];
      dhid[static_cast<std::size_t>(j)] += d * params_[row + static_cast<std::size_t>(j)];
    }
  }
  for (int j = 0; j < hidden_; ++j) {
    const double a = cache.hidden[static_cast<std::size_t>(j)];
    const double dz = dhid[static_cast<std::size_t>(j)] * (1.0 - a * a);
    grad[b1() + static_cast<std::size_t>(j)] += dz;
    for (int i = 0; i < kInputs; ++i) {
      grad[w1() + static_cast<std::size_t>(j * kInputs + i)] += dz * cache.input[static_cast<std::size_t>(i)];
    }
  }
}

HeatmapSet ToyPredictor::predict(const Scene& scene, const BBox& box, double ratio,
                                 const GridLayout& layout, std::uint64_t /*seed*/) const {
  if (layout.resolution != net_.layout().resolution || layout.n_points != net_.layout().n_points) {
    throw std::invalid_argument("toy predictor layout differs from the requested layout");
  }
  return net_.forward(scene, box, ratio);
}

}  // namespace gridcascade
