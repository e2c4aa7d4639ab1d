#include "gridcascade/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gridcascade/rng.hpp"
#include "json.hpp"

namespace gridcascade {

using nlohmann::json;

namespace {

constexpr double kSmallMin = 10.0;
constexpr double kMediumMin = 32.0;
constexpr double kLargeMin = 96.0;
constexpr double kLargeMax = 256.0;
constexpr double kMaxAspect = 2.0;
constexpr int kPlacementRetries = 100;
constexpr int kBackgroundRetries = 1000;

struct SideRange {
  double lo;
  double hi;
};

SideRange side_range(int bin, const ImageBounds& bounds) {
  // Largest side must still fit after the worst-case aspect stretch.
  const double fit = 0.9 * std::min(bounds.width, bounds.height) / std::sqrt(kMaxAspect);
  switch (bin) {
    case 0: return {kSmallMin, kMediumMin};
    case 1: return {kMediumMin, kLargeMin};
    default: return {kLargeMin, std::min(kLargeMax, fit)};
  }
}

BBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw std::runtime_error("box must be an array of 4 numbers");
  }
  return BBox(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
              j.at(3).get<double>());
}

json box_to_json(const BBox& b) { return json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

}  // namespace

void Scene::validate() const {
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& g = gts[i];
    if (g.box.x1() < 0.0 || g.box.y1() < 0.0 || g.box.x2() > bounds.width ||
        g.box.y2() > bounds.height) {
      std::ostringstream msg;
      msg << "scene " << id << ": gt " << i << " escapes image bounds";
      throw std::invalid_argument(msg.str());
    }
    if (g.truncated != (g.full_extent != g.box)) {
      std::ostringstream msg;
      msg << "scene " << id << ": gt " << i
          << " truncated flag disagrees with its full extent";
      throw std::invalid_argument(msg.str());
    }
  }
}

void ProposalParams::validate() const {
  if (!(jitter_sigma >= 0.0) || !(scale_quantization >= 0.0)) {
    throw std::invalid_argument("proposal jitter and quantization must be non-negative");
  }
  if (per_gt < 0 || n_background < 0) {
    throw std::invalid_argument("proposal counts must be non-negative");
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Scene generate_scene(std::uint64_t seed, int id, const SceneParams& params) {
  if (params.n_objects < 0) throw std::invalid_argument("n_objects must be >= 0");
  const double tf = params.truncated_fraction;
  if (!(tf >= 0.0 && tf <= 1.0)) {
    throw std::invalid_argument("truncated_fraction must lie in [0,1]");
  }
  const auto& mix = params.size_mix;
  const double total = mix.small + mix.medium + mix.large;
  if (!(mix.small >= 0.0 && mix.medium >= 0.0 && mix.large >= 0.0 && total > 0.0)) {
    throw std::invalid_argument("size_mix fractions must be non-negative and not all zero");
  }
  const std::array<double, 3> weights{mix.small, mix.medium, mix.large};
  for (int bin = 0; bin < 3; ++bin) {
    const auto r = side_range(bin, params.bounds);
    if (weights[static_cast<std::size_t>(bin)] > 0.0 && r.hi <= r.lo) {
      std::ostringstream msg;
      msg << "size_mix requests objects of side >= " << r.lo << " px that cannot fit a "
          << params.bounds.width << "x" << params.bounds.height << " image";
      throw std::invalid_argument(msg.str());
    }
  }

  Rng rng(derive_seed(seed, {0x5CE7E, static_cast<std::uint64_t>(id)}));
  Scene scene;
  scene.id = id;
  scene.bounds = params.bounds;
  const double W = params.bounds.width;
  const double H = params.bounds.height;

  for (int n = 0; n < params.n_objects; ++n) {
    const double pick = rng.uniform() * total;
    const int bin = pick < mix.small ? 0 : (pick < mix.small + mix.medium ? 1 : 2);
    const auto range = side_range(bin, params.bounds);
    const bool truncate = rng.uniform() < tf;

    GroundTruth g;
    for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
      const double side = std::exp(rng.uniform(std::log(range.lo), std::log(range.hi)));
      const double aspect = std::exp(rng.uniform(-std::log(kMaxAspect), std::log(kMaxAspect)));
      const double w = side * std::sqrt(aspect);
      const double h = side / std::sqrt(aspect);
      BBox full;
      if (!truncate) {
        const double cx = rng.uniform(0.5 * w, W - 0.5 * w);
        const double cy = rng.uniform(0.5 * h, H - 0.5 * h);
        full = BBox::from_center(cx, cy, w, h);
      } else {
        // Push the object across one border so 40-85% of it stays visible.
        const double visible = rng.uniform(0.4, 0.85);
        const int border = rng.uniform_int(0, 3);
        double x1 = rng.uniform(0.0, W - w);
        double y1 = rng.uniform(0.0, H - h);
        switch (border) {
          case 0: x1 = -(1.0 - visible) * w; break;
          case 1: x1 = W - visible * w; break;
          case 2: y1 = -(1.0 - visible) * h; break;
          default: y1 = H - visible * h; break;
        }
        full = BBox(x1, y1, x1 + w, y1 + h);
      }
      g.full_extent = full;
      g.box = clip(full, params.bounds);
      g.truncated = g.box != full;
      bool crowded = false;
      for (const auto& other : scene.gts) {
        if (iou(other.box, g.box) > 0.2) crowded = true;
      }
      if (!crowded) break;
    }
    scene.gts.push_back(g);
  }
  return scene;
}

std::vector<Scene> generate_corpus(std::uint64_t seed, int n_scenes,
                                   const SceneParams& params) {
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(std::max(n_scenes, 0)));
  for (int i = 0; i < n_scenes; ++i) scenes.push_back(generate_scene(seed, i, params));
  return scenes;
}

BestMatch best_match(const BBox& box, const Scene& scene) {
  BestMatch best;
  for (std::size_t i = 0; i < scene.gts.size(); ++i) {
    const double v = iou(box, scene.gts[i].box);
    if (best.index < 0 || v > best.iou) {
      best.index = static_cast<int>(i);
      best.iou = v;
    }
  }
  return best;
}

std::vector<BBox> generate_proposals(const Scene& scene, const ProposalParams& params) {
  params.validate();
  Rng rng(derive_seed(params.seed, {0x9809, static_cast<std::uint64_t>(scene.id)}));
  const double q = params.scale_quantization;
  std::vector<BBox> out;

  for (const auto& g : scene.gts) {
    const BBox& b = g.box;
    for (int k = 0; k < params.per_gt; ++k) {
      BBox p = b;
      for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
        const double dx = rng.normal() * params.jitter_sigma * b.width();
        const double dy = rng.normal() * params.jitter_sigma * b.height();
        double w = b.width() * std::exp(rng.normal() * params.jitter_sigma);
        double h = b.height() * std::exp(rng.normal() * params.jitter_sigma);
        if (q > 0.0) {
          w = std::exp2(std::round(std::log2(w) / q) * q);
          h = std::exp2(std::round(std::log2(h) / q) * q);
        }
        const double dw = w - b.width();
        const double dh = h - b.height();
        p = clip(BBox(b.x1() + dx - 0.5 * dw, b.y1() + dy - 0.5 * dh,
                      b.x2() + dx + 0.5 * dw, b.y2() + dy + 0.5 * dh),
                 scene.bounds);
        if (p.has_positive_area()) break;
      }
      if (!p.has_positive_area()) p = b;
      out.push_back(p);
    }
  }

  const double W = scene.bounds.width;
  const double H = scene.bounds.height;
  for (int n = 0; n < params.n_background; ++n) {
    bool placed = false;
    double best_seen = 1.0;
    for (int attempt = 0; attempt < kBackgroundRetries && !placed; ++attempt) {
      const double side = std::exp(rng.uniform(std::log(16.0), std::log(160.0)));
      const double aspect = std::exp(rng.uniform(-std::log(kMaxAspect), std::log(kMaxAspect)));
      const double w = std::min(side * std::sqrt(aspect), W);
      const double h = std::min(side / std::sqrt(aspect), H);
      const double x1 = rng.uniform(0.0, W - w);
      const double y1 = rng.uniform(0.0, H - h);
      const BBox p(x1, y1, std::min(x1 + w, W), std::min(y1 + h, H));
      const double m = best_match(p, scene).iou;
      best_seen = std::min(best_seen, m);
      if (p.has_positive_area() && m < kBackgroundIou) {
        out.push_back(p);
        placed = true;
      }
    }
    if (!placed) {
      std::ostringstream msg;
      msg << "scene " << scene.id << ": could not place background proposal " << n
          << " after " << kBackgroundRetries << " attempts (lowest max-IoU seen "
          << best_seen << ", need < " << kBackgroundIou << ")";
      throw std::runtime_error(msg.str());
    }
  }
  return out;
}

double simulate_cls_confidence(const BBox& proposal, const Scene& scene,
                               double decorrelation, std::uint64_t seed) {
  if (!(decorrelation >= 0.0 && decorrelation <= 1.0)) {
    throw std::invalid_argument("decorrelation must lie in [0,1]");
  }
  const double base = sigmoid(8.0 * (best_match(proposal, scene).iou - 0.5));
  Rng rng(seed);
  const double noise = rng.uniform();
  return std::clamp((1.0 - decorrelation) * base + decorrelation * noise, 0.0, 1.0);
}

std::vector<double> roi_descriptor(const BBox& box, const Scene& scene, std::uint64_t seed) {
  double coverage = 0.0;
  double containment = 0.0;
  for (const auto& g : scene.gts) {
    const double inter = intersection_area(box, g.box);
    if (box.area() > 0.0) coverage = std::max(coverage, inter / box.area());
    if (g.box.area() > 0.0) containment = std::max(containment, inter / g.box.area());
  }
  Rng rng(seed);
  const double image_area = scene.bounds.width * scene.bounds.height;
  const double area = std::max(box.area(), 1.0);
  return {
      coverage + 0.05 * rng.normal(),
      containment + 0.05 * rng.normal(),
      std::log(area) / std::log(image_area),
      box.height() > 0.0 && box.width() > 0.0 ? std::log(box.width() / box.height()) : 0.0,
      1.0,
  };
}

void save_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path) {
  json doc;
  doc["version"] = kSceneSchemaVersion;
  doc["scenes"] = json::array();
  for (const auto& s : scenes) {
    json js;
    js["id"] = s.id;
    js["width"] = s.bounds.width;
    js["height"] = s.bounds.height;
    js["gts"] = json::array();
    for (const auto& g : s.gts) {
      js["gts"].push_back({{"box", box_to_json(g.box)},
                           {"class", g.class_id},
                           {"truncated", g.truncated},
                           {"full_extent", box_to_json(g.full_extent)}});
    }
    doc["scenes"].push_back(std::move(js));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<Scene> load_scenes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open scene corpus " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed scene corpus " + path.string() + ": " + e.what());
  }
  try {
    const int version = doc.at("version").get<int>();
    if (version != kSceneSchemaVersion) {
      std::ostringstream msg;
      msg << "scene corpus " << path.string() << ": unsupported schema version " << version
          << " (expected " << kSceneSchemaVersion << ")";
      throw std::runtime_error(msg.str());
    }
    std::vector<Scene> scenes;
    for (const auto& js : doc.at("scenes")) {
      Scene s;
      s.id = js.at("id").get<int>();
      s.bounds = ImageBounds(js.at("width").get<double>(), js.at("height").get<double>());
      for (const auto& jg : js.at("gts")) {
        GroundTruth g;
        g.box = box_from_json(jg.at("box"));
        g.class_id = jg.at("class").get<int>();
        g.truncated = jg.at("truncated").get<bool>();
        g.full_extent = box_from_json(jg.at("full_extent"));
        s.gts.push_back(g);
      }
      s.validate();
      scenes.push_back(std::move(s));
    }
    return scenes;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed scene corpus " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("invalid scene corpus " + path.string() + ": " + e.what());
  }
}

}  // namespace gridcascade
