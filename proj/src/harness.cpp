#include "gridcascade/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "gridcascade/model_io.hpp"
#include "gridcascade/rng.hpp"
#include "json.hpp"

namespace gridcascade {

namespace {

using nlohmann::ordered_json;

// Stream tags for derived seeds.
enum : std::uint64_t {
  kTagCorpus = 0xC0,
  kTagProposals = 0xA1,
  kTagCls = 0xA2,
  kTagCascade = 0xA3,
  kTagDescriptor = 0xA4,
  kTagTrainCorpus = 0xB0,
  kTagTrainInit = 0xB1,
  kTagTrainOracle = 0xB2,
  kTagGradcheck = 0xB3,
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Config document

const char* predictor_name(PredictorKind k) { return k == PredictorKind::Oracle ? "oracle" : "toy"; }
const char* source_name(ScoreSource s) { return s == ScoreSource::Oracle ? "oracle" : "model"; }
const char* reference_name(IouScoreOracle::Reference r) {
  return r == IouScoreOracle::Reference::Visible ? "visible" : "full_extent";
}

ordered_json stage_document(const StageConfig& s) {
  ordered_json j;
  j["mapping_ratio"] = s.mapping_ratio;
  j["iou_threshold"] = s.iou_threshold;
  j["loss_weight"] = s.loss_weight;
  return j;
}

ordered_json config_document(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed ? ordered_json(*c.seed) : ordered_json(nullptr);

  ordered_json corpus;
  corpus["path"] = c.corpus.path;
  corpus["n_scenes"] = c.corpus.n_scenes;
  corpus["width"] = c.corpus.scene.bounds.width;
  corpus["height"] = c.corpus.scene.bounds.height;
  corpus["n_objects"] = c.corpus.scene.n_objects;
  corpus["truncated_fraction"] = c.corpus.scene.truncated_fraction;
  ordered_json mix;
  mix["small"] = c.corpus.scene.size_mix.small;
  mix["medium"] = c.corpus.scene.size_mix.medium;
  mix["large"] = c.corpus.scene.size_mix.large;
  corpus["size_mix"] = std::move(mix);
  j["corpus"] = std::move(corpus);

  ordered_json prop;
  prop["jitter_sigma"] = c.proposals.jitter_sigma;
  prop["scale_quantization"] = c.proposals.scale_quantization;
  prop["per_gt"] = c.proposals.per_gt;
  prop["n_background"] = c.proposals.n_background;
  j["proposals"] = std::move(prop);

  ordered_json pred;
  pred["kind"] = predictor_name(c.predictor.kind);
  ordered_json oracle;
  oracle["noise_sigma"] = c.predictor.oracle.noise_sigma;
  oracle["truncate"] = c.predictor.oracle.truncate;
  oracle["peak_decay"] = c.predictor.oracle.peak_decay;
  oracle["background_level"] = c.predictor.oracle.background_level;
  pred["oracle"] = std::move(oracle);
  pred["model_path"] = c.predictor.model_path;
  j["predictor"] = std::move(pred);

  ordered_json cascade;
  ordered_json stages = ordered_json::array();
  for (const auto& s : c.cascade.stages) stages.push_back(stage_document(s));
  cascade["stages"] = std::move(stages);
  cascade["grid_loss_weight"] = c.cascade.grid_loss_weight;
  ordered_json grid;
  grid["n_points"] = c.cascade.layout.n_points;
  grid["resolution"] = c.cascade.layout.resolution;
  cascade["grid"] = std::move(grid);
  j["cascade"] = std::move(cascade);

  const auto& s = c.scoring;
  ordered_json scoring;
  scoring["gamma"] = s.weights.gamma;
  scoring["alpha1"] = s.weights.alpha1;
  scoring["alpha2"] = s.weights.alpha2;
  scoring["lambda1"] = s.weights.lambda1;
  scoring["lambda2"] = s.weights.lambda2;
  scoring["lambda3"] = s.weights.lambda3;
  scoring["lambda4"] = s.weights.lambda4;
  scoring["use_iou"] = s.use_iou;
  scoring["use_resample"] = s.use_resample;
  scoring["iou_source"] = source_name(s.iou_source);
  scoring["iou_reference"] = reference_name(s.iou_reference);
  scoring["iou_model_path"] = s.iou_model_path;
  scoring["resample_source"] = source_name(s.resample_source);
  scoring["resample_model_path"] = s.resample_model_path;
  scoring["cls_decorrelation"] = s.cls_decorrelation;
  j["scoring"] = std::move(scoring);

  ordered_json inf;
  inf["pre_nms_threshold"] = c.inference.pre_nms_threshold;
  inf["max_rois"] = c.inference.max_rois;
  inf["final_nms_threshold"] = c.inference.final_nms_threshold;
  j["inference"] = std::move(inf);

  ordered_json ev;
  ev["thresholds"] = c.evaluation.thresholds;
  ev["small_max"] = c.evaluation.scale_bins.small_max;
  ev["medium_max"] = c.evaluation.scale_bins.medium_max;
  j["evaluation"] = std::move(ev);

  ordered_json train;
  train["n_scenes"] = c.train.n_scenes;
  train["steps"] = c.train.steps;
  train["scenes_per_step"] = c.train.scenes_per_step;
  train["learning_rate"] = c.train.learning_rate;
  train["hidden"] = c.train.hidden;
  j["train"] = std::move(train);

  ordered_json gc;
  gc["coordinates"] = c.gradcheck.coordinates;
  gc["tolerance"] = c.gradcheck.tolerance;
  j["gradcheck"] = std::move(gc);

  ordered_json exec;
  exec["workers"] = c.workers;
  j["execution"] = std::move(exec);
  return j;
}

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config key '" + path + "': " + what);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void assign(ordered_json& node, const ordered_json& value, const std::string& path);

// Merges a user object into the resolved document, rejecting keys the
// document does not have.
void merge(ordered_json& base, const ordered_json& user, const std::string& path) {
  if (!user.is_object()) config_error(path.empty() ? "<root>" : path, "expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key_path = join(path, it.key());
    if (!base.contains(it.key())) config_error(key_path, "unknown key");
    assign(base[it.key()], it.value(), key_path);
  }
}

void assign(ordered_json& node, const ordered_json& value, const std::string& path) {
  if (node.is_object()) {
    merge(node, value, path);
  } else if (path == "cascade.stages") {
    if (!value.is_array()) config_error(path, "expected an array of stage objects");
    ordered_json stages = ordered_json::array();
    for (std::size_t i = 0; i < value.size(); ++i) {
      ordered_json stage = stage_document(StageConfig{});
      merge(stage, value[i], path + "." + std::to_string(i));
      stages.push_back(std::move(stage));
    }
    node = std::move(stages);
  } else {
    node = value;
  }
}

void apply_override(ordered_json& doc, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + text + "' is not of the form key=value");
  }
  const std::string path = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  ordered_json value;
  try {
    value = ordered_json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  ordered_json* node = &doc;
  std::string walked;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string seg = path.substr(start, dot == std::string::npos ? dot : dot - start);
    walked = join(walked, seg);
    if (node->is_object()) {
      if (!node->contains(seg)) config_error(walked, "unknown key");
      node = &(*node)[seg];
    } else if (node->is_array()) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(seg, &used);
        if (used != seg.size()) throw std::invalid_argument(seg);
      } catch (const std::exception&) {
        config_error(walked, "expected an array index");
      }
      if (idx >= node->size()) config_error(walked, "index out of range");
      node = &(*node)[idx];
    } else {
      config_error(walked, "cannot descend into a scalar");
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  assign(*node, value, path);
}

template <class T>
T field(const ordered_json& obj, const std::string& path, const char* key) {
  const std::string key_path = join(path, key);
  try {
    const auto& v = obj.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) config_error(key_path, "expected true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) config_error(key_path, "expected a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) config_error(key_path, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) config_error(key_path, "expected a non-negative integer");
      }
    } else {
      if (!v.is_number()) config_error(key_path, "expected a number");
    }
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    config_error(key_path, e.what());
  }
}

template <class E>
E choice(const ordered_json& obj, const std::string& path, const char* key,
         std::initializer_list<std::pair<const char*, E>> options) {
  const auto name = field<std::string>(obj, path, key);
  for (const auto& [n, v] : options) {
    if (name == n) return v;
  }
  std::string allowed;
  for (const auto& [n, v] : options) allowed += std::string(allowed.empty() ? "" : ", ") + n;
  config_error(join(path, key), "'" + name + "' is not one of " + allowed);
}

ExperimentConfig config_from_document(const ordered_json& j) {
  ExperimentConfig c;
  if (!j.at("seed").is_null()) c.seed = field<std::uint64_t>(j, "", "seed");

  const auto& corpus = j.at("corpus");
  c.corpus.path = field<std::string>(corpus, "corpus", "path");
  c.corpus.n_scenes = field<int>(corpus, "corpus", "n_scenes");
  c.corpus.scene.bounds = ImageBounds{field<double>(corpus, "corpus", "width"),
                                      field<double>(corpus, "corpus", "height")};
  c.corpus.scene.n_objects = field<int>(corpus, "corpus", "n_objects");
  c.corpus.scene.truncated_fraction = field<double>(corpus, "corpus", "truncated_fraction");
  const auto& mix = corpus.at("size_mix");
  c.corpus.scene.size_mix.small = field<double>(mix, "corpus.size_mix", "small");
  c.corpus.scene.size_mix.medium = field<double>(mix, "corpus.size_mix", "medium");
  c.corpus.scene.size_mix.large = field<double>(mix, "corpus.size_mix", "large");

  const auto& prop = j.at("proposals");
  c.proposals.jitter_sigma = field<double>(prop, "proposals", "jitter_sigma");
  c.proposals.scale_quantization = field<double>(prop, "proposals", "scale_quantization");
  c.proposals.per_gt = field<int>(prop, "proposals", "per_gt");
  c.proposals.n_background = field<int>(prop, "proposals", "n_background");

  const auto& pred = j.at("predictor");
  c.predictor.kind = choice<PredictorKind>(
      pred, "predictor", "kind", {{"oracle", PredictorKind::Oracle}, {"toy", PredictorKind::Toy}});
  const auto& oracle = pred.at("oracle");
  c.predictor.oracle.noise_sigma = field<double>(oracle, "predictor.oracle", "noise_sigma");
  c.predictor.oracle.truncate = field<bool>(oracle, "predictor.oracle", "truncate");
  c.predictor.oracle.peak_decay = field<double>(oracle, "predictor.oracle", "peak_decay");
  c.predictor.oracle.background_level =
      field<double>(oracle, "predictor.oracle", "background_level");
  c.predictor.model_path = field<std::string>(pred, "predictor", "model_path");

  const auto& cascade = j.at("cascade");
  c.cascade.stages.clear();
  const auto& stages = cascade.at("stages");
  if (!stages.is_array()) config_error("cascade.stages", "expected an array");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string p = "cascade.stages." + std::to_string(i);
    StageConfig s;
    s.mapping_ratio = field<double>(stages[i], p, "mapping_ratio");
    s.iou_threshold = field<double>(stages[i], p, "iou_threshold");
    s.loss_weight = field<double>(stages[i], p, "loss_weight");
    c.cascade.stages.push_back(s);
  }
  c.cascade.grid_loss_weight = field<double>(cascade, "cascade", "grid_loss_weight");
  c.cascade.layout.n_points = field<int>(cascade.at("grid"), "cascade.grid", "n_points");
  c.cascade.layout.resolution = field<int>(cascade.at("grid"), "cascade.grid", "resolution");

  const auto& sc = j.at("scoring");
  auto& s = c.scoring;
  s.weights.gamma = field<double>(sc, "scoring", "gamma");
  s.weights.alpha1 = field<double>(sc, "scoring", "alpha1");
  s.weights.alpha2 = field<double>(sc, "scoring", "alpha2");
  s.weights.lambda1 = field<double>(sc, "scoring", "lambda1");
  s.weights.lambda2 = field<double>(sc, "scoring", "lambda2");
  s.weights.lambda3 = field<double>(sc, "scoring", "lambda3");
  s.weights.lambda4 = field<double>(sc, "scoring", "lambda4");
  s.use_iou = field<bool>(sc, "scoring", "use_iou");
  s.use_resample = field<bool>(sc, "scoring", "use_resample");
  const std::initializer_list<std::pair<const char*, ScoreSource>> sources = {
      {"oracle", ScoreSource::Oracle}, {"model", ScoreSource::Model}};
  s.iou_source = choice<ScoreSource>(sc, "scoring", "iou_source", sources);
  s.iou_reference = choice<IouScoreOracle::Reference>(
      sc, "scoring", "iou_reference",
      {{"visible", IouScoreOracle::Reference::Visible},
       {"full_extent", IouScoreOracle::Reference::FullExtent}});
  s.iou_model_path = field<std::string>(sc, "scoring", "iou_model_path");
  s.resample_source = choice<ScoreSource>(sc, "scoring", "resample_source", sources);
  s.resample_model_path = field<std::string>(sc, "scoring", "resample_model_path");
  s.cls_decorrelation = field<double>(sc, "scoring", "cls_decorrelation");

  const auto& inf = j.at("inference");
  c.inference.pre_nms_threshold = field<double>(inf, "inference", "pre_nms_threshold");
  c.inference.max_rois = field<std::size_t>(inf, "inference", "max_rois");
  c.inference.final_nms_threshold = field<double>(inf, "inference", "final_nms_threshold");

  const auto& ev = j.at("evaluation");
  const auto& th = ev.at("thresholds");
  if (!th.is_array()) config_error("evaluation.thresholds", "expected an array of numbers");
  c.evaluation.thresholds.clear();
  for (const auto& t : th) {
    if (!t.is_number()) config_error("evaluation.thresholds", "expected an array of numbers");
    c.evaluation.thresholds.push_back(t.get<double>());
  }
  c.evaluation.scale_bins.small_max = field<double>(ev, "evaluation", "small_max");
  c.evaluation.scale_bins.medium_max = field<double>(ev, "evaluation", "medium_max");

  const auto& tr = j.at("train");
  c.train.n_scenes = field<int>(tr, "train", "n_scenes");
  c.train.steps = field<int>(tr, "train", "steps");
  c.train.scenes_per_step = field<int>(tr, "train", "scenes_per_step");
  c.train.learning_rate = field<double>(tr, "train", "learning_rate");
  c.train.hidden = field<int>(tr, "train", "hidden");

  const auto& gc = j.at("gradcheck");
  c.gradcheck.coordinates = field<int>(gc, "gradcheck", "coordinates");
  c.gradcheck.tolerance = field<double>(gc, "gradcheck", "tolerance");

  c.workers = field<int>(j.at("execution"), "execution", "workers");
  return c;
}

void require_file(const std::string& path, const char* what) {
  if (!std::filesystem::exists(path)) {
    throw std::invalid_argument(std::string(what) + " '" + path + "' does not exist");
  }
}

// ---------------------------------------------------------------------------
// Experiment pipeline

struct StageAccum {
  std::size_t boxes = 0;
  std::size_t pass_through = 0;
  double input_iou = 0.0;
  double output_iou = 0.0;
  std::array<std::size_t, 3> recall{};
};

constexpr std::array<double, 3> kRecallLevels = {0.5, 0.7, 0.9};

struct SceneOutcome {
  std::vector<Detection> detections;
  std::vector<StageAccum> stages;
};

struct Pipeline {
  const ExperimentConfig& cfg;
  std::uint64_t seed;
  std::unique_ptr<HeatmapPredictor> predictor;
  std::optional<IouScoreModel> iou_model;
  std::optional<ResampleScoreModel> resample_model;
  IouScoreOracle iou_oracle;

  explicit Pipeline(const ExperimentConfig& c)
      : cfg(c), seed(c.seed_value()), iou_oracle(c.scoring.iou_reference) {
    if (cfg.predictor.kind == PredictorKind::Oracle) {
      predictor = std::make_unique<OraclePredictor>(cfg.predictor.oracle);
    } else {
      predictor = std::make_unique<ToyPredictor>(load_heatmap_net(cfg.predictor.model_path));
    }
    if (cfg.scoring.use_iou && cfg.scoring.iou_source == ScoreSource::Model) {
      iou_model = load_iou_model(cfg.scoring.iou_model_path);
    }
    if (cfg.scoring.use_resample && cfg.scoring.resample_source == ScoreSource::Model) {
      resample_model = load_resample_model(cfg.scoring.resample_model_path);
    }
  }

  SceneOutcome process(const Scene& scene) const {
    ProposalParams pp = cfg.proposals;
    const auto sid = static_cast<std::uint64_t>(scene.id);
    pp.seed = derive_seed(seed, {kTagProposals, sid});
    const auto proposals = generate_proposals(scene, pp);

    std::vector<Detection> initial;
    initial.reserve(proposals.size());
    for (std::size_t i = 0; i < proposals.size(); ++i) {
      Detection d{proposals[i], {}, 0.0, 0, scene.id, static_cast<int>(i)};
      d.scores.cls = simulate_cls_confidence(proposals[i], scene, cfg.scoring.cls_decorrelation,
                                             derive_seed(seed, {kTagCls, sid, i}));
      d.fused = d.scores.cls;
      initial.push_back(d);
    }
    const auto rois = cap_rois(nms(initial, cfg.inference.pre_nms_threshold), cfg.inference.max_rois);
    std::vector<BBox> boxes;
    boxes.reserve(rois.size());
    for (const auto& d : rois) boxes.push_back(d.box);

    const auto cascade =
        run_cascade(cfg.cascade, boxes, *predictor, scene, derive_seed(seed, {kTagCascade}));

    SceneOutcome out;
    for (const auto& t : cascade.trace) {
      StageAccum a;
      a.boxes = t.output.size();
      for (std::size_t i = 0; i < t.output.size(); ++i) {
        if (t.pass_through[i]) ++a.pass_through;
        a.input_iou += best_match(t.input[i], scene).iou;
        a.output_iou += t.output_iou[i];
        for (std::size_t k = 0; k < kRecallLevels.size(); ++k) {
          if (t.output_iou[i] >= kRecallLevels[k]) ++a.recall[k];
        }
      }
      out.stages.push_back(a);
    }

    const bool fuse_resample = cfg.scoring.use_resample;
    const double gamma = fuse_resample ? cfg.scoring.weights.gamma : 1.0;
    std::vector<Detection> scored;
    scored.reserve(rois.size());
    for (std::size_t i = 0; i < rois.size(); ++i) {
      Detection d = rois[i];
      d.box = cascade.boxes[i];
      if (cfg.scoring.use_iou) {
        if (iou_model) {
          const auto f = iou_features(cascade.trace.back().heatmaps[i], d.box, scene.bounds);
          d.scores.iou = std::clamp(iou_model->predict(f).foreground, 0.0, 1.0);
        } else {
          d.scores.iou = std::clamp(iou_oracle.predict(d.box, scene).foreground, 0.0, 1.0);
        }
      }
      if (fuse_resample) {
        if (resample_model) {
          const auto local = static_cast<std::uint64_t>(d.local_id);
          d.scores.resample = resample_model->predict(
              d.box, scene, derive_seed(seed, {kTagDescriptor, sid, local}));
        } else {
          d.scores.resample = resample_oracle(d.box, scene);
        }
      }
      d.fused = fused_score(d.scores, gamma);
      scored.push_back(d);
    }
    out.detections = nms(scored, cfg.inference.final_nms_threshold);
    return out;
  }
};

// Runs `fn(i)` for i in [0, n) on up to `workers` threads. Errors are
// collected per index so the first failing index (not the first thread to
// fail) is reported.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    }
  };
  const auto count = static_cast<std::size_t>(std::max(1, workers));
  if (count == 1 || n <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(count, n); ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }
}

std::vector<GroundTruthSet> gt_sets(const std::vector<Scene>& scenes) {
  std::vector<GroundTruthSet> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) {
    GroundTruthSet g{s.id, {}};
    for (const auto& gt : s.gts) g.boxes.push_back(gt.box);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<BBox> visible_boxes(const Scene& s) {
  std::vector<BBox> out;
  for (const auto& g : s.gts) out.push_back(g.box);
  return out;
}

void corrupt_gradient(std::span<double> g) {
  for (auto& v : g) v = v * 1.05 + 1e-3;
}

}  // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (!seed) throw std::invalid_argument("a seed is mandatory (config 'seed' or --seed)");
  if (!corpus.path.empty()) {
    require_file(corpus.path, "corpus file");
  } else if (corpus.n_scenes < 0) {
    throw std::invalid_argument("corpus.n_scenes must be >= 0");
  }
  proposals.validate();
  if (predictor.kind == PredictorKind::Oracle) {
    predictor.oracle.validate();
  } else {
    require_file(predictor.model_path, "heatmap model file");
  }
  cascade.validate();
  scoring.weights.validate();
  if (!(scoring.cls_decorrelation >= 0.0 && scoring.cls_decorrelation <= 1.0)) {
    throw std::invalid_argument("scoring.cls_decorrelation must lie in [0,1]");
  }
  if (scoring.use_iou && scoring.iou_source == ScoreSource::Model) {
    require_file(scoring.iou_model_path, "IoU score model file");
  }
  if (scoring.use_resample && scoring.resample_source == ScoreSource::Model) {
    require_file(scoring.resample_model_path, "resample score model file");
  }
  for (const double t : {inference.pre_nms_threshold, inference.final_nms_threshold}) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("NMS thresholds must lie in [0,1]");
  }
  if (inference.max_rois == 0) throw std::invalid_argument("inference.max_rois must be positive");
  if (evaluation.thresholds.empty()) throw std::invalid_argument("evaluation.thresholds is empty");
  for (const double t : evaluation.thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("evaluation thresholds must lie in (0,1]");
  }
  if (!(evaluation.scale_bins.small_max > 0.0 &&
        evaluation.scale_bins.medium_max > evaluation.scale_bins.small_max)) {
    throw std::invalid_argument("scale bins must satisfy 0 < small_max < medium_max");
  }
  if (train.n_scenes <= 0 || train.steps < 0 || train.scenes_per_step <= 0 || train.hidden <= 0 ||
      !(train.learning_rate > 0.0)) {
    throw std::invalid_argument("train settings must be positive");
  }
  if (gradcheck.coordinates <= 0 || !(gradcheck.tolerance > 0.0)) {
    throw std::invalid_argument("gradcheck settings must be positive");
  }
  if (workers <= 0) throw std::invalid_argument("execution.workers must be positive");
}

std::uint64_t ExperimentConfig::seed_value() const {
  if (!seed) throw std::invalid_argument("a seed is mandatory (config 'seed' or --seed)");
  return *seed;
}

ExperimentConfig parse_config(const std::string& text, std::span<const std::string> overrides,
                              std::optional<std::uint64_t> seed) {
  ordered_json doc = config_document(ExperimentConfig{});
  const bool blank = text.find_first_not_of(" \t\r\n") == std::string::npos;
  if (!blank) {
    ordered_json user;
    try {
      user = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    merge(doc, user, "");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  ExperimentConfig cfg = config_from_document(doc);
  if (seed) cfg.seed = seed;
  cfg.validate();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  return config_document(cfg).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  ordered_json doc = config_document(cfg);
  doc.erase("seed");
  doc.erase("execution");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : doc.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Scene> experiment_corpus(const ExperimentConfig& cfg) {
  if (!cfg.corpus.path.empty()) return load_scenes(cfg.corpus.path);
  return generate_corpus(derive_seed(cfg.seed_value(), {kTagCorpus}), cfg.corpus.n_scenes,
                         cfg.corpus.scene);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.config_hash = config_hash(cfg);
  result.seed = cfg.seed_value();
  result.scenes = experiment_corpus(cfg);

  const Pipeline pipeline(cfg);
  std::vector<SceneOutcome> outcomes(result.scenes.size());
  parallel_for(result.scenes.size(), cfg.workers, [&](std::size_t i) {
    try {
      outcomes[i] = pipeline.process(result.scenes[i]);
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "scene " << result.scenes[i].id << ": " << e.what();
      throw std::runtime_error(msg.str());
    }
  });

  std::vector<StageAccum> totals(cfg.cascade.stages.size());
  for (const auto& o : outcomes) {
    result.detections.insert(result.detections.end(), o.detections.begin(), o.detections.end());
    for (std::size_t j = 0; j < o.stages.size(); ++j) {
      auto& t = totals[j];
      t.boxes += o.stages[j].boxes;
      t.pass_through += o.stages[j].pass_through;
      t.input_iou += o.stages[j].input_iou;
      t.output_iou += o.stages[j].output_iou;
      for (std::size_t k = 0; k < t.recall.size(); ++k) t.recall[k] += o.stages[j].recall[k];
    }
  }
  for (std::size_t j = 0; j < totals.size(); ++j) {
    StageSummary s;
    s.stage = j;
    s.mapping_ratio = cfg.cascade.stages[j].mapping_ratio;
    s.boxes = totals[j].boxes;
    s.pass_through = totals[j].pass_through;
    const double n = std::max<double>(1.0, static_cast<double>(s.boxes));
    s.mean_input_iou = totals[j].input_iou / n;
    s.mean_output_iou = totals[j].output_iou / n;
    for (std::size_t k = 0; k < s.output_recall.size(); ++k) {
      s.output_recall[k] = static_cast<double>(totals[j].recall[k]) / n;
    }
    result.stages.push_back(s);
  }
  result.eval = evaluate(result.detections, gt_sets(result.scenes), cfg.evaluation);
  return result;
}

std::string ExperimentResult::stage_trace_csv() const {
  std::ostringstream out;
  out << "config_hash,seed,stage,mapping_ratio,boxes,pass_through,mean_input_iou,"
         "mean_output_iou,recall_0.5,recall_0.7,recall_0.9\n";
  for (const auto& s : stages) {
    out << config_hash << ',' << seed << ',' << s.stage << ',' << fmt(s.mapping_ratio) << ','
        << s.boxes << ',' << s.pass_through << ',' << fmt(s.mean_input_iou) << ','
        << fmt(s.mean_output_iou);
    for (const double r : s.output_recall) out << ',' << fmt(r);
    out << '\n';
  }
  return out.str();
}

void write_experiment_outputs(const ExperimentResult& result, const ExperimentConfig& cfg,
                              const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "config.json", config_to_json(cfg));
  write_text_file(out_dir / "metrics.csv", result.eval.to_csv(result.config_hash, result.seed));
  write_text_file(out_dir / "metrics.json", result.eval.to_json(result.config_hash, result.seed));
  write_text_file(out_dir / "pr_curve.csv",
                  result.eval.pr_curve_csv(result.config_hash, result.seed));
  write_text_file(out_dir / "stage_trace.csv", result.stage_trace_csv());
}

double truncated_tp_mean_rank(const ExperimentResult& result, double iou_threshold) {
  std::map<int, const Scene*> by_id;
  for (const auto& s : result.scenes) by_id[s.id] = &s;
  std::map<int, std::vector<Detection>> per_scene;
  for (const auto& d : result.detections) per_scene[d.scene_id].push_back(d);

  // (scene, local id) of every true positive on a truncated object.
  std::map<std::pair<int, int>, bool> truncated_tp;
  for (auto& [sid, dets] : per_scene) {
    const auto it = by_id.find(sid);
    if (it == by_id.end()) throw std::invalid_argument("detection refers to an unknown scene");
    std::stable_sort(dets.begin(), dets.end(), ranks_before);
    const auto gts = visible_boxes(*it->second);
    const auto m = match(dets, gts, iou_threshold);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (m.true_positive[i] &&
          it->second->gts[static_cast<std::size_t>(m.gt_index[i])].truncated) {
        truncated_tp[{sid, dets[i].local_id}] = true;
      }
    }
  }
  std::vector<Detection> pooled = result.detections;
  std::stable_sort(pooled.begin(), pooled.end(), ranks_before);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < pooled.size(); ++p) {
    if (truncated_tp.count({pooled[p].scene_id, pooled[p].local_id}) != 0) {
      sum += static_cast<double>(p) / static_cast<double>(pooled.size());
      ++count;
    }
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Ablation

AblationMatrix AblationMatrix::full() {
  AblationMatrix m;
  for (int bits = 0; bits < 8; ++bits) {
    m.rows.push_back({(bits & 4) != 0, (bits & 2) != 0, (bits & 1) != 0});
  }
  return m;
}

void AblationMatrix::validate() const {
  if (rows.empty()) throw std::invalid_argument("ablation matrix needs at least one row");
}

ExperimentConfig ablation_variant(const ExperimentConfig& base, const AblationToggles& t) {
  ExperimentConfig cfg = base;
  if (!t.cascade) cfg.cascade = cfg.cascade.truncated_to(1);
  cfg.scoring.use_iou = t.iou_scoring;
  cfg.scoring.use_resample = t.resample_scoring;
  return cfg;
}

std::vector<AblationRow> run_ablation(const AblationMatrix& matrix, const ExperimentConfig& base) {
  matrix.validate();
  std::vector<AblationRow> rows;
  for (const auto& t : matrix.rows) {
    AblationRow row;
    row.toggles = t;
    try {
      row.eval = run_experiment(ablation_variant(base, t)).eval;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows, const std::string& config_hash,
                         std::uint64_t seed) {
  std::ostringstream out;
  out << "config_hash,seed,cascade,iou_scoring,resample_scoring,status,AP,AP50,AP75,AP_S,AP_M,"
         "AP_L,error\n";
  for (const auto& r : rows) {
    out << config_hash << ',' << seed << ',' << int(r.toggles.cascade) << ','
        << int(r.toggles.iou_scoring) << ',' << int(r.toggles.resample_scoring) << ','
        << (r.ok ? "ok" : "failed");
    if (r.ok) {
      for (const double v : {r.eval.ap, r.eval.ap50, r.eval.ap75, r.eval.ap_small,
                             r.eval.ap_medium, r.eval.ap_large}) {
        out << ',' << fmt(v);
      }
      out << ",\n";
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), '"', '\'');
      out << ",,,,,,,\"" << msg << "\"\n";
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Gradient checks and training

namespace {

struct GridBatch {
  // Per stage: input boxes with their targets.
  std::vector<std::vector<BBox>> boxes;
  std::vector<std::vector<HeatmapSet>> targets;
};

// Positive boxes per stage for one scene, taken from a cascade run of `net`.
GridBatch grid_batch(const ExperimentConfig& cfg, const HeatmapNet& net, const Scene& scene,
                     std::span<const BBox> rois, std::size_t per_stage_cap) {
  const ToyPredictor predictor(net);
  const auto cascade = run_cascade(cfg.cascade, rois, predictor, scene,
                                   derive_seed(cfg.seed_value(), {kTagCascade}));
  const auto gts = visible_boxes(scene);
  GridBatch b;
  for (std::size_t j = 0; j < cfg.cascade.stages.size(); ++j) {
    const auto& st = cfg.cascade.stages[j];
    const auto& inputs = cascade.trace[j].input;
    const auto sel = select_positives(inputs, gts, st.iou_threshold);
    std::vector<BBox> boxes;
    std::vector<HeatmapSet> targets;
    for (std::size_t k = 0; k < sel.indices.size() && k < per_stage_cap; ++k) {
      const BBox& box = inputs[sel.indices[k]];
      boxes.push_back(box);
      targets.push_back(encode_target(gts[sel.matched_gt[k]], box, st.mapping_ratio, cfg.cascade.layout));
    }
    b.boxes.push_back(std::move(boxes));
    b.targets.push_back(std::move(targets));
  }
  return b;
}

// Grid loss of `net` on a batch; accumulates parameter gradients when given.
double grid_batch_loss(const ExperimentConfig& cfg, const HeatmapNet& net, const Scene& scene,
                       const GridBatch& b, std::span<double> grad) {
  std::vector<std::vector<HeatmapSet>> preds(b.boxes.size());
  std::vector<std::vector<HeatmapNet::Cache>> caches(b.boxes.size());
  const bool want_grad = !grad.empty();
  for (std::size_t j = 0; j < b.boxes.size(); ++j) {
    const double ratio = cfg.cascade.stages[j].mapping_ratio;
    for (const auto& box : b.boxes[j]) {
      HeatmapNet::Cache cache;
      preds[j].push_back(net.forward(scene, box, ratio, want_grad ? &cache : nullptr));
      caches[j].push_back(std::move(cache));
    }
  }
  std::vector<std::vector<std::vector<double>>> value_grads;
  const double loss = cmm_loss(preds, b.targets, cfg.cascade, want_grad ? &value_grads : nullptr);
  if (want_grad) {
    for (std::size_t j = 0; j < preds.size(); ++j) {
      for (std::size_t k = 0; k < preds[j].size(); ++k) {
        net.backward(caches[j][k], preds[j][k], value_grads[j][k], grad);
      }
    }
  }
  return loss;
}

struct IouSample {
  std::vector<double> features;
  double target = 0.0;
};

struct ResampleSample {
  std::vector<double> descriptor;
  double label = 0.0;
};

double iou_batch_loss(const Mlp& net, std::span<const IouSample> samples, std::span<double> grad) {
  std::vector<double> fg, bg, target;
  std::vector<Mlp::Cache> caches;
  for (const auto& s : samples) {
    auto cache = net.forward(s.features);
    fg.push_back(cache.activations.back()[0]);
    bg.push_back(cache.activations.back()[1]);
    target.push_back(s.target);
    caches.push_back(std::move(cache));
  }
  std::vector<double> gfg, gbg;
  const bool want_grad = !grad.empty();
  const double loss = iou_score_loss(fg, bg, target, want_grad ? &gfg : nullptr,
                                     want_grad ? &gbg : nullptr);
  if (want_grad) {
    for (std::size_t i = 0; i < caches.size(); ++i) {
      const double og[2] = {gfg[i], gbg[i]};
      net.backward(caches[i], og, grad);
    }
  }
  return loss;
}

double resample_batch_loss(const Mlp& net, std::span<const ResampleSample> samples,
                           std::span<double> grad) {
  std::vector<double> prob, label;
  std::vector<Mlp::Cache> caches;
  for (const auto& s : samples) {
    auto cache = net.forward(s.descriptor);
    prob.push_back(cache.activations.back()[0]);
    label.push_back(s.label);
    caches.push_back(std::move(cache));
  }
  std::vector<double> g;
  const bool want_grad = !grad.empty();
  const double loss = classification_loss(prob, label, want_grad ? &g : nullptr);
  if (want_grad) {
    for (std::size_t i = 0; i < caches.size(); ++i) {
      const double og[1] = {g[i]};
      net.backward(caches[i], og, grad);
    }
  }
  return loss;
}

// Proposals after pre-cascade suppression and cap, as used at inference.
std::vector<BBox> scene_rois(const ExperimentConfig& cfg, const Scene& scene,
                             std::vector<BBox>* background) {
  ProposalParams pp = cfg.proposals;
  const auto sid = static_cast<std::uint64_t>(scene.id);
  pp.seed = derive_seed(cfg.seed_value(), {kTagProposals, sid});
  const auto proposals = generate_proposals(scene, pp);
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    Detection d{proposals[i], {}, 0.0, 0, scene.id, static_cast<int>(i)};
    d.fused = simulate_cls_confidence(proposals[i], scene, cfg.scoring.cls_decorrelation,
                                      derive_seed(cfg.seed_value(), {kTagCls, sid, i}));
    dets.push_back(d);
  }
  if (background != nullptr) {
    const std::size_t n_bg = static_cast<std::size_t>(pp.n_background);
    background->assign(proposals.end() - static_cast<std::ptrdiff_t>(std::min(n_bg, proposals.size())),
                       proposals.end());
  }
  const auto kept = cap_rois(nms(dets, cfg.inference.pre_nms_threshold), cfg.inference.max_rois);
  std::vector<BBox> out;
  for (const auto& d : kept) out.push_back(d.box);
  return out;
}

// IoU-scorer samples from oracle-cascade final boxes, skipping boxes that
// belong to truncated objects.
void scorer_samples(const ExperimentConfig& cfg, const Scene& scene, std::span<const BBox> rois,
                    std::span<const BBox> background, std::vector<IouSample>& iou_out,
                    std::vector<ResampleSample>& rs_out) {
  const OraclePredictor oracle(cfg.predictor.oracle);
  const auto seed = cfg.seed_value();
  const auto cascade =
      run_cascade(cfg.cascade, rois, oracle, scene, derive_seed(seed, {kTagTrainOracle}));
  const auto sid = static_cast<std::uint64_t>(scene.id);
  for (std::size_t i = 0; i < cascade.boxes.size(); ++i) {
    const BBox& box = cascade.boxes[i];
    const auto m = best_match(box, scene);
    const bool on_truncated =
        m.index >= 0 && m.iou > 0.0 && scene.gts[static_cast<std::size_t>(m.index)].truncated;
    if (!on_truncated) {
      iou_out.push_back({iou_features(cascade.trace.back().heatmaps[i], box, scene.bounds), m.iou});
    }
    if (m.iou >= 0.5) {
      rs_out.push_back({roi_descriptor(box, scene, derive_seed(seed, {kTagDescriptor, sid, i})), 1.0});
    }
  }
  for (std::size_t i = 0; i < background.size(); ++i) {
    rs_out.push_back(
        {roi_descriptor(background[i], scene, derive_seed(seed, {kTagDescriptor, sid, 1000 + i})),
         0.0});
  }
}

}  // namespace

std::string GradcheckOutcome::csv(const std::string& config_hash, std::uint64_t seed) const {
  std::ostringstream out;
  out << "config_hash,seed,path,checked,max_relative_error,worst_coordinate,worst_analytic,"
         "worst_numeric,passed\n";
  const std::pair<const char*, const GradcheckReport*> rows[] = {{"grid_loss", &cmm},
                                                                 {"iou_loss", &iou}};
  for (const auto& [name, r] : rows) {
    out << config_hash << ',' << seed << ',' << name << ',' << r->checked << ','
        << fmt(r->max_relative_error) << ',' << r->worst_coordinate << ','
        << fmt(r->worst_analytic) << ',' << fmt(r->worst_numeric) << ','
        << (r->passed ? "true" : "false") << '\n';
  }
  return out.str();
}

GradcheckOutcome run_gradcheck(const ExperimentConfig& cfg, bool corrupt) {
  cfg.validate();
  const auto seed = cfg.seed_value();
  const auto coords = static_cast<std::size_t>(cfg.gradcheck.coordinates);
  GradcheckOutcome outcome;

  HeatmapNet net(cfg.train.hidden, cfg.cascade.layout);
  net.initialize(derive_seed(seed, {kTagGradcheck, 1}));

  // First generated scene that yields at least one positive.
  Scene scene;
  GridBatch batch;
  std::vector<BBox> rois;
  std::vector<BBox> background;
  bool found = false;
  for (int id = 0; id < 16 && !found; ++id) {
    scene = generate_scene(derive_seed(seed, {kTagGradcheck, 2}), id, cfg.corpus.scene);
    rois = scene_rois(cfg, scene, &background);
    if (rois.empty()) continue;
    batch = grid_batch(cfg, net, scene, rois, 4);
    for (const auto& t : batch.targets) found = found || !t.empty();
  }
  if (!found) throw std::runtime_error("gradcheck could not find a scene with positive boxes");

  {
    std::vector<double> analytic(net.parameter_count(), 0.0);
    grid_batch_loss(cfg, net, scene, batch, analytic);
    if (corrupt) corrupt_gradient(analytic);
    HeatmapNet probe = net;
    const auto loss = [&](std::span<const double> p) {
      std::copy(p.begin(), p.end(), probe.parameters().begin());
      return grid_batch_loss(cfg, probe, scene, batch, {});
    };
    const std::vector<double> point(net.parameters().begin(), net.parameters().end());
    const auto cs = sample_coordinates(point.size(), coords, derive_seed(seed, {kTagGradcheck, 3}));
    outcome.cmm = gradcheck(loss, point, analytic, cs, cfg.gradcheck.tolerance);
  }

  {
    std::vector<IouSample> iou_samples;
    std::vector<ResampleSample> unused;
    scorer_samples(cfg, scene, rois, {}, iou_samples, unused);
    if (iou_samples.size() > 16) iou_samples.resize(16);
    if (iou_samples.empty()) throw std::runtime_error("gradcheck found no IoU scorer samples");
    IouScoreModel model;
    model.net().initialize(derive_seed(seed, {kTagGradcheck, 4}));
    const Mlp& mlp = model.net();
    std::vector<double> analytic(mlp.parameter_count(), 0.0);
    iou_batch_loss(mlp, iou_samples, analytic);
    if (corrupt) corrupt_gradient(analytic);
    Mlp probe = mlp;
    const auto loss = [&](std::span<const double> p) {
      std::copy(p.begin(), p.end(), probe.parameters().begin());
      return iou_batch_loss(probe, iou_samples, {});
    };
    const std::vector<double> point(mlp.parameters().begin(), mlp.parameters().end());
    const auto cs = sample_coordinates(point.size(), coords, derive_seed(seed, {kTagGradcheck, 5}));
    outcome.iou = gradcheck(loss, point, analytic, cs, cfg.gradcheck.tolerance);
  }
  return outcome;
}

TrainingOutcome train_toys(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto seed = cfg.seed_value();
  const auto& tc = cfg.train;
  const auto scenes =
      generate_corpus(derive_seed(seed, {kTagTrainCorpus}), tc.n_scenes, cfg.corpus.scene);

  std::vector<std::vector<BBox>> rois(scenes.size());
  std::vector<IouSample> iou_samples;
  std::vector<ResampleSample> rs_samples;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    std::vector<BBox> background;
    rois[s] = scene_rois(cfg, scenes[s], &background);
    scorer_samples(cfg, scenes[s], rois[s], background, iou_samples, rs_samples);
  }

  TrainingOutcome out;
  out.heatmap_net = HeatmapNet(tc.hidden, cfg.cascade.layout);
  out.heatmap_net.initialize(derive_seed(seed, {kTagTrainInit, 1}));
  out.iou_model.net().initialize(derive_seed(seed, {kTagTrainInit, 2}));
  out.resample_model.net().initialize(derive_seed(seed, {kTagTrainInit, 3}));

  AdamOptimizer grid_opt(out.heatmap_net.parameter_count(), tc.learning_rate);
  AdamOptimizer iou_opt(out.iou_model.net().parameter_count(), tc.learning_rate);
  AdamOptimizer rs_opt(out.resample_model.net().parameter_count(), tc.learning_rate);
  const auto& w = cfg.scoring.weights;

  std::vector<double> grid_grad(out.heatmap_net.parameter_count());
  std::vector<double> iou_grad(out.iou_model.net().parameter_count());
  std::vector<double> rs_grad(out.resample_model.net().parameter_count());
  for (int step = 0; step <= tc.steps; ++step) {
    std::fill(grid_grad.begin(), grid_grad.end(), 0.0);
    std::fill(iou_grad.begin(), iou_grad.end(), 0.0);
    std::fill(rs_grad.begin(), rs_grad.end(), 0.0);

    double cmm = 0.0;
    const int batch = std::min(tc.scenes_per_step, tc.n_scenes);
    for (int k = 0; k < batch; ++k) {
      const auto s = static_cast<std::size_t>((step * batch + k) % tc.n_scenes);
      if (rois[s].empty()) continue;
      const auto gb = grid_batch(cfg, out.heatmap_net, scenes[s], rois[s], 16);
      cmm += grid_batch_loss(cfg, out.heatmap_net, scenes[s], gb, grid_grad) / batch;
    }
    for (auto& g : grid_grad) g /= batch;
    const double l_iou = iou_batch_loss(out.iou_model.net(), iou_samples, iou_grad);
    const double l_rs = resample_batch_loss(out.resample_model.net(), rs_samples, rs_grad);

    LossRecord rec;
    rec.step = step;
    rec.cmm = cmm;
    rec.iou = l_iou;
    rec.resample = l_rs;
    rec.scoring = scoring_loss(l_rs, l_iou, w.alpha1, w.alpha2);
    rec.total = total_loss(0.0, 0.0, rec.scoring, cmm, w);
    out.curve.push_back(rec);
    if (step == tc.steps) break;

    for (auto& g : iou_grad) g *= w.lambda3 * w.alpha2;
    for (auto& g : rs_grad) g *= w.lambda3 * w.alpha1;
    for (auto& g : grid_grad) g *= w.lambda4;
    grid_opt.step(out.heatmap_net.parameters(), grid_grad);
    iou_opt.step(out.iou_model.net().parameters(), iou_grad);
    rs_opt.step(out.resample_model.net().parameters(), rs_grad);
  }
  out.iou_model.mark_trained();
  out.resample_model.mark_trained();
  return out;
}

ScorerQuality evaluate_scorers(const ExperimentConfig& cfg, const IouScoreModel& iou_model,
                               const ResampleScoreModel& resample_model,
                               std::uint64_t holdout_seed) {
  ExperimentConfig held = cfg;
  held.seed = holdout_seed;
  const auto scenes = generate_corpus(derive_seed(holdout_seed, {kTagTrainCorpus}),
                                      cfg.train.n_scenes, cfg.corpus.scene);
  std::vector<IouSample> iou_samples;
  std::vector<ResampleSample> rs_samples;
  for (const auto& scene : scenes) {
    std::vector<BBox> background;
    const auto rois = scene_rois(held, scene, &background);
    scorer_samples(held, scene, rois, background, iou_samples, rs_samples);
  }
  ScorerQuality q;
  q.iou_samples = iou_samples.size();
  q.resample_samples = rs_samples.size();
  double err = 0.0;
  for (const auto& s : iou_samples) err += std::abs(iou_model.predict(s.features).foreground - s.target);
  q.iou_mean_abs_error = iou_samples.empty() ? 0.0 : err / static_cast<double>(iou_samples.size());
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : rs_samples) {
    scores.push_back(resample_model.predict(s.descriptor));
    labels.push_back(s.label > 0.5 ? 1 : 0);
  }
  q.resample_auc = roc_auc(scores, labels);
  return q;
}

std::string loss_curve_csv(std::span<const LossRecord> curve, const std::string& config_hash,
                           std::uint64_t seed) {
  std::ostringstream out;
  out << "config_hash,seed,step,l_cmm,l_ism,l_rsm,l_scoring,l_all\n";
  for (const auto& r : curve) {
    out << config_hash << ',' << seed << ',' << r.step << ',' << fmt(r.cmm) << ','
        << fmt(r.iou) << ',' << fmt(r.resample) << ',' << fmt(r.scoring) << ','
        << fmt(r.total) << '\n';
  }
  return out.str();
}

void write_training_outputs(const TrainingOutcome& outcome, const ExperimentConfig& cfg,
                            const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "config.json", config_to_json(cfg));
  save_heatmap_net(outcome.heatmap_net, out_dir / "heatmap_net.json");
  save_iou_model(outcome.iou_model, out_dir / "iou_score.json");
  save_resample_model(outcome.resample_model, out_dir / "resample_score.json");
  write_text_file(out_dir / "loss_curve.csv",
                  loss_curve_csv(outcome.curve, config_hash(cfg), cfg.seed_value()));
}

}  // namespace gridcascade
