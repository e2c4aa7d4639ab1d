#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridcascade/cascade.hpp"
#include "gridcascade/evaluate.hpp"
#include "gridcascade/mlp.hpp"
#include "gridcascade/predictor.hpp"
#include "gridcascade/scenario.hpp"
#include "gridcascade/scoring.hpp"

namespace gridcascade {

struct CorpusSpec {
  /// Scene corpus file; when empty the corpus is generated from the seed.
  std::string path;
  int n_scenes = 200;
  SceneParams scene;
};

enum class PredictorKind { Oracle, Toy };

struct PredictorSetup {
  PredictorKind kind = PredictorKind::Oracle;
  OracleParams oracle;
  /// Heatmap net file, required for the toy predictor.
  std::string model_path;
};

enum class ScoreSource { Oracle, Model };

struct ScoringSetup {
  ScoringConfig weights;
  /// Disabled IoU scoring fixes the IoU score at 1.
  bool use_iou = true;
  /// Disabled resample scoring drops the resample factor (gamma becomes 1).
  bool use_resample = true;
  ScoreSource iou_source = ScoreSource::Oracle;
  IouScoreOracle::Reference iou_reference = IouScoreOracle::Reference::Visible;
  std::string iou_model_path;
  ScoreSource resample_source = ScoreSource::Oracle;
  std::string resample_model_path;
  /// Blend between IoU-driven and uniform proposal confidence.
  double cls_decorrelation = 0.3;
};

struct InferenceSettings {
  double pre_nms_threshold = 0.3;
  std::size_t max_rois = 96;
  double final_nms_threshold = 0.5;
};

struct TrainSettings {
  int n_scenes = 20;
  int steps = 120;
  int scenes_per_step = 4;
  double learning_rate = 1e-2;
  int hidden = 16;
};

struct GradcheckSettings {
  int coordinates = 100;
  double tolerance = 1e-4;
};

struct ExperimentConfig {
  /// Mandatory; validate() rejects a missing seed.
  std::optional<std::uint64_t> seed;
  CorpusSpec corpus;
  ProposalParams proposals;
  PredictorSetup predictor;
  CascadeConfig cascade = CascadeConfig::standard();
  ScoringSetup scoring;
  InferenceSettings inference;
  EvalSettings evaluation;
  TrainSettings train;
  GradcheckSettings gradcheck;
  int workers = 1;

  /// Throws std::invalid_argument on bad values or missing referenced files.
  void validate() const;
  std::uint64_t seed_value() const;
};

/// Parses a JSON config document. Missing keys keep their defaults; unknown
/// keys are errors. Each override is `dotted.path=value`, where the value is
/// read as JSON and falls back to a plain string. A given seed replaces the
/// document's seed. Throws std::invalid_argument with the offending key.
ExperimentConfig parse_config(const std::string& text,
                              std::span<const std::string> overrides = {},
                              std::optional<std::uint64_t> seed = std::nullopt);

/// Fully resolved config document; feeding it back to parse_config yields
/// the same config.
std::string config_to_json(const ExperimentConfig& cfg);

/// 16 hex digits of FNV-1a over the resolved document, excluding the seed and
/// the worker count.
std::string config_hash(const ExperimentConfig& cfg);

struct StageSummary {
  std::size_t stage = 0;
  double mapping_ratio = 0.0;
  std::size_t boxes = 0;
  std::size_t pass_through = 0;
  double mean_input_iou = 0.0;
  double mean_output_iou = 0.0;
  /// Fraction of output boxes whose best IoU reaches 0.5, 0.7 and 0.9.
  std::array<double, 3> output_recall{};
};

struct ExperimentResult {
  std::string config_hash;
  std::uint64_t seed = 0;
  EvalResult eval;
  std::vector<StageSummary> stages;
  std::vector<Scene> scenes;
  /// Final detections after the last suppression, in scene order.
  std::vector<Detection> detections;

  std::string stage_trace_csv() const;
};

/// Corpus, proposals, pre-cascade suppression and cap, cascade, scoring,
/// fusion, final suppression and evaluation. Errors name the scene id.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// The corpus a config describes (loaded or generated).
std::vector<Scene> experiment_corpus(const ExperimentConfig& cfg);

/// Writes config.json, metrics.csv, metrics.json, pr_curve.csv, stage_trace.csv.
void write_experiment_outputs(const ExperimentResult& result, const ExperimentConfig& cfg,
                              const std::filesystem::path& out_dir);

/// Mean normalized rank, in [0,1) with 0 at the top, of the pooled true
/// positives (at `iou_threshold`) whose gt is truncated. Returns NaN when
/// there are none.
double truncated_tp_mean_rank(const ExperimentResult& result, double iou_threshold = 0.5);

struct AblationToggles {
  bool cascade = true;
  bool iou_scoring = true;
  bool resample_scoring = true;
};

struct AblationMatrix {
  std::vector<AblationToggles> rows;

  /// All eight combinations, all-off first, full last.
  static AblationMatrix full();
  void validate() const;
};

/// Base config with the toggles applied: cascade off keeps only the first
/// stage.
ExperimentConfig ablation_variant(const ExperimentConfig& base, const AblationToggles& t);

struct AblationRow {
  AblationToggles toggles;
  bool ok = false;
  std::string error;
  EvalResult eval;
};

/// One run per row; a failing row is recorded and the rest proceed.
std::vector<AblationRow> run_ablation(const AblationMatrix& matrix, const ExperimentConfig& base);
std::string ablation_csv(std::span<const AblationRow> rows, const std::string& config_hash,
                         std::uint64_t seed);

struct GradcheckOutcome {
  GradcheckReport cmm;
  GradcheckReport iou;

  bool passed() const { return cmm.passed && iou.passed; }
  std::string csv(const std::string& config_hash, std::uint64_t seed) const;
};

/// Checks the grid loss through a fresh heatmap net and the IoU loss through
/// a fresh IoU score network. `corrupt` perturbs the analytic gradients to
/// exercise the failure path.
GradcheckOutcome run_gradcheck(const ExperimentConfig& cfg, bool corrupt = false);

struct LossRecord {
  int step = 0;
  double cmm = 0.0;
  double iou = 0.0;
  double resample = 0.0;
  double scoring = 0.0;
  double total = 0.0;
};

struct TrainingOutcome {
  HeatmapNet heatmap_net;
  IouScoreModel iou_model;
  ResampleScoreModel resample_model;
  std::vector<LossRecord> curve;
};

/// Joint Adam training of the heatmap net (through the cascade, positives
/// selected per stage), the IoU scorer (final boxes of complete objects and
/// background) and the resample scorer (final boxes against background).
TrainingOutcome train_toys(const ExperimentConfig& cfg);

struct ScorerQuality {
  /// Mean |predicted IoU - true IoU| over final boxes of complete objects and
  /// background.
  double iou_mean_abs_error = 0.0;
  /// AUC of the resample scorer on final positives against background.
  double resample_auc = 0.0;
  std::size_t iou_samples = 0;
  std::size_t resample_samples = 0;
};

/// Scores trained scorers on a corpus generated from `holdout_seed`.
ScorerQuality evaluate_scorers(const ExperimentConfig& cfg, const IouScoreModel& iou_model,
                               const ResampleScoreModel& resample_model,
                               std::uint64_t holdout_seed);

std::string loss_curve_csv(std::span<const LossRecord> curve, const std::string& config_hash,
                           std::uint64_t seed);

/// Writes heatmap_net.json, iou_score.json, resample_score.json, loss_curve.csv
/// and config.json.
void write_training_outputs(const TrainingOutcome& outcome, const ExperimentConfig& cfg,
                            const std::filesystem::path& out_dir);

}  // namespace gridcascade
