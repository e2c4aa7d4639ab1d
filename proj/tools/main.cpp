#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gridcascade/harness.hpp"
#include "gridcascade/model_io.hpp"

namespace gc = gridcascade;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Master seed; replaces the config seed");
  cmd->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--override", o.overrides, "Config override key=value (repeatable)");
}

gc::ExperimentConfig load(const CommonOptions& o) {
  const std::string text = o.config_path.empty() ? std::string() : gc::read_text_file(o.config_path);
  return gc::parse_config(text, o.overrides, o.seed);
}

int cmd_run(const CommonOptions& o) {
  const auto cfg = load(o);
  const auto result = gc::run_experiment(cfg);
  gc::write_experiment_outputs(result, cfg, o.out_dir);
  std::printf("config %s seed %llu: AP %.4f AP50 %.4f AP75 %.4f -> %s\n",
              result.config_hash.c_str(), static_cast<unsigned long long>(result.seed),
              result.eval.ap, result.eval.ap50, result.eval.ap75, o.out_dir.c_str());
  return 0;
}

int cmd_ablate(const CommonOptions& o) {
  const auto cfg = load(o);
  const auto rows = gc::run_ablation(gc::AblationMatrix::full(), cfg);
  std::filesystem::create_directories(o.out_dir);
  const auto hash = gc::config_hash(cfg);
  gc::write_text_file(std::filesystem::path(o.out_dir) / "config.json", gc::config_to_json(cfg));
  gc::write_text_file(std::filesystem::path(o.out_dir) / "ablation.csv",
                      gc::ablation_csv(rows, hash, cfg.seed_value()));
  int failures = 0;
  for (const auto& r : rows) {
    if (r.ok) {
      std::printf("cascade=%d iou=%d resample=%d AP %.4f\n", r.toggles.cascade,
                  r.toggles.iou_scoring, r.toggles.resample_scoring, r.eval.ap);
    } else {
      ++failures;
      std::fprintf(stderr, "cascade=%d iou=%d resample=%d failed: %s\n", r.toggles.cascade,
                   r.toggles.iou_scoring, r.toggles.resample_scoring, r.error.c_str());
    }
  }
  return failures == 0 ? 0 : 1;
}

int cmd_gradcheck(const CommonOptions& o, bool corrupt) {
  const auto cfg = load(o);
  const auto outcome = gc::run_gradcheck(cfg, corrupt);
  std::filesystem::create_directories(o.out_dir);
  gc::write_text_file(std::filesystem::path(o.out_dir) / "gradcheck.csv",
                      outcome.csv(gc::config_hash(cfg), cfg.seed_value()));
  std::printf("grid loss: %s\n", outcome.cmm.summary().c_str());
  std::printf("iou loss:  %s\n", outcome.iou.summary().c_str());
  if (!outcome.passed()) {
    const auto& bad = outcome.cmm.passed ? outcome.iou : outcome.cmm;
    std::fprintf(stderr, "gradcheck failed at coordinate %zu (analytic %.6g, numeric %.6g)\n",
                 bad.worst_coordinate, bad.worst_analytic, bad.worst_numeric);
    return 1;
  }
  return 0;
}

int cmd_train(const CommonOptions& o) {
  const auto cfg = load(o);
  const auto outcome = gc::train_toys(cfg);
  gc::write_training_outputs(outcome, cfg, o.out_dir);
  const auto& first = outcome.curve.front();
  const auto& last = outcome.curve.back();
  std::printf("loss %.5f -> %.5f over %d steps -> %s\n", first.total, last.total, last.step,
              o.out_dir.c_str());
  return 0;
}

int cmd_gen_corpus(const CommonOptions& o) {
  const auto cfg = load(o);
  const auto scenes = gc::experiment_corpus(cfg);
  const auto path = std::filesystem::path(o.out_dir) / "corpus.json";
  std::filesystem::create_directories(o.out_dir);
  gc::save_scenes(scenes, path);
  std::printf("%zu scenes -> %s\n", scenes.size(), path.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid-point cascade refinement experiments on synthetic detection corpora"};
  app.require_subcommand(1);

  CommonOptions run_o, ablate_o, grad_o, train_o, corpus_o;
  bool corrupt = false;
  auto* run = app.add_subcommand("run", "Run one experiment and write metric tables");
  add_common(run, run_o);
  auto* ablate = app.add_subcommand("ablate", "Run the eight-row component ablation");
  add_common(ablate, ablate_o);
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(grad, grad_o);
  grad->add_flag("--corrupt", corrupt, "Perturb analytic gradients (fault injection)");
  auto* train = app.add_subcommand("train", "Train the toy models and write model files");
  add_common(train, train_o);
  auto* corpus = app.add_subcommand("gen-corpus", "Generate and save a scene corpus");
  add_common(corpus, corpus_o);

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(run_o);
    if (ablate->parsed()) return cmd_ablate(ablate_o);
    if (grad->parsed()) return cmd_gradcheck(grad_o, corrupt);
    if (train->parsed()) return cmd_train(train_o);
    if (corpus->parsed()) return cmd_gen_corpus(corpus_o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
