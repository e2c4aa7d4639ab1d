#pragma once

#include <filesystem>
#include <string>

#include "gridcascade/mlp.hpp"
#include "gridcascade/predictor.hpp"
#include "gridcascade/scoring.hpp"

namespace gridcascade {

inline constexpr int kModelFormatVersion = 1;

/// Versioned JSON documents holding named tensors with explicit shapes.
/// Loading checks the version, the model kind and every tensor shape, and
/// throws std::runtime_error naming the offending field.
std::string heatmap_net_to_json(const HeatmapNet& net);
HeatmapNet heatmap_net_from_json(const std::string& text);

std::string mlp_to_json(const Mlp& net, const std::string& kind);
Mlp mlp_from_json(const std::string& text, const std::string& kind);

void save_heatmap_net(const HeatmapNet& net, const std::filesystem::path& path);
HeatmapNet load_heatmap_net(const std::filesystem::path& path);

void save_iou_model(const IouScoreModel& model, const std::filesystem::path& path);
IouScoreModel load_iou_model(const std::filesystem::path& path);

void save_resample_model(const ResampleScoreModel& model, const std::filesystem::path& path);
ResampleScoreModel load_resample_model(const std::filesystem::path& path);

/// Whole-file read/write helpers shared by the loaders and the harness.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace gridcascade
