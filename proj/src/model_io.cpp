#include "gridcascade/model_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace gridcascade {

namespace {

using nlohmann::ordered_json;

constexpr const char* kIouKind = "iou_score_mlp";
constexpr const char* kResampleKind = "resample_score_mlp";

ordered_json tensor(const std::string& name, std::vector<std::size_t> shape,
                    std::span<const double> values) {
  ordered_json t;
  t["name"] = name;
  t["shape"] = shape;
  t["values"] = std::vector<double>(values.begin(), values.end());
  return t;
}

ordered_json parse(const std::string& text) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("malformed model file: ") + e.what());
  }
}

void check_header(const ordered_json& j, const std::string& kind) {
  if (!j.is_object() || !j.contains("format_version") || !j.contains("kind")) {
    throw std::runtime_error("model file lacks format_version or kind");
  }
  const int version = j.at("format_version").get<int>();
  if (version != kModelFormatVersion) {
    std::ostringstream msg;
    msg << "model format version mismatch: expected " << kModelFormatVersion << ", found "
        << version;
    throw std::runtime_error(msg.str());
  }
  const auto found = j.at("kind").get<std::string>();
  if (found != kind) {
    throw std::runtime_error("model kind mismatch: expected " + kind + ", found " + found);
  }
}

// Copies the named tensor into `dst` after checking its declared shape.
void read_tensor(const ordered_json& tensors, std::size_t index, const std::string& name,
                 const std::vector<std::size_t>& shape, std::span<double> dst) {
  if (!tensors.is_array() || index >= tensors.size()) {
    throw std::runtime_error("model file is missing tensor " + name);
  }
  const auto& t = tensors[index];
  if (t.at("name").get<std::string>() != name) {
    throw std::runtime_error("expected tensor " + name + ", found " +
                             t.at("name").get<std::string>());
  }
  if (t.at("shape").get<std::vector<std::size_t>>() != shape) {
    throw std::runtime_error("tensor " + name + " has an unexpected shape");
  }
  const auto values = t.at("values").get<std::vector<double>>();
  if (values.size() != dst.size()) {
    throw std::runtime_error("tensor " + name + " value count disagrees with its shape");
  }
  std::copy(values.begin(), values.end(), dst.begin());
}

}  // namespace

std::string heatmap_net_to_json(const HeatmapNet& net) {
  const auto h = static_cast<std::size_t>(net.hidden());
  const auto in = static_cast<std::size_t>(HeatmapNet::kInputs);
  const auto f = static_cast<std::size_t>(2 * net.layout().n_points * net.layout().resolution);
  const auto p = net.parameters();
  ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = "heatmap_net";
  j["hidden"] = net.hidden();
  j["grid"] = {{"n_points", net.layout().n_points}, {"resolution", net.layout().resolution}};
  j["fields"] = {"w1", "b1", "w2", "b2"};
  ordered_json tensors = ordered_json::array();
  tensors.push_back(tensor("w1", {h, in}, p.subspan(0, h * in)));
  tensors.push_back(tensor("b1", {h}, p.subspan(h * in, h)));
  tensors.push_back(tensor("w2", {f, h}, p.subspan(h * in + h, f * h)));
  tensors.push_back(tensor("b2", {f}, p.subspan(h * in + h + f * h, f)));
  j["tensors"] = std::move(tensors);
  return j.dump(1) + "\n";
}

HeatmapNet heatmap_net_from_json(const std::string& text) {
  const auto j = parse(text);
  check_header(j, "heatmap_net");
  try {
    GridLayout layout;
    layout.n_points = j.at("grid").at("n_points").get<int>();
    layout.resolution = j.at("grid").at("resolution").get<int>();
    HeatmapNet net(j.at("hidden").get<int>(), layout);
    const auto h = static_cast<std::size_t>(net.hidden());
    const auto in = static_cast<std::size_t>(HeatmapNet::kInputs);
    const auto f = static_cast<std::size_t>(2 * layout.n_points * layout.resolution);
    auto p = net.parameters();
    const auto& ts = j.at("tensors");
    read_tensor(ts, 0, "w1", {h, in}, p.subspan(0, h * in));
    read_tensor(ts, 1, "b1", {h}, p.subspan(h * in, h));
    read_tensor(ts, 2, "w2", {f, h}, p.subspan(h * in + h, f * h));
    read_tensor(ts, 3, "b2", {f}, p.subspan(h * in + h + f * h, f));
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed heatmap net file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("invalid heatmap net file: ") + e.what());
  }
}

std::string mlp_to_json(const Mlp& net, const std::string& kind) {
  ordered_json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = kind;
  j["sizes"] = net.sizes();
  ordered_json fields = ordered_json::array();
  ordered_json tensors = ordered_json::array();
  const auto p = net.parameters();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < net.sizes().size(); ++l) {
    const auto in = static_cast<std::size_t>(net.sizes()[l]);
    const auto out = static_cast<std::size_t>(net.sizes()[l + 1]);
    const std::string w = "w" + std::to_string(l);
    const std::string b = "b" + std::to_string(l);
    fields.push_back(w);
    fields.push_back(b);
    tensors.push_back(tensor(w, {out, in}, p.subspan(offset, out * in)));
    offset += out * in;
    tensors.push_back(tensor(b, {out}, p.subspan(offset, out)));
    offset += out;
  }
  j["fields"] = std::move(fields);
  j["tensors"] = std::move(tensors);
  return j.dump(1) + "\n";
}

Mlp mlp_from_json(const std::string& text, const std::string& kind) {
  const auto j = parse(text);
  check_header(j, kind);
  try {
    Mlp net(j.at("sizes").get<std::vector<int>>());
    auto p = net.parameters();
    const auto& ts = j.at("tensors");
    std::size_t offset = 0;
    std::size_t index = 0;
    for (std::size_t l = 0; l + 1 < net.sizes().size(); ++l) {
      const auto in = static_cast<std::size_t>(net.sizes()[l]);
      const auto out = static_cast<std::size_t>(net.sizes()[l + 1]);
      read_tensor(ts, index++, "w" + std::to_string(l), {out, in}, p.subspan(offset, out * in));
      offset += out * in;
      read_tensor(ts, index++, "b" + std::to_string(l), {out}, p.subspan(offset, out));
      offset += out;
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed ") + kind + " file: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("invalid ") + kind + " file: " + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed while writing " + path.string());
}

void save_heatmap_net(const HeatmapNet& net, const std::filesystem::path& path) {
  write_text_file(path, heatmap_net_to_json(net));
}

HeatmapNet load_heatmap_net(const std::filesystem::path& path) {
  return heatmap_net_from_json(read_text_file(path));
}

void save_iou_model(const IouScoreModel& model, const std::filesystem::path& path) {
  write_text_file(path, mlp_to_json(model.net(), kIouKind));
}

IouScoreModel load_iou_model(const std::filesystem::path& path) {
  return IouScoreModel(mlp_from_json(read_text_file(path), kIouKind), true);
}

void save_resample_model(const ResampleScoreModel& model, const std::filesystem::path& path) {
  write_text_file(path, mlp_to_json(model.net(), kResampleKind));
}

ResampleScoreModel load_resample_model(const std::filesystem::path& path) {
  return ResampleScoreModel(mlp_from_json(read_text_file(path), kResampleKind), true);
}

}  // namespace gridcascade
