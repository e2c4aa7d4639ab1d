#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gridcascade {

/// Dense network: tanh hidden layers, sigmoid outputs. Parameters are stored
/// flat, layer by layer, as [weights (out x in, row-major), biases (out)].
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);

  /// Scaled-uniform initialization (Glorot), seeded.
  void initialize(std::uint64_t seed);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }

  struct Cache {
    std::vector<std::vector<double>> activations;  // input, hidden..., output
  };

  Cache forward(std::span<const double> input) const;
  std::vector<double> predict(std::span<const double> input) const {
    return forward(input).activations.back();
  }

  /// Accumulates dL/dparams into `grad` given dL/doutput.
  void backward(const Cache& cache, std::span<const double> output_grad,
                std::span<double> grad) const;

 private:
  std::size_t layer_offset(std::size_t layer) const { return offsets_[layer]; }

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Adam with bias correction.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::size_t n, double learning_rate = 1e-2, double beta1 = 0.9,
                         double beta2 = 0.999, double epsilon = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);

 private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct GradcheckReport {
  bool passed = true;
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;

  std::string summary() const;
};

/// Compares an analytic gradient with central finite differences coordinate
/// by coordinate. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradcheckReport gradcheck(const std::function<double(std::span<const double>)>& loss,
                          std::span<const double> point, std::span<const double> analytic,
                          std::span<const std::size_t> coordinates, double tolerance,
                          double step = 1e-5);

/// `count` distinct coordinates in [0, n), seeded (all of them when count >= n).
std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t count,
                                            std::uint64_t seed);

}  // namespace gridcascade
