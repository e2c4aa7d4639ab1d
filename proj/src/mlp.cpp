#include "gridcascade/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gridcascade/rng.hpp"

namespace gridcascade {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("mlp needs at least two layer sizes");
  for (const int s : sizes_) {
    if (s <= 0) throw std::invalid_argument("mlp layer sizes must be positive");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_.assign(total, 0.0);
}

void Mlp::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    double* w = params_.data() + layer_offset(l);
    for (int i = 0; i < out * in; ++i) w[i] = rng.uniform(-limit, limit);
    std::fill(w + out * in, w + out * in + out, 0.0);
  }
}

Mlp::Cache Mlp::forward(std::span<const double> input) const {
  if (input.size() != static_cast<std::size_t>(input_size())) {
    std::ostringstream msg;
    msg << "mlp expects " << input_size() << " inputs, got " << input.size();
    throw std::invalid_argument(msg.str());
  }
  Cache cache;
  cache.activations.emplace_back(input.begin(), input.end());
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double* w = params_.data() + layer_offset(l);
    const double* b = w + static_cast<std::ptrdiff_t>(out) * in;
    const auto& x = cache.activations.back();
    std::vector<double> y(static_cast<std::size_t>(out));
    const bool last = l + 1 == layers;
    for (int o = 0; o < out; ++o) {
      double z = b[o];
      for (int i = 0; i < in; ++i) z += w[o * in + i] * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] = last ? 1.0 / (1.0 + std::exp(-z)) : std::tanh(z);
      if (!std::isfinite(y[static_cast<std::size_t>(o)])) {
        std::ostringstream msg;
        msg << "mlp produced a non-finite activation at layer " << l << ", unit " << o;
        throw std::runtime_error(msg.str());
      }
    }
    cache.activations.push_back(std::move(y));
  }
  return cache;
}

void Mlp::backward(const Cache& cache, std::span<const double> output_grad,
                   std::span<double> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer size mismatch");
  const std::size_t layers = sizes_.size() - 1;
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  // sigmoid derivative on the output layer
  const auto& out_act = cache.activations.back();
  for (std::size_t o = 0; o < delta.size(); ++o) delta[o] *= out_act[o] * (1.0 - out_act[o]);

  for (std::size_t l = layers; l-- > 0;) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double* w = params_.data() + layer_offset(l);
    double* gw = grad.data() + layer_offset(l);
    double* gb = gw + static_cast<std::ptrdiff_t>(out) * in;
    const auto& x = cache.activations[l];
    std::vector<double> prev(static_cast<std::size_t>(in), 0.0);
    for (int o = 0; o < out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      gb[o] += d;
      for (int i = 0; i < in; ++i) {
        gw[o * in + i] += d * x[static_cast<std::size_t>(i)];
        prev[static_cast<std::size_t>(i)] += d * w[o * in + i];
      }
    }
    if (l > 0) {
      for (int i = 0; i < in; ++i) {
        const double a = x[static_cast<std::size_t>(i)];
        prev[static_cast<std::size_t>(i)] *= 1.0 - a * a;  // tanh'
      }
    }
    delta = std::move(prev);
  }
}

AdamOptimizer::AdamOptimizer(std::size_t n, double learning_rate, double beta1, double beta2,
                             double epsilon)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon), m_(n, 0.0), v_(n, 0.0) {}

void AdamOptimizer::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

std::string GradcheckReport::summary() const {
  std::ostringstream msg;
  msg << (passed ? "PASS" : "FAIL") << " checked=" << checked
      << " max_rel_err=" << max_relative_error << " worst_coord=" << worst_coordinate
      << " analytic=" << worst_analytic << " numeric=" << worst_numeric;
  return msg.str();
}

GradcheckReport gradcheck(const std::function<double(std::span<const double>)>& loss,
                          std::span<const double> point, std::span<const double> analytic,
                          std::span<const std::size_t> coordinates, double tolerance,
                          double step) {
  GradcheckReport report;
  std::vector<double> x(point.begin(), point.end());
  for (const std::size_t c : coordinates) {
    const double orig = x[c];
    x[c] = orig + step;
    const double up = loss(x);
    x[c] = orig - step;
    const double down = loss(x);
    x[c] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[c];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    ++report.checked;
    if (report.checked == 1 || rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_coordinate = c;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t count,
                                            std::uint64_t seed) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (count >= n) return all;
  Rng rng(seed);
  std::shuffle(all.begin(), all.end(), rng.engine());
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace gridcascade
