#include "imbrl/per.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "imbrl/errors.hpp"

namespace imbrl {

PrioritizedSampler::PrioritizedSampler(std::size_t n, double omega, double epsilon)
    : n_(n), omega_(omega), epsilon_(epsilon) {
  if (n == 0) throw ConfigError("prioritized sampler needs at least one entry");
  if (!(omega >= 0.0)) throw ConfigError("priority exponent must be >= 0");
  if (!(epsilon >= 0.0)) throw ConfigError("priority epsilon must be >= 0");
  capacity_ = 1;
  while (capacity_ < n) capacity_ <<= 1;
  priorities_.assign(n, max_priority_);
  sum_tree_.assign(2 * capacity_, 0.0);
  min_tree_.assign(2 * capacity_, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) write_leaf(i, std::pow(max_priority_ + epsilon_, omega_));
}

void PrioritizedSampler::write_leaf(std::size_t i, double value) {
  std::size_t node = i + capacity_;
  sum_tree_[node] = value;
  min_tree_[node] = value;
  for (node /= 2; node >= 1; node /= 2) {
    sum_tree_[node] = sum_tree_[2 * node] + sum_tree_[2 * node + 1];
    min_tree_[node] = std::min(min_tree_[2 * node], min_tree_[2 * node + 1]);
  }
}

void PrioritizedSampler::set_priority(std::size_t i, double priority) {
  if (i >= n_) throw ConfigError("priority index out of range");
  if (!(priority >= 0.0) || !std::isfinite(priority)) throw ConfigError("priority must be finite and >= 0");
  priorities_[i] = priority;
  max_priority_ = std::max(max_priority_, priority);
  write_leaf(i, std::pow(priority + epsilon_, omega_));
}

double PrioritizedSampler::probability(std::size_t i) const { return sum_tree_[i + capacity_] / sum_tree_[1]; }

std::size_t PrioritizedSampler::find(double mass) const {
  std::size_t node = 1;
  while (node < capacity_) {
    if (mass < sum_tree_[2 * node] || sum_tree_[2 * node + 1] <= 0.0) {
      node = 2 * node;
    } else {
      mass -= sum_tree_[2 * node];
      node = 2 * node + 1;
    }
  }
  return std::min(node - capacity_, n_ - 1);
}

PrioritizedSampler::Sample PrioritizedSampler::sample(std::size_t batch_size, double importance_exponent,
                                                      Rng& rng) const {
  const double total = sum_tree_[1];
  if (!(total > 0.0)) throw NumericalError("all sampling priorities are zero");
  Sample out;
  out.indices.reserve(batch_size);
  out.weights.resize(static_cast<Eigen::Index>(batch_size));
  const double n = static_cast<double>(n_);
  const double max_weight = std::pow(n * min_tree_[1] / total, -importance_exponent);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const std::size_t i = find(uniform01(rng) * total);
    out.indices.push_back(i);
    out.weights(static_cast<Eigen::Index>(k)) = std::pow(n * probability(i), -importance_exponent) / max_weight;
  }
  return out;
}

}  // namespace imbrl
