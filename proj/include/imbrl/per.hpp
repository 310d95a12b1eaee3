#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "imbrl/rng.hpp"

namespace imbrl {

/// Proportional prioritised sampling over a fixed set of N transitions.
///
/// P(i) = (p_i + epsilon)^omega / sum_j (p_j + epsilon)^omega, kept in a sum
/// tree (and a min tree for the weight normaliser). New entries start at the
/// largest priority seen so far.
class PrioritizedSampler {
 public:
  PrioritizedSampler(std::size_t n, double omega, double epsilon);

  std::size_t size() const { return n_; }
  double omega() const { return omega_; }
  double epsilon() const { return epsilon_; }

  void set_priority(std::size_t i, double priority);
  double priority(std::size_t i) const { return priorities_[i]; }
  double probability(std::size_t i) const;
  double max_priority() const { return max_priority_; }

  struct Sample {
    std::vector<std::size_t> indices;
    Eigen::VectorXd weights;  ///< (N P(i))^-beta / max_j (N P(j))^-beta
  };
  Sample sample(std::size_t batch_size, double importance_exponent, Rng& rng) const;

 private:
  std::size_t find(double mass) const;
  void write_leaf(std::size_t i, double value);

  std::size_t n_;
  std::size_t capacity_;
  double omega_;
  double epsilon_;
  double max_priority_ = 1.0;
  std::vector<double> priorities_;
  std::vector<double> sum_tree_;
  std::vector<double> min_tree_;
};

}  // namespace imbrl
