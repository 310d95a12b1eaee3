#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "imbrl/grid.hpp"

namespace imbrl {

/// Column-per-sample action values, |A| rows.
using ActionValues = Eigen::Matrix<double, kNumActions, Eigen::Dynamic>;

/// Shape of a Q-function.
///
/// Tabular: one value per (cell index, action); inputs are cell indices.
/// Mlp: affine layers with tanh between them and a linear head of width |A|;
/// inputs are feature columns of length input_dim.
struct QRepr {
  enum class Kind { Tabular, Mlp };
  Kind kind = Kind::Tabular;
  int num_states = 0;
  int input_dim = 0;
  std::vector<int> hidden;

  static QRepr tabular(int num_states) { return {Kind::Tabular, num_states, 0, {}}; }
  static QRepr mlp(int input_dim, std::vector<int> hidden) {
    return {Kind::Mlp, 0, input_dim, std::move(hidden)};
  }

  Eigen::Index num_params() const;
  std::string describe() const;
  static QRepr parse(const std::string& text);
  friend bool operator==(const QRepr&, const QRepr&) = default;
};

/// A batch of Q-function inputs. Tabular representations read `index`,
/// parametric ones read the columns of `features`.
struct QInputs {
  std::vector<int> index;
  Eigen::MatrixXd features;

  Eigen::Index size() const {
    return index.empty() ? features.cols() : static_cast<Eigen::Index>(index.size());
  }
};

class QFunction {
 public:
  QFunction() = default;
  /// Zero-initialised tabular values or uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
  /// weights drawn from `seed`; biases start at zero.
  QFunction(QRepr repr, std::uint64_t seed);
  QFunction(QRepr repr, Eigen::VectorXd params);

  const QRepr& repr() const { return repr_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& params() { return params_; }

  ActionValues forward(const QInputs& in) const;

  /// Gradient of sum_{a,i} upstream(a, i) * Q(a | input i) w.r.t. params,
  /// added into `grad`.
  void backward(const QInputs& in, const ActionValues& upstream, Eigen::VectorXd& grad) const;

  /// Convenience: values at a single input.
  Eigen::Matrix<double, kNumActions, 1> values(int index) const;
  Eigen::Matrix<double, kNumActions, 1> values(const Eigen::VectorXd& features) const;

 private:
  struct Layer {
    Eigen::Index w_offset, b_offset;
    int in, out;
  };
  std::vector<Layer> layers() const;

  QRepr repr_;
  Eigen::VectorXd params_;
};

/// Versioned checkpoint: representation descriptor, params and free-form
/// metadata (sorted keys).
struct Checkpoint {
  QFunction q;
  std::map<std::string, std::string> meta;
  std::string get(const std::string& key, const std::string& fallback = {}) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace imbrl
