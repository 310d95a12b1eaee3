#include "imbrl/qfunction.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "imbrl/errors.hpp"
#include "imbrl/io.hpp"
#include "imbrl/rng.hpp"

namespace imbrl {

namespace {
constexpr std::string_view kCheckpointMagic = "IMBRLQF1";
}

Eigen::Index QRepr::num_params() const {
  if (kind == Kind::Tabular) return static_cast<Eigen::Index>(num_states) * kNumActions;
  Eigen::Index n = 0;
  int in = input_dim;
  for (int h : hidden) {
    n += static_cast<Eigen::Index>(in) * h + h;
    in = h;
  }
  return n + static_cast<Eigen::Index>(in) * kNumActions + kNumActions;
}

std::string QRepr::describe() const {
  if (kind == Kind::Tabular) return "tabular:" + std::to_string(num_states);
  std::string s = "mlp:" + std::to_string(input_dim);
  for (int h : hidden) s += "-" + std::to_string(h);
  return s + "-" + std::to_string(kNumActions);
}

QRepr QRepr::parse(const std::string& text) {
  if (text.rfind("tabular:", 0) == 0) {
    const auto n = io::parse_int(std::string_view(text).substr(8));
    if (n <= 0) throw FormatError("bad tabular descriptor");
    return tabular(static_cast<int>(n));
  }
  if (text.rfind("mlp:", 0) == 0) {
    std::vector<int> dims;
    std::string_view body = std::string_view(text).substr(4);
    std::size_t begin = 0;
    for (;;) {
      const auto end = body.find('-', begin);
      dims.push_back(static_cast<int>(io::parse_int(body.substr(begin, end == std::string_view::npos ? end : end - begin))));
      if (end == std::string_view::npos) break;
      begin = end + 1;
    }
    if (dims.size() < 2 || dims.back() != kNumActions) throw FormatError("bad mlp descriptor " + text);
    for (int d : dims)
      if (d <= 0) throw FormatError("bad mlp descriptor " + text);
    return mlp(dims.front(), std::vector<int>(dims.begin() + 1, dims.end() - 1));
  }
  throw FormatError("unknown representation descriptor " + text);
}

QFunction::QFunction(QRepr repr, std::uint64_t seed) : repr_(std::move(repr)) {
  params_ = Eigen::VectorXd::Zero(repr_.num_params());
  if (repr_.kind == QRepr::Kind::Tabular) return;
  Rng rng(seed);
  for (const Layer& l : layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(l.in) * l.out; ++i)
      params_(l.w_offset + i) = (2.0 * uniform01(rng) - 1.0) * bound;
  }
}

QFunction::QFunction(QRepr repr, Eigen::VectorXd params) : repr_(std::move(repr)), params_(std::move(params)) {
  if (params_.size() != repr_.num_params())
    throw ConfigError("parameter count " + std::to_string(params_.size()) + " does not match " +
                      repr_.describe());
}

std::vector<QFunction::Layer> QFunction::layers() const {
  std::vector<Layer> out;
  Eigen::Index offset = 0;
  int in = repr_.input_dim;
  auto add = [&](int width) {
    Layer l{offset, offset + static_cast<Eigen::Index>(in) * width, in, width};
    offset = l.b_offset + width;
    out.push_back(l);
    in = width;
  };
  for (int h : repr_.hidden) add(h);
  add(kNumActions);
  return out;
}

ActionValues QFunction::forward(const QInputs& in) const {
  if (repr_.kind == QRepr::Kind::Tabular) {
    ActionValues q(kNumActions, static_cast<Eigen::Index>(in.index.size()));
    for (std::size_t i = 0; i < in.index.size(); ++i)
      q.col(static_cast<Eigen::Index>(i)) = params_.segment<kNumActions>(static_cast<Eigen::Index>(in.index[i]) * kNumActions);
    return q;
  }
  if (in.features.rows() != repr_.input_dim)
    throw ConfigError("input dimension " + std::to_string(in.features.rows()) + " does not match " +
                      repr_.describe());
  Eigen::MatrixXd h = in.features;
  const auto ls = layers();
  for (std::size_t k = 0; k < ls.size(); ++k) {
    const Layer& l = ls[k];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + l.w_offset, l.out, l.in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + l.b_offset, l.out);
    Eigen::MatrixXd z = (w * h).colwise() + b;
    h = k + 1 < ls.size() ? Eigen::MatrixXd(z.array().tanh()) : std::move(z);
  }
  return h;
}

void QFunction::backward(const QInputs& in, const ActionValues& upstream, Eigen::VectorXd& grad) const {
  if (grad.size() != params_.size()) throw ConfigError("gradient buffer has the wrong size");
  if (repr_.kind == QRepr::Kind::Tabular) {
    for (std::size_t i = 0; i < in.index.size(); ++i)
      grad.segment<kNumActions>(static_cast<Eigen::Index>(in.index[i]) * kNumActions) += upstream.col(static_cast<Eigen::Index>(i));
    return;
  }
  const auto ls = layers();
  std::vector<Eigen::MatrixXd> acts{in.features};
  for (std::size_t k = 0; k + 1 < ls.size(); ++k) {
    const Layer& l = ls[k];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + l.w_offset, l.out, l.in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + l.b_offset, l.out);
    acts.push_back(((w * acts.back()).colwise() + b).array().tanh().matrix());
  }
  Eigen::MatrixXd delta = upstream;
  for (std::size_t k = ls.size(); k-- > 0;) {
    const Layer& l = ls[k];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + l.w_offset, l.out, l.in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + l.b_offset, l.out);
    gw.noalias() += delta * acts[k].transpose();
    gb += delta.rowwise().sum();
    if (k == 0) break;
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + l.w_offset, l.out, l.in);
    delta = ((w.transpose() * delta).array() * (1.0 - acts[k].array().square())).matrix();
  }
}

Eigen::Matrix<double, kNumActions, 1> QFunction::values(int index) const {
  QInputs in;
  in.index = {index};
  return forward(in).col(0);
}

Eigen::Matrix<double, kNumActions, 1> QFunction::values(const Eigen::VectorXd& features) const {
  QInputs in;
  in.features = features;
  return forward(in).col(0);
}

std::string Checkpoint::get(const std::string& key, const std::string& fallback) const {
  const auto it = meta.find(key);
  return it == meta.end() ? fallback : it->second;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  io::write_magic(out, kCheckpointMagic);
  io::write_le<std::uint32_t>(out, kCheckpointVersion);
  io::write_string(out, ck.q.repr().describe());
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    io::write_string(out, k);
    io::write_string(out, v);
  }
  io::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(ck.q.params().size()));
  for (double p : ck.q.params()) io::write_le<double>(out, p);
}

Checkpoint read_checkpoint(std::istream& in) {
  io::expect_magic(in, kCheckpointMagic);
  const auto version = io::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  QRepr repr = QRepr::parse(io::read_string(in));
  Checkpoint ck;
  const auto n_meta = io::read_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    const std::string k = io::read_string(in);
    ck.meta[k] = io::read_string(in);
  }
  const auto n = io::read_le<std::uint64_t>(in);
  if (static_cast<Eigen::Index>(n) != repr.num_params()) throw FormatError("checkpoint parameter count mismatch");
  Eigen::VectorXd params(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < params.size(); ++i) params(i) = io::read_le<double>(in);
  ck.q = QFunction(std::move(repr), std::move(params));
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_checkpoint(out, ck);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace imbrl
