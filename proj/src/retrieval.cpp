#include "imbrl/retrieval.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include "imbrl/errors.hpp"
#include "imbrl/io.hpp"
#include "imbrl/learner.hpp"
#include "imbrl/rng.hpp"

namespace imbrl {

namespace {
constexpr std::string_view kIndexMagic = "IMBRLIX1";
constexpr std::uint32_t kIndexVersion = 1;
constexpr int kLloydIterations = 50;

// Best-first order of `ids` by score, ties by entry id.
void rank(std::vector<Eigen::Index>& ids, const Eigen::VectorXd& score, std::size_t k) {
  auto better = [&](Eigen::Index a, Eigen::Index b) {
    return score(a) > score(b) || (score(a) == score(b) && a < b);
  };
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), better);
  ids.resize(k);
}
}  // namespace

double entry_score(SimilarityMetric metric, const Eigen::Ref<const Eigen::VectorXd>& e,
                   const Eigen::Ref<const Eigen::VectorXd>& q) {
  if (metric == SimilarityMetric::DotSoftmax) return e.dot(q);
  return -(e - q).squaredNorm();
}

const char* metric_name(SimilarityMetric m) {
  return m == SimilarityMetric::DotSoftmax ? "dot-softmax" : "euclidean";
}

SimilarityMetric parse_metric(const std::string& name) {
  if (name == "dot-softmax" || name == "dot") return SimilarityMetric::DotSoftmax;
  if (name == "euclidean") return SimilarityMetric::Euclidean;
  throw ConfigError("unknown similarity metric '" + name + "'");
}

RetrievalIndex::RetrievalIndex(Eigen::MatrixXd entries, SimilarityMetric metric, int partition_count, int probes,
                               std::uint64_t seed)
    : entries_(std::move(entries)), metric_(metric) {
  if (entries_.cols() == 0 || entries_.rows() == 0) throw ConfigError("cannot build an index from no states");
  if (!entries_.allFinite()) throw ConfigError("index entries must be finite");
  if (partition_count < 0) throw ConfigError("partition_count must be >= 0");
  if (partition_count > 0) {
    build_partitions(std::min<int>(partition_count, static_cast<int>(entries_.cols())), seed);
    probes_ = probes > 0 ? std::min(probes, this->partition_count())
                         : std::max(1, (this->partition_count() + 3) / 4);
  }
}

void RetrievalIndex::build_partitions(int n_parts, std::uint64_t seed) {
  const Eigen::Index n = entries_.cols();
  Rng rng(seed);
  // k-means++ seeding.
  centroids_.resize(entries_.rows(), n_parts);
  centroids_.col(0) = entries_.col(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  Eigen::VectorXd nearest = (entries_.colwise() - centroids_.col(0)).colwise().squaredNorm().transpose();
  for (int c = 1; c < n_parts; ++c) {
    const double total = nearest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (pick = 0; pick + 1 < n && u >= nearest(pick); ++pick) u -= nearest(pick);
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    }
    centroids_.col(c) = entries_.col(pick);
    nearest = nearest.cwiseMin((entries_.colwise() - centroids_.col(c)).colwise().squaredNorm().transpose());
  }

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < kLloydIterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      (centroids_.colwise() - entries_.col(i)).colwise().squaredNorm().minCoeff(&best);
      if (assign[i] != static_cast<int>(best)) {
        assign[i] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(entries_.rows(), n_parts);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_parts);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(assign[i]) += entries_.col(i);
      counts(assign[i]) += 1.0;
    }
    for (int c = 0; c < n_parts; ++c)
      if (counts(c) > 0) centroids_.col(c) = sums.col(c) / counts(c);
  }

  buckets_.assign(static_cast<std::size_t>(n_parts), {});
  for (Eigen::Index i = 0; i < n; ++i) buckets_[assign[i]].push_back(i);
  // Drop partitions that ended up empty so every bucket is searchable.
  std::vector<std::vector<Eigen::Index>> kept;
  std::vector<Eigen::Index> kept_cols;
  for (int c = 0; c < n_parts; ++c)
    if (!buckets_[c].empty()) {
      kept.push_back(std::move(buckets_[c]));
      kept_cols.push_back(c);
    }
  Eigen::MatrixXd kept_centroids(entries_.rows(), static_cast<Eigen::Index>(kept_cols.size()));
  for (std::size_t j = 0; j < kept_cols.size(); ++j) kept_centroids.col(static_cast<Eigen::Index>(j)) = centroids_.col(kept_cols[j]);
  centroids_ = std::move(kept_centroids);
  buckets_ = std::move(kept);
}

Eigen::VectorXd RetrievalIndex::raw_scores(const Eigen::Ref<const Eigen::VectorXd>& q) const {
  if (q.size() != dim()) throw ConfigError("query dimension does not match the index");
  Eigen::VectorXd s(size());
  for (Eigen::Index i = 0; i < size(); ++i) s(i) = entry_score(metric_, entries_.col(i), q);
  return s;
}

void RetrievalIndex::write(std::ostream& out) const {
  io::write_magic(out, kIndexMagic);
  io::write_le<std::uint32_t>(out, kIndexVersion);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim()));
  io::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(size()));
  io::write_le<std::uint8_t>(out, metric_ == SimilarityMetric::DotSoftmax ? 0 : 1);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(partition_count()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(probes_));
  for (Eigen::Index i = 0; i < centroids_.size(); ++i) io::write_le<double>(out, centroids_.data()[i]);
  for (const auto& b : buckets_) {
    io::write_le<std::uint64_t>(out, b.size());
    for (Eigen::Index id : b) io::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(id));
  }
  for (Eigen::Index i = 0; i < entries_.size(); ++i) io::write_le<double>(out, entries_.data()[i]);
}

RetrievalIndex RetrievalIndex::read(std::istream& in) {
  io::expect_magic(in, kIndexMagic);
  if (io::read_le<std::uint32_t>(in) != kIndexVersion) throw FormatError("unsupported index version");
  RetrievalIndex idx;
  const auto m = io::read_le<std::uint32_t>(in);
  const auto n = io::read_le<std::uint64_t>(in);
  const auto metric = io::read_le<std::uint8_t>(in);
  if (metric > 1) throw FormatError("unknown metric id in index");
  idx.metric_ = metric == 0 ? SimilarityMetric::DotSoftmax : SimilarityMetric::Euclidean;
  const auto parts = io::read_le<std::uint32_t>(in);
  idx.probes_ = static_cast<int>(io::read_le<std::uint32_t>(in));
  if (parts > 0) idx.centroids_.resize(m, parts);
  for (Eigen::Index i = 0; i < idx.centroids_.size(); ++i) idx.centroids_.data()[i] = io::read_le<double>(in);
  idx.buckets_.resize(parts);
  std::vector<bool> seen(n, false);
  for (auto& b : idx.buckets_) {
    const auto len = io::read_le<std::uint64_t>(in);
    if (len > n) throw FormatError("bucket larger than the index");
    for (std::uint64_t j = 0; j < len; ++j) {
      const auto id = io::read_le<std::uint64_t>(in);
      if (id >= n || seen[id]) throw FormatError("partition buckets do not cover entries exactly once");
      seen[id] = true;
      b.push_back(static_cast<Eigen::Index>(id));
    }
  }
  if (parts > 0 && std::find(seen.begin(), seen.end(), false) != seen.end())
    throw FormatError("partition buckets do not cover every entry");
  idx.entries_.resize(m, static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < idx.entries_.size(); ++i) idx.entries_.data()[i] = io::read_le<double>(in);
  if (idx.entries_.size() == 0) throw FormatError("empty index");
  return idx;
}

std::uint64_t RetrievalIndex::hash() const {
  std::ostringstream ss;
  write(ss);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : ss.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool operator==(const RetrievalIndex& a, const RetrievalIndex& b) {
  return a.metric_ == b.metric_ && a.probes_ == b.probes_ && a.buckets_ == b.buckets_ &&
         a.entries_.rows() == b.entries_.rows() && a.entries_.cols() == b.entries_.cols() &&
         a.entries_ == b.entries_ && a.centroids_.rows() == b.centroids_.rows() &&
         a.centroids_.cols() == b.centroids_.cols() && a.centroids_ == b.centroids_;
}

RetrievalIndex build_index(const Eigen::MatrixXd& states, SimilarityMetric metric, int partition_count, int probes,
                           std::uint64_t seed) {
  return RetrievalIndex(states, metric, partition_count, probes, seed);
}

Eigen::VectorXd similarity_scores(const RetrievalIndex& index, const Eigen::Ref<const Eigen::VectorXd>& q) {
  Eigen::VectorXd s = index.raw_scores(q);
  if (index.metric() == SimilarityMetric::Euclidean) return s;
  const double lse = logsumexp_cols(s)(0);
  return (s.array() - lse).exp().matrix();
}

std::vector<Eigen::Index> top_k_exact(const RetrievalIndex& index, const Eigen::Ref<const Eigen::VectorXd>& q, int k) {
  if (k < 1 || k > index.size())
    throw ConfigError("top_k: k=" + std::to_string(k) + " outside [1, " + std::to_string(index.size()) + "]");
  const Eigen::VectorXd score = index.raw_scores(q);
  std::vector<Eigen::Index> ids(static_cast<std::size_t>(index.size()));
  std::iota(ids.begin(), ids.end(), Eigen::Index{0});
  rank(ids, score, static_cast<std::size_t>(k));
  return ids;
}

std::vector<Eigen::Index> top_k(const RetrievalIndex& index, const Eigen::Ref<const Eigen::VectorXd>& q, int k) {
  if (index.partition_count() == 0) return top_k_exact(index, q, k);
  if (k < 1 || k > index.size())
    throw ConfigError("top_k: k=" + std::to_string(k) + " outside [1, " + std::to_string(index.size()) + "]");
  if (q.size() != index.dim()) throw ConfigError("query dimension does not match the index");

  const Eigen::MatrixXd& c = index.centroids();
  Eigen::VectorXd centroid_score(c.cols());
  for (Eigen::Index j = 0; j < c.cols(); ++j) centroid_score(j) = entry_score(index.metric(), c.col(j), q);
  std::vector<Eigen::Index> parts(static_cast<std::size_t>(c.cols()));
  std::iota(parts.begin(), parts.end(), Eigen::Index{0});
  rank(parts, centroid_score, static_cast<std::size_t>(index.probes()));

  std::vector<Eigen::Index> candidates;
  for (Eigen::Index p : parts) {
    const auto& b = index.buckets()[static_cast<std::size_t>(p)];
    candidates.insert(candidates.end(), b.begin(), b.end());
  }
  // Keep probing further buckets until at least k candidates exist.
  if (static_cast<int>(candidates.size()) < k) {
    std::vector<Eigen::Index> rest(static_cast<std::size_t>(c.cols()));
    std::iota(rest.begin(), rest.end(), Eigen::Index{0});
    rank(rest, centroid_score, rest.size());
    for (Eigen::Index p : rest) {
      if (static_cast<int>(candidates.size()) >= k) break;
      if (std::find(parts.begin(), parts.end(), p) != parts.end()) continue;
      const auto& b = index.buckets()[static_cast<std::size_t>(p)];
      candidates.insert(candidates.end(), b.begin(), b.end());
    }
  }
  Eigen::VectorXd score = Eigen::VectorXd::Constant(index.size(), -std::numeric_limits<double>::infinity());
  for (Eigen::Index id : candidates) score(id) = entry_score(index.metric(), index.entry(id), q);
  rank(candidates, score, static_cast<std::size_t>(k));
  return candidates;
}

Eigen::MatrixXd gather_entries(const RetrievalIndex& index, std::span<const Eigen::Index> ids) {
  Eigen::MatrixXd out(index.dim(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = index.entry(ids[j]);
  return out;
}

Eigen::VectorXd augment(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::MatrixXd>& retrieved) {
  if (retrieved.cols() == 0) throw ConfigError("augment needs at least one retrieved state");
  if (retrieved.rows() != q.size()) throw ConfigError("retrieved states have a different dimension than the query");
  Eigen::VectorXd out(2 * q.size());
  out << q, retrieved.rowwise().mean();
  return out;
}

}  // namespace imbrl
