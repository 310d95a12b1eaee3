#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace imbrl {

enum class SimilarityMetric { DotSoftmax, Euclidean };

const char* metric_name(SimilarityMetric m);

/// Ranking key of one entry: inner product or negative squared distance.
double entry_score(SimilarityMetric metric, const Eigen::Ref<const Eigen::VectorXd>& e,
                   const Eigen::Ref<const Eigen::VectorXd>& q);
SimilarityMetric parse_metric(const std::string& name);

/// Immutable store of state vectors (one column per entry) with exact or
/// partition-probed top-k search.
///
/// With partitions, entries are bucketed by nearest centroid (Lloyd
/// iterations from a k-means++ seeding with a fixed seed) and a query scans
/// only the `probes` buckets whose centroids score best under the metric.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  RetrievalIndex(Eigen::MatrixXd entries, SimilarityMetric metric, int partition_count, int probes = 0,
                 std::uint64_t seed = 0);

  Eigen::Index dim() const { return entries_.rows(); }
  Eigen::Index size() const { return entries_.cols(); }
  SimilarityMetric metric() const { return metric_; }
  const Eigen::MatrixXd& entries() const { return entries_; }
  auto entry(Eigen::Index i) const { return entries_.col(i); }

  int partition_count() const { return static_cast<int>(buckets_.size()); }
  int probes() const { return probes_; }
  const std::vector<std::vector<Eigen::Index>>& buckets() const { return buckets_; }
  const Eigen::MatrixXd& centroids() const { return centroids_; }

  /// Ranking key per entry: inner product (DotSoftmax; softmax is monotone
  /// in it) or negative squared distance (Euclidean).
  Eigen::VectorXd raw_scores(const Eigen::Ref<const Eigen::VectorXd>& q) const;

  /// Versioned binary layout; the hash is FNV-1a over those bytes.
  void write(std::ostream& out) const;
  static RetrievalIndex read(std::istream& in);
  std::uint64_t hash() const;

  friend bool operator==(const RetrievalIndex& a, const RetrievalIndex& b);

 private:
  void build_partitions(int partition_count, std::uint64_t seed);

  Eigen::MatrixXd entries_;
  SimilarityMetric metric_ = SimilarityMetric::Euclidean;
  Eigen::MatrixXd centroids_;
  std::vector<std::vector<Eigen::Index>> buckets_;
  int probes_ = 0;
};

/// Throws ConfigError for empty input. Columns of `states` are entries.
RetrievalIndex build_index(const Eigen::MatrixXd& states, SimilarityMetric metric, int partition_count,
                           int probes = 0, std::uint64_t seed = 0);

/// DotSoftmax: softmax of inner products over all entries (sums to 1).
/// Euclidean: -|q - e|^2, unnormalised.
Eigen::VectorXd similarity_scores(const RetrievalIndex& index, const Eigen::Ref<const Eigen::VectorXd>& q);

/// Entry ids of the k best entries, best first; equal scores keep entry
/// order. Uses the partition probe when the index has partitions.
std::vector<Eigen::Index> top_k(const RetrievalIndex& index, const Eigen::Ref<const Eigen::VectorXd>& q, int k);

/// Exhaustive search regardless of partitions.
std::vector<Eigen::Index> top_k_exact(const RetrievalIndex& index, const Eigen::Ref<const Eigen::VectorXd>& q, int k);

/// Columns of the retrieved entries.
Eigen::MatrixXd gather_entries(const RetrievalIndex& index, std::span<const Eigen::Index> ids);

/// q concatenated with the mean of the retrieved columns.
Eigen::VectorXd augment(const Eigen::Ref<const Eigen::VectorXd>& q, const Eigen::Ref<const Eigen::MatrixXd>& retrieved);

}  // namespace imbrl
