#pragma once

#include "xmod/affinity.hpp"
#include "xmod/core.hpp"

#include <deque>
#include <string>
#include <vector>

namespace xmod {

struct ClusterAssignment {
  HardLabelVector labels;
  int k = 0;

  // Instance indices of every non-noise instance, ascending.
  std::vector<Index> members() const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels.labels[i] != kNoise) out.push_back(static_cast<Index>(i));
    return out;
  }

  std::size_t noise_count() const {
    std::size_t n = 0;
    for (int l : labels.labels) n += (l == kNoise);
    return n;
  }
};

/// K x d unit-norm prototypes with the softmax temperature and momentum.
struct MemoryBank {
  Matrix prototypes;
  double tau = 0.05;
  double mu = 0.1;

  Index size() const noexcept { return prototypes.rows(); }
};

struct DbscanOptions {
  double eps = 0.6;
  int min_samples = 4;
  DistanceMetric metric = DistanceMetric::Euclidean;
  int kappa = 30;  // reciprocal-neighbour size for JaccardDistance
};

// Pairwise distance under the chosen metric. Euclidean distances are
// plain (not squared).
inline Matrix dbscan_distances(const Matrix& points, const DbscanOptions& opt) {
  if (opt.metric == DistanceMetric::JaccardDistance) {
    const int kappa = static_cast<int>(std::min<Index>(opt.kappa, points.rows()));
    Matrix s = jaccard_similarity(k_reciprocal_sets(points, kappa));
    return (Matrix::Ones(s.rows(), s.cols()) - s).eval();
  }
  Matrix d = squared_distances(points, points);
  return d.cwiseSqrt();
}

/// Density clustering with first-discovery cluster ids. Border points
/// reachable from several clusters stay with the first one that claims them.
inline ClusterAssignment dbscan(const Matrix& points, const DbscanOptions& opt) {
  require(opt.eps > 0, ErrorKind::InvalidArgument, "eps must be > 0");
  require(opt.min_samples >= 1, ErrorKind::InvalidArgument, "min_samples must be >= 1");
  const Index n = points.rows();
  const Matrix dist = dbscan_distances(points, opt);

  std::vector<std::vector<Index>> neighbours(static_cast<std::size_t>(n));
  parallel_for(n, [&](Index i) {
    auto& nb = neighbours[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j)
      if (dist(i, j) <= opt.eps) nb.push_back(j);
  });
  auto is_core = [&](Index i) {
    return static_cast<int>(neighbours[static_cast<std::size_t>(i)].size()) >= opt.min_samples;
  };

  ClusterAssignment out;
  out.labels.labels.assign(static_cast<std::size_t>(n), kNoise);
  auto& lab = out.labels.labels;
  for (Index i = 0; i < n; ++i) {
    if (lab[static_cast<std::size_t>(i)] != kNoise || !is_core(i)) continue;
    const int id = out.k++;
    lab[static_cast<std::size_t>(i)] = id;
    std::deque<Index> frontier{i};
    while (!frontier.empty()) {
      const Index q = frontier.front();
      frontier.pop_front();
      if (!is_core(q)) continue;
      for (Index j : neighbours[static_cast<std::size_t>(q)]) {
        if (lab[static_cast<std::size_t>(j)] != kNoise) continue;
        lab[static_cast<std::size_t>(j)] = id;
        frontier.push_back(j);
      }
    }
  }
  return out;
}

inline ClusterAssignment dbscan(const FeatureMatrix& features, const DbscanOptions& opt) {
  return dbscan(features.data(), opt);
}

inline ClusterAssignment dbscan(const FeatureMatrix& features, const PipelineConfig& cfg) {
  return dbscan(features.data(), DbscanOptions{cfg.dbscan_eps, cfg.dbscan_min_samples, cfg.dbscan_metric, cfg.kappa});
}

/// Prototype j is the L2-normalized mean of the members of cluster j.
inline MemoryBank centroids(const Matrix& features, const ClusterAssignment& assign, double tau = 0.05,
                            double mu = 0.1) {
  require(assign.k >= 1, ErrorKind::EmptyCluster, "assignment has no clusters");
  require_shape(static_cast<Index>(assign.labels.size()) == features.rows(), "labels do not match feature rows");
  Matrix sums = Matrix::Zero(assign.k, features.cols());
  std::vector<Index> counts(static_cast<std::size_t>(assign.k), 0);
  for (Index i = 0; i < features.rows(); ++i) {
    const int l = assign.labels.labels[static_cast<std::size_t>(i)];
    if (l == kNoise) continue;
    require(l >= 0 && l < assign.k, ErrorKind::LabelOutOfRange, "cluster id " + std::to_string(l));
    sums.row(l) += features.row(i);
    ++counts[static_cast<std::size_t>(l)];
  }
  MemoryBank bank;
  bank.tau = tau;
  bank.mu = mu;
  bank.prototypes = Matrix(assign.k, features.cols());
  for (int j = 0; j < assign.k; ++j) {
    if (counts[static_cast<std::size_t>(j)] == 0) throw Error(ErrorKind::EmptyCluster, "cluster " + std::to_string(j));
    RowVector mean = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
    const double norm = mean.norm();
    if (norm < 1e-12) throw Error(ErrorKind::ZeroRow, "centroid of cluster " + std::to_string(j) + " is zero");
    bank.prototypes.row(j) = mean / norm;
  }
  return bank;
}

inline MemoryBank centroids(const FeatureMatrix& features, const ClusterAssignment& assign, double tau = 0.05,
                            double mu = 0.1) {
  return centroids(features.data(), assign, tau, mu);
}

/// Temperature softmax of f against every prototype, max-subtracted.
inline RowVector memory_probability(const Eigen::Ref<const RowVector>& f, const Matrix& prototypes, double tau) {
  require(tau > 0, ErrorKind::InvalidArgument, "tau must be > 0");
  require_shape(f.size() == prototypes.cols(), "feature/prototype dimension mismatch");
  RowVector logits = (prototypes * f.transpose()).transpose() / tau;
  const double mx = logits.maxCoeff();
  RowVector p = (logits.array() - mx).exp().matrix();
  return p / p.sum();
}

inline RowVector memory_probability(const Eigen::Ref<const RowVector>& f, const MemoryBank& bank, double tau) {
  return memory_probability(f, bank.prototypes, tau);
}

// memory_probability for every row of features.
inline Matrix memory_probabilities(const Matrix& features, const Matrix& prototypes, double tau) {
  Matrix out(features.rows(), prototypes.rows());
  for (Index i = 0; i < features.rows(); ++i) out.row(i) = memory_probability(features.row(i), prototypes, tau);
  return out;
}

}  // namespace xmod
