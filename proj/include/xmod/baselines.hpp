#pragma once

// Reference associators: OT assignment without transfer, and greedy
// centroid matching.

#include "xmod/clustering.hpp"
#include "xmod/core.hpp"
#include "xmod/mult.hpp"
#include "xmod/transport.hpp"

#include <algorithm>
#include <tuple>
#include <vector>

namespace xmod {

namespace detail {

inline InstanceLabels one_hot_members(const ClusterAssignment& assign) {
  InstanceLabels out;
  out.total = static_cast<Index>(assign.labels.size());
  out.rows = assign.members();
  std::vector<int> labels;
  labels.reserve(out.rows.size());
  for (Index i : out.rows) labels.push_back(assign.labels.labels[static_cast<std::size_t>(i)]);
  out.probs = SoftLabelMatrix::one_hot(labels, assign.k);
  return out;
}

inline Matrix select_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
  return out;
}

}  // namespace detail

/// Intra labels are the hard cluster labels; cross labels are the balanced
/// OT assignment used to initialize MULT.
inline DirectionalLabels otla_direction(const Matrix& f_src, const Matrix& f_tgt, const ClusterAssignment& a_src,
                                        const ClusterAssignment& a_tgt, const PipelineConfig& cfg, Direction dir) {
  require_shape(f_src.cols() == f_tgt.cols(), "feature dimensions differ");
  require(a_src.k >= 1 && a_tgt.k >= 1, ErrorKind::EmptyCluster, "both modalities need at least one cluster");
  const MemoryBank bank = centroids(f_src, a_src, cfg.tau, cfg.mu);
  DirectionalLabels out;
  out.direction = dir;
  out.intra = detail::one_hot_members(a_src);
  out.cross.rows = a_tgt.members();
  out.cross.total = f_tgt.rows();
  out.cross.probs = otla_init(detail::select_rows(f_tgt, out.cross.rows), bank, cfg.lambda);
  return out;
}

inline Association associate_otla_only(const FeatureMatrix& fv, const FeatureMatrix& fr,
                                       const ClusterAssignment& assign_v, const ClusterAssignment& assign_r,
                                       const PipelineConfig& cfg) {
  Association a;
  a.v2r = otla_direction(fv.data(), fr.data(), assign_v, assign_r, cfg, Direction::V2R);
  a.r2v = otla_direction(fr.data(), fv.data(), assign_r, assign_v, cfg, Direction::R2V);
  return a;
}

/// For each target cluster, the matched source cluster. Pairs are taken in
/// ascending centroid distance (ties by target then source id) without
/// replacement; leftover target clusters take their nearest source cluster.
inline std::vector<int> greedy_cluster_match(const Matrix& source_centroids, const Matrix& target_centroids) {
  const Matrix d = squared_distances(target_centroids, source_centroids);
  const Index kt = d.rows();
  const Index ks = d.cols();
  std::vector<std::tuple<double, Index, Index>> pairs;
  pairs.reserve(static_cast<std::size_t>(kt * ks));
  for (Index t = 0; t < kt; ++t)
    for (Index s = 0; s < ks; ++s) pairs.emplace_back(d(t, s), t, s);
  std::sort(pairs.begin(), pairs.end());

  std::vector<int> match(static_cast<std::size_t>(kt), -1);
  std::vector<bool> used(static_cast<std::size_t>(ks), false);
  Index matched = 0;
  for (const auto& [dist, t, s] : pairs) {
    if (matched == std::min(kt, ks)) break;
    if (match[static_cast<std::size_t>(t)] >= 0 || used[static_cast<std::size_t>(s)]) continue;
    match[static_cast<std::size_t>(t)] = static_cast<int>(s);
    used[static_cast<std::size_t>(s)] = true;
    ++matched;
  }
  for (Index t = 0; t < kt; ++t)
    if (match[static_cast<std::size_t>(t)] < 0) match[static_cast<std::size_t>(t)] = argmax_row(-d.row(t));
  return match;
}

inline DirectionalLabels greedy_direction(const Matrix& f_src, const Matrix& f_tgt, const ClusterAssignment& a_src,
                                          const ClusterAssignment& a_tgt, const PipelineConfig& cfg, Direction dir) {
  require_shape(f_src.cols() == f_tgt.cols(), "feature dimensions differ");
  require(a_src.k >= 1 && a_tgt.k >= 1, ErrorKind::EmptyCluster, "both modalities need at least one cluster");
  const MemoryBank src_bank = centroids(f_src, a_src, cfg.tau, cfg.mu);
  const MemoryBank tgt_bank = centroids(f_tgt, a_tgt, cfg.tau, cfg.mu);
  const std::vector<int> match = greedy_cluster_match(src_bank.prototypes, tgt_bank.prototypes);

  DirectionalLabels out;
  out.direction = dir;
  out.intra = detail::one_hot_members(a_src);
  out.cross.rows = a_tgt.members();
  out.cross.total = f_tgt.rows();
  std::vector<int> labels;
  labels.reserve(out.cross.rows.size());
  for (Index i : out.cross.rows)
    labels.push_back(match[static_cast<std::size_t>(a_tgt.labels.labels[static_cast<std::size_t>(i)])]);
  out.cross.probs = SoftLabelMatrix::one_hot(labels, a_src.k);
  return out;
}

inline Association associate_greedy_centroid(const FeatureMatrix& fv, const FeatureMatrix& fr,
                                             const ClusterAssignment& assign_v, const ClusterAssignment& assign_r,
                                             const PipelineConfig& cfg) {
  Association a;
  a.v2r = greedy_direction(fv.data(), fr.data(), assign_v, assign_r, cfg, Direction::V2R);
  a.r2v = greedy_direction(fr.data(), fv.data(), assign_r, assign_v, cfg, Direction::R2V);
  return a;
}

}  // namespace xmod
