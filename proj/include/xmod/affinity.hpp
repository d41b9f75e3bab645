#pragma once

#include "xmod/core.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace xmod {

enum class AffinityKind { HomogeneousV, HomogeneousR, HeteroVR, HeteroRV };

inline bool is_homogeneous(AffinityKind k) {
  return k == AffinityKind::HomogeneousV || k == AffinityKind::HomogeneousR;
}

/// Nonnegative instance-to-instance affinity; row-stochastic once finalized.
struct AffinityMatrix {
  Matrix values;
  AffinityKind kind = AffinityKind::HomogeneousV;

  Index rows() const noexcept { return values.rows(); }
  Index cols() const noexcept { return values.cols(); }
};

using NeighbourSets = std::vector<std::vector<Index>>;

/// Mutual kappa-nearest-neighbour sets. kNN(i) always contains i; the
/// remaining kappa-1 slots are ranked by (distance, index). Sets are sorted.
inline NeighbourSets k_reciprocal_sets(const Matrix& points, int kappa) {
  const Index n = points.rows();
  require(kappa >= 1 && kappa <= n, ErrorKind::InvalidArgument,
          "kappa must be in [1, N], got " + std::to_string(kappa) + " for N=" + std::to_string(n));
  const Matrix d = squared_distances(points, points);

  // knn[i] sorted ascending by index for membership tests.
  NeighbourSets knn(static_cast<std::size_t>(n));
  parallel_for(n, [&](Index i) {
    std::vector<Index> order;
    order.reserve(static_cast<std::size_t>(n - 1));
    for (Index j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    const auto take = static_cast<std::size_t>(kappa - 1);
    auto closer = [&](Index a, Index b) { return d(i, a) < d(i, b) || (d(i, a) == d(i, b) && a < b); };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), closer);
    auto& nb = knn[static_cast<std::size_t>(i)];
    nb.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    nb.push_back(i);
    std::sort(nb.begin(), nb.end());
  });

  NeighbourSets out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j : knn[static_cast<std::size_t>(i)]) {
      const auto& back = knn[static_cast<std::size_t>(j)];
      if (std::binary_search(back.begin(), back.end(), i)) out[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  return out;
}

inline NeighbourSets k_reciprocal_sets(const FeatureMatrix& features, int kappa) {
  return k_reciprocal_sets(features.data(), kappa);
}

// |A ∩ B| for sorted index vectors.
inline std::size_t intersection_size(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::size_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

/// Jaccard similarity |R(i) ∩ R(j)| / |R(i) ∪ R(j)| over sorted sets.
inline Matrix jaccard_similarity(const NeighbourSets& sets) {
  const auto n = static_cast<Index>(sets.size());
  for (const auto& s : sets) require(!s.empty(), ErrorKind::InvalidArgument, "neighbour set is empty");
  Matrix s(n, n);
  parallel_for(n, [&](Index i) {
    const auto& a = sets[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) {
      const auto& b = sets[static_cast<std::size_t>(j)];
      const std::size_t inter = intersection_size(a, b);
      s(i, j) = static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
    }
  });
  return s;
}

inline AffinityMatrix jaccard_affinity(const NeighbourSets& sets, AffinityKind kind = AffinityKind::HomogeneousV) {
  return AffinityMatrix{jaccard_similarity(sets), kind};
}

/// Row normalization. A zero row becomes the self one-hot for homogeneous
/// kinds and the uniform row for heterogeneous kinds.
inline AffinityMatrix row_normalize(const AffinityMatrix& a) {
  AffinityMatrix out = a;
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j)
      require(out.values(i, j) >= 0 && std::isfinite(out.values(i, j)), ErrorKind::InvalidArgument,
              "affinity entries must be finite and nonnegative");
    const double s = out.values.row(i).sum();
    if (s > 0) {
      out.values.row(i) /= s;
    } else if (is_homogeneous(a.kind)) {
      require_shape(i < out.cols(), "homogeneous affinity must be square");
      out.values.row(i).setZero();
      out.values(i, i) = 1.0;
    } else {
      out.values.row(i).setConstant(1.0 / static_cast<double>(out.cols()));
    }
  }
  return out;
}

/// Finalized homogeneous affinity of one modality.
inline AffinityMatrix homogeneous_affinity(const Matrix& points, int kappa, AffinityKind kind) {
  const int k = static_cast<int>(std::min<Index>(kappa, points.rows()));
  return row_normalize(jaccard_affinity(k_reciprocal_sets(points, k), kind));
}

}  // namespace xmod
