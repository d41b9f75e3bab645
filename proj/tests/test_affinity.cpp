#include "xmod/affinity.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace xmod;

namespace {

Matrix column(std::initializer_list<double> xs) {
  Matrix m(static_cast<Index>(xs.size()), 1);
  Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST(KReciprocal, MutualTwoNearest) {
  const auto r = k_reciprocal_sets(column({0, 0.1, 10, 10.1}), 2);
  const NeighbourSets expect{{0, 1}, {0, 1}, {2, 3}, {2, 3}};
  EXPECT_EQ(r, expect);
}

TEST(KReciprocal, KappaOneIsSelf) {
  const auto r = k_reciprocal_sets(column({0, 1, 2}), 1);
  EXPECT_EQ(r, (NeighbourSets{{0}, {1}, {2}}));
}

TEST(KReciprocal, FullNeighbourhood) {
  std::mt19937_64 rng(1);
  const Matrix pts = oracle::random_unit_rows(rng, 7, 3);
  for (const auto& s : k_reciprocal_sets(pts, 7)) EXPECT_EQ(s, (std::vector<Index>{0, 1, 2, 3, 4, 5, 6}));
}

TEST(KReciprocal, TiesBreakByLowerIndex) {
  // Points 0 and 2 are equidistant from 1.
  const auto r = k_reciprocal_sets(column({0, 1, 2}), 2);
  EXPECT_EQ(r[1], (std::vector<Index>{0, 1}));
}

TEST(KReciprocal, KappaOutOfRange) {
  EXPECT_THROW(k_reciprocal_sets(column({0, 1}), 3), Error);
  EXPECT_THROW(k_reciprocal_sets(column({0, 1}), 0), Error);
}

TEST(KReciprocal, MatchesBruteForce) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 5 + trial;
    const int kappa = 1 + trial % 6;
    const Matrix pts = oracle::random_unit_rows(rng, n, 4);
    // kNN by full sort of (distance, index).
    std::vector<std::vector<Index>> knn(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      std::vector<std::pair<double, Index>> order;
      for (Index j = 0; j < n; ++j)
        if (j != i) order.emplace_back((pts.row(i) - pts.row(j)).squaredNorm(), j);
      std::sort(order.begin(), order.end());
      knn[static_cast<std::size_t>(i)].push_back(i);
      for (int k = 0; k < kappa - 1; ++k) knn[static_cast<std::size_t>(i)].push_back(order[static_cast<std::size_t>(k)].second);
    }
    auto has = [&](Index a, Index b) {
      const auto& s = knn[static_cast<std::size_t>(a)];
      return std::find(s.begin(), s.end(), b) != s.end();
    };
    const auto got = k_reciprocal_sets(pts, kappa);
    for (Index i = 0; i < n; ++i) {
      std::vector<Index> expect;
      for (Index j = 0; j < n; ++j)
        if (has(i, j) && has(j, i)) expect.push_back(j);
      EXPECT_EQ(got[static_cast<std::size_t>(i)], expect);
    }
  }
}

TEST(Jaccard, Examples) {
  const NeighbourSets sets{{0, 1}, {0, 1}, {1, 2, 3}, {5}};
  const Matrix s = jaccard_similarity(sets);
  EXPECT_DOUBLE_EQ(s(0, 2), 0.25);
  EXPECT_DOUBLE_EQ(s(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(s(0, 3), 0.0);
  EXPECT_DOUBLE_EQ(s(3, 3), 1.0);
}

TEST(Jaccard, SymmetricUnitDiagonalInRange) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pick(0, 11);
  for (int trial = 0; trial < 50; ++trial) {
    NeighbourSets sets(10);
    for (auto& s : sets) {
      const int size = 1 + pick(rng) % 6;
      for (int k = 0; k < size; ++k) s.push_back(pick(rng));
      std::sort(s.begin(), s.end());
      s.erase(std::unique(s.begin(), s.end()), s.end());
    }
    const Matrix m = jaccard_similarity(sets);
    EXPECT_EQ(m, m.transpose());
    for (Index i = 0; i < m.rows(); ++i) EXPECT_EQ(m(i, i), 1.0);
    EXPECT_GE(m.minCoeff(), 0.0);
    EXPECT_LE(m.maxCoeff(), 1.0);
  }
}

TEST(Jaccard, EmptySetRejected) { EXPECT_THROW(jaccard_similarity({{0}, {}}), Error); }

TEST(RowNormalize, Examples) {
  Matrix m(2, 2);
  m << 2, 2, 1, 3;
  const auto r = row_normalize(AffinityMatrix{m, AffinityKind::HeteroVR});
  EXPECT_DOUBLE_EQ(r.values(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(r.values(1, 1), 0.75);
  const Matrix id = Matrix::Identity(3, 3);
  EXPECT_EQ(row_normalize(AffinityMatrix{id}).values, id);
}

TEST(RowNormalize, ZeroRowFallbacks) {
  Matrix m = Matrix::Constant(4, 4, 1.0);
  m.row(3).setZero();
  const auto ho = row_normalize(AffinityMatrix{m, AffinityKind::HomogeneousR});
  EXPECT_EQ(ho.values.row(3), RowVector::Unit(4, 3));
  const auto he = row_normalize(AffinityMatrix{m, AffinityKind::HeteroRV});
  EXPECT_EQ(he.values.row(3), RowVector::Constant(4, 0.25));
}

TEST(RowNormalize, RowSumsAndIdempotence) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 3);
  for (int trial = 0; trial < 30; ++trial) {
    Matrix m(6, 9);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    const auto once = row_normalize(AffinityMatrix{m, AffinityKind::HeteroVR});
    for (Index i = 0; i < m.rows(); ++i) EXPECT_NEAR(once.values.row(i).sum(), 1.0, 1e-9);
    const auto twice = row_normalize(once);
    EXPECT_LT((once.values - twice.values).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(HomogeneousAffinity, SeparatedGroupsHaveZeroCrossBlock) {
  const Matrix pts = column({0, 0.1, 0.2, 0.3, 50, 50.1, 50.2, 50.3});
  for (int kappa = 1; kappa <= 4; ++kappa) {
    const auto a = homogeneous_affinity(pts, kappa, AffinityKind::HomogeneousV);
    EXPECT_EQ(a.values.block(0, 4, 4, 4).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(a.values.block(4, 0, 4, 4).cwiseAbs().maxCoeff(), 0.0);
    for (Index i = 0; i < 8; ++i) EXPECT_NEAR(a.values.row(i).sum(), 1.0, 1e-12);
  }
}

TEST(HomogeneousAffinity, KappaClampedToInstanceCount) {
  const auto a = homogeneous_affinity(column({0, 1, 2}), 30, AffinityKind::HomogeneousV);
  EXPECT_LT((a.values - Matrix::Constant(3, 3, 1.0 / 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(HomogeneousAffinity, IndependentOfThreadCount) {
  std::mt19937_64 rng(5);
  const Matrix pts = oracle::random_unit_rows(rng, 300, 8);
  setenv("XMOD_THREADS", "1", 1);
  const Matrix one = homogeneous_affinity(pts, 10, AffinityKind::HomogeneousV).values;
  setenv("XMOD_THREADS", "4", 1);
  const Matrix four = homogeneous_affinity(pts, 10, AffinityKind::HomogeneousV).values;
  unsetenv("XMOD_THREADS");
  EXPECT_EQ(one, four);
}
