#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace xmod {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

enum class Modality { Visible, Infrared };

inline const char* to_string(Modality m) { return m == Modality::Visible ? "visible" : "infrared"; }

inline Modality other(Modality m) {
  return m == Modality::Visible ? Modality::Infrared : Modality::Visible;
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind {
  ZeroRow,
  NonFinite,
  EmptyCluster,
  ShapeMismatch,
  NotConverged,
  ModeMismatch,
  LabelOutOfRange,
  InfeasibleSeparation,
  MissingSnapshot,
  InvalidArgument,
  Io,
  Parse,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::ZeroRow: return "ZeroRow";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::EmptyCluster: return "EmptyCluster";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::ModeMismatch: return "ModeMismatch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::InfeasibleSeparation: return "InfeasibleSeparation";
    case ErrorKind::MissingSnapshot: return "MissingSnapshot";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Parse: return "Parse";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

inline void require_shape(bool cond, const std::string& what) {
  require(cond, ErrorKind::ShapeMismatch, what);
}

// ---------------------------------------------------------------------------
// Threading
// ---------------------------------------------------------------------------

// Worker count: hardware concurrency capped by XMOD_THREADS when set.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("XMOD_THREADS")) {
    char* end = nullptr;
    long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

// Runs fn(i) for i in [0, n) over contiguous row blocks. fn must only write
// state owned by index i so results do not depend on scheduling.
template <typename Fn>
void parallel_for(Index n, Fn&& fn, Index min_block = 64) {
  const unsigned workers = worker_count();
  if (workers <= 1 || n < 2 * min_block) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  const Index blocks = std::min<Index>(workers, (n + min_block - 1) / min_block);
  const Index step = (n + blocks - 1) / blocks;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(blocks));
  for (Index b = 0; b < blocks; ++b) {
    const Index lo = b * step;
    const Index hi = std::min(n, lo + step);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (Index i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

// splitmix64 stream. Gaussian draws use the Box-Muller transform so that
// generated fixtures are identical across standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// N x d matrix of unit-norm instance features for one modality.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  const Matrix& data() const noexcept { return data_; }
  Modality modality() const noexcept { return modality_; }
  Index rows() const noexcept { return data_.rows(); }
  Index dim() const noexcept { return data_.cols(); }
  auto row(Index i) const { return data_.row(i); }

  FeatureMatrix with_modality(Modality m) const {
    FeatureMatrix out = *this;
    out.modality_ = m;
    return out;
  }

  // Subset of rows in the given order.
  FeatureMatrix select(const std::vector<Index>& idx) const {
    FeatureMatrix out;
    out.modality_ = modality_;
    out.data_.resize(static_cast<Index>(idx.size()), data_.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.data_.row(static_cast<Index>(k)) = data_.row(idx[k]);
    return out;
  }

 private:
  friend FeatureMatrix l2_normalize_rows(const Matrix&, Modality);
  Matrix data_;
  Modality modality_ = Modality::Visible;
};

/// Divides each row by its Euclidean norm.
inline FeatureMatrix l2_normalize_rows(const Matrix& m, Modality modality = Modality::Visible) {
  require(m.rows() >= 1 && m.cols() >= 1, ErrorKind::ShapeMismatch, "feature matrix must be at least 1x1");
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j)))
        throw Error(ErrorKind::NonFinite, "entry (" + std::to_string(i) + "," + std::to_string(j) + ")");
  FeatureMatrix out;
  out.modality_ = modality;
  out.data_ = m;
  for (Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (norm < 1e-12) throw Error(ErrorKind::ZeroRow, "row " + std::to_string(i));
    out.data_.row(i) /= norm;
  }
  return out;
}

inline constexpr int kNoise = -1;

/// Hard label per instance; kNoise marks instances outside every cluster.
struct HardLabelVector {
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  int operator[](std::size_t i) const { return labels[i]; }
};

/// N x K row-stochastic pseudo-label matrix.
class SoftLabelMatrix {
 public:
  SoftLabelMatrix() = default;

  // Validates row-stochasticity within tol.
  explicit SoftLabelMatrix(Matrix probs, double tol = 1e-6) : probs_(std::move(probs)) {
    for (Index i = 0; i < probs_.rows(); ++i) {
      double s = 0.0;
      for (Index j = 0; j < probs_.cols(); ++j) {
        const double p = probs_(i, j);
        require(std::isfinite(p), ErrorKind::NonFinite, "soft label row " + std::to_string(i));
        require(p >= -tol && p <= 1.0 + tol, ErrorKind::InvalidArgument,
                "soft label entry out of [0,1] in row " + std::to_string(i));
        s += p;
      }
      require(std::abs(s - 1.0) <= tol, ErrorKind::InvalidArgument,
              "soft label row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }

  const Matrix& probs() const noexcept { return probs_; }
  Index rows() const noexcept { return probs_.rows(); }
  Index space_size() const noexcept { return probs_.cols(); }

  // Max |row sum - 1| over all rows.
  double max_row_sum_error() const {
    double e = 0.0;
    for (Index i = 0; i < probs_.rows(); ++i) e = std::max(e, std::abs(probs_.row(i).sum() - 1.0));
    return e;
  }

  static SoftLabelMatrix one_hot(const std::vector<int>& labels, Index k) {
    Matrix m = Matrix::Zero(static_cast<Index>(labels.size()), k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      require(labels[i] >= 0 && labels[i] < k, ErrorKind::LabelOutOfRange,
              "label " + std::to_string(labels[i]) + " for K=" + std::to_string(k));
      m(static_cast<Index>(i), labels[i]) = 1.0;
    }
    return SoftLabelMatrix(std::move(m));
  }

 private:
  Matrix probs_;
};

/// Row argmax; ties go to the lowest index.
inline int argmax_row(const Eigen::Ref<const RowVector>& row) {
  int best = 0;
  for (Index j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = static_cast<int>(j);
  return best;
}

inline HardLabelVector hard_from_soft(const SoftLabelMatrix& y) {
  HardLabelVector out;
  out.labels.resize(static_cast<std::size_t>(y.rows()));
  for (Index i = 0; i < y.rows(); ++i) out.labels[static_cast<std::size_t>(i)] = argmax_row(y.probs().row(i));
  return out;
}

/// Soft labels for the non-noise subset of a modality. rows[k] is the
/// original instance index of probs row k.
struct InstanceLabels {
  SoftLabelMatrix probs;
  std::vector<Index> rows;
  Index total = 0;

  // Hard labels over all `total` instances; excluded instances are kNoise.
  HardLabelVector hard() const {
    HardLabelVector h;
    h.labels.assign(static_cast<std::size_t>(total), kNoise);
    const auto sub = hard_from_soft(probs);
    for (std::size_t k = 0; k < rows.size(); ++k) h.labels[static_cast<std::size_t>(rows[k])] = sub.labels[k];
    return h;
  }
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class DistanceMetric { Euclidean, JaccardDistance };

struct PipelineConfig {
  double tau = 0.05;
  double mu = 0.1;
  int kappa = 30;
  double lambda = 25.0;
  double alpha = 0.2;
  double beta = 0.7;
  double dbscan_eps = 0.6;
  int dbscan_min_samples = 4;
  DistanceMetric dbscan_metric = DistanceMetric::Euclidean;
  double epsilon0 = 1e-2;
  int max_transfer_iters = 100;
  double sharpen_divisor = 5.0;
  int batch_size = 144;
  std::uint64_t seed = 0;

  void validate() const {
    require(tau > 0, ErrorKind::InvalidArgument, "tau must be > 0");
    require(alpha >= 0 && alpha <= 1, ErrorKind::InvalidArgument, "alpha must be in [0,1]");
    require(beta >= 0 && beta <= 1, ErrorKind::InvalidArgument, "beta must be in [0,1]");
    require(lambda > 0, ErrorKind::InvalidArgument, "lambda must be > 0");
    require(kappa >= 1, ErrorKind::InvalidArgument, "kappa must be >= 1");
    require(epsilon0 > 0, ErrorKind::InvalidArgument, "epsilon0 must be > 0");
    require(dbscan_eps > 0, ErrorKind::InvalidArgument, "dbscan_eps must be > 0");
    require(dbscan_min_samples >= 1, ErrorKind::InvalidArgument, "dbscan_min_samples must be >= 1");
    require(max_transfer_iters >= 1, ErrorKind::InvalidArgument, "max_transfer_iters must be >= 1");
    require(sharpen_divisor >= 1, ErrorKind::InvalidArgument, "sharpen_divisor must be >= 1");
    require(batch_size >= 1, ErrorKind::InvalidArgument, "batch_size must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Small numeric helpers shared by several modules
// ---------------------------------------------------------------------------

// Squared Euclidean distances between the rows of a and b.
inline Matrix squared_distances(const Matrix& a, const Matrix& b) {
  require_shape(a.cols() == b.cols(), "dimension mismatch: " + std::to_string(a.cols()) + " vs " +
                                          std::to_string(b.cols()));
  Matrix d(a.rows(), b.rows());
  parallel_for(a.rows(), [&](Index i) {
    for (Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  });
  return d;
}

// Divides each row by its sum; rows summing to zero are left untouched.
inline void normalize_rows_inplace(Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    const double s = m.row(i).sum();
    if (s > 0) m.row(i) /= s;
  }
}

}  // namespace xmod
