#pragma once

// Modality-unified label transfer.
//
// One direction couples the source modality's intra-modality labels (intra,
// N_src x K) with the target modality's cross-modality labels (cross,
// N_tgt x K), both expressed in the source modality's cluster space. V2R uses
// visible as source; R2V is the same computation with the roles swapped.

#include "xmod/affinity.hpp"
#include "xmod/clustering.hpp"
#include "xmod/core.hpp"
#include "xmod/transport.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace xmod {

enum class Direction { V2R, R2V };

inline const char* to_string(Direction d) { return d == Direction::V2R ? "v2r" : "r2v"; }

inline Modality source_modality(Direction d) { return d == Direction::V2R ? Modality::Visible : Modality::Infrared; }

// How one transfer step combines the smoothing and the mixing terms.
//   Splitting: y(t+1) = 1/2 S_ho y(t) + 1/2 [(1-a) S_he y'(t) + a y(0)]
//   Composed:  b = (1-a) S_he y'(t) + a y(0);  y(t+1) = 1/2 (S_ho b + b)
// Splitting is a fixed-point iteration for the stationarity condition of the
// weighted inconsistency objective. Composed applies the two assignments in
// sequence; its fixed point is generally not stationary.
enum class TransferRule { Splitting, Composed };

struct TransferConfig {
  double alpha = 0.2;
  double beta = 0.7;
  double epsilon0 = 1e-2;
  int max_iters = 100;
  Direction direction = Direction::V2R;
  TransferRule rule = TransferRule::Splitting;
  bool gauss_seidel = false;  // cross update consumes intra(t+1) instead of intra(t)

  static TransferConfig from(const PipelineConfig& cfg, Direction dir) {
    TransferConfig t;
    t.alpha = cfg.alpha;
    t.beta = cfg.beta;
    t.epsilon0 = cfg.epsilon0;
    t.max_iters = cfg.max_transfer_iters;
    t.direction = dir;
    return t;
  }

  void validate() const {
    require(alpha >= 0 && alpha <= 1, ErrorKind::InvalidArgument, "alpha must be in [0,1]");
    require(beta >= 0 && beta <= 1, ErrorKind::InvalidArgument, "beta must be in [0,1]");
    require(epsilon0 > 0, ErrorKind::InvalidArgument, "epsilon0 must be > 0");
    require(max_iters >= 1, ErrorKind::InvalidArgument, "max_iters must be >= 1");
  }
};

struct TransferState {
  Matrix intra;   // source instances, N_src x K
  Matrix cross;   // target instances, N_tgt x K
  Matrix intra0;
  Matrix cross0;
  int t = 0;
  double epsilon = 1e6;
  bool cap_hit = false;

  Index k() const noexcept { return intra.cols(); }
};

/// The four finalized affinities a transfer direction consumes.
struct TransferAffinities {
  AffinityMatrix ho_src;  // N_src x N_src
  AffinityMatrix ho_tgt;  // N_tgt x N_tgt
  AffinityMatrix he_st;   // N_src x N_tgt
  AffinityMatrix he_ts;   // N_tgt x N_src
  Matrix plan;            // raw OT plan behind he_st / he_ts (may be empty)
};

struct InconsistencyReport {
  int t = 0;
  double homogeneous_src = 0;
  double homogeneous_tgt = 0;
  double heterogeneous_src = 0;
  double heterogeneous_tgt = 0;
  double self_src = 0;
  double self_tgt = 0;
  double weighted_total = 0;
};

namespace detail {

// sum_ij S_ij ||a_i - b_j||^2 without materializing the pair distances.
inline double affinity_weighted_distance(const Matrix& s, const Matrix& a, const Matrix& b) {
  require_shape(s.rows() == a.rows() && s.cols() == b.rows() && a.cols() == b.cols(),
                "affinity/label shapes are incompatible");
  const Vector a_sq = a.rowwise().squaredNorm();
  const Vector b_sq = b.rowwise().squaredNorm();
  const Vector row_sum = s.rowwise().sum();
  const Vector col_sum = s.colwise().sum().transpose();
  const double cross_term = (a.transpose() * s * b).trace();
  const double v = row_sum.dot(a_sq) + col_sum.dot(b_sq) - 2.0 * cross_term;
  return std::max(0.0, v);
}

// Zeroes entries below 1e-12 and renormalizes rows.
inline void clamp_and_renormalize(Matrix& y) {
  for (Index i = 0; i < y.rows(); ++i) {
    for (Index j = 0; j < y.cols(); ++j)
      if (y(i, j) < 1e-12) y(i, j) = 0.0;
    const double s = y.row(i).sum();
    if (s > 0) y.row(i) /= s;
  }
}

inline void check_affinity_shapes(const TransferState& st, const TransferAffinities& a) {
  const Index ns = st.intra.rows();
  const Index nt = st.cross.rows();
  require_shape(st.intra.cols() == st.cross.cols(), "intra and cross label spaces differ");
  require_shape(a.ho_src.rows() == ns && a.ho_src.cols() == ns, "source homogeneous affinity shape");
  require_shape(a.ho_tgt.rows() == nt && a.ho_tgt.cols() == nt, "target homogeneous affinity shape");
  require_shape(a.he_st.rows() == ns && a.he_st.cols() == nt, "source->target heterogeneous affinity shape");
  require_shape(a.he_ts.rows() == nt && a.he_ts.cols() == ns, "target->source heterogeneous affinity shape");
  require_shape(st.intra0.rows() == ns && st.cross0.rows() == nt && st.intra0.cols() == st.k() &&
                    st.cross0.cols() == st.k(),
                "initial label shapes");
}

inline Matrix update_one(const Matrix& y, const Matrix& y0, const Matrix& ho, const Matrix& he,
                         const Matrix& other, double alpha, TransferRule rule) {
  const Matrix mixed = (1.0 - alpha) * (he * other) + alpha * y0;
  Matrix next = rule == TransferRule::Splitting ? Matrix(0.5 * (ho * y) + 0.5 * mixed)
                                                : Matrix(0.5 * (ho * mixed + mixed));
  clamp_and_renormalize(next);
  return next;
}

}  // namespace detail

/// intra0 = memory softmax of source features; cross0 = balanced OT
/// assignment of target features to the source prototypes.
inline TransferState init_labels(const Matrix& features_src, const Matrix& features_tgt, const MemoryBank& bank_src,
                                 const PipelineConfig& cfg) {
  require(bank_src.size() >= 1, ErrorKind::EmptyCluster, "source bank has no prototypes");
  require_shape(features_src.cols() == bank_src.prototypes.cols() && features_tgt.cols() == bank_src.prototypes.cols(),
                "feature dimension does not match prototypes");
  TransferState st;
  st.intra0 = memory_probabilities(features_src, bank_src.prototypes, cfg.tau);
  st.cross0 = otla_init(features_tgt, bank_src, cfg.lambda).probs();
  st.intra = st.intra0;
  st.cross = st.cross0;
  return st;
}

inline TransferAffinities build_affinities(const Matrix& features_src, const Matrix& features_tgt,
                                           const PipelineConfig& cfg, Direction dir) {
  const bool v2r = dir == Direction::V2R;
  TransferAffinities a;
  a.ho_src = homogeneous_affinity(features_src, cfg.kappa,
                                  v2r ? AffinityKind::HomogeneousV : AffinityKind::HomogeneousR);
  a.ho_tgt = homogeneous_affinity(features_tgt, cfg.kappa,
                                  v2r ? AffinityKind::HomogeneousR : AffinityKind::HomogeneousV);
  auto he = heterogeneous_affinity(features_src, features_tgt, cfg.lambda,
                                   v2r ? AffinityKind::HeteroVR : AffinityKind::HeteroRV,
                                   v2r ? AffinityKind::HeteroRV : AffinityKind::HeteroVR);
  a.he_st = std::move(he.st);
  a.he_ts = std::move(he.ts);
  a.plan = std::move(he.plan);
  return a;
}

/// Homogeneous, heterogeneous and self inconsistency of the current labels
/// and their alpha-weighted total summed over both modalities.
inline InconsistencyReport inconsistency(const TransferState& st, const TransferAffinities& a, double alpha) {
  detail::check_affinity_shapes(st, a);
  InconsistencyReport r;
  r.t = st.t;
  r.homogeneous_src = detail::affinity_weighted_distance(a.ho_src.values, st.intra, st.intra);
  r.homogeneous_tgt = detail::affinity_weighted_distance(a.ho_tgt.values, st.cross, st.cross);
  r.heterogeneous_src = detail::affinity_weighted_distance(a.he_st.values, st.intra, st.cross);
  r.heterogeneous_tgt = detail::affinity_weighted_distance(a.he_ts.values, st.cross, st.intra);
  r.self_src = (st.intra - st.intra0).squaredNorm();
  r.self_tgt = (st.cross - st.cross0).squaredNorm();
  r.weighted_total = r.homogeneous_src + alpha * r.self_src + (1 - alpha) * r.heterogeneous_src +
                     r.homogeneous_tgt + alpha * r.self_tgt + (1 - alpha) * r.heterogeneous_tgt;
  return r;
}

/// One alternating update of both label matrices. Both updates read the
/// labels of iteration t unless gauss_seidel is set.
inline TransferState transfer_step(const TransferState& st, const TransferAffinities& a, const TransferConfig& cfg) {
  detail::check_affinity_shapes(st, a);
  TransferState next = st;
  next.intra = detail::update_one(st.intra, st.intra0, a.ho_src.values, a.he_st.values, st.cross, cfg.alpha, cfg.rule);
  const Matrix& intra_for_cross = cfg.gauss_seidel ? next.intra : st.intra;
  next.cross =
      detail::update_one(st.cross, st.cross0, a.ho_tgt.values, a.he_ts.values, intra_for_cross, cfg.alpha, cfg.rule);
  next.epsilon = std::max((next.intra - st.intra).cwiseAbs().sum(), (next.cross - st.cross).cwiseAbs().sum());
  next.t = st.t + 1;
  return next;
}

using TransferObserver = std::function<void(const TransferState&)>;

/// Iterates transfer_step until epsilon <= epsilon0 or the iteration cap.
inline TransferState run_transfer(TransferState st, const TransferAffinities& a, const TransferConfig& cfg,
                                  const TransferObserver& observe = {}) {
  cfg.validate();
  if (observe) observe(st);
  while (st.epsilon > cfg.epsilon0 && st.t < cfg.max_iters) {
    st = transfer_step(st, a, cfg);
    if (observe) observe(st);
  }
  st.cap_hit = st.epsilon > cfg.epsilon0;
  return st;
}

/// Residual of the stationarity condition of the weighted objective for
/// both label matrices: 2a(y - y0) + 2(1-a)(y - S_he y') + 2(y - S_ho y).
inline std::pair<Matrix, Matrix> stationarity_residual(const TransferState& st, const TransferAffinities& a,
                                                       double alpha) {
  auto res = [alpha](const Matrix& y, const Matrix& y0, const Matrix& ho, const Matrix& he, const Matrix& other) {
    return Matrix(2 * alpha * (y - y0) + 2 * (1 - alpha) * (y - he * other) + 2 * (y - ho * y));
  };
  return {res(st.intra, st.intra0, a.ho_src.values, a.he_st.values, st.cross),
          res(st.cross, st.cross0, a.ho_tgt.values, a.he_ts.values, st.intra)};
}

/// beta * one-hot(argmax) + (1 - beta) * row-renormalized labels.
inline SoftLabelMatrix fuse(const Matrix& transferred, double beta) {
  Matrix soft = transferred;
  normalize_rows_inplace(soft);
  Matrix out = (1.0 - beta) * soft;
  for (Index i = 0; i < out.rows(); ++i) out(i, argmax_row(soft.row(i))) += beta;
  return SoftLabelMatrix(std::move(out));
}

inline std::pair<SoftLabelMatrix, SoftLabelMatrix> fuse_labels(const TransferState& st, double beta) {
  return {fuse(st.intra, beta), fuse(st.cross, beta)};
}

/// Output of one direction: labels of the source modality's instances in
/// their own space (intra) and of the target's instances in the source
/// space (cross).
struct DirectionalLabels {
  Direction direction = Direction::V2R;
  InstanceLabels intra;
  InstanceLabels cross;
  int iterations = 0;
  bool cap_hit = false;
  std::vector<InconsistencyReport> trace;
};

struct Association {
  std::optional<DirectionalLabels> v2r;
  std::optional<DirectionalLabels> r2v;
};

struct MultOptions {
  bool trace = false;
  TransferRule rule = TransferRule::Splitting;
  bool gauss_seidel = false;
};

/// Full transfer for a source/target pair restricted to non-noise
/// instances: prototypes, affinities, initialization, transfer and fusion.
inline DirectionalLabels transfer_associate(const Matrix& f_src, const Matrix& f_tgt, const ClusterAssignment& a_src,
                                            const ClusterAssignment& a_tgt, const PipelineConfig& cfg, Direction dir,
                                            const MultOptions& opt = {}) {
  cfg.validate();
  require_shape(f_src.cols() == f_tgt.cols(), "feature dimensions differ: " + std::to_string(f_src.cols()) + " vs " +
                                                  std::to_string(f_tgt.cols()));
  require(a_src.k >= 1 && a_tgt.k >= 1, ErrorKind::EmptyCluster, "both modalities need at least one cluster");
  const std::vector<Index> src_rows = a_src.members();
  const std::vector<Index> tgt_rows = a_tgt.members();

  Matrix src(static_cast<Index>(src_rows.size()), f_src.cols());
  for (std::size_t k = 0; k < src_rows.size(); ++k) src.row(static_cast<Index>(k)) = f_src.row(src_rows[k]);
  Matrix tgt(static_cast<Index>(tgt_rows.size()), f_tgt.cols());
  for (std::size_t k = 0; k < tgt_rows.size(); ++k) tgt.row(static_cast<Index>(k)) = f_tgt.row(tgt_rows[k]);

  const MemoryBank bank = centroids(f_src, a_src, cfg.tau, cfg.mu);
  const TransferAffinities aff = build_affinities(src, tgt, cfg, dir);
  TransferConfig tcfg = TransferConfig::from(cfg, dir);
  tcfg.rule = opt.rule;
  tcfg.gauss_seidel = opt.gauss_seidel;

  DirectionalLabels out;
  out.direction = dir;
  TransferObserver observe;
  if (opt.trace) observe = [&](const TransferState& s) { out.trace.push_back(inconsistency(s, aff, cfg.alpha)); };
  const TransferState final_state = run_transfer(init_labels(src, tgt, bank, cfg), aff, tcfg, observe);
  auto [intra, cross] = fuse_labels(final_state, cfg.beta);
  out.intra = InstanceLabels{std::move(intra), src_rows, f_src.rows()};
  out.cross = InstanceLabels{std::move(cross), tgt_rows, f_tgt.rows()};
  out.iterations = final_state.t;
  out.cap_hit = final_state.cap_hit;
  return out;
}

/// One MULT direction over visible/infrared inputs.
inline DirectionalLabels mult_associate(const FeatureMatrix& fv, const FeatureMatrix& fr,
                                        const ClusterAssignment& assign_v, const ClusterAssignment& assign_r,
                                        const PipelineConfig& cfg, Direction dir, const MultOptions& opt = {}) {
  if (dir == Direction::V2R) return transfer_associate(fv.data(), fr.data(), assign_v, assign_r, cfg, dir, opt);
  return transfer_associate(fr.data(), fv.data(), assign_r, assign_v, cfg, dir, opt);
}

inline Association mult_associate_both(const FeatureMatrix& fv, const FeatureMatrix& fr,
                                       const ClusterAssignment& assign_v, const ClusterAssignment& assign_r,
                                       const PipelineConfig& cfg, const MultOptions& opt = {}) {
  Association a;
  a.v2r = mult_associate(fv, fr, assign_v, assign_r, cfg, Direction::V2R, opt);
  a.r2v = mult_associate(fv, fr, assign_v, assign_r, cfg, Direction::R2V, opt);
  return a;
}

}  // namespace xmod
