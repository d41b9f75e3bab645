#pragma once

#include "xmod/affinity.hpp"
#include "xmod/clustering.hpp"
#include "xmod/core.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace xmod {

/// Entropic OT problem: min <P, C> - (1/lambda) H(P) subject to the marginals.
struct TransportProblem {
  Matrix cost;
  Vector row_marginal;
  Vector col_marginal;
  double lambda = 25.0;
  int max_iters = 10000;
  double tol = 1e-9;

  static TransportProblem uniform(Matrix cost, double lambda) {
    TransportProblem p;
    const Index r = cost.rows();
    const Index c = cost.cols();
    p.cost = std::move(cost);
    p.row_marginal = Vector::Constant(r, 1.0 / static_cast<double>(r));
    p.col_marginal = Vector::Constant(c, 1.0 / static_cast<double>(c));
    p.lambda = lambda;
    return p;
  }

  void validate() const {
    require(cost.rows() >= 1 && cost.cols() >= 1, ErrorKind::ShapeMismatch, "cost matrix is empty");
    require_shape(row_marginal.size() == cost.rows() && col_marginal.size() == cost.cols(),
                  "marginal sizes do not match cost matrix");
    require(lambda > 0, ErrorKind::InvalidArgument, "lambda must be > 0");
    require(tol > 0 && max_iters >= 1, ErrorKind::InvalidArgument, "bad stopping criteria");
    for (Index i = 0; i < cost.rows(); ++i)
      for (Index j = 0; j < cost.cols(); ++j)
        require(std::isfinite(cost(i, j)) && cost(i, j) >= 0, ErrorKind::NonFinite,
                "cost entries must be finite and nonnegative");
    auto check_marginal = [](const Vector& m, const char* which) {
      require((m.array() >= 0).all(), ErrorKind::InvalidArgument, std::string(which) + " marginal is negative");
      require(std::abs(m.sum() - 1.0) <= 1e-9, ErrorKind::InvalidArgument,
              std::string(which) + " marginal does not sum to 1");
    };
    check_marginal(row_marginal, "row");
    check_marginal(col_marginal, "column");
  }
};

struct TransportPlan {
  Matrix plan;
  int iterations_used = 0;
  double marginal_error = 0.0;  // max of row/column L1 deviation
  bool converged = false;       // false when the cap was hit with error > 10 tol
};

namespace detail {

inline double log_or_neg_inf(double x) {
  return x > 0 ? std::log(x) : -std::numeric_limits<double>::infinity();
}

// log(sum_k exp(v_k)) with max subtraction; -inf when every term is -inf.
template <typename Expr>
double log_sum_exp(const Expr& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

inline Matrix plan_from_potentials(const Matrix& log_kernel, const Vector& f, const Vector& g) {
  Matrix p(log_kernel.rows(), log_kernel.cols());
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j) {
      const double e = f(i) + log_kernel(i, j) + g(j);
      p(i, j) = std::isfinite(e) ? std::exp(e) : 0.0;
    }
  return p;
}

}  // namespace detail

namespace detail {

// Row L1 deviation of the plan encoded by (f, g); the column marginals are
// exact right after a column update, so this is the stopping statistic.
inline double row_error(const Matrix& log_kernel, const Vector& f, const Vector& g, const Vector& a) {
  double err = 0.0;
  for (Index i = 0; i < f.size(); ++i) {
    const double mass = std::isfinite(f(i)) ? std::exp(f(i) + log_sum_exp(log_kernel.row(i).transpose() + g)) : 0.0;
    err += std::abs(mass - a(i));
  }
  return err;
}

inline void sinkhorn_sweep(const Matrix& log_kernel, const Vector& log_a, const Vector& log_b, Vector& f, Vector& g) {
  for (Index i = 0; i < f.size(); ++i)
    f(i) = std::isfinite(log_a(i)) ? log_a(i) - log_sum_exp(log_kernel.row(i).transpose() + g) : log_a(i);
  for (Index j = 0; j < g.size(); ++j)
    g(j) = std::isfinite(log_b(j)) ? log_b(j) - log_sum_exp(log_kernel.col(j) + f) : log_b(j);
}

// One damped, regularized Newton step on the concave dual
//   phi(f, g) = a.f + b.g - sum_ij exp(f_i + g_j + logK_ij)
// with g_last pinned (the dual is invariant under f + c, g - c). Needs
// strictly positive marginals. Returns false when no ascent was found.
inline bool newton_step(const Matrix& log_kernel, const Vector& a, const Vector& b, Vector& f, Vector& g) {
  const Index r = f.size();
  const Index c = g.size();
  const Matrix plan = plan_from_potentials(log_kernel, f, g);
  auto dual = [&](const Vector& ff, const Vector& gg) {
    return a.dot(ff) + b.dot(gg) - plan_from_potentials(log_kernel, ff, gg).sum();
  };
  const Index n = r + c - 1;
  Vector grad(n);
  grad.head(r) = a - plan.rowwise().sum();
  grad.tail(c - 1) = (b - plan.colwise().sum().transpose()).head(c - 1);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
  hess.topLeftCorner(r, r).diagonal() = plan.rowwise().sum();
  hess.bottomRightCorner(c - 1, c - 1).diagonal() = plan.colwise().sum().transpose().head(c - 1);
  hess.topRightCorner(r, c - 1) = plan.leftCols(c - 1);
  hess.bottomLeftCorner(c - 1, r) = plan.leftCols(c - 1).transpose();
  // Near-permutation plans make the Hessian numerically singular; a ridge
  // proportional to the gradient keeps steps bounded (Levenberg style).
  hess.diagonal().array() += grad.cwiseAbs().maxCoeff();
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
  if (ldlt.info() != Eigen::Success) return false;
  const Vector step = ldlt.solve(grad);
  if (!step.allFinite()) return false;
  const double base = dual(f, g);
  const double slope = grad.dot(step);
  for (double t = 1.0; t > 1e-8; t *= 0.5) {
    Vector ff = f + t * step.head(r);
    Vector gg = g;
    gg.head(c - 1) += t * step.tail(c - 1);
    if (dual(ff, gg) >= base + 1e-4 * t * slope) {
      f = std::move(ff);
      g = std::move(gg);
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Log-domain Sinkhorn-Knopp. Alternates row and column potential updates
/// and stops on the row L1 deviation. When plain scaling stalls (near-LP
/// regimes such as lambda * cost ~ 1e2, or nearly decoupled blocks) the
/// remaining budget goes to Newton steps on the dual, each polished by one
/// sweep so the column marginals stay exact.
inline TransportPlan sinkhorn(const TransportProblem& p) {
  p.validate();
  const Index r = p.cost.rows();
  const Index c = p.cost.cols();
  const Matrix log_kernel = -p.lambda * p.cost;
  Vector log_a(r), log_b(c);
  for (Index i = 0; i < r; ++i) log_a(i) = detail::log_or_neg_inf(p.row_marginal(i));
  for (Index j = 0; j < c; ++j) log_b(j) = detail::log_or_neg_inf(p.col_marginal(j));
  const bool newton_ok = log_a.allFinite() && log_b.allFinite() && c >= 2 && r + c <= 2000;

  Vector f = Vector::Zero(r);
  Vector g = Vector::Zero(c);
  double err = std::numeric_limits<double>::infinity();
  double checkpoint = err;
  int it = 0;
  bool newton = false;
  while (it < p.max_iters) {
    ++it;
    if (newton && !detail::newton_step(log_kernel, p.row_marginal, p.col_marginal, f, g)) newton = false;
    detail::sinkhorn_sweep(log_kernel, log_a, log_b, f, g);
    err = detail::row_error(log_kernel, f, g, p.row_marginal);
    if (!std::isfinite(err)) throw Error(ErrorKind::NonFinite, "NaN during Sinkhorn scaling");
    if (err < p.tol) break;
    // Stall check: less than a 2x gain over the last 200 sweeps.
    if (!newton && newton_ok && it % 200 == 0) {
      newton = err > 0.5 * checkpoint;
      checkpoint = err;
    }
  }
  TransportPlan out;
  out.plan = detail::plan_from_potentials(log_kernel, f, g);
  out.iterations_used = it;
  const double row_err = (out.plan.rowwise().sum() - p.row_marginal).cwiseAbs().sum();
  const double col_err = (out.plan.colwise().sum().transpose() - p.col_marginal).cwiseAbs().sum();
  out.marginal_error = std::max(row_err, col_err);
  out.converged = out.marginal_error <= 10 * p.tol;
  return out;
}

// Throws NotConverged when the plan missed the tolerance.
inline const TransportPlan& require_converged(const TransportPlan& plan) {
  if (!plan.converged)
    throw Error(ErrorKind::NotConverged, "Sinkhorn marginal error " + std::to_string(plan.marginal_error) + " after " +
                                             std::to_string(plan.iterations_used) + " iterations");
  return plan;
}

struct HeterogeneousAffinity {
  Matrix plan;            // raw transport plan, rows = source instances
  AffinityMatrix st;      // source -> target, row-normalized plan
  AffinityMatrix ts;      // target -> source, row-normalized transpose
};

/// OT plan between two modalities with uniform marginals over squared
/// Euclidean cost; every source (target) instance carries equal total mass.
inline HeterogeneousAffinity heterogeneous_affinity(const Matrix& source, const Matrix& target, double lambda,
                                                    AffinityKind st_kind = AffinityKind::HeteroVR,
                                                    AffinityKind ts_kind = AffinityKind::HeteroRV) {
  require(source.rows() >= 1 && target.rows() >= 1, ErrorKind::ShapeMismatch, "empty modality");
  auto problem = TransportProblem::uniform(squared_distances(source, target), lambda);
  TransportPlan solved = sinkhorn(problem);
  require_converged(solved);
  HeterogeneousAffinity out;
  out.plan = std::move(solved.plan);
  out.st = row_normalize(AffinityMatrix{out.plan, st_kind});
  out.ts = row_normalize(AffinityMatrix{out.plan.transpose(), ts_kind});
  return out;
}

inline HeterogeneousAffinity heterogeneous_affinity(const FeatureMatrix& fv, const FeatureMatrix& fr, double lambda) {
  return heterogeneous_affinity(fv.data(), fr.data(), lambda);
}

/// Balanced assignment of target instances to source clusters: OT between
/// instances (mass 1/N) and prototypes (mass 1/K), then one-hot argmax.
inline SoftLabelMatrix otla_init(const Matrix& target, const MemoryBank& bank, double lambda) {
  require(bank.size() >= 1, ErrorKind::EmptyCluster, "memory bank has no prototypes");
  auto problem = TransportProblem::uniform(squared_distances(target, bank.prototypes), lambda);
  const TransportPlan solved = sinkhorn(problem);
  require_converged(solved);
  Matrix y = Matrix::Zero(target.rows(), bank.size());
  for (Index i = 0; i < target.rows(); ++i) y(i, argmax_row(solved.plan.row(i))) = 1.0;
  return SoftLabelMatrix(std::move(y));
}

inline SoftLabelMatrix otla_init(const FeatureMatrix& fr, const MemoryBank& bank, double lambda) {
  return otla_init(fr.data(), bank, lambda);
}

}  // namespace xmod
