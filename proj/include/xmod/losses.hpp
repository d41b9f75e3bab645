#pragma once

// Forward-only evaluation of the contrastive training losses and the memory
// momentum update. No gradients are computed anywhere.

#include "xmod/clustering.hpp"
#include "xmod/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace xmod {

enum class TrainingMode { VBased, RBased };

inline const char* to_string(TrainingMode m) { return m == TrainingMode::VBased ? "v-based" : "r-based"; }

/// -sum_k y_k log(max(p_k, 1e-30))
inline double soft_cross_entropy(const Eigen::Ref<const RowVector>& p, const Eigen::Ref<const RowVector>& y) {
  require_shape(p.size() == y.size(), "prediction/target length mismatch");
  double loss = 0.0;
  for (Index k = 0; k < p.size(); ++k)
    if (y(k) != 0.0) loss -= y(k) * std::log(std::max(p(k), 1e-30));
  return loss;
}

inline double entropy(const Eigen::Ref<const RowVector>& y) { return soft_cross_entropy(y, y); }

/// Mean cross-entropy of bank predictions for `features` against `targets`.
inline double mean_bank_ce(const Matrix& features, const Matrix& prototypes, double tau, const Matrix& targets) {
  require_shape(features.rows() == targets.rows(), "feature/label row mismatch");
  require_shape(prototypes.rows() == targets.cols(), "bank size " + std::to_string(prototypes.rows()) +
                                                         " does not match label space " +
                                                         std::to_string(targets.cols()));
  if (features.rows() == 0) return 0.0;
  double sum = 0.0;
  for (Index i = 0; i < features.rows(); ++i)
    sum += soft_cross_entropy(memory_probability(features.row(i), prototypes, tau), targets.row(i));
  return sum / static_cast<double>(features.rows());
}

/// Paired mini-batch. Each label matrix is indexed like the feature matrix
/// of its modality; labels not used by the active mode may be empty.
struct Batch {
  Matrix features_v;
  Matrix features_r;
  Matrix intra_v;  // visible instances, visible space
  Matrix intra_r;  // infrared instances, infrared space
  Matrix cross_v;  // visible instances, infrared space (R-based)
  Matrix cross_r;  // infrared instances, visible space (V-based)
};

/// Memory banks of one training mode. V-based: cross (M^a) and intra_cross
/// (the infrared intra-cross bank) live in the visible label space; R-based
/// mirrors this in the infrared space.
struct BankSet {
  TrainingMode mode = TrainingMode::VBased;
  MemoryBank intra_v;
  MemoryBank intra_r;
  MemoryBank cross;
  MemoryBank intra_cross;

  Index anchor_size() const { return mode == TrainingMode::VBased ? intra_v.size() : intra_r.size(); }

  void validate() const {
    const Index k = anchor_size();
    require(cross.size() == k && intra_cross.size() == k, ErrorKind::ModeMismatch,
            std::string("banks are not in the ") + to_string(mode) + " label space");
  }

  // Anchor-space intra bank used as a sharpened OCLR target.
  const MemoryBank& anchor_intra() const { return mode == TrainingMode::VBased ? intra_v : intra_r; }
};

/// Banks for a mode, all seeded from cluster centroids: M^a and the
/// intra-cross bank copy the anchor modality's intra bank.
inline BankSet init_banks(const MemoryBank& intra_v, const MemoryBank& intra_r, TrainingMode mode) {
  BankSet b;
  b.mode = mode;
  b.intra_v = intra_v;
  b.intra_r = intra_r;
  b.cross = b.anchor_intra();
  b.intra_cross = b.anchor_intra();
  return b;
}

struct LossReport {
  double l_im_v = 0;
  double l_im_r = 0;
  double l_cm = 0;
  double l_oclr_v = 0;
  double l_oclr_r = 0;
  double total = 0;

  void finalize() { total = l_im_v + l_im_r + l_cm + l_oclr_v + l_oclr_r; }
};

namespace detail {

inline void check_mode_labels(const Batch& b, const BankSet& banks) {
  banks.validate();
  if (banks.mode == TrainingMode::VBased)
    require(b.cross_r.rows() == b.features_r.rows() && b.cross_r.cols() == banks.intra_v.size(),
            ErrorKind::ModeMismatch, "V-based mode needs infrared cross labels in the visible space");
  else
    require(b.cross_v.rows() == b.features_v.rows() && b.cross_v.cols() == banks.intra_r.size(),
            ErrorKind::ModeMismatch, "R-based mode needs visible cross labels in the infrared space");
}

}  // namespace detail

/// Intra-modality contrastive terms.
///   V-based: l_v = CE(P(f^v|M~v), y~v);  l_r = CE(P(f^r|M~r), y~r) + CE(P(f^r|M^r), y^r)
///   R-based: l_v = CE(P(f^v|M~v), y~v) + CE(P(f^v|M^v), y^v);  l_r = CE(P(f^r|M~r), y~r)
inline std::pair<double, double> loss_im(const Batch& b, const BankSet& banks, double tau) {
  detail::check_mode_labels(b, banks);
  double lv = mean_bank_ce(b.features_v, banks.intra_v.prototypes, tau, b.intra_v);
  double lr = mean_bank_ce(b.features_r, banks.intra_r.prototypes, tau, b.intra_r);
  if (banks.mode == TrainingMode::VBased)
    lr += mean_bank_ce(b.features_r, banks.intra_cross.prototypes, tau, b.cross_r);
  else
    lv += mean_bank_ce(b.features_v, banks.intra_cross.prototypes, tau, b.cross_v);
  return {lv, lr};
}

/// Cross-modality contrastive term against M^a.
///   V-based: CE(P(f^v|M^a), y~v) + CE(P(f^r|M^a), y^r)
///   R-based: CE(P(f^v|M^a), y^v) + CE(P(f^r|M^a), y~r)
inline double loss_cm(const Batch& b, const BankSet& banks, double tau) {
  detail::check_mode_labels(b, banks);
  const Matrix& proto = banks.cross.prototypes;
  if (banks.mode == TrainingMode::VBased)
    return mean_bank_ce(b.features_v, proto, tau, b.intra_v) + mean_bank_ce(b.features_r, proto, tau, b.cross_r);
  return mean_bank_ce(b.features_v, proto, tau, b.cross_v) + mean_bank_ce(b.features_r, proto, tau, b.intra_r);
}

/// Mean over rows of CE(P(f|M^a, tau), P(f|intra, tau/d)) + CE(P(f|M^a, tau), P(f|intra-cross, tau/d)).
inline double oclr_term(const Matrix& features, const BankSet& banks, double tau, double sharpen_divisor) {
  require(sharpen_divisor >= 1, ErrorKind::InvalidArgument, "sharpen_divisor must be >= 1");
  banks.validate();
  if (features.rows() == 0) return 0.0;
  const double sharp = tau / sharpen_divisor;
  double sum = 0.0;
  for (Index i = 0; i < features.rows(); ++i) {
    const RowVector p = memory_probability(features.row(i), banks.cross.prototypes, tau);
    sum += soft_cross_entropy(p, memory_probability(features.row(i), banks.anchor_intra().prototypes, sharp));
    sum += soft_cross_entropy(p, memory_probability(features.row(i), banks.intra_cross.prototypes, sharp));
  }
  return sum / static_cast<double>(features.rows());
}

inline std::pair<double, double> loss_oclr(const Batch& b, const BankSet& banks, double tau, double sharpen_divisor) {
  return {oclr_term(b.features_v, banks, tau, sharpen_divisor), oclr_term(b.features_r, banks, tau, sharpen_divisor)};
}

inline LossReport loss_report(const Batch& b, const BankSet& banks, double tau, double sharpen_divisor) {
  LossReport r;
  std::tie(r.l_im_v, r.l_im_r) = loss_im(b, banks, tau);
  r.l_cm = loss_cm(b, banks, tau);
  std::tie(r.l_oclr_v, r.l_oclr_r) = loss_oclr(b, banks, tau, sharpen_divisor);
  r.finalize();
  return r;
}

/// m[label] <- mu m[label] + (1 - mu) f, then renormalized.
inline void momentum_update(MemoryBank& bank, const Eigen::Ref<const RowVector>& feature, int label, double mu) {
  require(label >= 0 && label < bank.size(), ErrorKind::LabelOutOfRange,
          "label " + std::to_string(label) + " for K=" + std::to_string(bank.size()));
  require_shape(feature.size() == bank.prototypes.cols(), "feature/prototype dimension mismatch");
  RowVector m = mu * bank.prototypes.row(label) + (1.0 - mu) * feature;
  const double norm = m.norm();
  if (norm <= 1e-12) return;  // antipodal cancellation; keep the old prototype
  bank.prototypes.row(label) = m / norm;
}

inline MemoryBank momentum_updated(MemoryBank bank, const Eigen::Ref<const RowVector>& feature, int label, double mu) {
  momentum_update(bank, feature, label, mu);
  return bank;
}

}  // namespace xmod
