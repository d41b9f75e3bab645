#pragma once

// Positive-pair label-quality metrics against ground-truth identities.

#include "xmod/core.hpp"
#include "xmod/mult.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace xmod {

struct GroundTruth {
  std::vector<long> ids_v;
  std::vector<long> ids_r;
};

using Metric = std::optional<double>;  // nullopt = undefined (zero denominator)

struct MetricsReport {
  Metric intra_acc_v, intra_acc_r, cross_acc_v, cross_acc_r;
  Metric intra_re_v, intra_re_r, cross_re_v, cross_re_r;

  // Name/value pairs in a fixed order.
  std::vector<std::pair<std::string, Metric>> entries() const {
    return {{"intra_acc_v", intra_acc_v}, {"intra_acc_r", intra_acc_r}, {"cross_acc_v", cross_acc_v},
            {"cross_acc_r", cross_acc_r}, {"intra_re_v", intra_re_v},   {"intra_re_r", intra_re_r},
            {"cross_re_v", cross_re_v},   {"cross_re_r", cross_re_r}};
  }
};

struct PairOptions {
  bool include_self_pairs = true;  // only meaningful when both sides are the same vector
};

namespace detail {

struct PairCounts {
  double both = 0;       // equal prediction and equal gt
  double gt_equal = 0;   // equal gt
  double pred_equal = 0; // equal prediction (noise never equal)
};

inline PairCounts count_pairs(const HardLabelVector& pred_a, const HardLabelVector& pred_b,
                              const std::vector<long>& gt_a, const std::vector<long>& gt_b) {
  require_shape(pred_a.size() == gt_a.size() && pred_b.size() == gt_b.size(),
                "prediction and ground-truth lengths differ");
  std::map<long, double> gt_count_b;
  std::map<int, double> pred_count_b;
  std::map<std::pair<int, long>, double> joint_b;
  for (std::size_t j = 0; j < pred_b.size(); ++j) {
    gt_count_b[gt_b[j]] += 1;
    if (pred_b[j] == kNoise) continue;
    pred_count_b[pred_b[j]] += 1;
    joint_b[{pred_b[j], gt_b[j]}] += 1;
  }
  auto lookup = [](const auto& m, const auto& key) {
    auto it = m.find(key);
    return it == m.end() ? 0.0 : it->second;
  };
  PairCounts c;
  for (std::size_t i = 0; i < pred_a.size(); ++i) {
    c.gt_equal += lookup(gt_count_b, gt_a[i]);
    if (pred_a[i] == kNoise) continue;
    c.pred_equal += lookup(pred_count_b, pred_a[i]);
    c.both += lookup(joint_b, std::make_pair(pred_a[i], gt_a[i]));
  }
  return c;
}

inline PairCounts count_self_pairs(const HardLabelVector& pred, const std::vector<long>& gt, const PairOptions& opt) {
  PairCounts c = count_pairs(pred, pred, gt, gt);
  if (!opt.include_self_pairs) {
    double labelled = 0;
    for (int l : pred.labels) labelled += (l != kNoise);
    c.gt_equal -= static_cast<double>(pred.size());
    c.both -= labelled;
    c.pred_equal -= labelled;
  }
  return c;
}

inline Metric ratio(double num, double den) {
  if (den <= 0) return std::nullopt;
  return num / den;
}

}  // namespace detail

/// sum_ij [a_i = b_j][gt_a_i = gt_b_j] / sum_ij [gt_a_i = gt_b_j]
inline Metric pair_accuracy(const HardLabelVector& pred_a, const HardLabelVector& pred_b,
                            const std::vector<long>& gt_a, const std::vector<long>& gt_b) {
  const auto c = detail::count_pairs(pred_a, pred_b, gt_a, gt_b);
  return detail::ratio(c.both, c.gt_equal);
}

/// sum_ij [a_i = b_j][gt_a_i = gt_b_j] / sum_ij [a_i = b_j]
inline Metric pair_recall(const HardLabelVector& pred_a, const HardLabelVector& pred_b,
                          const std::vector<long>& gt_a, const std::vector<long>& gt_b) {
  const auto c = detail::count_pairs(pred_a, pred_b, gt_a, gt_b);
  return detail::ratio(c.both, c.pred_equal);
}

inline Metric intra_accuracy(const HardLabelVector& pred, const std::vector<long>& gt, const PairOptions& opt = {}) {
  const auto c = detail::count_self_pairs(pred, gt, opt);
  return detail::ratio(c.both, c.gt_equal);
}

inline Metric intra_recall(const HardLabelVector& pred, const std::vector<long>& gt, const PairOptions& opt = {}) {
  const auto c = detail::count_self_pairs(pred, gt, opt);
  return detail::ratio(c.both, c.pred_equal);
}

/// Hard label vectors of the four label sets over all instances.
struct HardAssociation {
  HardLabelVector intra_v;  // y~v, V2R
  HardLabelVector cross_r;  // y^r, V2R
  HardLabelVector intra_r;  // y~r, R2V
  HardLabelVector cross_v;  // y^v, R2V
};

inline HardAssociation harden(const Association& a) {
  require(a.v2r.has_value() && a.r2v.has_value(), ErrorKind::InvalidArgument, "both directions are required");
  return {a.v2r->intra.hard(), a.v2r->cross.hard(), a.r2v->intra.hard(), a.r2v->cross.hard()};
}

/// The eight label-quality metrics. Intra metrics use the transferred
/// cross-modality labels of each modality; cross metrics pair the intra
/// labels of one direction with the cross labels of the same direction.
inline MetricsReport full_report(const HardAssociation& h, const GroundTruth& gt, const PairOptions& opt = {}) {
  MetricsReport r;
  r.intra_acc_v = intra_accuracy(h.cross_v, gt.ids_v, opt);
  r.intra_acc_r = intra_accuracy(h.cross_r, gt.ids_r, opt);
  r.cross_acc_v = pair_accuracy(h.intra_v, h.cross_r, gt.ids_v, gt.ids_r);
  r.cross_acc_r = pair_accuracy(h.cross_v, h.intra_r, gt.ids_v, gt.ids_r);
  r.intra_re_v = intra_recall(h.cross_v, gt.ids_v, opt);
  r.intra_re_r = intra_recall(h.cross_r, gt.ids_r, opt);
  r.cross_re_v = pair_recall(h.intra_v, h.cross_r, gt.ids_v, gt.ids_r);
  r.cross_re_r = pair_recall(h.cross_v, h.intra_r, gt.ids_v, gt.ids_r);
  return r;
}

inline MetricsReport full_report(const Association& a, const GroundTruth& gt, const PairOptions& opt = {}) {
  return full_report(harden(a), gt, opt);
}

}  // namespace xmod
