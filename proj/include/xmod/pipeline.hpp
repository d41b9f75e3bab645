#pragma once

// Epoch-level label refresh over externally supplied feature snapshots.
// Every epoch re-clusters both modalities, rebuilds the banks, runs both
// transfer directions and evaluates one pass of the losses; the epoch
// parity selects the training mode (even = V-based).

#include "xmod/clustering.hpp"
#include "xmod/core.hpp"
#include "xmod/eval.hpp"
#include "xmod/io.hpp"
#include "xmod/losses.hpp"
#include "xmod/mult.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace xmod {

inline TrainingMode mode_for_epoch(int epoch) { return epoch % 2 == 0 ? TrainingMode::VBased : TrainingMode::RBased; }

/// Labels of every non-noise instance, aligned per modality.
struct PassLabels {
  Matrix features_v, features_r;  // non-noise rows only
  Matrix intra_v, cross_v;        // y~v (visible space), y^v (infrared space)
  Matrix intra_r, cross_r;        // y~r (infrared space), y^r (visible space)
};

inline PassLabels pass_labels(const FeatureMatrix& fv, const FeatureMatrix& fr, const Association& a) {
  require(a.v2r && a.r2v, ErrorKind::InvalidArgument, "both directions are required");
  require(a.v2r->intra.rows == a.r2v->cross.rows && a.r2v->intra.rows == a.v2r->cross.rows, ErrorKind::ShapeMismatch,
          "directions disagree on the non-noise instances");
  PassLabels p;
  p.features_v = fv.select(a.v2r->intra.rows).data();
  p.features_r = fr.select(a.r2v->intra.rows).data();
  p.intra_v = a.v2r->intra.probs.probs();
  p.cross_r = a.v2r->cross.probs.probs();
  p.intra_r = a.r2v->intra.probs.probs();
  p.cross_v = a.r2v->cross.probs.probs();
  return p;
}

namespace detail {

inline Matrix gather(const Matrix& m, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = m.row(idx[k]);
  return out;
}

inline void update_bank_rows(MemoryBank& bank, const Matrix& features, const Matrix& labels, double mu) {
  for (Index i = 0; i < features.rows(); ++i) momentum_update(bank, features.row(i), argmax_row(labels.row(i)), mu);
}

}  // namespace detail

/// Mean LossReport over one pass in batches of cfg.batch_size. The pass
/// length is the larger modality; the smaller one wraps around. With
/// update_banks, prototypes receive momentum updates after each batch.
inline LossReport loss_pass(const PassLabels& p, BankSet banks, const PipelineConfig& cfg, bool update_banks) {
  const Index nv = p.features_v.rows();
  const Index nr = p.features_r.rows();
  require(nv >= 1 && nr >= 1, ErrorKind::EmptyCluster, "a modality has no labelled instances");
  const Index n = std::max(nv, nr);
  const Index bsz = cfg.batch_size;
  LossReport sum;
  int batches = 0;
  for (Index start = 0; start < n; start += bsz) {
    const Index size = std::min(bsz, n - start);
    std::vector<Index> iv, ir;
    for (Index k = 0; k < size; ++k) {
      iv.push_back((start + k) % nv);
      ir.push_back((start + k) % nr);
    }
    Batch b;
    b.features_v = detail::gather(p.features_v, iv);
    b.features_r = detail::gather(p.features_r, ir);
    b.intra_v = detail::gather(p.intra_v, iv);
    b.intra_r = detail::gather(p.intra_r, ir);
    b.cross_v = detail::gather(p.cross_v, iv);
    b.cross_r = detail::gather(p.cross_r, ir);
    const LossReport r = loss_report(b, banks, cfg.tau, cfg.sharpen_divisor);
    sum.l_im_v += r.l_im_v;
    sum.l_im_r += r.l_im_r;
    sum.l_cm += r.l_cm;
    sum.l_oclr_v += r.l_oclr_v;
    sum.l_oclr_r += r.l_oclr_r;
    ++batches;
    if (!update_banks) continue;
    detail::update_bank_rows(banks.intra_v, b.features_v, b.intra_v, cfg.mu);
    detail::update_bank_rows(banks.intra_r, b.features_r, b.intra_r, cfg.mu);
    if (banks.mode == TrainingMode::VBased) {
      detail::update_bank_rows(banks.cross, b.features_v, b.intra_v, cfg.mu);
      detail::update_bank_rows(banks.cross, b.features_r, b.cross_r, cfg.mu);
      detail::update_bank_rows(banks.intra_cross, b.features_r, b.cross_r, cfg.mu);
    } else {
      detail::update_bank_rows(banks.cross, b.features_v, b.cross_v, cfg.mu);
      detail::update_bank_rows(banks.cross, b.features_r, b.intra_r, cfg.mu);
      detail::update_bank_rows(banks.intra_cross, b.features_v, b.cross_v, cfg.mu);
    }
  }
  const double inv = 1.0 / batches;
  sum.l_im_v *= inv;
  sum.l_im_r *= inv;
  sum.l_cm *= inv;
  sum.l_oclr_v *= inv;
  sum.l_oclr_r *= inv;
  sum.finalize();
  return sum;
}

struct EpochResult {
  int epoch = 0;
  TrainingMode mode = TrainingMode::VBased;
  ClusterAssignment assign_v, assign_r;
  Association labels;
  LossReport losses;
  std::optional<MetricsReport> metrics;
};

inline EpochResult run_epoch(const FeatureMatrix& fv, const FeatureMatrix& fr, int epoch, const PipelineConfig& cfg,
                             const std::optional<GroundTruth>& gt = std::nullopt) {
  cfg.validate();
  EpochResult out;
  out.epoch = epoch;
  out.mode = mode_for_epoch(epoch);
  out.assign_v = dbscan(fv, cfg);
  out.assign_r = dbscan(fr, cfg);
  out.labels = mult_associate_both(fv, fr, out.assign_v, out.assign_r, cfg);
  const MemoryBank bank_v = centroids(fv, out.assign_v, cfg.tau, cfg.mu);
  const MemoryBank bank_r = centroids(fr, out.assign_r, cfg.tau, cfg.mu);
  out.losses = loss_pass(pass_labels(fv, fr, out.labels), init_banks(bank_v, bank_r, out.mode), cfg, true);
  if (gt) out.metrics = full_report(out.labels, *gt);
  return out;
}

// ---------------------------------------------------------------------------
// Snapshot traces
// ---------------------------------------------------------------------------

struct Snapshot {
  std::filesystem::path visible;
  std::filesystem::path infrared;
};

/// Epoch-ordered snapshot pairs named epoch_<n>_v.<ext> / epoch_<n>_r.<ext>.
/// Epochs must run 0..max with both files present.
inline std::vector<Snapshot> discover_snapshots(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::Io, dir.string() + " is not a directory");
  static const std::regex pattern(R"(epoch_(\d+)_([vr])\.[A-Za-z0-9]+)");
  std::map<long, Snapshot> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!entry.is_regular_file() || !std::regex_match(name, m, pattern)) continue;
    auto& slot = found[std::stol(m[1].str())];
    (m[2].str() == "v" ? slot.visible : slot.infrared) = entry.path();
  }
  require(!found.empty(), ErrorKind::MissingSnapshot, "epoch 0 (no snapshots in " + dir.string() + ")");
  std::vector<Snapshot> out;
  const long last = found.rbegin()->first;
  for (long e = 0; e <= last; ++e) {
    auto it = found.find(e);
    if (it == found.end() || it->second.visible.empty() || it->second.infrared.empty())
      throw Error(ErrorKind::MissingSnapshot, "epoch " + std::to_string(e));
    out.push_back(it->second);
  }
  return out;
}

inline std::string trace_header() {
  return "epoch,intra_acc_v,intra_acc_r,cross_acc_v,cross_acc_r,intra_re_v,intra_re_r,cross_re_v,cross_re_r,"
         "mode,k_v,k_r,l_im_v,l_im_r,l_cm,l_oclr_v,l_oclr_r,loss_total\n";
}

inline std::string trace_row(const EpochResult& r) {
  std::string line = std::to_string(r.epoch);
  const MetricsReport m = r.metrics.value_or(MetricsReport{});
  for (const auto& [name, value] : m.entries()) line += "," + (value ? io::format_double(*value) : std::string("NA"));
  line += std::string(",") + (r.mode == TrainingMode::VBased ? "V" : "R");
  line += "," + std::to_string(r.assign_v.k) + "," + std::to_string(r.assign_r.k);
  for (double v : {r.losses.l_im_v, r.losses.l_im_r, r.losses.l_cm, r.losses.l_oclr_v, r.losses.l_oclr_r,
                   r.losses.total})
    line += "," + io::format_double(v);
  return line + "\n";
}

/// Runs every snapshot epoch and returns the trace CSV text.
inline std::string run_trace(const std::filesystem::path& snapshot_dir, const PipelineConfig& cfg,
                             const std::optional<GroundTruth>& gt) {
  std::string csv = trace_header();
  int epoch = 0;
  for (const auto& snap : discover_snapshots(snapshot_dir)) {
    const FeatureMatrix fv = io::read_features(snap.visible, Modality::Visible);
    const FeatureMatrix fr = io::read_features(snap.infrared, Modality::Infrared);
    csv += trace_row(run_epoch(fv, fr, epoch++, cfg, gt));
  }
  return csv;
}

}  // namespace xmod
