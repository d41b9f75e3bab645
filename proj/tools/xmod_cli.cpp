// xmod command-line front end.
// Exit codes: 0 success, 1 usage error, 2 data or numeric error.

#include "xmod/xmod.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

using namespace xmod;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;

  PipelineConfig load() const {
    PipelineConfig cfg = config.empty() ? PipelineConfig{} : io::read_config(config);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

void emit_json(const std::string& out, const nlohmann::json& j) {
  if (out.empty())
    std::cout << j.dump(2) << "\n";
  else
    io::write_json(out, j);
}

Modality parse_modality(const std::string& s) { return s == "v" ? Modality::Visible : Modality::Infrared; }

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  SynthSpec spec;
  std::optional<int> per_id;
  std::string gap_mode = "shared";
  std::string format = "mfv1";
  std::string out;
};

void run_synth(const SynthArgs& a, const Common& common) {
  SynthSpec spec = a.spec;
  if (a.per_id) spec.per_id_v = spec.per_id_r = *a.per_id;
  spec.gap_mode = a.gap_mode == "per-id" ? GapMode::PerIdOffset : GapMode::SharedOffset;
  spec.seed = common.load().seed;
  const SynthData d = generate(spec);
  fs::create_directories(a.out);
  const fs::path dir = a.out;
  io::write_matrix(dir / ("visible." + a.format), d.visible.data());
  io::write_matrix(dir / ("infrared." + a.format), d.infrared.data());
  io::write_atomic(dir / "gt.csv", io::encode_ground_truth(d.gt));
}

// ---- cluster -------------------------------------------------------------

struct ClusterArgs {
  std::string features, modality = "v", labels_out, prototypes_out;
};

void run_cluster(const ClusterArgs& a, const Common& common) {
  const PipelineConfig cfg = common.load();
  const FeatureMatrix f = io::read_features(a.features, parse_modality(a.modality));
  const ClusterAssignment assign = dbscan(f, cfg);
  io::write_atomic(a.labels_out, io::encode_hard_labels(assign.labels));
  if (!a.prototypes_out.empty()) io::write_matrix(a.prototypes_out, centroids(f, assign, cfg.tau, cfg.mu).prototypes);
}

// ---- associate -----------------------------------------------------------

struct AssociateArgs {
  std::string visible, infrared, labels_v, labels_r;
  std::string method = "mult", direction = "both", rule = "splitting";
  std::string out;
  bool trace = false;
  bool gauss_seidel = false;
};

ClusterAssignment assignment_for(const std::string& labels, const FeatureMatrix& f, const PipelineConfig& cfg) {
  if (labels.empty()) return dbscan(f, cfg);
  ClusterAssignment a = io::to_assignment(io::read_labels(labels));
  require_shape(static_cast<Index>(a.labels.size()) == f.rows(),
                labels + " has " + std::to_string(a.labels.size()) + " rows, features have " + std::to_string(f.rows()));
  return a;
}

void write_direction(const fs::path& dir, const DirectionalLabels& d) {
  const bool v2r = d.direction == Direction::V2R;
  io::write_atomic(dir / (v2r ? "v2r_intra_v.csv" : "r2v_intra_r.csv"), io::encode_labels(d.intra));
  io::write_atomic(dir / (v2r ? "v2r_cross_r.csv" : "r2v_cross_v.csv"), io::encode_labels(d.cross));
  for (const auto& rep : d.trace) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_iter_%05d.json", to_string(d.direction), rep.t);
    io::write_json(dir / "trace" / name, io::to_json(rep));
  }
}

void run_associate(const AssociateArgs& a, const Common& common) {
  if (a.trace && a.method != "mult") throw UsageError("--trace is only available with --method mult");
  const PipelineConfig cfg = common.load();
  const FeatureMatrix fv = io::read_features(a.visible, Modality::Visible);
  const FeatureMatrix fr = io::read_features(a.infrared, Modality::Infrared);
  const ClusterAssignment av = assignment_for(a.labels_v, fv, cfg);
  const ClusterAssignment ar = assignment_for(a.labels_r, fr, cfg);

  Association result;
  if (a.method == "mult") {
    MultOptions opt;
    opt.trace = a.trace;
    opt.rule = a.rule == "composed" ? TransferRule::Composed : TransferRule::Splitting;
    opt.gauss_seidel = a.gauss_seidel;
    if (a.direction != "r2v") result.v2r = mult_associate(fv, fr, av, ar, cfg, Direction::V2R, opt);
    if (a.direction != "v2r") result.r2v = mult_associate(fv, fr, av, ar, cfg, Direction::R2V, opt);
  } else {
    result = a.method == "otla" ? associate_otla_only(fv, fr, av, ar, cfg)
                                : associate_greedy_centroid(fv, fr, av, ar, cfg);
    if (a.direction == "v2r") result.r2v.reset();
    if (a.direction == "r2v") result.v2r.reset();
  }
  const fs::path dir = a.out;
  fs::create_directories(dir);
  if (a.trace) fs::create_directories(dir / "trace");
  for (const auto* d : {&result.v2r, &result.r2v})
    if (*d) write_direction(dir, **d);
}

// ---- eval / loss-report ---------------------------------------------------

struct LabelPaths {
  std::string dir, intra_v, cross_r, intra_r, cross_v;

  // Explicit flag wins; otherwise the associate output name inside --labels.
  std::string resolve(const std::string& explicit_path, const char* flag, const char* file) const {
    if (!explicit_path.empty()) return explicit_path;
    if (dir.empty()) throw UsageError(std::string("--labels or --") + flag + " is required");
    return (fs::path(dir) / file).string();
  }
};

struct EvalArgs {
  LabelPaths labels;
  std::string gt, out;
  bool exclude_self = false;
};

void run_eval(const EvalArgs& a) {
  const GroundTruth gt = io::read_ground_truth(a.gt);
  auto hard = [&](const std::string& p, const char* flag, const char* file) {
    return io::read_labels(a.labels.resolve(p, flag, file)).hard;
  };
  const HardAssociation h{hard(a.labels.intra_v, "intra-v", "v2r_intra_v.csv"),
                          hard(a.labels.cross_r, "cross-r", "v2r_cross_r.csv"),
                          hard(a.labels.intra_r, "intra-r", "r2v_intra_r.csv"),
                          hard(a.labels.cross_v, "cross-v", "r2v_cross_v.csv")};
  emit_json(a.out, io::to_json(full_report(h, gt, PairOptions{!a.exclude_self})));
}

struct LossArgs {
  LabelPaths labels;
  std::string visible, infrared, bank_v, bank_r, mode = "v", out;
};

InstanceLabels soft_labels(const LabelPaths& paths, const std::string& explicit_path, const char* flag,
                           const char* file) {
  const std::string p = paths.resolve(explicit_path, flag, file);
  return io::to_instance_labels(io::read_labels(p), p);
}

MemoryBank bank_for(const std::string& path, const FeatureMatrix& f, const InstanceLabels& intra,
                    const PipelineConfig& cfg) {
  if (!path.empty()) return MemoryBank{io::read_matrix(path)};
  ClusterAssignment a;
  a.labels = intra.hard();
  a.k = static_cast<int>(intra.probs.space_size());
  return centroids(f, a, cfg.tau, cfg.mu);
}

void run_loss(const LossArgs& a, const Common& common) {
  const PipelineConfig cfg = common.load();
  const FeatureMatrix fv = io::read_features(a.visible, Modality::Visible);
  const FeatureMatrix fr = io::read_features(a.infrared, Modality::Infrared);
  auto direction = [&](Direction dir, InstanceLabels intra, InstanceLabels cross) {
    DirectionalLabels d;
    d.direction = dir;
    d.intra = std::move(intra);
    d.cross = std::move(cross);
    return d;
  };
  Association assoc;
  assoc.v2r = direction(Direction::V2R, soft_labels(a.labels, a.labels.intra_v, "intra-v", "v2r_intra_v.csv"),
                        soft_labels(a.labels, a.labels.cross_r, "cross-r", "v2r_cross_r.csv"));
  assoc.r2v = direction(Direction::R2V, soft_labels(a.labels, a.labels.intra_r, "intra-r", "r2v_intra_r.csv"),
                        soft_labels(a.labels, a.labels.cross_v, "cross-v", "r2v_cross_v.csv"));
  require_shape(assoc.v2r->intra.total == fv.rows() && assoc.r2v->intra.total == fr.rows(),
                "label files and feature files disagree on instance counts");
  const MemoryBank mv = bank_for(a.bank_v, fv, assoc.v2r->intra, cfg);
  const MemoryBank mr = bank_for(a.bank_r, fr, assoc.r2v->intra, cfg);
  const TrainingMode mode = a.mode == "v" ? TrainingMode::VBased : TrainingMode::RBased;
  emit_json(a.out, io::to_json(loss_pass(pass_labels(fv, fr, assoc), init_banks(mv, mr, mode), cfg, false)));
}

// ---- pipeline ------------------------------------------------------------

struct PipelineArgs {
  std::string snapshots, gt, out;
};

void run_pipeline_cmd(const PipelineArgs& a, const Common& common) {
  const PipelineConfig cfg = common.load();
  std::optional<GroundTruth> gt;
  if (!a.gt.empty()) gt = io::read_ground_truth(a.gt);
  io::write_atomic(a.out, run_trace(a.snapshots, cfg, gt));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modality pseudo-label association toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config, "JSON file overriding pipeline defaults")->check(CLI::ExistingFile);
  app.add_option("--seed", common.seed, "seed for every random draw");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic two-modality feature set");
  s->add_option("--ids", synth.spec.num_ids, "number of identities");
  s->add_option("--per-id", synth.per_id, "instances per identity in both modalities");
  s->add_option("--per-id-v", synth.spec.per_id_v, "visible instances per identity");
  s->add_option("--per-id-r", synth.spec.per_id_r, "infrared instances per identity");
  s->add_option("--dim", synth.spec.dim, "feature dimension");
  s->add_option("--std", synth.spec.blob_std, "blob standard deviation");
  s->add_option("--gap", synth.spec.modality_gap, "modality gap magnitude");
  s->add_option("--separation", synth.spec.id_separation, "minimum distance between identity centers");
  s->add_option("--gap-mode", synth.gap_mode)->check(CLI::IsMember({"shared", "per-id"}));
  s->add_option("--format", synth.format, "feature file format")->check(CLI::IsMember({"mfv1", "csv"}));
  s->add_option("--out", synth.out, "output directory")->required();

  ClusterArgs cluster;
  auto* c = app.add_subcommand("cluster", "DBSCAN one modality");
  c->add_option("--features", cluster.features)->required()->check(CLI::ExistingFile);
  c->add_option("--modality", cluster.modality)->check(CLI::IsMember({"v", "r"}));
  c->add_option("--out", cluster.labels_out, "label CSV")->required();
  c->add_option("--prototypes", cluster.prototypes_out, "cluster prototype file (MFV1 or CSV by extension)");

  AssociateArgs assoc;
  auto* as = app.add_subcommand("associate", "cross-modality label association");
  as->add_option("--visible", assoc.visible)->required()->check(CLI::ExistingFile);
  as->add_option("--infrared", assoc.infrared)->required()->check(CLI::ExistingFile);
  as->add_option("--labels-v", assoc.labels_v, "visible cluster labels (default: run DBSCAN)")->check(CLI::ExistingFile);
  as->add_option("--labels-r", assoc.labels_r, "infrared cluster labels (default: run DBSCAN)")->check(CLI::ExistingFile);
  as->add_option("--method", assoc.method)->check(CLI::IsMember({"mult", "otla", "greedy"}));
  as->add_option("--direction", assoc.direction)->check(CLI::IsMember({"v2r", "r2v", "both"}));
  as->add_option("--rule", assoc.rule)->check(CLI::IsMember({"splitting", "composed"}));
  as->add_flag("--gauss-seidel", assoc.gauss_seidel, "cross update reads the fresh intra labels");
  as->add_flag("--trace", assoc.trace, "write one inconsistency JSON per iteration");
  as->add_option("--out", assoc.out, "output directory")->required();

  auto label_opts = [](CLI::App* sub, LabelPaths& p) {
    sub->add_option("--labels", p.dir, "directory holding the four associate outputs")->check(CLI::ExistingDirectory);
    sub->add_option("--intra-v", p.intra_v)->check(CLI::ExistingFile);
    sub->add_option("--cross-r", p.cross_r)->check(CLI::ExistingFile);
    sub->add_option("--intra-r", p.intra_r)->check(CLI::ExistingFile);
    sub->add_option("--cross-v", p.cross_v)->check(CLI::ExistingFile);
  };

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "pair accuracy and recall against ground truth");
  label_opts(e, eval.labels);
  e->add_option("--gt", eval.gt)->required()->check(CLI::ExistingFile);
  e->add_flag("--exclude-self-pairs", eval.exclude_self);
  e->add_option("--out", eval.out, "JSON report (default: stdout)");

  LossArgs loss;
  auto* l = app.add_subcommand("loss-report", "evaluate the training losses for one pass");
  label_opts(l, loss.labels);
  l->add_option("--visible", loss.visible)->required()->check(CLI::ExistingFile);
  l->add_option("--infrared", loss.infrared)->required()->check(CLI::ExistingFile);
  l->add_option("--bank-v", loss.bank_v, "visible intra bank (default: centroids of the labels)")
      ->check(CLI::ExistingFile);
  l->add_option("--bank-r", loss.bank_r, "infrared intra bank (default: centroids of the labels)")
      ->check(CLI::ExistingFile);
  l->add_option("--mode", loss.mode, "training mode")->check(CLI::IsMember({"v", "r"}));
  l->add_option("--out", loss.out, "JSON report (default: stdout)");

  PipelineArgs pipe;
  auto* p = app.add_subcommand("pipeline", "per-epoch trace over feature snapshots");
  p->add_option("--snapshots", pipe.snapshots)->required()->check(CLI::ExistingDirectory);
  p->add_option("--gt", pipe.gt)->check(CLI::ExistingFile);
  p->add_option("--out", pipe.out, "trace CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s) run_synth(synth, common);
    if (*c) run_cluster(cluster, common);
    if (*as) run_associate(assoc, common);
    if (*e) run_eval(eval);
    if (*l) run_loss(loss, common);
    if (*p) run_pipeline_cmd(pipe, common);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
