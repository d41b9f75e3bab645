// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Optional argv[1] is the CLI binary used for criterion 10.

#include "xmod/xmod.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace xmod;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Synthetic instance for the transfer criteria: real affinities over blob
// features, ground-truth clusters as the source partition.
struct TransferInstance {
  TransferState state;
  TransferAffinities aff;
};

TransferInstance transfer_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SynthSpec spec;
  spec.num_ids = 2 + static_cast<int>(rng() % 9);  // K <= 10
  const int max_per = 100 / spec.num_ids;          // N <= 200 total, <= 100 per modality
  spec.per_id_v = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_per - 1));
  spec.per_id_r = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_per - 1));
  spec.dim = 16;
  spec.blob_std = 0.05 + 0.1 * static_cast<double>(rng() % 4);
  spec.modality_gap = 0.2 * static_cast<double>(rng() % 4);
  spec.seed = seed;
  const SynthData d = generate(spec);
  std::vector<int> ids(d.gt.ids_v.begin(), d.gt.ids_v.end());
  const ClusterAssignment av{{ids}, spec.num_ids};
  PipelineConfig cfg;
  cfg.kappa = 1 + static_cast<int>(rng() % 30);
  const MemoryBank bank = centroids(d.visible, av, cfg.tau, cfg.mu);
  TransferInstance out;
  out.aff = build_affinities(d.visible.data(), d.infrared.data(), cfg, Direction::V2R);
  out.state = init_labels(d.visible.data(), d.infrared.data(), bank, cfg);
  return out;
}

// 1. Sinkhorn marginals and the near-LP limit.
Outcome sinkhorn_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> size(3, 8);
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  double worst_marginal = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index r = size(rng), c = size(rng);
    TransportProblem p = TransportProblem::uniform(
        squared_distances(oracle::random_unit_rows(rng, r, 4), oracle::random_unit_rows(rng, c, 4)), 25);
    if (trial % 2 == 1) {
      for (Index i = 0; i < r; ++i) p.row_marginal(i) = weight(rng);
      for (Index j = 0; j < c; ++j) p.col_marginal(j) = weight(rng);
      p.row_marginal /= p.row_marginal.sum();
      p.col_marginal /= p.col_marginal.sum();
    }
    worst_marginal = std::max(worst_marginal, sinkhorn(p).marginal_error);
  }
  double worst_cost_gap = 0, worst_tv = 0, tightest_failing_margin = 0;
  int within = 0;
  std::uniform_real_distribution<double> cost(0, 4);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix c(3, 3);
    for (Index i = 0; i < 9; ++i) c.data()[i] = cost(rng);
    const Matrix plan = sinkhorn(TransportProblem::uniform(c, 50)).plan;
    const Matrix lp = oracle::best_permutation_plan(c);
    const double gap = std::abs(plan.cwiseProduct(c).sum() - lp.cwiseProduct(c).sum());
    worst_cost_gap = std::max(worst_cost_gap, gap);
    within += gap <= 1e-3;
    if (gap > 1e-3) {
      // Distance from the best vertex to the runner-up; entropic smoothing
      // cannot separate vertices closer than roughly 1/lambda.
      std::array<int, 3> perm{0, 1, 2};
      std::vector<double> costs;
      do costs.push_back((c(0, perm[0]) + c(1, perm[1]) + c(2, perm[2])) / 3);
      while (std::next_permutation(perm.begin(), perm.end()));
      std::sort(costs.begin(), costs.end());
      tightest_failing_margin = std::max(tightest_failing_margin, costs[1] - costs[0]);
    }
    worst_tv = std::max(worst_tv, 0.5 * (plan - lp).cwiseAbs().sum());
  }
  const double secs = seconds_since(t0);
  std::string detail = "max marginal L1 " + fmt("%.2e", worst_marginal) + ", |<P,C> - LP| <= 1e-3 on " +
                       std::to_string(within) + "/20, max " + fmt("%.2e", worst_cost_gap) + " (plan TV " +
                       fmt("%.2e", worst_tv) + ")";
  if (within < 20) detail += ", failing instances have runner-up vertex within " + fmt("%.3f", tightest_failing_margin);
  return {worst_marginal <= 1e-9 && within == 20 && secs < 5, detail + ", " + fmt("%.2f", secs) + " s"};
}

// 2. Equal total affinity.
Outcome equal_total_affinity() {
  std::mt19937_64 rng(202);
  double worst = 0;
  const std::vector<std::pair<Index, Index>> sizes{{1, 1}, {5, 9}, {37, 64}, {120, 80}, {250, 500}, {500, 500},
                                                   {500, 313}};
  for (auto [nv, nr] : sizes) {
    const auto h = heterogeneous_affinity(oracle::random_unit_rows(rng, nv, 32), oracle::random_unit_rows(rng, nr, 32),
                                          25);
    worst = std::max(worst, (h.plan.rowwise().sum().array() - 1.0 / nv).abs().maxCoeff());
    worst = std::max(worst, (h.plan.colwise().sum().array() - 1.0 / nr).abs().maxCoeff());
  }
  return {worst <= 1e-8, "max |row sum - 1/Nv|, |col sum - 1/Nr| = " + fmt("%.2e", worst) + " over " +
                             std::to_string(sizes.size()) + " pairs up to 500x500"};
}

// 3 and 4. Stationarity and inconsistency descent on the same 50 instances.
std::pair<Outcome, Outcome> transfer_criteria() {
  double worst_residual = 0;
  int descents = 0;
  double worst_increase = -std::numeric_limits<double>::infinity();
  TransferConfig cfg;
  cfg.epsilon0 = 1e-6;
  cfg.max_iters = 100000;
  int capped = 0;
  for (int seed = 0; seed < 50; ++seed) {
    const TransferInstance inst = transfer_instance(static_cast<std::uint64_t>(seed));
    const TransferState done = run_transfer(inst.state, inst.aff, cfg);
    capped += done.cap_hit;
    const auto [ri, rc] = stationarity_residual(done, inst.aff, cfg.alpha);
    worst_residual = std::max({worst_residual, ri.cwiseAbs().maxCoeff(), rc.cwiseAbs().maxCoeff()});
    const double before = inconsistency(inst.state, inst.aff, cfg.alpha).weighted_total;
    const double after = inconsistency(done, inst.aff, cfg.alpha).weighted_total;
    descents += after <= before;
    worst_increase = std::max(worst_increase, after - before);
  }
  return {{worst_residual <= 1e-4 && capped == 0,
           "max residual entry " + fmt("%.2e", worst_residual) + " over 50 instances, " + std::to_string(capped) +
               " hit the cap"},
          {descents == 50, std::to_string(descents) + "/50 non-increasing, max (final - initial) " +
                               fmt("%.3e", worst_increase)}};
}

SynthSpec benchmark_spec(double gap, std::uint64_t seed) {
  SynthSpec s;
  s.num_ids = 10;
  s.per_id_v = s.per_id_r = 20;
  s.dim = 32;
  s.blob_std = 0.05;
  s.modality_gap = gap;
  s.seed = seed;
  return s;
}

struct MethodRun {
  Association mult, otla, greedy;
  GroundTruth gt;
};

MethodRun run_methods(const SynthSpec& spec, const PipelineConfig& cfg) {
  const SynthData d = generate(spec);
  const auto av = dbscan(d.visible, cfg);
  const auto ar = dbscan(d.infrared, cfg);
  return {mult_associate_both(d.visible, d.infrared, av, ar, cfg),
          associate_otla_only(d.visible, d.infrared, av, ar, cfg),
          associate_greedy_centroid(d.visible, d.infrared, av, ar, cfg), d.gt};
}

double row_sum_error(const Association& a) {
  double e = 0;
  for (const auto* dir : {&a.v2r, &a.r2v})
    if (*dir) e = std::max({e, (*dir)->intra.probs.max_row_sum_error(), (*dir)->cross.probs.max_row_sum_error()});
  return e;
}

// 5, 6, 7 share the synthetic runs.
struct BenchmarkResult {
  Outcome stochastic, comparative, zero_gap;
};

BenchmarkResult benchmark() {
  const PipelineConfig cfg;
  BenchmarkResult out;
  double worst_row = 0;
  int matrices = 0;
  auto track = [&](const MethodRun& r) {
    for (const auto* a : {&r.mult, &r.otla, &r.greedy}) {
      worst_row = std::max(worst_row, row_sum_error(*a));
      matrices += 4;
    }
  };

  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  double mult_total = 0, greedy_total = 0;
  for (double gap : {0.3, 0.6}) {
    int wins = 0;
    double mult_sum = 0, otla_sum = 0, greedy_sum = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const MethodRun r = run_methods(benchmark_spec(gap, seed), cfg);
      track(r);
      const double m = full_report(r.mult, r.gt).cross_acc_v.value_or(0);
      const double o = full_report(r.otla, r.gt).cross_acc_v.value_or(0);
      const double g = full_report(r.greedy, r.gt).cross_acc_v.value_or(0);
      wins += m >= o;
      mult_sum += m;
      otla_sum += o;
      greedy_sum += g;
    }
    ok = ok && wins >= 8;
    mult_total += mult_sum;
    greedy_total += greedy_sum;
    detail += "gap " + fmt("%.1f", gap) + ": MULT>=OTLA on " + std::to_string(wins) + "/10, mean CrossAcc_v MULT " +
              fmt("%.4f", mult_sum / 10) + " OTLA " + fmt("%.4f", otla_sum / 10) + " greedy " +
              fmt("%.4f", greedy_sum / 10) + "; ";
  }
  const double secs = seconds_since(t0);
  ok = ok && mult_total >= greedy_total && secs < 60;
  out.comparative = {ok, detail + fmt("%.1f s", secs)};

  int perfect = 0, runs = 0;
  std::string bad;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MethodRun r = run_methods(benchmark_spec(0.0, seed), cfg);
    track(r);
    const char* names[] = {"mult", "otla", "greedy"};
    int idx = 0;
    for (const auto* a : {&r.mult, &r.otla, &r.greedy}) {
      bool all = true;
      for (const auto& [name, value] : full_report(*a, r.gt).entries()) all = all && value == 1.0;
      perfect += all;
      ++runs;
      if (!all) bad += std::string(" ") + names[idx] + "@seed" + std::to_string(seed);
      ++idx;
    }
  }
  out.zero_gap = {perfect == runs, std::to_string(perfect) + "/" + std::to_string(runs) +
                                       " method runs with all eight metrics = 1.0" + bad};
  out.stochastic = {worst_row <= 1e-6, std::to_string(matrices) + " emitted label matrices, max |row sum - 1| " +
                                           fmt("%.2e", worst_row) +
                                           " (SoftLabelMatrix also rejects rows beyond 1e-6 on construction)"};
  return out;
}

// 8. Metrics against the brute-force oracle.
Outcome metric_oracle() {
  std::mt19937_64 rng(808);
  double worst = 0;
  bool defined_match = true;
  auto labels = [&](std::size_t n, int k) {
    std::uniform_int_distribution<int> pick(-1, k - 1);
    std::vector<int> v(n);
    for (auto& x : v) x = pick(rng);
    return v;
  };
  auto ids = [&](std::size_t n, int g) {
    std::uniform_int_distribution<long> pick(0, g - 1);
    std::vector<long> v(n);
    for (auto& x : v) x = pick(rng);
    return v;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t nv = 2 + rng() % 49, nr = 2 + rng() % 49;
    const int kv = 1 + static_cast<int>(rng() % 8), kr = 1 + static_cast<int>(rng() % 8), g = 1 + static_cast<int>(rng() % 6);
    const GroundTruth gt{ids(nv, g), ids(nr, g)};
    const auto iv = labels(nv, kv), cr = labels(nr, kv), ir = labels(nr, kr), cv = labels(nv, kr);
    const MetricsReport r = full_report(
        HardAssociation{HardLabelVector{iv}, HardLabelVector{cr}, HardLabelVector{ir}, HardLabelVector{cv}}, gt);
    const std::vector<std::pair<Metric, std::optional<double>>> pairs{
        {r.intra_acc_v, oracle::pair_ratio(cv, cv, gt.ids_v, gt.ids_v, false)},
        {r.intra_acc_r, oracle::pair_ratio(cr, cr, gt.ids_r, gt.ids_r, false)},
        {r.cross_acc_v, oracle::pair_ratio(iv, cr, gt.ids_v, gt.ids_r, false)},
        {r.cross_acc_r, oracle::pair_ratio(cv, ir, gt.ids_v, gt.ids_r, false)},
        {r.intra_re_v, oracle::pair_ratio(cv, cv, gt.ids_v, gt.ids_v, true)},
        {r.intra_re_r, oracle::pair_ratio(cr, cr, gt.ids_r, gt.ids_r, true)},
        {r.cross_re_v, oracle::pair_ratio(iv, cr, gt.ids_v, gt.ids_r, true)},
        {r.cross_re_r, oracle::pair_ratio(cv, ir, gt.ids_v, gt.ids_r, true)}};
    for (const auto& [got, want] : pairs) {
      defined_match = defined_match && got.has_value() == want.has_value();
      if (got && want) worst = std::max(worst, std::abs(*got - *want));
    }
  }
  return {defined_match && worst <= 1e-12,
          "160 metric values, max deviation " + fmt("%.1e", worst) + (defined_match ? "" : ", definedness differs")};
}

// 9. Loss arithmetic and Gibbs inequality.
Outcome loss_arithmetic() {
  std::mt19937_64 rng(909);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto mode = trial % 2 == 0 ? TrainingMode::VBased : TrainingMode::RBased;
    const Index b = 8, d = 24, kv = 3 + trial % 6, kr = 2 + trial % 7;
    const double tau = 0.05, divisor = 5;
    Batch batch;
    batch.features_v = oracle::random_unit_rows(rng, b, d);
    batch.features_r = oracle::random_unit_rows(rng, b, d);
    batch.intra_v = oracle::random_stochastic(rng, b, kv);
    batch.intra_r = oracle::random_stochastic(rng, b, kr);
    batch.cross_r = oracle::random_stochastic(rng, b, kv);
    batch.cross_v = oracle::random_stochastic(rng, b, kr);
    const Index ka = mode == TrainingMode::VBased ? kv : kr;
    BankSet banks;
    banks.mode = mode;
    banks.intra_v = MemoryBank{oracle::random_unit_rows(rng, kv, d)};
    banks.intra_r = MemoryBank{oracle::random_unit_rows(rng, kr, d)};
    banks.cross = MemoryBank{oracle::random_unit_rows(rng, ka, d)};
    banks.intra_cross = MemoryBank{oracle::random_unit_rows(rng, ka, d)};
    const LossReport r = loss_report(batch, banks, tau, divisor);

    const Matrix& mv = banks.intra_v.prototypes;
    const Matrix& mr = banks.intra_r.prototypes;
    const Matrix& ma = banks.cross.prototypes;
    const Matrix& mic = banks.intra_cross.prototypes;
    const bool vb = mode == TrainingMode::VBased;
    const double im_v = oracle::mean_ce(batch.features_v, mv, tau, batch.intra_v) +
                        (vb ? 0.0 : oracle::mean_ce(batch.features_v, mic, tau, batch.cross_v));
    const double im_r = oracle::mean_ce(batch.features_r, mr, tau, batch.intra_r) +
                        (vb ? oracle::mean_ce(batch.features_r, mic, tau, batch.cross_r) : 0.0);
    const double cm = vb ? oracle::mean_ce(batch.features_v, ma, tau, batch.intra_v) +
                               oracle::mean_ce(batch.features_r, ma, tau, batch.cross_r)
                         : oracle::mean_ce(batch.features_v, ma, tau, batch.cross_v) +
                               oracle::mean_ce(batch.features_r, ma, tau, batch.intra_r);
    auto oclr = [&](const Matrix& feats) {
      long double s = 0;
      for (Index i = 0; i < feats.rows(); ++i) {
        const auto p = oracle::softmax_probs(feats.row(i), ma, tau);
        s += oracle::cross_entropy(p, oracle::softmax_probs(feats.row(i), vb ? mv : mr, tau / divisor));
        s += oracle::cross_entropy(p, oracle::softmax_probs(feats.row(i), mic, tau / divisor));
      }
      return static_cast<double>(s / feats.rows());
    };
    const double ov = oclr(batch.features_v), orr = oclr(batch.features_r);
    worst = std::max({worst, std::abs(r.l_im_v - im_v), std::abs(r.l_im_r - im_r), std::abs(r.l_cm - cm),
                      std::abs(r.l_oclr_v - ov), std::abs(r.l_oclr_r - orr),
                      std::abs(r.total - (im_v + im_r + cm + ov + orr))});
  }
  int gibbs = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index k = 2 + trial % 15;
    const Matrix p = oracle::random_stochastic(rng, 1, k);
    const Matrix y = oracle::random_stochastic(rng, 1, k);
    gibbs += soft_cross_entropy(p.row(0), y.row(0)) >= entropy(y.row(0)) - 1e-9;
  }
  return {worst <= 1e-9 && gibbs == 1000,
          "20 batches (B=8), max deviation " + fmt("%.2e", worst) + "; Gibbs holds on " + std::to_string(gibbs) +
              "/1000"};
}

// 10. Byte-identical pipeline traces.
Outcome determinism(const char* cli) {
  const fs::path dir = fs::temp_directory_path() / ("xmod_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir / "snaps");
  GroundTruth gt;
  for (int epoch = 0; epoch < 3; ++epoch) {
    SynthSpec spec = benchmark_spec(0.6 - 0.2 * epoch, 42);
    spec.num_ids = 6;
    const SynthData d = generate(spec);
    io::write_matrix(dir / "snaps" / ("epoch_" + std::to_string(epoch) + "_v.mfv1"), d.visible.data());
    io::write_matrix(dir / "snaps" / ("epoch_" + std::to_string(epoch) + "_r.mfv1"), d.infrared.data());
    gt = d.gt;
  }
  io::write_atomic(dir / "gt.csv", io::encode_ground_truth(gt));
  std::string a, b, how;
  if (cli) {
    how = "CLI";
    for (const char* out : {"a.csv", "b.csv"}) {
      const std::string cmd = std::string(cli) + " pipeline --snapshots " + (dir / "snaps").string() + " --gt " +
                              (dir / "gt.csv").string() + " --seed 7 --out " + (dir / out).string();
      if (std::system(cmd.c_str()) != 0) return {false, "pipeline command failed: " + cmd};
    }
    a = io::read_file(dir / "a.csv");
    b = io::read_file(dir / "b.csv");
  } else {
    how = "library";
    a = run_trace(dir / "snaps", PipelineConfig{}, gt);
    b = run_trace(dir / "snaps", PipelineConfig{}, gt);
  }
  fs::remove_all(dir);
  const auto rows = std::count(a.begin(), a.end(), '\n');
  return {a == b && rows == 4, how + " trace, " + std::to_string(rows - 1) + " epochs, " + std::to_string(a.size()) +
                                   " bytes, " + (a == b ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  const char* cli = argc > 1 ? argv[1] : nullptr;
  std::vector<std::pair<std::string, Outcome>> results;
  auto guarded = [&](const std::string& name, const std::function<Outcome()>& fn) {
    try {
      results.emplace_back(name, fn());
    } catch (const std::exception& e) {
      results.emplace_back(name, Outcome{false, std::string("exception: ") + e.what()});
    }
    const auto& [n, o] = results.back();
    std::printf("criterion %s: %s (%s)\n", n.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  };

  guarded("1 sinkhorn", sinkhorn_correctness);
  guarded("2 equal-total-affinity", equal_total_affinity);
  std::pair<Outcome, Outcome> transfer;
  try {
    transfer = transfer_criteria();
  } catch (const std::exception& e) {
    transfer.first = transfer.second = Outcome{false, std::string("exception: ") + e.what()};
  }
  guarded("3 stationarity", [&] { return transfer.first; });
  guarded("4 inconsistency-descent", [&] { return transfer.second; });
  BenchmarkResult bench;
  try {
    bench = benchmark();
  } catch (const std::exception& e) {
    bench.stochastic = bench.comparative = bench.zero_gap = Outcome{false, std::string("exception: ") + e.what()};
  }
  guarded("5 row-stochastic", [&] { return bench.stochastic; });
  guarded("6 synthetic-benchmark", [&] { return bench.comparative; });
  guarded("7 zero-gap", [&] { return bench.zero_gap; });
  guarded("8 metric-oracle", metric_oracle);
  guarded("9 loss-arithmetic", loss_arithmetic);
  guarded("10 determinism", [&] { return determinism(cli); });

  int failed = 0;
  for (const auto& [n, o] : results) failed += !o.pass;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
  return failed == 0 ? 0 : 1;
}
