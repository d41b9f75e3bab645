#pragma once

// Seeded two-modality blob generator with a controllable modality gap.
//
// Draw order from one splitmix64 stream (fixed, so fixtures are portable):
//   1. identity centers, each a normalized Gaussian vector, rejected and
//      redrawn while closer than id_separation to an accepted center;
//   2. gap vectors: one (SharedOffset) or one per identity (PerIdOffset),
//      each a normalized Gaussian direction scaled to modality_gap;
//   3. visible instances, identity-major, normalize(center + std * z);
//   4. infrared instances, identity-major, normalize(center + gap + std * z).

#include "xmod/core.hpp"
#include "xmod/eval.hpp"

#include <cstdint>
#include <string>

namespace xmod {

enum class GapMode { SharedOffset, PerIdOffset };

struct SynthSpec {
  int num_ids = 10;
  int per_id_v = 20;
  int per_id_r = 20;
  int dim = 32;
  double id_separation = 0.8;  // minimum chord distance between identity centers
  double blob_std = 0.05;
  double modality_gap = 0.0;
  GapMode gap_mode = GapMode::SharedOffset;
  std::uint64_t seed = 0;
  int max_retries = 10000;

  void validate() const {
    require(num_ids >= 1, ErrorKind::InvalidArgument, "num_ids must be >= 1");
    require(per_id_v >= 1 && per_id_r >= 1, ErrorKind::InvalidArgument, "instances per identity must be >= 1");
    require(dim >= 2, ErrorKind::InvalidArgument, "dim must be >= 2");
    require(blob_std >= 0, ErrorKind::InvalidArgument, "blob_std must be >= 0");
    require(modality_gap >= 0, ErrorKind::InvalidArgument, "modality_gap must be >= 0");
    require(id_separation >= 0, ErrorKind::InvalidArgument, "id_separation must be >= 0");
  }
};

struct SynthData {
  FeatureMatrix visible;
  FeatureMatrix infrared;
  GroundTruth gt;
  Matrix centers;
};

namespace detail {

inline RowVector random_direction(SplitMix64& rng, int dim) {
  RowVector v(dim);
  double norm = 0.0;
  do {
    for (int k = 0; k < dim; ++k) v(k) = rng.gaussian();
    norm = v.norm();
  } while (norm < 1e-12);
  return v / norm;
}

}  // namespace detail

inline SynthData generate(const SynthSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  Matrix centers(spec.num_ids, spec.dim);
  for (int g = 0; g < spec.num_ids; ++g) {
    int attempts = 0;
    for (;;) {
      const RowVector c = detail::random_direction(rng, spec.dim);
      bool ok = true;
      for (int h = 0; h < g && ok; ++h) ok = (centers.row(h) - c).norm() >= spec.id_separation;
      if (ok) {
        centers.row(g) = c;
        break;
      }
      if (++attempts >= spec.max_retries)
        throw Error(ErrorKind::InfeasibleSeparation, "could not place identity " + std::to_string(g) + " at separation " +
                                                         std::to_string(spec.id_separation) + " in " +
                                                         std::to_string(spec.dim) + " dimensions");
    }
  }

  const int n_gaps = spec.gap_mode == GapMode::SharedOffset ? 1 : spec.num_ids;
  Matrix gaps(n_gaps, spec.dim);
  for (int g = 0; g < n_gaps; ++g) gaps.row(g) = spec.modality_gap * detail::random_direction(rng, spec.dim);

  auto draw = [&](int per_id, bool infrared, std::vector<long>& ids) {
    Matrix raw(static_cast<Index>(spec.num_ids) * per_id, spec.dim);
    Index row = 0;
    for (int g = 0; g < spec.num_ids; ++g) {
      const RowVector base =
          infrared ? RowVector(centers.row(g) + gaps.row(spec.gap_mode == GapMode::SharedOffset ? 0 : g))
                   : RowVector(centers.row(g));
      for (int k = 0; k < per_id; ++k, ++row) {
        for (int c = 0; c < spec.dim; ++c) raw(row, c) = base(c) + spec.blob_std * rng.gaussian();
        ids.push_back(g);
      }
    }
    return raw;
  };

  SynthData out;
  out.centers = centers;
  out.visible = l2_normalize_rows(draw(spec.per_id_v, false, out.gt.ids_v), Modality::Visible);
  out.infrared = l2_normalize_rows(draw(spec.per_id_r, true, out.gt.ids_r), Modality::Infrared);
  return out;
}

}  // namespace xmod
