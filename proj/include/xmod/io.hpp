#pragma once

// File formats:
//   features, binary  "MFV1" | u32 LE N | u32 LE d | N*d f32 LE, row-major
//   features, text    CSV header f0,...,f{d-1}; one instance per line
//   labels            CSV index,hard_label[,p0..p{K-1}]; hard_label -1 = noise
//   ground truth      CSV modality,index,identity with modality in {v,r}
//   config/reports    JSON objects

#include "xmod/core.hpp"
#include "xmod/eval.hpp"
#include "xmod/losses.hpp"
#include "xmod/mult.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace xmod::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "MFV1 I/O assumes a little-endian host");

/// Writes through a sibling temp file and renames it into place.
inline void write_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

inline std::string encode_mfv1(const Matrix& m) {
  std::string out = "MFV1";
  const auto n = static_cast<std::uint32_t>(m.rows());
  const auto d = static_cast<std::uint32_t>(m.cols());
  out.append(reinterpret_cast<const char*>(&n), 4);
  out.append(reinterpret_cast<const char*>(&d), 4);
  out.reserve(out.size() + static_cast<std::size_t>(m.size()) * 4);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      const float f = static_cast<float>(m(i, j));
      out.append(reinterpret_cast<const char*>(&f), 4);
    }
  return out;
}

inline Matrix decode_mfv1(const std::string& bytes, const std::string& what = "MFV1 data") {
  require(bytes.size() >= 12 && bytes.compare(0, 4, "MFV1") == 0, ErrorKind::Parse, what + ": bad magic");
  std::uint32_t n = 0, d = 0;
  std::memcpy(&n, bytes.data() + 4, 4);
  std::memcpy(&d, bytes.data() + 8, 4);
  const std::size_t expect = 12 + static_cast<std::size_t>(n) * d * 4;
  require(bytes.size() == expect, ErrorKind::Parse,
          what + ": expected " + std::to_string(expect) + " bytes, got " + std::to_string(bytes.size()));
  Matrix m(static_cast<Index>(n), static_cast<Index>(d));
  const char* p = bytes.data() + 12;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j, p += 4) {
      float f = 0;
      std::memcpy(&f, p, 4);
      m(i, j) = f;
    }
  return m;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, where + ": not a number '" + s + "'");
  }
}

inline long parse_long(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, where + ": not an integer '" + s + "'");
  }
}

inline Matrix decode_feature_csv(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Parse, what + ": empty file");
  const auto header = split(line);
  for (std::size_t j = 0; j < header.size(); ++j)
    require(header[j] == "f" + std::to_string(j), ErrorKind::Parse, what + ": bad header column '" + header[j] + "'");
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    require(cells.size() == header.size(), ErrorKind::Parse, what + ":" + std::to_string(lineno) + ": wrong column count");
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(parse_double(c, what + ":" + std::to_string(lineno)));
    rows.push_back(std::move(r));
  }
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < header.size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return m;
}

inline std::string encode_feature_csv(const Matrix& m) {
  std::string out;
  for (Index j = 0; j < m.cols(); ++j) out += (j ? ",f" : "f") + std::to_string(j);
  out += '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out += (j ? "," : "") + format_double(m(i, j));
    out += '\n';
  }
  return out;
}

inline bool is_csv(const fs::path& p) { return p.extension() == ".csv"; }

/// Raw matrix from a .csv feature file or an MFV1 file (any other extension).
inline Matrix read_matrix(const fs::path& path) {
  const std::string bytes = read_file(path);
  return is_csv(path) ? decode_feature_csv(bytes, path.string()) : decode_mfv1(bytes, path.string());
}

inline FeatureMatrix read_features(const fs::path& path, Modality m) {
  return l2_normalize_rows(read_matrix(path), m);
}

inline void write_matrix(const fs::path& path, const Matrix& m) {
  write_atomic(path, is_csv(path) ? encode_feature_csv(m) : encode_mfv1(m));
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// Label CSV with soft columns; instances outside `rows` are written with
/// hard label -1 and all-zero probabilities.
inline std::string encode_labels(const InstanceLabels& l) {
  const Index k = l.probs.space_size();
  std::string out = "index,hard_label";
  for (Index j = 0; j < k; ++j) out += ",p" + std::to_string(j);
  out += '\n';
  std::vector<Index> slot(static_cast<std::size_t>(l.total), -1);
  for (std::size_t r = 0; r < l.rows.size(); ++r) slot[static_cast<std::size_t>(l.rows[r])] = static_cast<Index>(r);
  const HardLabelVector hard = l.hard();
  for (Index i = 0; i < l.total; ++i) {
    out += std::to_string(i) + "," + std::to_string(hard[static_cast<std::size_t>(i)]);
    const Index r = slot[static_cast<std::size_t>(i)];
    for (Index j = 0; j < k; ++j) out += "," + (r < 0 ? std::string("0") : format_double(l.probs.probs()(r, j)));
    out += '\n';
  }
  return out;
}

/// Hard-only label CSV (e.g. cluster assignments).
inline std::string encode_hard_labels(const HardLabelVector& h) {
  std::string out = "index,hard_label\n";
  for (std::size_t i = 0; i < h.size(); ++i) out += std::to_string(i) + "," + std::to_string(h[i]) + "\n";
  return out;
}

struct LabelFile {
  HardLabelVector hard;
  Matrix soft;  // total x K, empty when the file has no soft columns
};

inline LabelFile decode_labels(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Parse, what + ": empty file");
  const auto header = split(line);
  require(header.size() >= 2 && header[0] == "index" && header[1] == "hard_label", ErrorKind::Parse,
          what + ": header must start with index,hard_label");
  const std::size_t k = header.size() - 2;
  for (std::size_t j = 0; j < k; ++j)
    require(header[j + 2] == "p" + std::to_string(j), ErrorKind::Parse, what + ": bad soft column '" + header[j + 2] + "'");
  std::vector<std::pair<long, std::vector<double>>> rows;
  std::vector<long> idx;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    const std::string where = what + ":" + std::to_string(lineno);
    require(cells.size() == header.size(), ErrorKind::Parse, where + ": wrong column count");
    idx.push_back(parse_long(cells[0], where));
    std::vector<double> soft;
    for (std::size_t j = 0; j < k; ++j) soft.push_back(parse_double(cells[j + 2], where));
    rows.emplace_back(parse_long(cells[1], where), std::move(soft));
  }
  LabelFile f;
  f.hard.labels.assign(rows.size(), kNoise);
  f.soft = Matrix::Zero(static_cast<Index>(k ? rows.size() : 0), static_cast<Index>(k));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(idx[r] >= 0 && static_cast<std::size_t>(idx[r]) < rows.size(), ErrorKind::Parse,
            what + ": index " + std::to_string(idx[r]) + " out of range");
    const auto i = static_cast<std::size_t>(idx[r]);
    const long h = rows[r].first;
    require(h >= kNoise, ErrorKind::Parse, what + ": negative label other than -1");
    f.hard.labels[i] = static_cast<int>(h);
    for (std::size_t j = 0; j < k; ++j) f.soft(static_cast<Index>(i), static_cast<Index>(j)) = rows[r].second[j];
  }
  return f;
}

inline LabelFile read_labels(const fs::path& path) { return decode_labels(read_file(path), path.string()); }

/// InstanceLabels from a label file with soft columns; -1 rows are excluded.
inline InstanceLabels to_instance_labels(const LabelFile& f, const std::string& what) {
  require(f.soft.cols() > 0, ErrorKind::Parse, what + ": soft label columns are required");
  InstanceLabels l;
  l.total = static_cast<Index>(f.hard.size());
  for (std::size_t i = 0; i < f.hard.size(); ++i)
    if (f.hard[i] != kNoise) l.rows.push_back(static_cast<Index>(i));
  Matrix m(static_cast<Index>(l.rows.size()), f.soft.cols());
  for (std::size_t r = 0; r < l.rows.size(); ++r) m.row(static_cast<Index>(r)) = f.soft.row(l.rows[r]);
  l.probs = SoftLabelMatrix(std::move(m));
  return l;
}

/// Cluster assignment from a hard label CSV; k = max label + 1.
inline ClusterAssignment to_assignment(const LabelFile& f) {
  ClusterAssignment a;
  a.labels = f.hard;
  for (int l : f.hard.labels) a.k = std::max(a.k, l + 1);
  return a;
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

inline std::string encode_ground_truth(const GroundTruth& gt) {
  std::string out = "modality,index,identity\n";
  for (std::size_t i = 0; i < gt.ids_v.size(); ++i) out += "v," + std::to_string(i) + "," + std::to_string(gt.ids_v[i]) + "\n";
  for (std::size_t i = 0; i < gt.ids_r.size(); ++i) out += "r," + std::to_string(i) + "," + std::to_string(gt.ids_r[i]) + "\n";
  return out;
}

inline GroundTruth decode_ground_truth(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Parse, what + ": empty file");
  const auto header = split(line);
  require(header == std::vector<std::string>{"modality", "index", "identity"}, ErrorKind::Parse,
          what + ": header must be modality,index,identity");
  std::vector<std::pair<long, long>> v, r;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    const std::string where = what + ":" + std::to_string(lineno);
    require(cells.size() == 3, ErrorKind::Parse, where + ": wrong column count");
    auto entry = std::make_pair(parse_long(cells[1], where), parse_long(cells[2], where));
    if (cells[0] == "v")
      v.push_back(entry);
    else if (cells[0] == "r")
      r.push_back(entry);
    else
      throw Error(ErrorKind::Parse, where + ": modality must be v or r");
  }
  auto place = [&](const std::vector<std::pair<long, long>>& src) {
    std::vector<long> ids(src.size(), 0);
    std::vector<bool> seen(src.size(), false);
    for (const auto& [i, id] : src) {
      require(i >= 0 && static_cast<std::size_t>(i) < src.size() && !seen[static_cast<std::size_t>(i)], ErrorKind::Parse,
              what + ": indices must be a permutation of 0..N-1");
      seen[static_cast<std::size_t>(i)] = true;
      ids[static_cast<std::size_t>(i)] = id;
    }
    return ids;
  };
  return GroundTruth{place(v), place(r)};
}

inline GroundTruth read_ground_truth(const fs::path& path) {
  return decode_ground_truth(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline DistanceMetric parse_metric(const std::string& s) {
  if (s == "euclidean") return DistanceMetric::Euclidean;
  if (s == "jaccard") return DistanceMetric::JaccardDistance;
  throw Error(ErrorKind::Parse, "unknown metric '" + s + "' (euclidean|jaccard)");
}

inline const char* to_string(DistanceMetric m) { return m == DistanceMetric::Euclidean ? "euclidean" : "jaccard"; }

inline json to_json(const PipelineConfig& c) {
  return json{{"tau", c.tau},
              {"mu", c.mu},
              {"kappa", c.kappa},
              {"lambda", c.lambda},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"dbscan_eps", c.dbscan_eps},
              {"dbscan_min_samples", c.dbscan_min_samples},
              {"dbscan_metric", to_string(c.dbscan_metric)},
              {"epsilon0", c.epsilon0},
              {"max_transfer_iters", c.max_transfer_iters},
              {"sharpen_divisor", c.sharpen_divisor},
              {"batch_size", c.batch_size},
              {"seed", c.seed}};
}

/// Overrides fields of `base` with the keys present in `j`.
inline PipelineConfig config_from_json(const json& j, PipelineConfig base = {}) {
  require(j.is_object(), ErrorKind::Parse, "config must be a JSON object");
  const json known = to_json(base);
  for (const auto& [key, value] : j.items())
    require(known.contains(key), ErrorKind::Parse, "unknown config key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("tau", base.tau);
    get("mu", base.mu);
    get("kappa", base.kappa);
    get("lambda", base.lambda);
    get("alpha", base.alpha);
    get("beta", base.beta);
    get("dbscan_eps", base.dbscan_eps);
    get("dbscan_min_samples", base.dbscan_min_samples);
    if (j.contains("dbscan_metric")) base.dbscan_metric = parse_metric(j.at("dbscan_metric").get<std::string>());
    get("epsilon0", base.epsilon0);
    get("max_transfer_iters", base.max_transfer_iters);
    get("sharpen_divisor", base.sharpen_divisor);
    get("batch_size", base.batch_size);
    get("seed", base.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("config: ") + e.what());
  }
  base.validate();
  return base;
}

inline PipelineConfig read_config(const fs::path& path, PipelineConfig base = {}) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  return config_from_json(j, base);
}

inline json metric_json(const Metric& m) { return m ? json(*m) : json(nullptr); }

inline json to_json(const MetricsReport& r) {
  json j = json::object();
  for (const auto& [name, value] : r.entries()) j[name] = metric_json(value);
  return j;
}

inline json to_json(const LossReport& r) {
  return json{{"l_im_v", r.l_im_v}, {"l_im_r", r.l_im_r},     {"l_cm", r.l_cm},
              {"l_oclr_v", r.l_oclr_v}, {"l_oclr_r", r.l_oclr_r}, {"total", r.total}};
}

inline json to_json(const InconsistencyReport& r) {
  return json{{"t", r.t},
              {"homogeneous_src", r.homogeneous_src},
              {"homogeneous_tgt", r.homogeneous_tgt},
              {"heterogeneous_src", r.heterogeneous_src},
              {"heterogeneous_tgt", r.heterogeneous_tgt},
              {"self_src", r.self_src},
              {"self_tgt", r.self_tgt},
              {"weighted_total", r.weighted_total}};
}

inline void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

}  // namespace xmod::io
