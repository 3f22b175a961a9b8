#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "klfuse/assignment.hpp"
#include "klfuse/expfam.hpp"
#include "klfuse/fusion.hpp"
#include "klfuse/model.hpp"
#include "klfuse/synthgen.hpp"

namespace klfuse::io {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

inline json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vec vec_from_json(const json& a) {
  if (!a.is_array()) throw std::runtime_error("expected a numeric array");
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat mat_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty())
    throw std::runtime_error("expected a nested array matrix");
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_cols = static_cast<Eigen::Index>(rows[0].size());
  Mat m(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != n_cols)
      throw std::runtime_error("ragged matrix rows");
    for (Eigen::Index c = 0; c < n_cols; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

// ---------------------------------------------------------------------------
// components and bundles
// ---------------------------------------------------------------------------

inline json component_to_json(const ExpFamComponent& c) {
  json j;
  switch (c.family()) {
    case Family::diag_gaussian: {
      const auto& g = c.as_diag_gaussian();
      j["mean"] = vec_to_json(g.mean);
      j["variance"] = vec_to_json(g.variance);
      break;
    }
    case Family::dirichlet:
      j["concentration"] = vec_to_json(c.as_dirichlet().concentration);
      break;
    case Family::normal_wishart: {
      const auto& n = c.as_normal_wishart();
      j["location"] = vec_to_json(n.location);
      j["precision_scale"] = n.kappa;
      j["scale"] = mat_to_json(n.scale);
      j["dof"] = n.dof;
      break;
    }
  }
  return j;
}

// Components are rebuilt through the validating factories, so malformed
// parameters fail here rather than deep inside fusion.
inline ExpFamComponent component_from_json(Family family, const json& j) {
  switch (family) {
    case Family::diag_gaussian:
      return ExpFamComponent::diag_gaussian(vec_from_json(j.at("mean")),
                                            vec_from_json(j.at("variance")));
    case Family::dirichlet:
      return ExpFamComponent::dirichlet(vec_from_json(j.at("concentration")));
    case Family::normal_wishart:
      return ExpFamComponent::normal_wishart(
          vec_from_json(j.at("location")), j.at("precision_scale").get<double>(),
          mat_from_json(j.at("scale")), j.at("dof").get<double>());
  }
  throw std::logic_error("unreachable");
}

// On-disk form of a set of posterior bundles sharing one family/dimension.
struct BundleFile {
  Family family = Family::normal_wishart;
  int dim = 0;
  std::vector<PosteriorBundle> datasets;
};

inline json bundle_file_to_json(const BundleFile& file) {
  json j;
  j["version"] = kFormatVersion;
  j["family"] = family_name(file.family);
  j["dim"] = file.dim;
  json datasets = json::array();
  for (const auto& b : file.datasets) {
    json d;
    d["id"] = b.id;
    json comps = json::array();
    for (const auto& c : b.components) comps.push_back(component_to_json(c));
    d["components"] = std::move(comps);
    if (!b.weights.empty()) d["weights"] = b.weights;
    datasets.push_back(std::move(d));
  }
  j["datasets"] = std::move(datasets);
  return j;
}

inline BundleFile bundle_file_from_json(const json& j) {
  if (j.value("version", 0) != kFormatVersion)
    throw std::runtime_error("bundle file: unsupported version");
  BundleFile file;
  file.family = family_from_name(j.at("family").get<std::string>());
  file.dim = j.at("dim").get<int>();
  for (const auto& d : j.at("datasets")) {
    PosteriorBundle b;
    b.id = d.at("id").get<std::string>();
    for (const auto& c : d.at("components")) {
      b.components.push_back(component_from_json(file.family, c));
      if (b.components.back().dim() != file.dim)
        throw std::runtime_error("bundle file: component dimension mismatch in '" +
                                 b.id + "'");
    }
    if (d.contains("weights")) b.weights = d.at("weights").get<std::vector<double>>();
    file.datasets.push_back(std::move(b));
  }
  return file;
}

// ---------------------------------------------------------------------------
// fused models
// ---------------------------------------------------------------------------

struct FusedModelFile {
  Family family = Family::normal_wishart;
  int dim = 0;
  GlobalModel model;
  std::vector<AssignmentMatrix> assignments;
  std::vector<double> objective_trace;
  int iterations = 0;
  double cost_scale = 1.0;
  std::string mode = "heterogeneous";
  double lambda = 0.1;
  std::uint64_t seed = 0;
};

inline json fused_model_to_json(const FusedModelFile& file) {
  json j;
  j["version"] = kFormatVersion;
  j["kind"] = "fused_model";
  j["family"] = family_name(file.family);
  j["dim"] = file.dim;
  json comps = json::array();
  for (const auto& c : file.model.components) comps.push_back(component_to_json(c));
  j["components"] = std::move(comps);
  j["usage"] = file.model.usage;
  json assignments = json::array();
  for (const auto& a : file.assignments) assignments.push_back(a.row_to_col);
  j["assignments"] = std::move(assignments);
  j["objective_trace"] = file.objective_trace;
  j["iterations"] = file.iterations;
  j["cost_scale"] = file.cost_scale;
  j["mode"] = file.mode;
  j["lambda"] = file.lambda;
  j["seed"] = file.seed;
  return j;
}

inline FusedModelFile fused_model_from_json(const json& j) {
  if (j.value("version", 0) != kFormatVersion)
    throw std::runtime_error("fused model file: unsupported version");
  FusedModelFile file;
  file.family = family_from_name(j.at("family").get<std::string>());
  file.dim = j.at("dim").get<int>();
  for (const auto& c : j.at("components"))
    file.model.components.push_back(component_from_json(file.family, c));
  file.model.usage = j.at("usage").get<std::vector<int>>();
  for (const auto& a : j.at("assignments"))
    file.assignments.push_back(AssignmentMatrix{a.get<std::vector<int>>()});
  file.objective_trace = j.at("objective_trace").get<std::vector<double>>();
  file.iterations = j.at("iterations").get<int>();
  file.cost_scale = j.value("cost_scale", 1.0);
  file.mode = j.value("mode", "heterogeneous");
  file.lambda = j.value("lambda", 0.1);
  file.seed = j.value("seed", std::uint64_t{0});
  if (file.model.usage.size() != file.model.components.size())
    throw std::runtime_error("fused model file: usage/component size mismatch");
  return file;
}

// ---------------------------------------------------------------------------
// benchmark artifacts
// ---------------------------------------------------------------------------

inline json ground_truth_to_json(const GroundTruth& truth) {
  json j;
  j["version"] = kFormatVersion;
  j["kind"] = "ground_truth";
  j["dim"] = truth.dim;
  j["separation"] = truth.separation;
  json comps = json::array();
  for (const auto& c : truth.components) {
    json cj;
    cj["mean"] = vec_to_json(c.mean);
    cj["covariance"] = mat_to_json(c.covariance);
    cj["inclusion_probability"] = c.inclusion_probability;
    comps.push_back(std::move(cj));
  }
  j["components"] = std::move(comps);
  return j;
}

inline GroundTruth ground_truth_from_json(const json& j) {
  if (j.value("kind", "") != "ground_truth")
    throw std::runtime_error("expected a ground_truth file");
  GroundTruth truth;
  truth.dim = j.at("dim").get<int>();
  truth.separation = j.value("separation", 0.0);
  for (const auto& cj : j.at("components")) {
    GroundTruthComponent c;
    c.mean = vec_from_json(cj.at("mean"));
    c.covariance = mat_from_json(cj.at("covariance"));
    c.inclusion_probability = cj.at("inclusion_probability").get<double>();
    if (!detail::is_spd(c.covariance))
      throw std::runtime_error("ground truth: covariance not SPD");
    truth.components.push_back(std::move(c));
  }
  return truth;
}

inline json dataset_to_json(const std::string& id, const Mat& rows,
                            int true_component_count) {
  json j;
  j["version"] = kFormatVersion;
  j["kind"] = "dataset";
  j["id"] = id;
  j["dim"] = static_cast<int>(rows.cols());
  j["true_component_count"] = true_component_count;
  j["rows"] = mat_to_json(rows);
  return j;
}

struct DatasetFile {
  std::string id;
  int true_component_count = 0;
  Mat rows;
};

inline DatasetFile dataset_from_json(const json& j) {
  if (j.value("kind", "") != "dataset")
    throw std::runtime_error("expected a dataset file");
  DatasetFile file;
  file.id = j.at("id").get<std::string>();
  file.true_component_count = j.value("true_component_count", 0);
  file.rows = mat_from_json(j.at("rows"));
  if (!file.rows.allFinite()) throw std::runtime_error("dataset: non-finite entry");
  return file;
}

// ---------------------------------------------------------------------------
// sweep results
// ---------------------------------------------------------------------------

struct SweepRow {
  std::uint64_t seed = 0;
  double separation = 0.0;
  double noise = 0.0;
  std::string method;
  double hausdorff = 0.0;
  int size_error = 0;
  int fused_g = 0;
  double wall_seconds = 0.0;
};

inline const char* sweep_csv_header() {
  return "seed,separation,noise,method,hausdorff,size_error,fused_G,wall_seconds";
}

inline std::string sweep_row_to_csv(const SweepRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%s,%.17g,%d,%d,%.6f",
                static_cast<unsigned long long>(row.seed), row.separation,
                row.noise, row.method.c_str(), row.hausdorff, row.size_error,
                row.fused_g, row.wall_seconds);
  return buf;
}

// ---------------------------------------------------------------------------
// files
// ---------------------------------------------------------------------------

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_json(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace klfuse::io
