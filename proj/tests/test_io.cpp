#include <catch2/catch.hpp>

#include <cstdio>
#include <random>

#include "klfuse/io.hpp"
#include "test_support.hpp"

using namespace klfuse;
using namespace testsupport;

namespace {

bool bit_equal(const ExpFamComponent& a, const ExpFamComponent& b) {
  if (a.family() != b.family() || a.dim() != b.dim()) return false;
  switch (a.family()) {
    case Family::diag_gaussian: {
      const auto &x = a.as_diag_gaussian(), &y = b.as_diag_gaussian();
      return x.mean == y.mean && x.variance == y.variance;
    }
    case Family::dirichlet:
      return a.as_dirichlet().concentration == b.as_dirichlet().concentration;
    case Family::normal_wishart: {
      const auto &x = a.as_normal_wishart(), &y = b.as_normal_wishart();
      return x.location == y.location && x.kappa == y.kappa &&
             x.scale == y.scale && x.dof == y.dof;
    }
  }
  return false;
}

io::BundleFile random_bundle_file(std::mt19937_64& rng) {
  const Family family = kAllFamilies[rng() % kAllFamilies.size()];
  const int d = family == Family::dirichlet ? 2 + static_cast<int>(rng() % 3)
                                            : 1 + static_cast<int>(rng() % 3);
  io::BundleFile file;
  file.family = family;
  file.dim = d;
  const int n_datasets = 1 + static_cast<int>(rng() % 4);
  for (int j = 0; j < n_datasets; ++j) {
    PosteriorBundle b;
    b.id = "ds_" + std::to_string(j);
    const int l = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < l; ++i) b.components.push_back(random_component(rng, family, d));
    if (rng() % 2) {
      b.weights.assign(l, 0.0);
      double total = 0.0;
      for (double& w : b.weights) {
        w = uniform(rng, 0.1, 1.0);
        total += w;
      }
      for (double& w : b.weights) w /= total;
    }
    file.datasets.push_back(std::move(b));
  }
  return file;
}

}  // namespace

TEST_CASE("bundle files: write-then-read is bit-exact (smoke; 100 in acceptance)") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    auto file = random_bundle_file(rng);
    auto parsed = io::bundle_file_from_json(
        io::json::parse(io::bundle_file_to_json(file).dump()));
    REQUIRE(parsed.family == file.family);
    REQUIRE(parsed.dim == file.dim);
    REQUIRE(parsed.datasets.size() == file.datasets.size());
    for (std::size_t j = 0; j < file.datasets.size(); ++j) {
      CHECK(parsed.datasets[j].id == file.datasets[j].id);
      CHECK(parsed.datasets[j].weights == file.datasets[j].weights);
      REQUIRE(parsed.datasets[j].components.size() ==
              file.datasets[j].components.size());
      for (std::size_t i = 0; i < file.datasets[j].components.size(); ++i)
        CHECK(bit_equal(parsed.datasets[j].components[i],
                        file.datasets[j].components[i]));
    }
  }
}

TEST_CASE("bundle files: on-disk round trip") {
  std::mt19937_64 rng(73);
  auto file = random_bundle_file(rng);
  const std::string path = "/tmp/klfuse_test_bundle.json";
  io::write_json(path, io::bundle_file_to_json(file));
  auto parsed = io::bundle_file_from_json(io::read_json(path));
  REQUIRE(parsed.datasets.size() == file.datasets.size());
  for (std::size_t j = 0; j < file.datasets.size(); ++j)
    for (std::size_t i = 0; i < file.datasets[j].components.size(); ++i)
      CHECK(bit_equal(parsed.datasets[j].components[i],
                      file.datasets[j].components[i]));
  std::remove(path.c_str());
}

TEST_CASE("bundle files: malformed input is rejected") {
  CHECK_THROWS(io::bundle_file_from_json(io::json::parse(
      R"({"version":1,"family":"laplace","dim":1,"datasets":[]})")));
  CHECK_THROWS(io::bundle_file_from_json(io::json::parse(
      R"({"version":9,"family":"dirichlet","dim":1,"datasets":[]})")));
  // negative variance must fail the component factory on read
  CHECK_THROWS(io::bundle_file_from_json(io::json::parse(R"({
    "version":1,"family":"diag_gaussian","dim":1,
    "datasets":[{"id":"a","components":[{"mean":[0.0],"variance":[-1.0]}]}]})")));
}

TEST_CASE("fused model files: round trip with assignments and trace") {
  std::mt19937_64 rng(79);
  io::FusedModelFile file;
  file.family = Family::diag_gaussian;
  file.dim = 2;
  file.model.components = {random_diag_gaussian(rng, 2), random_diag_gaussian(rng, 2)};
  file.model.usage = {2, 1};
  file.assignments = {AssignmentMatrix{{0, 1}}, AssignmentMatrix{{0}}};
  file.objective_trace = {1.5, 0.25, 0.24999};
  file.iterations = 3;
  file.cost_scale = 3.25;
  file.seed = 42;

  auto parsed = io::fused_model_from_json(
      io::json::parse(io::fused_model_to_json(file).dump()));
  CHECK(parsed.model.usage == file.model.usage);
  CHECK(parsed.objective_trace == file.objective_trace);
  CHECK(parsed.iterations == 3);
  CHECK(parsed.cost_scale == 3.25);
  CHECK(parsed.seed == 42);
  REQUIRE(parsed.assignments.size() == 2);
  CHECK(parsed.assignments[0].row_to_col == std::vector<int>{0, 1});
  for (std::size_t i = 0; i < file.model.components.size(); ++i)
    CHECK(bit_equal(parsed.model.components[i], file.model.components[i]));
}

TEST_CASE("ground truth and dataset files: round trip and validation") {
  SynthConfig config;
  config.n_global = 3;
  config.dim = 4;
  config.n_datasets = 2;
  config.seed = 7;
  auto truth = generate_global(config);
  auto parsed = io::ground_truth_from_json(
      io::json::parse(io::ground_truth_to_json(truth).dump()));
  REQUIRE(parsed.size() == truth.size());
  for (int g = 0; g < truth.size(); ++g) {
    CHECK(parsed.components[g].mean == truth.components[g].mean);
    CHECK(parsed.components[g].covariance == truth.components[g].covariance);
    CHECK(parsed.components[g].inclusion_probability ==
          truth.components[g].inclusion_probability);
  }

  auto locals = generate_local_models(truth, config);
  Mat rows = sample_local_dataset(locals[0], 5, 1);
  auto ds = io::dataset_from_json(
      io::json::parse(io::dataset_to_json("d0", rows, locals[0].size()).dump()));
  CHECK(ds.id == "d0");
  CHECK(ds.true_component_count == locals[0].size());
  CHECK(ds.rows == rows);

  // a broken covariance must not parse
  auto j = io::ground_truth_to_json(truth);
  j["components"][0]["covariance"][0][0] = -100.0;
  CHECK_THROWS(io::ground_truth_from_json(j));
}

TEST_CASE("sweep rows: csv schema") {
  CHECK(std::string(io::sweep_csv_header()) ==
        "seed,separation,noise,method,hausdorff,size_error,fused_G,wall_seconds");
  io::SweepRow row;
  row.seed = 3;
  row.separation = 0.5;
  row.noise = 2.0;
  row.method = "kl_fusion";
  row.hausdorff = 1.25;
  row.size_error = 1;
  row.fused_g = 6;
  row.wall_seconds = 0.125;
  CHECK(io::sweep_row_to_csv(row) == "3,0.5,2,kl_fusion,1.25,1,6,0.125000");
}

TEST_CASE("read_json: missing file names the path") {
  CHECK_THROWS_WITH(io::read_json("/nonexistent/nope.json"),
                    Catch::Contains("nope.json"));
}
