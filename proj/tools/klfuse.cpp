// klfuse: generate synthetic benchmarks, run local variational inference,
// fuse the resulting posterior bundles, and evaluate against ground truth.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "klfuse/fusion.hpp"
#include "klfuse/io.hpp"
#include "klfuse/localvi.hpp"
#include "klfuse/metrics.hpp"
#include "klfuse/synthgen.hpp"

namespace {

using namespace klfuse;

std::uint64_t env_default_seed() {
  if (const char* env = std::getenv("KLFUSE_SEED"))
    return std::strtoull(env, nullptr, 10);
  return 0;
}

std::string dataset_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "data_%03d.json", index);
  return buf;
}

PointSet mean_points(const std::vector<ExpFamComponent>& components) {
  std::vector<Vec> pts;
  pts.reserve(components.size());
  for (const auto& c : components) pts.push_back(c.mean_point());
  return PointSet(std::move(pts));
}

PointSet truth_means(const GroundTruth& truth) {
  std::vector<Vec> pts;
  pts.reserve(truth.components.size());
  for (const auto& c : truth.components) pts.push_back(c.mean);
  return PointSet(std::move(pts));
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  SynthConfig config;
};

int run_synth(const SynthArgs& args) {
  auto truth = generate_global(args.config);
  auto locals = generate_local_models(truth, args.config);
  std::filesystem::create_directories(args.out_dir);
  io::write_json(args.out_dir + "/truth.json", io::ground_truth_to_json(truth));
  for (int j = 0; j < args.config.n_datasets; ++j) {
    Mat rows = sample_local_dataset(locals[j], args.config.n_per_dataset,
                                    derive_seed(args.config.seed, j));
    io::write_json(args.out_dir + "/" + dataset_filename(j),
                   io::dataset_to_json("data_" + std::to_string(j), rows,
                                       locals[j].size()));
  }
  std::cout << "wrote truth.json and " << args.config.n_datasets
            << " dataset files to " << args.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// local-vi
// ---------------------------------------------------------------------------

struct LocalViArgs {
  std::vector<std::string> inputs;
  std::string out;
  int n_components = 0;  // 0: use the file's true component count
  int max_iters = 500;
  double tol = 1e-8;
  std::uint64_t seed = 0;
};

int run_local_vi(const LocalViArgs& args) {
  io::BundleFile bundle;
  bundle.family = Family::normal_wishart;
  for (std::size_t i = 0; i < args.inputs.size(); ++i) {
    auto ds = io::dataset_from_json(io::read_json(args.inputs[i]));
    int k = args.n_components;
    if (k <= 0) {
      k = ds.true_component_count;
      if (k <= 0)
        throw std::runtime_error(args.inputs[i] +
                                 ": no true component count recorded; pass --K");
    }
    auto prior = GmmPrior::from_data(ds.rows, k);
    auto fit = fit_bayesian_gmm(ds.rows, k, prior, args.max_iters, args.tol,
                                derive_seed(args.seed, i));
    bundle.datasets.push_back(fit.export_bundle(ds.id));
    bundle.dim = static_cast<int>(ds.rows.cols());
  }
  io::write_json(args.out, io::bundle_file_to_json(bundle));
  std::cout << "wrote bundle with " << bundle.datasets.size() << " datasets to "
            << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

struct FuseArgs {
  std::string bundle;
  std::string out;
  std::string mode = "heterogeneous";
  std::string init = "kmeanspp";
  bool approximate_sweep = false;
  FusionConfig config;
};

int run_fuse(const FuseArgs& args) {
  auto file = io::bundle_file_from_json(io::read_json(args.bundle));
  FusionConfig config = args.config;
  if (args.mode == "heterogeneous")
    config.mode = FusionMode::heterogeneous;
  else if (args.mode == "homogeneous")
    config.mode = FusionMode::homogeneous;
  else
    throw std::runtime_error("unknown mode: " + args.mode);
  if (args.init == "kmeanspp")
    config.init = FusionInit::kl_kmeanspp;
  else if (args.init == "first")
    config.init = FusionInit::first_dataset;
  else
    throw std::runtime_error("unknown init: " + args.init);
  if (args.approximate_sweep) config.sweep = SweepOrder::parallel_approximate;

  auto result = fuse(file.datasets, config);

  io::FusedModelFile out;
  out.family = file.family;
  out.dim = file.dim;
  out.model = result.global_model;
  out.assignments = result.assignments;
  out.objective_trace = result.objective_trace;
  out.iterations = result.iterations;
  out.cost_scale = result.cost_scale;
  out.mode = args.mode;
  out.lambda = config.lambda_base;
  out.seed = config.seed;
  io::write_json(args.out, io::fused_model_to_json(out));
  std::cout << "fused " << file.datasets.size() << " datasets into "
            << result.global_model.size() << " components in "
            << result.iterations << " iterations\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string truth;
  std::string csv;
  std::string method = "kl_fusion";
  double noise = 0.0;
  bool point_set = false;
};

int run_eval(const EvalArgs& args) {
  auto model = io::fused_model_from_json(io::read_json(args.model));
  auto truth = io::ground_truth_from_json(io::read_json(args.truth));

  const auto variant =
      args.point_set ? HausdorffVariant::point_set : HausdorffVariant::polytope;
  const double hausdorff = polytope_hausdorff(
      mean_points(model.model.components), truth_means(truth), variant);
  const int size_error = size_estimation_error(model.model.size(), truth.size());

  std::printf("hausdorff=%.17g size_error=%d fused_G=%d\n", hausdorff,
              size_error, model.model.size());

  if (!args.csv.empty()) {
    io::SweepRow row;
    row.seed = model.seed;
    row.separation = truth.separation;
    row.noise = args.noise;
    row.method = args.method;
    row.hausdorff = hausdorff;
    row.size_error = size_error;
    row.fused_g = model.model.size();
    row.wall_seconds = 0.0;
    std::string text;
    bool fresh = true;
    try {
      text = io::read_text(args.csv);
      fresh = text.empty();
    } catch (const std::runtime_error&) {
    }
    if (fresh) text = std::string(io::sweep_csv_header()) + "\n";
    text += io::sweep_row_to_csv(row) + "\n";
    io::write_text(args.csv, text);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string out;
  std::vector<double> sep_grid;
  std::vector<double> noise_grid;
  int n_seeds = 10;
  std::uint64_t base_seed = 0;
  int n_global = 5;
  int dim = 10;
  int n_datasets = 50;
  int n_per_dataset = 500;
  int vi_max_iters = 500;
  double vi_tol = 1e-8;
  double lambda = 0.1;
  int jobs = 1;
  std::vector<std::string> methods = {"kl_fusion"};
};

struct SweepCell {
  double separation;
  double noise;
  std::uint64_t seed;
  std::string method;
};

io::SweepRow run_cell(const SweepArgs& args, const SweepCell& cell) {
  SynthConfig config;
  config.n_global = args.n_global;
  config.dim = args.dim;
  config.n_datasets = args.n_datasets;
  config.n_per_dataset = args.n_per_dataset;
  config.separation = cell.separation;
  config.hetero_noise = cell.noise;
  config.seed = cell.seed;

  auto truth = generate_global(config);
  auto locals = generate_local_models(truth, config);

  io::SweepRow row;
  row.seed = cell.seed;
  row.separation = cell.separation;
  row.noise = cell.noise;
  row.method = cell.method;

  if (cell.method == "pooled_vi") {
    // oracle-style baseline: one VI fit on the concatenated data with the
    // true number of global components
    Mat pooled(args.n_datasets * args.n_per_dataset, args.dim);
    for (int j = 0; j < args.n_datasets; ++j)
      pooled.middleRows(j * args.n_per_dataset, args.n_per_dataset) =
          sample_local_dataset(locals[j], args.n_per_dataset,
                               derive_seed(cell.seed, j));
    auto prior = GmmPrior::from_data(pooled, truth.size());
    const auto start = std::chrono::steady_clock::now();
    auto fit = fit_bayesian_gmm(pooled, truth.size(), prior, args.vi_max_iters,
                                args.vi_tol, derive_seed(cell.seed, 0x9001));
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    auto bundle = fit.export_bundle("pooled");
    row.hausdorff =
        polytope_hausdorff(mean_points(bundle.components), truth_means(truth));
    row.size_error = size_estimation_error(bundle.size(), truth.size());
    row.fused_g = bundle.size();
    return row;
  }

  std::vector<PosteriorBundle> bundles;
  for (int j = 0; j < args.n_datasets; ++j) {
    Mat data = sample_local_dataset(locals[j], args.n_per_dataset,
                                    derive_seed(cell.seed, j));
    auto prior = GmmPrior::from_data(data, locals[j].size());
    auto fit = fit_bayesian_gmm(data, locals[j].size(), prior, args.vi_max_iters,
                                args.vi_tol, derive_seed(cell.seed, j));
    bundles.push_back(fit.export_bundle("data_" + std::to_string(j)));
  }

  FusionConfig fusion;
  fusion.lambda_base = args.lambda;
  fusion.seed = cell.seed;
  const auto start = std::chrono::steady_clock::now();
  auto result = fuse(bundles, fusion);
  row.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  row.hausdorff = polytope_hausdorff(mean_points(result.global_model.components),
                                     truth_means(truth));
  row.size_error = size_estimation_error(result.global_model.size(), truth.size());
  row.fused_g = result.global_model.size();
  return row;
}

int run_sweep(const SweepArgs& args) {
  std::vector<SweepCell> cells;
  for (double sep : args.sep_grid)
    for (double noise : args.noise_grid)
      for (int s = 0; s < args.n_seeds; ++s)
        for (const auto& method : args.methods)
          cells.push_back({sep, noise, args.base_seed + s, method});

  std::vector<io::SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      rows[i] = run_cell(args, cells[i]);
    }
  };
  const int n_threads =
      std::max<int>(1, std::min<int>(args.jobs, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::string text = std::string(io::sweep_csv_header()) + "\n";
  for (const auto& row : rows) text += io::sweep_row_to_csv(row) + "\n";
  io::write_text(args.out, text);
  std::cout << "wrote " << rows.size() << " rows to " << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KL-divergence fusion of mean-field posterior bundles"};
  app.require_subcommand(1);
  const std::uint64_t default_seed = env_default_seed();

  SynthArgs synth_args;
  synth_args.config.seed = default_seed;
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark");
  synth->add_option("--out-dir", synth_args.out_dir, "output directory")->required();
  synth->add_option("--G", synth_args.config.n_global, "true global components");
  synth->add_option("--D", synth_args.config.dim, "data dimension");
  synth->add_option("--J", synth_args.config.n_datasets, "number of datasets");
  synth->add_option("--n", synth_args.config.n_per_dataset, "points per dataset");
  synth->add_option("--sep", synth_args.config.separation, "separation scale s");
  synth->add_option("--noise", synth_args.config.hetero_noise,
                    "heterogeneity noise sigma");
  synth->add_option("--seed", synth_args.config.seed, "random seed");

  LocalViArgs vi_args;
  vi_args.seed = default_seed;
  auto* vi = app.add_subcommand("local-vi", "fit local mean-field posteriors");
  vi->add_option("data", vi_args.inputs, "dataset files")->required();
  vi->add_option("--out", vi_args.out, "output bundle file")->required();
  vi->add_option("--K", vi_args.n_components,
                 "components per fit (default: the file's true count)");
  vi->add_option("--max-iters", vi_args.max_iters, "CAVI iteration cap");
  vi->add_option("--tol", vi_args.tol, "ELBO relative tolerance");
  vi->add_option("--seed", vi_args.seed, "random seed");

  FuseArgs fuse_args;
  fuse_args.config.seed = default_seed;
  auto* fuse_cmd = app.add_subcommand("fuse", "fuse a posterior bundle");
  fuse_cmd->add_option("--bundle", fuse_args.bundle, "input bundle file")->required();
  fuse_cmd->add_option("--out", fuse_args.out, "output fused model file")->required();
  fuse_cmd->add_option("--mode", fuse_args.mode, "homogeneous|heterogeneous");
  fuse_cmd->add_option("--lambda", fuse_args.config.lambda_base, "regularizer weight");
  fuse_cmd->add_option("--max-iters", fuse_args.config.max_iters, "iteration cap");
  fuse_cmd->add_option("--tol", fuse_args.config.rel_tol,
                       "relative objective tolerance");
  fuse_cmd->add_option("--seed", fuse_args.config.seed, "random seed");
  fuse_cmd->add_option("--init", fuse_args.init, "kmeanspp|first");
  fuse_cmd->add_flag("--approximate-sweep", fuse_args.approximate_sweep,
                     "Jacobi dataset sweep: parallelizable, no monotone-descent guarantee");

  EvalArgs eval_args;
  auto* eval_cmd =
      app.add_subcommand("eval", "evaluate a fused model against ground truth");
  eval_cmd->add_option("--model", eval_args.model, "fused model file")->required();
  eval_cmd->add_option("--truth", eval_args.truth, "ground truth file")->required();
  eval_cmd->add_option("--csv", eval_args.csv, "append a CSV row to this file");
  eval_cmd->add_option("--method", eval_args.method, "method label for the CSV row");
  eval_cmd->add_option("--noise", eval_args.noise, "noise label for the CSV row");
  eval_cmd->add_flag("--point-set", eval_args.point_set,
                     "use the point-set Hausdorff variant (diagnostic, non-canonical)");

  SweepArgs sweep_args;
  sweep_args.base_seed = default_seed;
  auto* sweep_cmd =
      app.add_subcommand("sweep", "run the synth->vi->fuse->eval grid");
  sweep_cmd->add_option("--out", sweep_args.out, "output CSV")->required();
  sweep_cmd->add_option("--sep-grid", sweep_args.sep_grid, "separation grid")
      ->delimiter(',');
  sweep_cmd->add_option("--noise-grid", sweep_args.noise_grid, "noise grid")
      ->delimiter(',');
  double fixed_sep = 0.5, fixed_noise = 0.5;
  sweep_cmd->add_option("--sep", fixed_sep, "fixed separation (when no --sep-grid)");
  sweep_cmd->add_option("--noise", fixed_noise, "fixed noise (when no --noise-grid)");
  sweep_cmd->add_option("--seeds", sweep_args.n_seeds, "seeds per grid cell");
  sweep_cmd->add_option("--seed", sweep_args.base_seed, "base seed");
  sweep_cmd->add_option("--G", sweep_args.n_global, "true global components");
  sweep_cmd->add_option("--D", sweep_args.dim, "data dimension");
  sweep_cmd->add_option("--J", sweep_args.n_datasets, "number of datasets");
  sweep_cmd->add_option("--n", sweep_args.n_per_dataset, "points per dataset");
  sweep_cmd->add_option("--lambda", sweep_args.lambda, "fusion regularizer weight");
  sweep_cmd->add_option("--vi-max-iters", sweep_args.vi_max_iters, "CAVI iteration cap");
  sweep_cmd->add_option("--vi-tol", sweep_args.vi_tol, "CAVI ELBO tolerance");
  sweep_cmd->add_option("--jobs", sweep_args.jobs, "concurrent grid cells");
  sweep_cmd->add_option("--methods", sweep_args.methods, "kl_fusion and/or pooled_vi")
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (vi->parsed()) return run_local_vi(vi_args);
    if (fuse_cmd->parsed()) return run_fuse(fuse_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (sweep_cmd->parsed()) {
      if (sweep_args.sep_grid.empty()) sweep_args.sep_grid = {fixed_sep};
      if (sweep_args.noise_grid.empty()) sweep_args.noise_grid = {fixed_noise};
      for (const auto& m : sweep_args.methods)
        if (m != "kl_fusion" && m != "pooled_vi")
          throw std::runtime_error("unknown method: " + m);
      return run_sweep(sweep_args);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
