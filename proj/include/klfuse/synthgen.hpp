#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "klfuse/expfam.hpp"
#include "klfuse/rng.hpp"

namespace klfuse {

// Generating process for the heterogeneous Gaussian-mixture benchmark:
// G global components in D dimensions, J local datasets drawing noisy
// subsets of them.
struct SynthConfig {
  int n_global = 5;       // G
  int dim = 10;           // D
  int n_datasets = 50;    // J
  double separation = 0.5;     // s; global means drawn with variance s*G
  double hetero_noise = 0.5;   // sigma; std of the per-dataset mean noise
  int n_per_dataset = 500;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_global < 1 || dim < 1 || n_datasets < 1 || n_per_dataset < 1)
      throw std::invalid_argument("synth config: counts must be positive");
    if (!(separation > 0.0))
      throw std::invalid_argument("synth config: separation must be positive");
    if (hetero_noise < 0.0)
      throw std::invalid_argument("synth config: negative noise");
  }
};

struct GroundTruthComponent {
  Vec mean;
  Mat covariance;
  double inclusion_probability;
};

struct GroundTruth {
  int dim = 0;
  double separation = 0.0;
  std::vector<GroundTruthComponent> components;

  int size() const { return static_cast<int>(components.size()); }
};

struct LocalMixtureComponent {
  int source;  // index into the ground truth
  Vec mean;
  Mat covariance;
};

struct LocalMixture {
  std::vector<LocalMixtureComponent> components;
  Vec weights;

  int size() const { return static_cast<int>(components.size()); }
};

namespace detail {

inline Vec sample_standard_normal(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

// Random orthogonal matrix: QR of a Gaussian matrix with the R-diagonal
// sign fix (otherwise Q is not Haar distributed).
inline Mat random_orthogonal(int d, std::mt19937_64& rng) {
  Mat a(d, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ();
  Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < d; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  return q;
}

}  // namespace detail

// Global means from N(0, I*s*G), covariances Q diag(U(0.5,1.5)) Q^T, and
// per-component inclusion probabilities U(0.3, 0.9).
inline GroundTruth generate_global(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng = make_stream(config.seed, Stream::synth_global);
  const double sigma0 = std::sqrt(config.separation * config.n_global);

  GroundTruth truth;
  truth.dim = config.dim;
  truth.separation = config.separation;
  for (int g = 0; g < config.n_global; ++g) {
    GroundTruthComponent comp;
    comp.mean = sigma0 * detail::sample_standard_normal(config.dim, rng);
    Mat q = detail::random_orthogonal(config.dim, rng);
    Vec eig(config.dim);
    for (int i = 0; i < config.dim; ++i)
      eig[i] = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    comp.covariance = q * eig.asDiagonal() * q.transpose();
    comp.covariance = (0.5 * (comp.covariance + comp.covariance.transpose())).eval();
    comp.inclusion_probability =
        std::uniform_real_distribution<double>(0.3, 0.9)(rng);
    truth.components.push_back(std::move(comp));
  }
  return truth;
}

// Per dataset: Bernoulli subset of the global components (resampled until
// nonempty), means perturbed by N(0, sigma^2 I), covariances redrawn from a
// mean-preserving Wishart, weights from a symmetric Dirichlet(1). A noise
// level of exactly zero keeps the covariances unperturbed as well, so the
// datasets are fully homogeneous.
inline std::vector<LocalMixture> generate_local_models(const GroundTruth& truth,
                                                       const SynthConfig& config) {
  config.validate();
  if (truth.size() < 1) throw std::invalid_argument("ground truth: empty");
  const int d = truth.dim;

  std::vector<LocalMixture> locals;
  locals.reserve(config.n_datasets);
  for (int j = 0; j < config.n_datasets; ++j) {
    std::mt19937_64 rng = make_stream(config.seed, Stream::synth_local, j);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<int> included;
    while (included.empty()) {
      for (int g = 0; g < truth.size(); ++g)
        if (unit(rng) < truth.components[g].inclusion_probability)
          included.push_back(g);
    }

    LocalMixture mix;
    for (int g : included) {
      const auto& src = truth.components[g];
      LocalMixtureComponent comp;
      comp.source = g;
      comp.mean = src.mean + config.hetero_noise *
                                 detail::sample_standard_normal(d, rng);
      if (config.hetero_noise > 0.0) {
        const double df = d + 2.0;
        comp.covariance = detail::sample_wishart(src.covariance / df, df, rng);
        comp.covariance =
            (0.5 * (comp.covariance + comp.covariance.transpose())).eval();
      } else {
        comp.covariance = src.covariance;
      }
      mix.components.push_back(std::move(comp));
    }

    Vec w(mix.size());
    for (int i = 0; i < mix.size(); ++i) {
      std::gamma_distribution<double> gamma(1.0, 1.0);
      w[i] = gamma(rng);
    }
    mix.weights = w / w.sum();
    locals.push_back(std::move(mix));
  }
  return locals;
}

// i.i.d. mixture draws: component by weight, then a full-covariance Gaussian.
inline Mat sample_local_dataset(const LocalMixture& local, int n,
                                std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_local_dataset: n < 1");
  if (local.size() < 1) throw std::invalid_argument("sample_local_dataset: empty mixture");
  const int d = static_cast<int>(local.components[0].mean.size());
  std::mt19937_64 rng = make_stream(seed, Stream::synth_data);

  std::vector<Eigen::LLT<Mat>> chols;
  chols.reserve(local.size());
  for (const auto& c : local.components) chols.emplace_back(c.covariance);

  std::vector<double> cumulative(local.size());
  double acc = 0.0;
  for (int i = 0; i < local.size(); ++i) {
    acc += local.weights[i];
    cumulative[i] = acc;
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Mat data(n, d);
  for (int row = 0; row < n; ++row) {
    const double r = unit(rng) * acc;
    int k = 0;
    while (k + 1 < local.size() && cumulative[k] < r) ++k;
    const Vec z = detail::sample_standard_normal(d, rng);
    data.row(row) =
        (local.components[k].mean + chols[k].matrixL() * z).transpose();
  }
  return data;
}

}  // namespace klfuse
