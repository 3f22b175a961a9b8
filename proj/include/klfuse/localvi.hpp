#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "klfuse/expfam.hpp"
#include "klfuse/model.hpp"
#include "klfuse/rng.hpp"

namespace klfuse {

// Conjugate prior of the Bayesian Gaussian mixture: Normal-Wishart on each
// component's (mean, precision), symmetric Dirichlet on the weights.
struct GmmPrior {
  Vec m0;
  double kappa0 = 1.0;
  Mat w0;
  double nu0 = 0.0;
  double alpha0 = 1.0;

  void validate(int dim) const {
    if (m0.size() != dim) throw std::invalid_argument("gmm prior: m0 dimension mismatch");
    if (!(kappa0 > 0.0)) throw std::invalid_argument("gmm prior: kappa0 must be positive");
    if (w0.rows() != dim || w0.cols() != dim || !detail::is_spd(w0))
      throw std::invalid_argument("gmm prior: W0 must be SPD of matching dimension");
    if (!(nu0 > dim - 1)) throw std::invalid_argument("gmm prior: nu0 must exceed D - 1");
    if (!(alpha0 > 0.0)) throw std::invalid_argument("gmm prior: alpha0 must be positive");
  }

  // Weakly informative default: prior mean precision matches the inverse
  // data covariance, alpha0 = 1/K shrinks unused components away.
  static GmmPrior from_data(const Mat& data, int n_components) {
    const int d = static_cast<int>(data.cols());
    GmmPrior prior;
    prior.m0 = data.colwise().mean();
    prior.kappa0 = 1.0;
    prior.nu0 = d + 2.0;
    Mat centered = data.rowwise() - prior.m0.transpose();
    Mat cov = centered.transpose() * centered / std::max<double>(1.0, data.rows());
    cov += (1e-6 * cov.trace() / d + 1e-10) * Mat::Identity(d, d);
    prior.w0 = (prior.nu0 * cov).llt().solve(Mat::Identity(d, d));
    prior.w0 = (0.5 * (prior.w0 + prior.w0.transpose())).eval();
    prior.alpha0 = 1.0 / n_components;
    return prior;
  }
};

// Variational state: Dirichlet weights, per-component Normal-Wishart factors
// (kappa doubles as Bishop's beta_k), responsibilities.
struct GmmVariationalState {
  Vec alpha;
  std::vector<NormalWishartParams> components;
  Mat resp;  // n x K

  int n_components() const { return static_cast<int>(components.size()); }
};

namespace detail {

// ln rho_nk = E[ln pi_k] + E[ln N(x_n | mu_k, Lambda_k^-1)], the E-step
// scores before normalization.
inline Mat expected_log_scores(const Mat& data, const GmmVariationalState& s) {
  const int n = static_cast<int>(data.rows());
  const int d = static_cast<int>(data.cols());
  const int k = s.n_components();
  const double dg_total = digamma(s.alpha.sum());

  Mat scores(n, k);
  for (int c = 0; c < k; ++c) {
    const auto& nw = s.components[c];
    const double e_log_pi = digamma(s.alpha[c]) - dg_total;
    Eigen::LLT<Mat> llt(nw.scale);
    double logdet_w = 0.0;
    for (int i = 0; i < d; ++i) logdet_w += 2.0 * std::log(llt.matrixL()(i, i));
    const double e_logdet =
        multivariate_digamma(0.5 * nw.dof, d) + d * std::log(2.0) + logdet_w;

    Mat centered = data.rowwise() - nw.location.transpose();
    Vec quad =
        ((centered * nw.scale).cwiseProduct(centered)).rowwise().sum();
    scores.col(c) =
        (e_log_pi + 0.5 * e_logdet - 0.5 * d * std::log(2.0 * M_PI) -
         0.5 * d / nw.kappa) -
        (0.5 * nw.dof) * quad.array();
  }
  return scores;
}

}  // namespace detail

// Evidence lower bound of a consistent state, exact up to no constants at
// all: sum_n sum_k r(ln rho - ln r) minus the KL of each global factor from
// its prior. Valid for any responsibilities, maximal right after an E-step.
inline double elbo(const Mat& data, const GmmPrior& prior,
                   const GmmVariationalState& s) {
  const int n = static_cast<int>(data.rows());
  const int k = s.n_components();
  Mat scores = detail::expected_log_scores(data, s);

  double bound = 0.0;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) {
      const double r = s.resp(i, c);
      if (r > 0.0) bound += r * (scores(i, c) - std::log(r));
    }

  bound -= detail::kl_dirichlet(
      DirichletParams{s.alpha},
      DirichletParams{Vec::Constant(k, prior.alpha0)});
  const NormalWishartParams prior_nw{prior.m0, prior.kappa0, prior.w0, prior.nu0};
  for (int c = 0; c < k; ++c)
    bound -= detail::kl_normal_wishart(s.components[c], prior_nw);
  return bound;
}

struct VIResult {
  GmmVariationalState state;
  std::vector<double> elbo_trace;
  Vec effective_counts;  // N_k = sum_n r_nk at convergence

  // Components carrying at least `weight_floor` effective observations,
  // packaged for fusion. Weights are the normalized effective counts.
  PosteriorBundle export_bundle(const std::string& id,
                                double weight_floor = 1.0) const {
    PosteriorBundle bundle;
    bundle.id = id;
    double total = 0.0;
    for (int c = 0; c < state.n_components(); ++c) {
      if (effective_counts[c] < weight_floor) continue;
      const auto& nw = state.components[c];
      bundle.components.push_back(
          ExpFamComponent::normal_wishart(nw.location, nw.kappa, nw.scale, nw.dof));
      bundle.weights.push_back(effective_counts[c]);
      total += effective_counts[c];
    }
    for (double& w : bundle.weights) w /= total;
    return bundle;
  }
};

namespace detail {

// kmeans++ seeding on the data rows, hard assignment into one-hot
// responsibilities.
inline Mat init_responsibilities(const Mat& data, int k, std::uint64_t seed) {
  const int n = static_cast<int>(data.rows());
  std::mt19937_64 rng = make_stream(seed, Stream::vi_init);

  std::vector<int> centers;
  std::vector<double> mindist(n, std::numeric_limits<double>::infinity());
  centers.push_back(std::uniform_int_distribution<int>(0, n - 1)(rng));
  for (int i = 0; i < n; ++i)
    mindist[i] = (data.row(i) - data.row(centers[0])).squaredNorm();
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (double m : mindist) total += m;
    int pick = -1;
    if (total <= 0.0) {
      pick = static_cast<int>(centers.size()) % n;
    } else {
      const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += mindist[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = n - 1;
    }
    centers.push_back(pick);
    for (int i = 0; i < n; ++i)
      mindist[i] =
          std::min(mindist[i], (data.row(i) - data.row(pick)).squaredNorm());
  }

  Mat resp = Mat::Zero(n, k);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d = (data.row(i) - data.row(centers[0])).squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double d2 = (data.row(i) - data.row(centers[c])).squaredNorm();
      if (d2 < best_d) {
        best_d = d2;
        best = c;
      }
    }
    resp(i, best) = 1.0;
  }
  return resp;
}

}  // namespace detail

namespace detail {

struct CaviRun {
  GmmVariationalState state;
  std::vector<double> elbo_trace;
};

inline CaviRun run_cavi(const Mat& data, int n_components, const GmmPrior& prior,
                        int max_iters, double tol, std::uint64_t seed,
                        std::uint64_t restart);

}  // namespace detail

// Coordinate-ascent variational inference for the Bayesian Gaussian mixture
// (Normal-Wishart + Dirichlet conjugacy). Each restart runs CAVI from its own
// seeding until the ELBO's relative change drops below tol or max_iters
// sweeps; the restart with the best final bound wins. Restarts matter:
// single-seeding CAVI can lock a close component pair into one wide factor.
inline VIResult fit_bayesian_gmm(const Mat& data, int n_components,
                                 const GmmPrior& prior, int max_iters = 500,
                                 double tol = 1e-8, std::uint64_t seed = 0,
                                 int n_init = 4) {
  const int n = static_cast<int>(data.rows());
  const int d = static_cast<int>(data.cols());
  if (n_components < 1) throw std::invalid_argument("fit_bayesian_gmm: K < 1");
  if (n < n_components)
    throw std::invalid_argument("fit_bayesian_gmm: fewer points than components");
  if (!data.allFinite())
    throw std::invalid_argument("fit_bayesian_gmm: non-finite data");
  if (n_init < 1) throw std::invalid_argument("fit_bayesian_gmm: n_init < 1");
  prior.validate(d);

  detail::CaviRun best;
  for (int restart = 0; restart < n_init; ++restart) {
    auto run = detail::run_cavi(data, n_components, prior, max_iters, tol, seed,
                                restart);
    if (restart == 0 || run.elbo_trace.back() > best.elbo_trace.back())
      best = std::move(run);
  }

  VIResult result;
  result.elbo_trace = std::move(best.elbo_trace);
  result.effective_counts = best.state.resp.colwise().sum();
  result.state = std::move(best.state);
  return result;
}

namespace detail {

inline CaviRun run_cavi(const Mat& data, int n_components, const GmmPrior& prior,
                        int max_iters, double tol, std::uint64_t seed,
                        std::uint64_t restart) {
  const int n = static_cast<int>(data.rows());
  const int d = static_cast<int>(data.cols());

  GmmVariationalState state;
  state.resp = detail::init_responsibilities(data, n_components,
                                             splitmix64(seed ^ splitmix64(restart)));
  state.alpha = Vec::Constant(n_components, prior.alpha0);
  state.components.assign(
      n_components, NormalWishartParams{prior.m0, prior.kappa0, prior.w0, prior.nu0});

  Mat w0_inv = prior.w0.llt().solve(Mat::Identity(d, d));
  w0_inv = (0.5 * (w0_inv + w0_inv.transpose())).eval();

  CaviRun result;
  for (int iter = 0; iter < max_iters; ++iter) {
    // M-step: weighted sufficient statistics -> conjugate posterior updates
    for (int c = 0; c < n_components; ++c) {
      const Vec r = state.resp.col(c);
      const double nk = r.sum();
      Vec xbar = prior.m0;
      if (nk > 1e-12) xbar = (data.transpose() * r) / nk;

      Mat centered = data.rowwise() - xbar.transpose();
      Mat sk = centered.transpose() * (r.asDiagonal() * centered);

      const double beta = prior.kappa0 + nk;
      Vec m = (prior.kappa0 * prior.m0 + nk * xbar) / beta;
      const Vec dm = xbar - prior.m0;
      Mat winv = w0_inv + sk +
                 (prior.kappa0 * nk / (prior.kappa0 + nk)) * dm * dm.transpose();
      winv = (0.5 * (winv + winv.transpose())).eval();
      Mat w = winv.llt().solve(Mat::Identity(d, d));
      w = (0.5 * (w + w.transpose())).eval();

      state.alpha[c] = prior.alpha0 + nk;
      state.components[c] = NormalWishartParams{std::move(m), beta, std::move(w),
                                                prior.nu0 + nk};
    }

    // E-step: responsibilities from the expected log scores
    Mat scores = detail::expected_log_scores(data, state);
    for (int i = 0; i < n; ++i) {
      const double top = scores.row(i).maxCoeff();
      Eigen::ArrayXd shifted = (scores.row(i).array() - top).exp();
      state.resp.row(i) = shifted / shifted.sum();
    }

    result.elbo_trace.push_back(elbo(data, prior, state));
    const std::size_t t = result.elbo_trace.size();
    if (t >= 2) {
      const double prev = result.elbo_trace[t - 2];
      const double cur = result.elbo_trace[t - 1];
      if (std::abs(cur - prev) < tol * std::max(1.0, std::abs(cur))) break;
    }
  }

  result.state = std::move(state);
  return result;
}

}  // namespace detail

}  // namespace klfuse
