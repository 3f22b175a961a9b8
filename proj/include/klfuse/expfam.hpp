#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "klfuse/rng.hpp"

namespace klfuse {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Family { diag_gaussian, dirichlet, normal_wishart };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::diag_gaussian: return "diag_gaussian";
    case Family::dirichlet: return "dirichlet";
    case Family::normal_wishart: return "normal_wishart";
  }
  return "unknown";
}

inline Family family_from_name(const std::string& name) {
  if (name == "diag_gaussian") return Family::diag_gaussian;
  if (name == "dirichlet") return Family::dirichlet;
  if (name == "normal_wishart") return Family::normal_wishart;
  throw std::invalid_argument("unknown family tag: " + name);
}

// Degenerate posteriors coming out of VI must not blow up the KL terms, so
// near-zero variances and concentrations are clamped at construction.
inline constexpr double kVarianceFloor = 1e-12;
inline constexpr double kAlphaFloor = 1e-8;

// ---------------------------------------------------------------------------
// special functions
// ---------------------------------------------------------------------------

inline double ln_gamma(double x) { return std::lgamma(x); }

inline double digamma(double x) { return boost::math::digamma(x); }

// ln Gamma_D(a) = D(D-1)/4 ln pi + sum_{i=1}^{D} ln Gamma(a + (1-i)/2)
inline double multivariate_ln_gamma(double a, int d) {
  double r = 0.25 * d * (d - 1) * std::log(M_PI);
  for (int i = 1; i <= d; ++i) r += std::lgamma(a + 0.5 * (1 - i));
  return r;
}

inline double multivariate_digamma(double a, int d) {
  double r = 0.0;
  for (int i = 1; i <= d; ++i) r += digamma(a + 0.5 * (1 - i));
  return r;
}

// ---------------------------------------------------------------------------
// component parameter records
// ---------------------------------------------------------------------------

struct DiagGaussianParams {
  Vec mean;
  Vec variance;
};

struct DirichletParams {
  Vec concentration;
};

struct NormalWishartParams {
  Vec location;   // m
  double kappa;   // precision scale on the mean
  Mat scale;      // W, SPD
  double dof;     // nu > D - 1
};

namespace detail {

inline void require_finite(const Vec& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw std::invalid_argument(std::string(what) + ": entry " +
                                  std::to_string(i) + " is not finite");
}

inline void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite())
    throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

// Symmetry + positive definiteness via LLT. The matrix is assumed finite.
inline bool is_spd(const Mat& m) {
  if (m.rows() != m.cols()) return false;
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) return false;
  Eigen::LLT<Mat> llt(m);
  return llt.info() == Eigen::Success;
}

}  // namespace detail

// A single mean-field factor q(z|theta): family tag plus standard parameters.
// Invariants are enforced at construction; instances are immutable values.
class ExpFamComponent {
 public:
  static ExpFamComponent diag_gaussian(Vec mean, Vec variance) {
    detail::require_finite(mean, "diag_gaussian mean");
    detail::require_finite(variance, "diag_gaussian variance");
    if (mean.size() == 0)
      throw std::invalid_argument("diag_gaussian mean: empty");
    if (mean.size() != variance.size())
      throw std::invalid_argument("diag_gaussian variance: size mismatch with mean");
    for (Eigen::Index i = 0; i < variance.size(); ++i) {
      if (variance[i] < 0.0)
        throw std::invalid_argument("diag_gaussian variance: entry " +
                                    std::to_string(i) + " is negative");
      if (variance[i] < kVarianceFloor) variance[i] = kVarianceFloor;
    }
    return ExpFamComponent(DiagGaussianParams{std::move(mean), std::move(variance)});
  }

  static ExpFamComponent dirichlet(Vec concentration) {
    detail::require_finite(concentration, "dirichlet concentration");
    if (concentration.size() == 0)
      throw std::invalid_argument("dirichlet concentration: empty");
    for (Eigen::Index i = 0; i < concentration.size(); ++i) {
      if (concentration[i] < 0.0)
        throw std::invalid_argument("dirichlet concentration: entry " +
                                    std::to_string(i) + " is negative");
      if (concentration[i] < kAlphaFloor) concentration[i] = kAlphaFloor;
    }
    return ExpFamComponent(DirichletParams{std::move(concentration)});
  }

  static ExpFamComponent normal_wishart(Vec location, double kappa, Mat scale,
                                        double dof) {
    const int d = static_cast<int>(location.size());
    detail::require_finite(location, "normal_wishart location");
    detail::require_finite(scale, "normal_wishart scale");
    if (d == 0) throw std::invalid_argument("normal_wishart location: empty");
    if (!std::isfinite(kappa) || kappa <= 0.0)
      throw std::invalid_argument("normal_wishart kappa: must be positive");
    if (scale.rows() != d || scale.cols() != d)
      throw std::invalid_argument("normal_wishart scale: shape mismatch");
    if (!detail::is_spd(scale))
      throw std::invalid_argument("normal_wishart scale: not symmetric positive definite");
    if (!std::isfinite(dof) || dof <= d - 1)
      throw std::invalid_argument("normal_wishart dof: must exceed D - 1");
    Mat w = 0.5 * (scale + scale.transpose());
    return ExpFamComponent(NormalWishartParams{std::move(location), kappa, std::move(w), dof});
  }

  Family family() const {
    if (std::holds_alternative<DiagGaussianParams>(params_)) return Family::diag_gaussian;
    if (std::holds_alternative<DirichletParams>(params_)) return Family::dirichlet;
    return Family::normal_wishart;
  }

  int dim() const {
    if (const auto* g = std::get_if<DiagGaussianParams>(&params_))
      return static_cast<int>(g->mean.size());
    if (const auto* d = std::get_if<DirichletParams>(&params_))
      return static_cast<int>(d->concentration.size());
    return static_cast<int>(std::get<NormalWishartParams>(params_).location.size());
  }

  const DiagGaussianParams& as_diag_gaussian() const {
    if (const auto* g = std::get_if<DiagGaussianParams>(&params_)) return *g;
    throw std::invalid_argument("component is not diag_gaussian");
  }
  const DirichletParams& as_dirichlet() const {
    if (const auto* d = std::get_if<DirichletParams>(&params_)) return *d;
    throw std::invalid_argument("component is not dirichlet");
  }
  const NormalWishartParams& as_normal_wishart() const {
    if (const auto* n = std::get_if<NormalWishartParams>(&params_)) return *n;
    throw std::invalid_argument("component is not normal_wishart");
  }

  // Mean vector used by evaluation code: the distribution's location in the
  // space the paper's Hausdorff metric compares (dirichlet uses the simplex mean).
  Vec mean_point() const {
    switch (family()) {
      case Family::diag_gaussian: return as_diag_gaussian().mean;
      case Family::dirichlet: {
        const Vec& a = as_dirichlet().concentration;
        return a / a.sum();
      }
      case Family::normal_wishart: return as_normal_wishart().location;
    }
    throw std::logic_error("unreachable");
  }

 private:
  explicit ExpFamComponent(DiagGaussianParams p) : params_(std::move(p)) {}
  explicit ExpFamComponent(DirichletParams p) : params_(std::move(p)) {}
  explicit ExpFamComponent(NormalWishartParams p) : params_(std::move(p)) {}

  std::variant<DiagGaussianParams, DirichletParams, NormalWishartParams> params_;
};

inline void require_compatible(const ExpFamComponent& a, const ExpFamComponent& b) {
  if (a.family() != b.family())
    throw std::invalid_argument(std::string("family mismatch: ") +
                                family_name(a.family()) + " vs " +
                                family_name(b.family()));
  if (a.dim() != b.dim())
    throw std::invalid_argument("dimension mismatch: " + std::to_string(a.dim()) +
                                " vs " + std::to_string(b.dim()));
}

// ---------------------------------------------------------------------------
// natural parameters
// ---------------------------------------------------------------------------

// Flat layouts (d = dim, T = d(d+1)/2):
//   diag_gaussian:  per-dim pairs (mu_i/var_i, -1/(2 var_i)), size 2d
//   dirichlet:      alpha - 1, size d
//   normal_wishart: [kappa*m | kappa | upper(W^-1 + kappa m m^T) | nu - d],
//                   size d + 1 + T + 1
// Any fixed scaling convention works for barycenters; these drop constant
// factors so that weighted averaging stays a plain dot product.
struct NaturalParams {
  Family family;
  int dim;
  Vec eta;
};

namespace detail {

inline int nw_eta_size(int d) { return d + 1 + d * (d + 1) / 2 + 1; }

inline void pack_upper(const Mat& s, Vec& eta, int offset) {
  const int d = static_cast<int>(s.rows());
  int k = offset;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) eta[k++] = s(i, j);
}

inline Mat unpack_upper(const Vec& eta, int offset, int d) {
  Mat s(d, d);
  int k = offset;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      s(i, j) = eta[k];
      s(j, i) = eta[k];
      ++k;
    }
  return s;
}

}  // namespace detail

inline NaturalParams to_natural(const ExpFamComponent& c) {
  const int d = c.dim();
  switch (c.family()) {
    case Family::diag_gaussian: {
      const auto& g = c.as_diag_gaussian();
      Vec eta(2 * d);
      for (int i = 0; i < d; ++i) {
        eta[2 * i] = g.mean[i] / g.variance[i];
        eta[2 * i + 1] = -0.5 / g.variance[i];
      }
      return {Family::diag_gaussian, d, std::move(eta)};
    }
    case Family::dirichlet: {
      Vec eta = c.as_dirichlet().concentration.array() - 1.0;
      return {Family::dirichlet, d, std::move(eta)};
    }
    case Family::normal_wishart: {
      const auto& n = c.as_normal_wishart();
      Vec eta(detail::nw_eta_size(d));
      eta.head(d) = n.kappa * n.location;
      eta[d] = n.kappa;
      Mat winv = n.scale.llt().solve(Mat::Identity(d, d));
      Mat s = winv + n.kappa * n.location * n.location.transpose();
      detail::pack_upper(0.5 * (s + s.transpose()), eta, d + 1);
      eta[detail::nw_eta_size(d) - 1] = n.dof - d;
      return {Family::normal_wishart, d, std::move(eta)};
    }
  }
  throw std::logic_error("unreachable");
}

inline ExpFamComponent from_natural(const NaturalParams& n) {
  const int d = n.dim;
  detail::require_finite(n.eta, "natural parameters");
  switch (n.family) {
    case Family::diag_gaussian: {
      if (n.eta.size() != 2 * d)
        throw std::invalid_argument("diag_gaussian eta: wrong size");
      Vec mean(d), var(d);
      for (int i = 0; i < d; ++i) {
        const double e2 = n.eta[2 * i + 1];
        if (e2 >= 0.0)
          throw std::domain_error("diag_gaussian eta: precision coordinate " +
                                  std::to_string(i) + " not negative");
        var[i] = -0.5 / e2;
        mean[i] = n.eta[2 * i] * var[i];
      }
      return ExpFamComponent::diag_gaussian(std::move(mean), std::move(var));
    }
    case Family::dirichlet: {
      if (n.eta.size() != d)
        throw std::invalid_argument("dirichlet eta: wrong size");
      Vec alpha = n.eta.array() + 1.0;
      for (int i = 0; i < d; ++i)
        if (alpha[i] <= 0.0)
          throw std::domain_error("dirichlet eta: concentration " +
                                  std::to_string(i) + " not positive");
      return ExpFamComponent::dirichlet(std::move(alpha));
    }
    case Family::normal_wishart: {
      if (n.eta.size() != detail::nw_eta_size(d))
        throw std::invalid_argument("normal_wishart eta: wrong size");
      const double kappa = n.eta[d];
      if (kappa <= 0.0)
        throw std::domain_error("normal_wishart eta: kappa not positive");
      Vec m = n.eta.head(d) / kappa;
      Mat winv = detail::unpack_upper(n.eta, d + 1, d) -
                 kappa * m * m.transpose();
      winv = (0.5 * (winv + winv.transpose())).eval();
      // Averaged precisions can lose definiteness to rounding; nudge back.
      Eigen::SelfAdjointEigenSolver<Mat> eig(winv);
      const double lmin = eig.eigenvalues().minCoeff();
      if (lmin <= 0.0)
        winv += (std::abs(lmin) + 1e-10) * Mat::Identity(d, d);
      Mat w = winv.llt().solve(Mat::Identity(d, d));
      w = (0.5 * (w + w.transpose())).eval();
      const double nu = n.eta[detail::nw_eta_size(d) - 1] + d;
      if (nu <= d - 1)
        throw std::domain_error("normal_wishart eta: dof not above D - 1");
      return ExpFamComponent::normal_wishart(std::move(m), kappa, std::move(w), nu);
    }
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// KL divergence, closed form
// ---------------------------------------------------------------------------

namespace detail {

inline double kl_diag_gaussian(const DiagGaussianParams& q, const DiagGaussianParams& p) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.mean.size(); ++i) {
    const double r = q.variance[i] / p.variance[i];
    const double dm = p.mean[i] - q.mean[i];
    kl += 0.5 * (r + dm * dm / p.variance[i] - 1.0 - std::log(r));
  }
  return kl;
}

inline double kl_dirichlet(const DirichletParams& q, const DirichletParams& p) {
  const double aq0 = q.concentration.sum();
  const double ap0 = p.concentration.sum();
  double kl = ln_gamma(aq0) - ln_gamma(ap0);
  const double dg0 = digamma(aq0);
  for (Eigen::Index i = 0; i < q.concentration.size(); ++i) {
    const double aq = q.concentration[i];
    const double ap = p.concentration[i];
    kl += ln_gamma(ap) - ln_gamma(aq) + (aq - ap) * (digamma(aq) - dg0);
  }
  return kl;
}

// KL between Wishart(W_q, nu_q) and Wishart(W_p, nu_p) plus the expected KL
// of the conditional Gaussians: E_q[ln|Lambda|] and E_q[Lambda] = nu_q W_q
// are the only moments needed.
inline double kl_normal_wishart(const NormalWishartParams& q, const NormalWishartParams& p) {
  const int d = static_cast<int>(q.location.size());

  Eigen::LLT<Mat> llt_q(q.scale), llt_p(p.scale);
  auto log_det = [d](const Eigen::LLT<Mat>& llt) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += std::log(llt.matrixL()(i, i));
    return 2.0 * s;
  };
  const double logdet_wq = log_det(llt_q);
  const double logdet_wp = log_det(llt_p);

  const double e_logdet =
      multivariate_digamma(0.5 * q.dof, d) + d * std::log(2.0) + logdet_wq;
  const double tr_wpinv_wq = llt_p.solve(q.scale).trace();

  double kl_wishart = 0.5 * (q.dof - p.dof) * e_logdet -
                      0.5 * q.dof * d + 0.5 * q.dof * tr_wpinv_wq +
                      0.5 * (p.dof - q.dof) * d * std::log(2.0) +
                      0.5 * p.dof * logdet_wp - 0.5 * q.dof * logdet_wq +
                      multivariate_ln_gamma(0.5 * p.dof, d) -
                      multivariate_ln_gamma(0.5 * q.dof, d);

  const Vec dm = q.location - p.location;
  const double maha = q.dof * dm.dot(q.scale * dm);
  const double kl_cond =
      0.5 * (d * p.kappa / q.kappa - d + d * std::log(q.kappa / p.kappa) +
             p.kappa * maha);

  return kl_wishart + kl_cond;
}

}  // namespace detail

// KL(q || p); q plays the global/candidate role, p the local (Eq. (3) order).
inline double kl_divergence(const ExpFamComponent& q, const ExpFamComponent& p) {
  require_compatible(q, p);
  switch (q.family()) {
    case Family::diag_gaussian:
      return detail::kl_diag_gaussian(q.as_diag_gaussian(), p.as_diag_gaussian());
    case Family::dirichlet:
      return detail::kl_dirichlet(q.as_dirichlet(), p.as_dirichlet());
    case Family::normal_wishart:
      return detail::kl_normal_wishart(q.as_normal_wishart(), p.as_normal_wishart());
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// Monte Carlo KL oracle
// ---------------------------------------------------------------------------

namespace detail {

inline double log_pdf_diag_gaussian(const DiagGaussianParams& g, const Vec& x) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double dm = x[i] - g.mean[i];
    lp += -0.5 * std::log(2.0 * M_PI * g.variance[i]) - 0.5 * dm * dm / g.variance[i];
  }
  return lp;
}

inline double log_pdf_dirichlet(const DirichletParams& p, const Vec& x) {
  double lp = ln_gamma(p.concentration.sum());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    lp += (p.concentration[i] - 1.0) * std::log(x[i]) - ln_gamma(p.concentration[i]);
  return lp;
}

inline double log_pdf_wishart(const NormalWishartParams& p, const Mat& lambda,
                              double logdet_lambda) {
  const int d = static_cast<int>(p.location.size());
  Eigen::LLT<Mat> llt(p.scale);
  double logdet_w = 0.0;
  for (int i = 0; i < d; ++i) logdet_w += 2.0 * std::log(llt.matrixL()(i, i));
  const double tr = llt.solve(lambda).trace();
  return 0.5 * (p.dof - d - 1) * logdet_lambda - 0.5 * tr -
         0.5 * p.dof * d * std::log(2.0) - 0.5 * p.dof * logdet_w -
         multivariate_ln_gamma(0.5 * p.dof, d);
}

inline double log_pdf_normal_wishart(const NormalWishartParams& p, const Vec& mu,
                                     const Mat& lambda, double logdet_lambda) {
  const int d = static_cast<int>(p.location.size());
  const Vec dm = mu - p.location;
  const double quad = p.kappa * dm.dot(lambda * dm);
  const double log_norm = 0.5 * d * std::log(p.kappa) + 0.5 * logdet_lambda -
                          0.5 * d * std::log(2.0 * M_PI) - 0.5 * quad;
  return log_norm + log_pdf_wishart(p, lambda, logdet_lambda);
}

// Bartlett decomposition draw of Wishart(scale, dof).
inline Mat sample_wishart(const Mat& scale, double dof, std::mt19937_64& rng) {
  const int d = static_cast<int>(scale.rows());
  Eigen::LLT<Mat> llt(scale);
  Mat l = llt.matrixL();
  Mat a = Mat::Zero(d, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < d; ++i) {
    std::chi_squared_distribution<double> chi2(dof - i);
    a(i, i) = std::sqrt(chi2(rng));
    for (int j = 0; j < i; ++j) a(i, j) = normal(rng);
  }
  Mat la = l * a;
  return la * la.transpose();
}

}  // namespace detail

struct McKlResult {
  double estimate;
  double std_error;
};

// Sample-based estimate of KL(q || p): mean and standard error of
// ln q(x) - ln p(x) over x ~ q. Test oracle for the closed forms above.
inline McKlResult mc_kl_estimate(const ExpFamComponent& q, const ExpFamComponent& p,
                                 std::int64_t n_samples, std::uint64_t seed) {
  require_compatible(q, p);
  if (n_samples < 1000)
    throw std::invalid_argument("mc_kl_estimate: need at least 1000 samples");
  std::mt19937_64 rng = make_stream(seed, Stream::mc_oracle);
  const int d = q.dim();

  double mean = 0.0, m2 = 0.0;
  std::int64_t count = 0;
  auto accumulate = [&](double v) {
    ++count;
    const double delta = v - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (v - mean);
  };

  switch (q.family()) {
    case Family::diag_gaussian: {
      const auto& gq = q.as_diag_gaussian();
      const auto& gp = p.as_diag_gaussian();
      std::normal_distribution<double> normal(0.0, 1.0);
      Vec x(d);
      for (std::int64_t s = 0; s < n_samples; ++s) {
        for (int i = 0; i < d; ++i)
          x[i] = gq.mean[i] + std::sqrt(gq.variance[i]) * normal(rng);
        accumulate(detail::log_pdf_diag_gaussian(gq, x) -
                   detail::log_pdf_diag_gaussian(gp, x));
      }
      break;
    }
    case Family::dirichlet: {
      const auto& dq = q.as_dirichlet();
      const auto& dp = p.as_dirichlet();
      Vec x(d);
      for (std::int64_t s = 0; s < n_samples; ++s) {
        double total = 0.0;
        for (int i = 0; i < d; ++i) {
          std::gamma_distribution<double> gamma(dq.concentration[i], 1.0);
          x[i] = std::max(gamma(rng), 1e-300);
          total += x[i];
        }
        x /= total;
        accumulate(detail::log_pdf_dirichlet(dq, x) -
                   detail::log_pdf_dirichlet(dp, x));
      }
      break;
    }
    case Family::normal_wishart: {
      const auto& nq = q.as_normal_wishart();
      const auto& np = p.as_normal_wishart();
      std::normal_distribution<double> normal(0.0, 1.0);
      Vec z(d);
      for (std::int64_t s = 0; s < n_samples; ++s) {
        Mat lambda = detail::sample_wishart(nq.scale, nq.dof, rng);
        Eigen::LLT<Mat> llt(lambda);
        double logdet = 0.0;
        for (int i = 0; i < d; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
        for (int i = 0; i < d; ++i) z[i] = normal(rng);
        // mu = m + (kappa Lambda)^{-1/2} z via L^-T z with Lambda = L L^T
        Vec mu = nq.location +
                 llt.matrixL().transpose().solve(z) / std::sqrt(nq.kappa);
        accumulate(detail::log_pdf_normal_wishart(nq, mu, lambda, logdet) -
                   detail::log_pdf_normal_wishart(np, mu, lambda, logdet));
      }
      break;
    }
  }
  const double var = m2 / static_cast<double>(count - 1);
  return {mean, std::sqrt(var / static_cast<double>(count))};
}

// ---------------------------------------------------------------------------
// weights and barycenter
// ---------------------------------------------------------------------------

// Nonnegative weights on the simplex (sum 1 within 1e-12).
class Weights {
 public:
  explicit Weights(Vec values) : values_(std::move(values)) {
    if (values_.size() == 0) throw std::invalid_argument("weights: empty");
    detail::require_finite(values_, "weights");
    for (Eigen::Index i = 0; i < values_.size(); ++i)
      if (values_[i] < 0.0)
        throw std::invalid_argument("weights: entry " + std::to_string(i) +
                                    " is negative");
    if (std::abs(values_.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("weights: do not sum to 1");
  }

  static Weights uniform(int n) {
    if (n < 1) throw std::invalid_argument("weights: empty");
    Vec v = Vec::Constant(n, 1.0 / n);
    v /= v.sum();
    return Weights(std::move(v));
  }

  const Vec& values() const { return values_; }
  int size() const { return static_cast<int>(values_.size()); }

 private:
  Vec values_;
};

// Weighted KL barycenter: the family member with natural parameter
// sum_i lambda_i eta_i, which minimizes sum_i lambda_i KL(q || c_i).
inline ExpFamComponent barycenter(const std::vector<ExpFamComponent>& components,
                                  const Weights& weights) {
  if (components.empty()) throw std::invalid_argument("barycenter: empty component list");
  if (weights.size() != static_cast<int>(components.size()))
    throw std::invalid_argument("barycenter: weight length mismatch");
  for (std::size_t i = 1; i < components.size(); ++i)
    require_compatible(components[0], components[i]);

  NaturalParams acc = to_natural(components[0]);
  acc.eta *= weights.values()[0];
  for (std::size_t i = 1; i < components.size(); ++i)
    acc.eta += weights.values()[i] * to_natural(components[i]).eta;
  return from_natural(acc);
}

}  // namespace klfuse
