#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <vector>

#include "klfuse/expfam.hpp"

namespace klfuse {

// Nonempty list of same-dimension points whose convex hull is compared.
struct PointSet {
  std::vector<Vec> points;

  explicit PointSet(std::vector<Vec> pts) : points(std::move(pts)) {
    if (points.empty()) throw std::invalid_argument("point set: empty");
    const Eigen::Index d = points[0].size();
    for (const auto& p : points) {
      if (p.size() != d)
        throw std::invalid_argument("point set: mixed dimensions");
      detail::require_finite(p, "point set");
    }
  }

  int dim() const { return static_cast<int>(points[0].size()); }
  int size() const { return static_cast<int>(points.size()); }
};

// Euclidean distance from v to the convex hull of `hull`, solved as
// min_{alpha in simplex} ||v - P alpha|| by pairwise conditional gradient
// (Frank-Wolfe with away steps) and exact line search; stops when the duality
// gap of the squared objective falls below gap_tol. The pairwise variant
// avoids the zig-zag stalls of plain FW when the optimum sits inside a face.
inline double point_to_hull_distance(const Vec& v, const PointSet& hull,
                                     double gap_tol = 1e-8,
                                     int max_iters = 10000) {
  if (v.size() != hull.dim())
    throw std::invalid_argument("point_to_hull_distance: dimension mismatch");
  const int n = hull.size();
  if (n == 1) return (v - hull.points[0]).norm();

  Mat p(v.size(), n);
  for (int i = 0; i < n; ++i) p.col(i) = hull.points[i];

  // start at the vertex closest to v
  int start = 0;
  double best = (v - p.col(0)).squaredNorm();
  for (int i = 1; i < n; ++i) {
    const double d2 = (v - p.col(i)).squaredNorm();
    if (d2 < best) {
      best = d2;
      start = i;
    }
  }
  Vec alpha = Vec::Zero(n);
  alpha[start] = 1.0;
  Vec residual = v - p * alpha;

  for (int it = 0; it < max_iters; ++it) {
    // gradient of ||v - P alpha||^2 is -2 P^T residual
    Vec grad = -2.0 * (p.transpose() * residual);
    int toward = 0;
    for (int i = 1; i < n; ++i)
      if (grad[i] < grad[toward]) toward = i;
    const double gap = alpha.dot(grad) - grad[toward];
    if (gap <= gap_tol) break;

    int away = -1;
    for (int i = 0; i < n; ++i)
      if (alpha[i] > 0.0 && (away < 0 || grad[i] > grad[away])) away = i;
    if (away < 0 || away == toward) break;

    // shift mass from the worst active vertex to the best one
    Vec direction = p.col(toward) - p.col(away);
    const double denom = direction.squaredNorm();
    if (denom <= 0.0) break;
    const double step =
        std::clamp(residual.dot(direction) / denom, 0.0, alpha[away]);
    if (step <= 0.0) break;
    alpha[toward] += step;
    alpha[away] -= step;
    residual = v - p * alpha;
  }
  return residual.norm();
}

enum class HausdorffVariant {
  polytope,   // distance between convex hulls (the canonical metric here)
  point_set,  // plain point-set Hausdorff, for diagnostics only
};

// Hausdorff distance between the convex hulls of a and b. The maximum over a
// hull is attained at a vertex, so scanning the vertices is exact.
inline double polytope_hausdorff(const PointSet& a, const PointSet& b,
                                 HausdorffVariant variant = HausdorffVariant::polytope) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("hausdorff: dimension mismatch");
  if (variant == HausdorffVariant::point_set) {
    auto directed = [](const PointSet& x, const PointSet& y) {
      double worst = 0.0;
      for (const auto& px : x.points) {
        double nearest = std::numeric_limits<double>::infinity();
        for (const auto& py : y.points)
          nearest = std::min(nearest, (px - py).norm());
        worst = std::max(worst, nearest);
      }
      return worst;
    };
    return std::max(directed(a, b), directed(b, a));
  }
  double worst = 0.0;
  for (const auto& pa : a.points)
    worst = std::max(worst, point_to_hull_distance(pa, b));
  for (const auto& pb : b.points)
    worst = std::max(worst, point_to_hull_distance(pb, a));
  return worst;
}

inline int size_estimation_error(int estimated_g, int true_g) {
  if (estimated_g < 0 || true_g < 0)
    throw std::invalid_argument("size_estimation_error: negative count");
  return std::abs(estimated_g - true_g);
}

}  // namespace klfuse
