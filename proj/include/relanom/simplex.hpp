#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace relanom {

struct SimplexOptions {
  double initial_step = 1.0;
  double f_rel_tol = 1e-10;  // spread of vertex values relative to max(|f_best|, 1)
  double x_tol = 1e-8;       // max-norm distance of every vertex from the best one
  int max_iterations = 20000;
};

template <typename Scalar>
struct SimplexResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
  Scalar f = Scalar(0);
  bool converged = false;
  int iterations = 0;
};

/// Nelder-Mead with box constraints (trial points are clamped into [lower, upper]).
template <typename Scalar, typename Objective>
SimplexResult<Scalar> minimize_simplex(Objective&& f, Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x0,
                                       const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& lower,
                                       const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& upper,
                                       const SimplexOptions& opt = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index d = x0.size();
  auto clamp = [&](Vector v) {
    for (Eigen::Index i = 0; i < d; ++i) v(i) = std::clamp(v(i), lower(i), upper(i));
    return v;
  };

  SimplexResult<Scalar> res;
  x0 = clamp(x0);
  if (d == 0) {
    res.x = x0;
    res.f = f(x0);
    res.converged = true;
    return res;
  }

  std::vector<Vector> pts;
  std::vector<Scalar> vals;
  pts.push_back(x0);
  for (Eigen::Index i = 0; i < d; ++i) {
    Vector p = x0;
    p(i) += opt.initial_step;
    if (p(i) > upper(i)) p(i) = x0(i) - opt.initial_step;
    pts.push_back(clamp(p));
  }
  for (const auto& p : pts) vals.push_back(f(p));

  std::vector<std::size_t> idx(pts.size());
  for (int it = 0; it < opt.max_iterations; ++it) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = idx.front(), worst = idx.back(), second = idx[idx.size() - 2];
    res.iterations = it;

    Scalar spread_x = 0;
    for (const auto& p : pts) spread_x = std::max(spread_x, (p - pts[best]).cwiseAbs().maxCoeff());
    const Scalar spread_f = vals[worst] - vals[best];
    if (spread_f <= opt.f_rel_tol * std::max<Scalar>(std::abs(vals[best]), Scalar(1)) && spread_x <= opt.x_tol) {
      res.converged = true;
      break;
    }

    Vector centroid = Vector::Zero(d);
    for (std::size_t k : idx)
      if (k != worst) centroid += pts[k];
    centroid /= static_cast<Scalar>(d);

    const Vector xr = clamp(centroid + (centroid - pts[worst]));
    const Scalar fr = f(xr);
    if (fr < vals[best]) {
      const Vector xe = clamp(centroid + Scalar(2) * (centroid - pts[worst]));
      const Scalar fe = f(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Vector xc = outside ? clamp(centroid + Scalar(0.5) * (xr - centroid))
                              : clamp(centroid + Scalar(0.5) * (pts[worst] - centroid));
    const Scalar fc = f(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t k : idx) {
      if (k == best) continue;
      pts[k] = clamp(pts[best] + Scalar(0.5) * (pts[k] - pts[best]));
      vals[k] = f(pts[k]);
    }
  }
  const auto b = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  res.x = pts[b];
  res.f = vals[b];
  return res;
}

}  // namespace relanom
