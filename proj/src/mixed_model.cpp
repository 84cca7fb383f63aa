#include "relanom/mixed_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "relanom/errors.hpp"
#include "relanom/inference.hpp"
#include "relanom/reml.hpp"
#include "relanom/simplex.hpp"

namespace relanom {

namespace detail {

struct LmmDesign {
  RemlCriterion<double> criterion;
  std::vector<double> ratios;
  double center = 0.0;
  double scale = 1.0;
};

}  // namespace detail

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Prepared {
  MatrixXd X;
  VectorXd y;
  std::vector<std::vector<int>> levels;
  std::vector<int> n_levels;
  double center = 0.0;
  double scale = 1.0;
};

Prepared prepare(const LmmData& data, const ModelSpec& spec) {
  const std::size_t n = data.size();
  if (data.fixed.size() != n) throw InvalidSpec("fixed-factor column length differs from response length");
  if (spec.fixed_levels[0] == spec.fixed_levels[1]) throw InvalidSpec("fixed factor needs two distinct levels");

  std::vector<const std::vector<std::string>*> cols;
  for (const auto& g : spec.random_intercepts) {
    auto it = data.groupings.find(g);
    if (it == data.groupings.end()) throw InvalidSpec("no grouping column '" + g + "'");
    if (it->second.size() != n) throw InvalidSpec("grouping '" + g + "' length differs from response length");
    cols.push_back(&it->second);
  }
  if (std::set<std::string>(spec.random_intercepts.begin(), spec.random_intercepts.end()).size() !=
      spec.random_intercepts.size())
    throw InvalidSpec("grouping listed twice");

  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(data.response[i])) throw InvalidSpec("non-finite response in row " + std::to_string(i));
    if (data.fixed[i] == spec.fixed_levels[0])
      ++count[0];
    else if (data.fixed[i] == spec.fixed_levels[1])
      ++count[1];
    else
      throw InvalidSpec("row " + std::to_string(i) + " has fixed level '" + data.fixed[i] + "' outside the contrast");
  }
  if (count[0] < 2 || count[1] < 2) throw InvalidSpec("need at least 2 observations per condition");

  // Canonical row order so the fit does not depend on how the caller ordered rows.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (data.fixed[a] != data.fixed[b]) return data.fixed[a] < data.fixed[b];
    for (const auto* c : cols)
      if ((*c)[a] != (*c)[b]) return (*c)[a] < (*c)[b];
    return data.response[a] < data.response[b];
  });

  Prepared p;
  p.X.resize(static_cast<Eigen::Index>(n), 2);
  p.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    p.X(r, 0) = 1.0;
    p.X(r, 1) = data.fixed[i] == spec.fixed_levels[0] ? 1.0 : -1.0;
    p.y(r) = data.response[i];
  }
  for (std::size_t k = 0; k < cols.size(); ++k) {
    std::map<std::string, int> index;
    for (const auto& label : *cols[k]) index.emplace(label, 0);
    int next = 0;
    for (auto& [label, id] : index) id = next++;
    if (next < 2) throw InvalidSpec("grouping '" + spec.random_intercepts[k] + "' has fewer than 2 levels");
    if (static_cast<std::size_t>(next) >= n)
      throw InvalidSpec("grouping '" + spec.random_intercepts[k] + "' has one level per observation");
    std::vector<int> lv(n);
    for (std::size_t r = 0; r < n; ++r) lv[r] = index.at((*cols[k])[order[r]]);
    p.levels.push_back(std::move(lv));
    p.n_levels.push_back(next);
  }

  p.center = p.y.mean();
  const double sd = std::sqrt((p.y.array() - p.center).square().sum() / static_cast<double>(std::max<std::size_t>(n - 1, 1)));
  p.scale = sd > 0.0 ? sd : 1.0;
  p.y = (p.y.array() - p.center) / p.scale;

  Eigen::ColPivHouseholderQR<MatrixXd> qr(p.X);
  if (qr.rank() < p.X.cols()) throw RankDeficient("fixed-effect design is rank deficient");
  return p;
}

/// Newton iterations with finite-difference derivatives over the components
/// strictly inside (min_x, upper). The simplex stops anywhere inside its
/// tolerance band; refining to the stationary point makes the optimum a smooth
/// function of the data.
template <typename F>
void newton_polish(const F& f, VectorXd& x, double& fx, const VectorXd& lower, const VectorXd& upper, double min_x) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index k = 0; k < x.size(); ++k)
    if (x(k) > min_x && x(k) < upper(k) - 1e-6) free.push_back(k);
  const auto m = static_cast<Eigen::Index>(free.size());
  if (m == 0) return;
  constexpr double h = 1e-4;
  auto at = [&](Eigen::Index i, double di, Eigen::Index j, double dj) {
    VectorXd y = x;
    y(free[static_cast<std::size_t>(i)]) += di;
    y(free[static_cast<std::size_t>(j)]) += dj;
    return f(y);
  };
  for (int it = 0; it < 20; ++it) {
    VectorXd g(m);
    MatrixXd H(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double fp = at(i, h, i, 0.0), fm = at(i, -h, i, 0.0);
      g(i) = (fp - fm) / (2 * h);
      H(i, i) = (fp - 2 * fx + fm) / (h * h);
    }
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = i + 1; j < m; ++j)
        H(i, j) = H(j, i) = (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4 * h * h);
    Eigen::LLT<MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) return;
    const VectorXd d = -llt.solve(g);
    // Near the optimum the decrease is below rounding; let the gradient decide there.
    const double slack = 64 * std::numeric_limits<double>::epsilon() * std::max(std::abs(fx), 1.0);
    double t = 1.0, moved = -1.0;
    for (int ls = 0; ls < 30 && moved < 0; ++ls, t *= 0.5) {
      VectorXd y = x;
      for (Eigen::Index i = 0; i < m; ++i) {
        const auto k = free[static_cast<std::size_t>(i)];
        y(k) = std::clamp(x(k) + t * d(i), lower(k), upper(k));
      }
      const double fy = f(y);
      if (fy <= fx + slack) {
        moved = (y - x).lpNorm<Eigen::Infinity>();
        x = y;
        fx = fy;
      }
    }
    if (moved < 1e-12) return;
  }
}

std::vector<double> to_ratios(const VectorXd& log_ratios) {
  std::vector<double> r(static_cast<std::size_t>(log_ratios.size()));
  for (Eigen::Index i = 0; i < log_ratios.size(); ++i) r[i] = std::exp(log_ratios(i));
  return r;
}

}  // namespace

std::string describe(const ModelSpec& spec) {
  std::ostringstream out;
  out << spec.response << " ~ " << spec.fixed;
  for (const auto& g : spec.random_intercepts) out << " + (1|" << g << ")";
  return out.str();
}

FittedLMM fit_reml(const LmmData& data, const ModelSpec& spec, const NumericConfig& numeric) {
  Prepared prep = prepare(data, spec);
  const auto n = static_cast<std::size_t>(prep.y.size());
  const int p = static_cast<int>(prep.X.cols());
  auto design = std::make_shared<detail::LmmDesign>(detail::LmmDesign{
      RemlCriterion<double>(prep.X, prep.y, prep.levels, prep.n_levels), {}, prep.center, prep.scale});
  const auto& crit = design->criterion;
  const auto K = static_cast<Eigen::Index>(spec.random_intercepts.size());

  auto objective = [&](const VectorXd& x) {
    const auto r = to_ratios(x);
    return crit.deviance(r);
  };

  const VectorXd lower = VectorXd::Constant(K, numeric.log_ratio_lower);
  const VectorXd upper = VectorXd::Constant(K, numeric.log_ratio_upper);
  SimplexOptions opt;
  opt.f_rel_tol = numeric.deviance_rel_tol;
  opt.x_tol = numeric.parameter_tol;
  opt.max_iterations = numeric.max_iterations;

  std::optional<SimplexResult<double>> best;
  int iterations = 0;
  for (double seed : numeric.start_ratios) {
    auto res = minimize_simplex<double>(objective, VectorXd::Constant(K, std::log(seed)), lower, upper, opt);
    iterations += res.iterations;
    const bool better = !best || (res.converged && !best->converged) ||
                        (res.converged == best->converged && res.f < best->f);
    if (better) best = res;
    if (K == 0) break;
  }

  VectorXd x = best->x;
  double dev = best->f;
  newton_polish(objective, x, dev, lower, upper, std::log(numeric.singular_threshold));
  std::vector<double> ratios = to_ratios(x);
  // The criterion is flat near zero variance; a negligible component is really zero.
  for (Eigen::Index k = 0; k < K; ++k) {
    if (ratios[k] >= numeric.singular_threshold) continue;
    auto trial = ratios;
    trial[k] = 0.0;
    const double d0 = crit.deviance(trial);
    if (d0 <= dev + numeric.deviance_rel_tol * std::max(std::abs(dev), 1.0)) {
      ratios = trial;
      dev = d0;
    }
  }

  const auto ev = crit.evaluate(ratios);
  design->ratios = ratios;
  const double s2 = prep.scale * prep.scale;

  FittedLMM fit;
  fit.spec = spec;
  fit.beta(0) = prep.center + prep.scale * ev.beta(0);
  fit.beta(1) = prep.scale * ev.beta(1);
  fit.sigma2_resid = ev.sigma2 * s2;
  fit.reml_deviance = ev.deviance + static_cast<double>(n - static_cast<std::size_t>(p)) * std::log(s2);
  fit.converged = best->converged;
  fit.n_obs = n;
  fit.iterations = iterations;
  fit.numeric = numeric;
  for (Eigen::Index k = 0; k < K; ++k) {
    VarianceComponent vc;
    vc.grouping = spec.random_intercepts[k];
    vc.n_levels = static_cast<std::size_t>(prep.n_levels[k]);
    vc.ratio = ratios[k];
    vc.variance = ratios[k] * fit.sigma2_resid;
    fit.singular = fit.singular || vc.ratio < numeric.singular_threshold;
    fit.variance_components.push_back(vc);
  }
  fit.design = std::move(design);
  return fit;
}

Selection select_random_effects(const LmmData& data, const ModelSpec& maximal, const NumericConfig& numeric) {
  Selection sel;
  std::optional<FittedLMM> fallback;
  ModelSpec spec = maximal;
  while (!spec.random_intercepts.empty()) {
    SelectionAttempt attempt{spec, false, false, {}};
    try {
      auto fit = fit_reml(data, spec, numeric);
      attempt.converged = fit.converged;
      attempt.singular = fit.singular;
      sel.attempts.push_back(attempt);
      if (fit.converged && !fit.singular) {
        sel.spec = spec;
        sel.fit = std::move(fit);
        return sel;
      }
      if (fit.converged) fallback = std::move(fit);
    } catch (const InvalidSpec& e) {
      attempt.error = e.what();
      sel.attempts.push_back(attempt);
    }
    spec.random_intercepts.pop_back();
  }
  if (fallback) {
    sel.spec = fallback->spec;
    sel.fit = std::move(*fallback);
    return sel;
  }
  std::ostringstream msg;
  msg << "no random-effects structure converged:";
  for (const auto& a : sel.attempts)
    msg << " [" << describe(a.spec) << ": " << (a.error.empty() ? "not converged" : a.error) << "]";
  throw SelectionFailed(msg.str());
}

AnovaResult type3_anova(const FittedLMM& fit) {
  if (!fit.converged || !fit.design) throw NotConverged("type III test requested on a fit that did not converge");
  const auto& d = *fit.design;
  const auto& crit = d.criterion;
  const auto n = crit.n_obs();
  const auto ev = crit.evaluate(d.ratios);
  const double sigma2 = ev.sigma2;

  // Contrast L = (0, 1): the sum-to-zero coded condition effect.
  auto contrast_var = [](const RemlCriterion<double>::Evaluation& e) { return e.xthx_inverse(1, 1); };
  const double c = contrast_var(ev);
  const double estimate = ev.beta(1);
  const double var = sigma2 * c;

  AnovaResult out;
  out.F = estimate * estimate / var;
  out.ndf = 1;
  out.estimate = estimate * d.scale;
  out.std_error = std::sqrt(var) * d.scale;

  // Variance parameters: sigma^2 plus the log ratio of every non-singular grouping.
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < d.ratios.size(); ++k)
    if (d.ratios[k] >= fit.numeric.singular_threshold) active.push_back(k);
  const auto m = static_cast<Eigen::Index>(active.size());

  VectorXd grad(m + 1);
  grad(0) = c;  // Var(L beta) is linear in sigma^2
  const double h = fit.numeric.fd_step;
  for (Eigen::Index a = 0; a < m; ++a) {
    auto up = d.ratios, dn = d.ratios;
    up[active[a]] *= std::exp(h);
    dn[active[a]] *= std::exp(-h);
    grad(a + 1) = sigma2 * (contrast_var(crit.evaluate(up)) - contrast_var(crit.evaluate(dn))) / (2.0 * h);
  }

  // Observed REML information in tau = (sigma^2, sigma^2_k), k active:
  //   I_ij = -1/2 tr(P V_i P V_j) + y' P V_i P V_j P y,  V_0 = I, V_k = Z_k Z_k'.
  std::vector<MatrixXd> z;
  for (std::size_t k : active) z.push_back(indicator_matrix<double>(crit.levels()[k], crit.n_levels()[k]));
  MatrixXd V = MatrixXd::Identity(n, n);
  for (Eigen::Index a = 0; a < m; ++a) V.noalias() += d.ratios[active[a]] * z[a] * z[a].transpose();
  V *= sigma2;
  Eigen::LLT<MatrixXd> vllt(V);
  if (vllt.info() != Eigen::Success) throw Error("Satterthwaite: marginal covariance is not positive definite");
  const MatrixXd vinv = vllt.solve(MatrixXd::Identity(n, n));
  const MatrixXd& X = crit.X();
  const MatrixXd vx = vinv * X;
  const MatrixXd P = vinv - vx * (X.transpose() * vx).ldlt().solve(vx.transpose());
  const VectorXd py = P * crit.y();

  auto left = [&](Eigen::Index i, const MatrixXd& M) -> MatrixXd { return i == 0 ? M : MatrixXd(z[i - 1].transpose() * M); };
  std::vector<MatrixXd> pz(m + 1);
  std::vector<VectorXd> zpy(m + 1);
  for (Eigen::Index i = 0; i <= m; ++i) {
    pz[i] = i == 0 ? P : MatrixXd(P * z[i - 1]);
    zpy[i] = left(i, py);
  }
  MatrixXd info(m + 1, m + 1);
  for (Eigen::Index i = 0; i <= m; ++i) {
    for (Eigen::Index j = i; j <= m; ++j) {
      const MatrixXd zpz = left(i, pz[j]);
      info(i, j) = info(j, i) = -0.5 * zpz.squaredNorm() + zpy[i].dot(zpz * zpy[j]);
    }
  }

  // Chain rule to psi = (sigma^2, log theta_k): tau_k = sigma^2 theta_k.
  MatrixXd J = MatrixXd::Zero(m + 1, m + 1);
  J(0, 0) = 1.0;
  for (Eigen::Index a = 0; a < m; ++a) {
    const double theta = d.ratios[active[a]];
    J(a + 1, 0) = theta;
    J(a + 1, a + 1) = sigma2 * theta;
  }
  const MatrixXd info_psi = J.transpose() * info * J;
  Eigen::LDLT<MatrixXd> ildlt(info_psi);
  if (ildlt.info() != Eigen::Success || !ildlt.isPositive())
    throw Error("Satterthwaite: REML information matrix is not positive definite");
  const double var_of_var = grad.dot(ildlt.solve(grad));
  out.ddf = 2.0 * var * var / var_of_var;
  if (!(out.ddf > 0.0) || !std::isfinite(out.ddf)) throw Error("Satterthwaite: degenerate denominator df");
  out.p_raw = f_upper_tail(out.F, out.ndf, out.ddf);
  return out;
}

}  // namespace relanom
