#include "oracles.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  while (u == 0.0) u = uniform();
  const double v = uniform();
  const double r = std::sqrt(-2.0 * std::log(u));
  spare_ = r * std::sin(2.0 * std::numbers::pi * v);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * v);
}

relanom::LmmData balanced_one_way(Rng& rng, int g, int n, double sigma_group, double sigma_resid, double effect) {
  relanom::LmmData d;
  auto& groups = d.groupings["group"];
  for (int j = 0; j < g; ++j) {
    const bool related = j % 2 == 0;
    const double u = sigma_group * rng.normal();
    for (int i = 0; i < n; ++i) {
      d.response.push_back(10.0 + (related ? effect : -effect) + u + sigma_resid * rng.normal());
      d.fixed.push_back(related ? "Related" : "Unrelated");
      groups.push_back("g" + std::to_string(j));
    }
  }
  return d;
}

ClosedForm balanced_closed_form(const relanom::LmmData& data, const std::string& grouping) {
  const auto& groups = data.groupings.at(grouping);
  std::map<std::string, std::vector<double>> by_group;
  std::map<std::string, std::string> condition_of;
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_group[groups[i]].push_back(data.response[i]);
    condition_of[groups[i]] = data.fixed[i];
  }
  const double g = static_cast<double>(by_group.size());
  const double n = static_cast<double>(by_group.begin()->second.size());
  std::map<std::string, double> mean;
  double ssw = 0.0;
  for (const auto& [k, v] : by_group) {
    if (static_cast<double>(v.size()) != n) throw std::logic_error("unbalanced");
    double m = 0.0;
    for (double x : v) m += x;
    m /= n;
    mean[k] = m;
    for (double x : v) ssw += (x - m) * (x - m);
  }
  std::map<std::string, std::pair<double, int>> cond_mean;
  for (const auto& [k, m] : mean) {
    auto& c = cond_mean[condition_of[k]];
    c.first += m;
    c.second += 1;
  }
  double ssb = 0.0;
  for (const auto& [k, m] : mean) {
    const auto& c = cond_mean[condition_of[k]];
    const double fitted = c.first / c.second;
    ssb += n * (m - fitted) * (m - fitted);
  }
  ClosedForm out;
  out.msw = ssw / (g * (n - 1.0));
  out.msb = ssb / (g - static_cast<double>(cond_mean.size()));
  out.sigma2_resid = out.msw;
  out.sigma2_group = (out.msb - out.msw) / n;
  return out;
}

relanom::LmmData stimulus_like(Rng& rng, int n_frames, int pool, double sigma_frame, double sigma_word,
                               double sigma_resid, double effect, bool center_word_noise) {
  relanom::LmmData d;
  auto& frames = d.groupings["frame_id"];
  auto& words = d.groupings["critical_word"];
  std::map<std::string, double> word_effect;
  for (int k = 0; k < pool; ++k) {
    word_effect["r" + std::to_string(k)] = sigma_word * rng.normal();
    word_effect["u" + std::to_string(k)] = sigma_word * rng.normal();
  }
  std::vector<double> noise;
  for (int f = 0; f < n_frames; ++f) {
    const double u = sigma_frame * rng.normal();
    for (int c = 0; c < 2; ++c) {
      const std::string w = (c == 0 ? "r" : "u") + std::to_string(rng.between(0, pool - 1));
      frames.push_back("f" + std::to_string(f));
      words.push_back(w);
      d.fixed.push_back(c == 0 ? "Related" : "Unrelated");
      d.response.push_back(12.0 + (c == 0 ? -effect : effect) + u + word_effect[w]);
      noise.push_back(sigma_resid * rng.normal());
    }
  }
  if (center_word_noise) {
    std::map<std::string, std::pair<double, int>> sums;
    for (std::size_t i = 0; i < noise.size(); ++i) {
      sums[words[i]].first += noise[i];
      sums[words[i]].second += 1;
    }
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] -= sums[words[i]].first / sums[words[i]].second;
  }
  for (std::size_t i = 0; i < noise.size(); ++i) d.response[i] += noise[i];
  return d;
}

DenseDesign dense_design(const relanom::LmmData& data, const relanom::ModelSpec& spec) {
  const auto n = static_cast<Eigen::Index>(data.size());
  DenseDesign d;
  d.X.resize(n, 2);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = data.fixed[static_cast<std::size_t>(i)] == spec.fixed_levels[0] ? 1.0 : -1.0;
    d.y(i) = data.response[static_cast<std::size_t>(i)];
  }
  for (const auto& name : spec.random_intercepts) {
    const auto& col = data.groupings.at(name);
    std::map<std::string, Eigen::Index> level;
    for (const auto& s : col) level.emplace(s, static_cast<Eigen::Index>(level.size()));
    MatrixXd Z = MatrixXd::Zero(n, static_cast<Eigen::Index>(level.size()));
    for (Eigen::Index i = 0; i < n; ++i) Z(i, level[col[static_cast<std::size_t>(i)]]) = 1.0;
    d.Z.push_back(std::move(Z));
  }
  return d;
}

namespace {

struct Profiled {
  double logdet_h = 0.0;
  double logdet_a = 0.0;
  double q = 0.0;  // r' H^-1 r
  VectorXd beta;
  MatrixXd a_inv;
};

Profiled profile(const DenseDesign& d, std::span<const double> ratios) {
  const auto n = d.y.size();
  MatrixXd H = MatrixXd::Identity(n, n);
  for (std::size_t k = 0; k < d.Z.size(); ++k) H += ratios[k] * d.Z[k] * d.Z[k].transpose();
  Eigen::LLT<MatrixXd> llt(H);
  Profiled p;
  p.logdet_h = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const MatrixXd hx = llt.solve(d.X);
  const VectorXd hy = llt.solve(d.y);
  const MatrixXd A = d.X.transpose() * hx;
  Eigen::LLT<MatrixXd> alt(A);
  p.logdet_a = 2.0 * alt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  p.beta = alt.solve(d.X.transpose() * hy);
  p.a_inv = alt.solve(MatrixXd::Identity(A.rows(), A.cols()));
  const VectorXd r = d.y - d.X * p.beta;
  p.q = r.dot(llt.solve(r));
  return p;
}

}  // namespace

double reml_deviance(const DenseDesign& d, std::span<const double> ratios) {
  const auto p = profile(d, ratios);
  const double dof = static_cast<double>(d.y.size() - d.X.cols());
  return p.logdet_h + p.logdet_a + dof * (1.0 + std::log(2.0 * std::numbers::pi * p.q / dof));
}

double ml_deviance(const DenseDesign& d, std::span<const double> ratios) {
  const auto p = profile(d, ratios);
  const double n = static_cast<double>(d.y.size());
  return p.logdet_h + n * (1.0 + std::log(2.0 * std::numbers::pi * p.q / n));
}

Gls gls(const DenseDesign& d, std::span<const double> ratios) {
  const auto p = profile(d, ratios);
  Gls out;
  out.beta = p.beta;
  out.sigma2 = p.q / static_cast<double>(d.y.size() - d.X.cols());
  out.var_contrast = out.sigma2 * p.a_inv(1, 1);
  out.F = p.beta(1) * p.beta(1) / out.var_contrast;
  return out;
}

std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> g;
  for (int i = 0; i < points; ++i)
    g.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (points - 1)));
  return g;
}

double f_upper_tail_quadrature(double f, double ndf, double ddf) {
  using LD = long double;
  const LD a = static_cast<LD>(ndf) / 2, b = static_cast<LD>(ddf) / 2;
  const LD log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const LD d1 = ndf, d2 = ddf;
  auto density = [&](LD x) -> LD {
    if (x <= 0) return 0;
    const LD log_num = a * std::log(d1 * x) + b * std::log(d2) - (a + b) * std::log(d1 * x + d2);
    return std::exp(log_num - std::log(x) - log_beta);
  };
  boost::math::quadrature::exp_sinh<LD> integrator;
  return static_cast<double>(integrator.integrate(density, static_cast<LD>(f),
                                                  std::numeric_limits<LD>::infinity(), 1e-15L));
}

double t_two_sided(double f, double ddf) {
  boost::math::students_t t(ddf);
  return 2.0 * boost::math::cdf(boost::math::complement(t, std::sqrt(f)));
}

std::vector<double> bh_brute_force(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double best = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (p[j] < p[i]) continue;
      std::size_t rank = 0;
      for (std::size_t k = 0; k < m; ++k) rank += p[k] <= p[j] ? 1 : 0;
      best = std::min(best, static_cast<double>(m) * p[j] / static_cast<double>(rank));
    }
    out[i] = std::max(best, p[i]);
  }
  return out;
}

ScriptedBackend::ScriptedBackend(std::string id, std::map<std::string, std::vector<double>> script,
                                 relanom::ScoringMode mode)
    : id_(std::move(id)), mode_(mode), script_(std::move(script)) {
  for (const auto& [ctx, probs] : script_) contexts_.push_back(ctx);
}

std::vector<relanom::TokenId> ScriptedBackend::tokenize_context(const std::string& context) const {
  const auto it = std::find(contexts_.begin(), contexts_.end(), context);
  if (it == contexts_.end()) return {kFiller};
  return {static_cast<relanom::TokenId>(100 + (it - contexts_.begin()))};
}

std::vector<relanom::TokenId> ScriptedBackend::tokenize_word(const std::string&, const std::string& context) const {
  const auto it = script_.find(context);
  if (it == script_.end()) throw std::runtime_error("unscripted context");
  std::vector<relanom::TokenId> ids;
  for (std::size_t k = 0; k < it->second.size(); ++k) ids.push_back(static_cast<relanom::TokenId>(1000 + k));
  return ids;
}

relanom::TokenDistribution ScriptedBackend::next_token_distribution(
    std::span<const relanom::TokenId> context, std::optional<std::span<const relanom::TokenId>> right_context) const {
  if (right_context) ++right_context_calls;
  if (context.empty() || context[0] < 100 || context[0] >= 1000) throw std::runtime_error("unscripted context");
  const auto& probs = script_.at(contexts_[static_cast<std::size_t>(context[0] - 100)]);
  const std::size_t k = context.size() - 1;
  if (k >= probs.size()) throw std::runtime_error("past the scripted word");
  const double p = probs[k];
  return relanom::TokenDistribution({kFiller, static_cast<relanom::TokenId>(1000 + k)}, {1.0 - p, p});
}

}  // namespace oracle
