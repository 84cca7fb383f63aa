#include "relanom/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "relanom/errors.hpp"

namespace relanom {

namespace {

// Modified Lentz evaluation of the incomplete beta continued fraction
// (valid and fast for x < (a+1)/(a+b+2)).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  constexpr int max_terms = 100000;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_terms; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x, double y) {
  if (!(a > 0.0 && b > 0.0)) throw Error("incomplete beta: shape parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw Error("incomplete beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (y == 0.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log(y) + std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, y) / b;
}

double regularized_incomplete_beta(double a, double b, double x) {
  return regularized_incomplete_beta(a, b, x, 1.0 - x);
}

double f_upper_tail(double f, double ndf, double ddf) {
  if (!(ndf > 0.0) || !(ddf > 0.0) || !std::isfinite(ndf) || !std::isfinite(ddf))
    throw InvalidDf("F distribution needs positive, finite degrees of freedom");
  if (std::isnan(f) || f < 0.0) throw Error("F statistic must be >= 0");
  if (f == 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  // P(F > f) = I_x(ddf/2, ndf/2) with x = ddf / (ddf + ndf f)
  const double denom = ddf + ndf * f;
  const double x = ddf / denom;
  const double y = ndf * f / denom;
  return std::clamp(regularized_incomplete_beta(ddf / 2.0, ndf / 2.0, x, y), 0.0, 1.0);
}

std::vector<double> bh_adjust(std::span<const double> pvals) {
  const std::size_t m = pvals.size();
  for (double p : pvals)
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidP("p-value outside [0,1]");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });

  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    const double rank = static_cast<double>(k + 1);
    const double candidate = static_cast<double>(m) * pvals[order[k]] / rank;
    running = std::min(running, candidate);
    // m p / m can round below p.
    out[order[k]] = std::max(running, pvals[order[k]]);
  }
  return out;
}

void PValueSet::add(std::string id, double p) {
  test_ids.push_back(std::move(id));
  p_raw.push_back(p);
}

void PValueSet::adjust() { p_corrected = bh_adjust(p_raw); }

}  // namespace relanom
