#pragma once

#include <span>
#include <string>
#include <vector>

namespace relanom {

/// Regularized incomplete beta I_x(a, b). `y` must equal 1 - x; passing it
/// separately avoids cancellation when x is close to 1.
double regularized_incomplete_beta(double a, double b, double x, double y);
double regularized_incomplete_beta(double a, double b, double x);

/// P(F' > f) for F' ~ F(ndf, ddf). Throws InvalidDf for non-positive or
/// non-finite degrees of freedom, Error for negative or NaN f.
double f_upper_tail(double f, double ndf, double ddf);

/// Benjamini-Hochberg step-up adjustment, returned in input order.
/// Throws InvalidP for entries outside [0,1].
std::vector<double> bh_adjust(std::span<const double> pvals);

struct PValueSet {
  std::vector<std::string> test_ids;
  std::vector<double> p_raw;
  std::vector<double> p_corrected;

  void add(std::string id, double p);
  void adjust();  // fills p_corrected with bh_adjust(p_raw)
};

}  // namespace relanom
