#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace relanom {

/// Numeric settings shared by fitting, selection and the F test.
struct NumericConfig {
  double singular_threshold = 1e-6;  // variance ratio below which a component counts as singular
  double deviance_rel_tol = 1e-10;
  double parameter_tol = 1e-8;    // on the log-ratio scale
  double fd_step = 1e-4;          // Satterthwaite gradient step on the log-ratio scale
  double log_ratio_lower = -27.631021115928547;  // log(1e-12)
  double log_ratio_upper = 18.420680743952367;   // log(1e8)
  std::vector<double> start_ratios{1e-3, 1.0, 1e3};
  int max_iterations = 20000;
};

/// Long-format data: one response per row, a two-level fixed factor, and any
/// number of named categorical grouping columns.
struct LmmData {
  std::vector<double> response;
  std::vector<std::string> fixed;
  std::map<std::string, std::vector<std::string>> groupings;

  std::size_t size() const { return response.size(); }
};

struct ModelSpec {
  std::string response = "surprisal_bits";
  std::string fixed = "condition";
  std::array<std::string, 2> fixed_levels{"Related", "Unrelated"};  // first level is coded +1
  std::vector<std::string> random_intercepts;                      // in drop-priority order (last dropped first)

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

std::string describe(const ModelSpec& spec);

struct VarianceComponent {
  std::string grouping;
  std::size_t n_levels = 0;
  double variance = 0.0;  // sigma^2_g
  double ratio = 0.0;     // sigma^2_g / sigma^2_resid
};

namespace detail {
struct LmmDesign;
}

struct FittedLMM {
  ModelSpec spec;
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();  // intercept, sum-to-zero condition contrast
  std::vector<VarianceComponent> variance_components;
  double sigma2_resid = 0.0;
  double reml_deviance = 0.0;
  bool converged = false;
  bool singular = false;
  std::size_t n_obs = 0;
  int iterations = 0;
  NumericConfig numeric;

  std::shared_ptr<const detail::LmmDesign> design;  // what type3_anova needs to re-evaluate the criterion
};

/// REML fit with profiled fixed effects and residual variance, optimised over
/// log variance ratios by bounded Nelder-Mead from several starts.
/// Throws InvalidSpec (missing column, < 2 obs per level, unusable grouping)
/// and RankDeficient. Non-convergence is reported through `converged`.
FittedLMM fit_reml(const LmmData& data, const ModelSpec& spec, const NumericConfig& numeric = {});

struct SelectionAttempt {
  ModelSpec spec;
  bool converged = false;
  bool singular = false;
  std::string error;
};

struct Selection {
  ModelSpec spec;
  FittedLMM fit;
  std::vector<SelectionAttempt> attempts;
};

/// Tries maximal, maximal minus its last grouping, ... and keeps the first fit
/// that converges without a singular component. If every converging fit is
/// singular, the last non-empty spec that converged is kept with singular set.
/// Throws SelectionFailed when nothing converges.
Selection select_random_effects(const LmmData& data, const ModelSpec& maximal, const NumericConfig& numeric = {});

struct AnovaResult {
  double F = 0.0;
  int ndf = 1;
  double ddf = 0.0;  // Satterthwaite
  double p_raw = 1.0;
  std::optional<double> p_corrected;
  double estimate = 0.0;  // L beta on the response scale
  double std_error = 0.0;
};

/// Type III F test of the condition contrast with Satterthwaite denominator
/// degrees of freedom. Throws NotConverged for fits that did not converge.
AnovaResult type3_anova(const FittedLMM& fit);

}  // namespace relanom
