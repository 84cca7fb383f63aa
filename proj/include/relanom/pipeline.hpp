#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relanom/corpus.hpp"
#include "relanom/mixed_model.hpp"
#include "relanom/surprisal_table.hpp"

namespace relanom {

struct BackendConfig {
  enum class Kind { NGram, External };
  Kind kind = Kind::NGram;
  std::string model_id;    // ngram: series name; external: optional filter on a single model id
  std::string train_text;  // ngram: one sentence per line
  std::string model_file;  // ngram: saved model instead of training text
  int order = 3;
  double discount = 0.75;
  std::string scores;  // external: line-delimited score records
};

enum class FdrScope { Run, Experiment, Model };

std::string_view to_string(FdrScope scope);
FdrScope parse_fdr_scope(std::string_view s);

struct RunConfig {
  std::vector<std::string> corpora;
  std::vector<BackendConfig> backends;
  std::vector<std::string> experiments;  // empty: every experiment, in corpus order
  std::array<Condition, 2> contrast{Condition::Related, Condition::Unrelated};
  std::vector<std::string> random_effects{"frame_id", "critical_word"};  // drop priority: last first
  FdrScope fdr_scope = FdrScope::Run;
  std::string output_dir = "out";
  NumericConfig numeric;
  std::optional<double> infinite_cap_bits;  // replace +inf surprisal by this value instead of dropping
  bool include_right_context = false;
  unsigned jobs = 1;
};

/// Parses the JSON config tree. Relative paths resolve against `base_dir`.
/// Throws ConfigError on unknown keys or violated invariants.
RunConfig parse_config(std::string_view json_text, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);
void validate_config(const RunConfig& config);

struct ConditionSummary {
  double mean = 0.0;
  std::optional<double> std_error;  // absent for a single observation
  std::size_t n = 0;
};

/// Mean and standard error (sample sd with n-1, over sqrt(n)). Throws EmptyGroup.
ConditionSummary condition_summary(std::span<const double> values);

struct ConditionStats {
  Condition condition = Condition::Related;
  ConditionSummary summary;
};

struct CellReport {
  std::string model_id;
  std::string experiment_id;
  std::vector<ConditionStats> conditions;  // every condition present, Predictable included
  std::vector<std::string> random_intercepts;
  std::vector<VarianceComponent> variance_components;
  double sigma2_resid = 0.0;
  double reml_deviance = 0.0;
  bool converged = false;
  bool singular = false;
  std::size_t n_obs = 0;  // rows entering the LMM
  AnovaResult anova;
  std::vector<std::string> warnings;
};

struct RunReport {
  std::vector<std::string> models;
  std::vector<std::string> experiments;
  std::array<Condition, 2> contrast{Condition::Related, Condition::Unrelated};
  FdrScope fdr_scope = FdrScope::Run;
  std::size_t n_tests_corrected = 0;
  std::vector<CellReport> cells;  // model-major, experiment-minor
  std::vector<std::string> warnings;
};

struct ScoreOutput {
  std::vector<SurprisalRow> rows;  // backend order, then corpus order
  std::vector<std::string> models;
  std::vector<std::string> warnings;
};

std::vector<StimulusItem> load_corpora(const RunConfig& config);

/// Scores every selected item with every backend.
ScoreOutput score_items(const RunConfig& config, const std::vector<StimulusItem>& items);

/// Per (model, experiment): condition summaries, random-effects selection on
/// the contrast subset, Type III test; then FDR correction across the scope.
RunReport analyze(const std::vector<SurprisalRow>& rows, const RunConfig& config);

struct RunOutput {
  ScoreOutput scores;
  RunReport report;
};

RunOutput run(const RunConfig& config);

}  // namespace relanom
