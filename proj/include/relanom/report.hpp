#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "relanom/pipeline.hpp"

namespace relanom {

/// "<0.0001" below 1e-4, otherwise four decimals.
std::string format_p(double p);
/// "F(1,120) = 7.15": ddf rounded to an integer, F with two decimals below 10
/// and one decimal above; "<0.1" for F below 0.1.
std::string format_f_test(const AnovaResult& a);

std::string report_to_json(const RunReport& report);
RunReport report_from_json(std::string_view json_text);

/// Plain-text ANOVA table: one line per (experiment, model).
std::string anova_table(const RunReport& report);
/// experiment_id, model_id, condition, n, mean, se
std::string condition_means_table(const RunReport& report);
/// Grouped bars (one group per model, one bar per contrast condition) with SE error bars.
std::string condition_plot_svg(const RunReport& report, const std::string& experiment_id);

struct ReportFormats {
  bool json = true;
  bool table = true;
  bool plots = true;
};

/// Writes report.json, anova_table.txt, condition_means.tsv and
/// plot_<experiment>.svg into `out_dir`. Returns the written paths. Throws IoError.
std::vector<std::string> emit_report(const RunReport& report, const std::string& out_dir,
                                     const ReportFormats& formats = {});

}  // namespace relanom
