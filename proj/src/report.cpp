#include "relanom/report.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "relanom/errors.hpp"
#include "relanom/text_util.hpp"

namespace relanom {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string printf_string(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string file_safe(std::string_view id) {
  std::string out;
  for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "_" : out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("error writing " + path.string());
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string pad(std::string s, std::size_t width) {
  s.append(s.size() < width ? width - s.size() : 1, ' ');
  return s;
}

}  // namespace

std::string format_p(double p) {
  if (p < 1e-4) return "<0.0001";
  return printf_string("%.4f", p);
}

std::string format_f_test(const AnovaResult& a) {
  std::string stat;
  if (a.F < 0.1)
    stat = "<0.1";
  else if (a.F < 10.0)
    stat = printf_string("%.2f", a.F);
  else
    stat = printf_string("%.1f", a.F);
  return "F(" + std::to_string(a.ndf) + "," + std::to_string(std::lround(a.ddf)) + ") = " + stat;
}

std::string report_to_json(const RunReport& r) {
  ojson doc;
  doc["format"] = "relanom-report";
  doc["version"] = 1;
  doc["contrast"] = {std::string(to_string(r.contrast[0])), std::string(to_string(r.contrast[1]))};
  doc["fdr_scope"] = std::string(to_string(r.fdr_scope));
  doc["n_tests_corrected"] = r.n_tests_corrected;
  doc["models"] = r.models;
  doc["experiments"] = r.experiments;
  auto cells = ojson::array();
  for (const auto& c : r.cells) {
    ojson j;
    j["model_id"] = c.model_id;
    j["experiment_id"] = c.experiment_id;
    j["n_obs"] = c.n_obs;
    j["random_intercepts"] = c.random_intercepts;
    auto vcs = ojson::array();
    for (const auto& v : c.variance_components)
      vcs.push_back({{"grouping", v.grouping}, {"n_levels", v.n_levels}, {"variance", v.variance}, {"ratio", v.ratio}});
    j["variance_components"] = std::move(vcs);
    j["sigma2_resid"] = c.sigma2_resid;
    j["reml_deviance"] = c.reml_deviance;
    j["converged"] = c.converged;
    j["singular"] = c.singular;
    ojson a;
    a["F"] = c.anova.F;
    a["ndf"] = c.anova.ndf;
    a["ddf"] = c.anova.ddf;
    a["p_raw"] = c.anova.p_raw;
    a["p_corrected"] = c.anova.p_corrected ? ojson(*c.anova.p_corrected) : ojson(nullptr);
    a["estimate"] = c.anova.estimate;
    a["std_error"] = c.anova.std_error;
    j["anova"] = std::move(a);
    auto conds = ojson::array();
    for (const auto& s : c.conditions) {
      ojson cj;
      cj["condition"] = std::string(to_string(s.condition));
      cj["n"] = s.summary.n;
      cj["mean"] = s.summary.mean;
      cj["se"] = s.summary.std_error ? ojson(*s.summary.std_error) : ojson(nullptr);
      conds.push_back(std::move(cj));
    }
    j["conditions"] = std::move(conds);
    j["warnings"] = c.warnings;
    cells.push_back(std::move(j));
  }
  doc["cells"] = std::move(cells);
  doc["warnings"] = r.warnings;
  return doc.dump(2) + "\n";
}

RunReport report_from_json(std::string_view json_text) {
  try {
    const auto doc = nlohmann::json::parse(json_text);
    if (doc.at("format").get<std::string>() != "relanom-report" || doc.at("version").get<int>() != 1)
      throw Error("not a version-1 relanom report");
    RunReport r;
    const auto contrast = doc.at("contrast").get<std::vector<std::string>>();
    if (contrast.size() != 2) throw Error("report contrast must have two levels");
    r.contrast = {parse_condition(contrast[0]), parse_condition(contrast[1])};
    r.fdr_scope = parse_fdr_scope(doc.at("fdr_scope").get<std::string>());
    r.n_tests_corrected = doc.at("n_tests_corrected").get<std::size_t>();
    r.models = doc.at("models").get<std::vector<std::string>>();
    r.experiments = doc.at("experiments").get<std::vector<std::string>>();
    auto num = [](const nlohmann::json& j) {
      return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
    };
    for (const auto& j : doc.at("cells")) {
      CellReport c;
      c.model_id = j.at("model_id").get<std::string>();
      c.experiment_id = j.at("experiment_id").get<std::string>();
      c.n_obs = j.at("n_obs").get<std::size_t>();
      c.random_intercepts = j.at("random_intercepts").get<std::vector<std::string>>();
      for (const auto& v : j.at("variance_components"))
        c.variance_components.push_back({v.at("grouping").get<std::string>(), v.at("n_levels").get<std::size_t>(),
                                         num(v.at("variance")), num(v.at("ratio"))});
      c.sigma2_resid = num(j.at("sigma2_resid"));
      c.reml_deviance = num(j.at("reml_deviance"));
      c.converged = j.at("converged").get<bool>();
      c.singular = j.at("singular").get<bool>();
      const auto& a = j.at("anova");
      c.anova.F = num(a.at("F"));
      c.anova.ndf = a.at("ndf").get<int>();
      c.anova.ddf = num(a.at("ddf"));
      c.anova.p_raw = num(a.at("p_raw"));
      if (!a.at("p_corrected").is_null()) c.anova.p_corrected = a.at("p_corrected").get<double>();
      c.anova.estimate = num(a.at("estimate"));
      c.anova.std_error = num(a.at("std_error"));
      for (const auto& cj : j.at("conditions")) {
        ConditionStats s;
        s.condition = parse_condition(cj.at("condition").get<std::string>());
        s.summary.n = cj.at("n").get<std::size_t>();
        s.summary.mean = num(cj.at("mean"));
        if (!cj.at("se").is_null()) s.summary.std_error = cj.at("se").get<double>();
        c.conditions.push_back(s);
      }
      c.warnings = j.at("warnings").get<std::vector<std::string>>();
      r.cells.push_back(std::move(c));
    }
    r.warnings = doc.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("report JSON: ") + e.what());
  }
}

std::string anova_table(const RunReport& r) {
  constexpr std::size_t we = 16, wm = 16, wf = 22;
  std::ostringstream out;
  out << pad("Experiment", we) << pad("Model", wm) << pad("Test Statistic", wf) << "Corrected p\n";
  for (const auto& e : r.experiments)
    for (const auto& c : r.cells) {
      if (c.experiment_id != e) continue;
      out << pad(c.experiment_id, we) << pad(c.model_id, wm) << pad(format_f_test(c.anova), wf)
          << (c.anova.p_corrected ? format_p(*c.anova.p_corrected) : "NA") << '\n';
    }
  return out.str();
}

std::string condition_means_table(const RunReport& r) {
  std::ostringstream out;
  out << "experiment_id\tmodel_id\tcondition\tn\tmean\tse\n";
  for (const auto& c : r.cells)
    for (const auto& s : c.conditions)
      out << c.experiment_id << '\t' << c.model_id << '\t' << to_string(s.condition) << '\t' << s.summary.n << '\t'
          << text::format_double(s.summary.mean) << '\t'
          << (s.summary.std_error ? text::format_double(*s.summary.std_error) : "NA") << '\n';
  return out.str();
}

std::string condition_plot_svg(const RunReport& r, const std::string& experiment_id) {
  std::vector<const CellReport*> cells;
  for (const auto& c : r.cells)
    if (c.experiment_id == experiment_id) cells.push_back(&c);

  const double bar_w = 28, group_gap = 24, left = 70, top = 40, plot_h = 260, bottom = 80;
  const double group_w = 2 * bar_w + group_gap;
  const double width = left + std::max<double>(1.0, static_cast<double>(cells.size())) * group_w + 120;
  const double height = top + plot_h + bottom;
  const char* colors[2] = {"#4477aa", "#ee6677"};

  double ymax = 0.0;
  for (const auto* c : cells)
    for (const auto& s : c->conditions)
      if (s.condition == r.contrast[0] || s.condition == r.contrast[1])
        ymax = std::max(ymax, s.summary.mean + s.summary.std_error.value_or(0.0));
  ymax = ymax > 0 ? ymax * 1.1 : 1.0;
  auto ypos = [&](double v) { return top + plot_h - v / ymax * plot_h; };
  auto f2 = [](double v) { return printf_string("%.2f", v); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f2(width) << "\" height=\"" << f2(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << f2(left) << "\" y=\"20\" font-size=\"13\">Mean surprisal (bits): " << xml_escape(experiment_id)
      << "</text>\n";
  svg << "<line x1=\"" << f2(left) << "\" y1=\"" << f2(top) << "\" x2=\"" << f2(left) << "\" y2=\"" << f2(top + plot_h)
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << f2(left) << "\" y1=\"" << f2(top + plot_h) << "\" x2=\"" << f2(width - 110) << "\" y2=\""
      << f2(top + plot_h) << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = ymax * t / 4.0;
    svg << "<text x=\"" << f2(left - 6) << "\" y=\"" << f2(ypos(v) + 4) << "\" text-anchor=\"end\">" << f2(v)
        << "</text>\n";
  }
  for (std::size_t g = 0; g < cells.size(); ++g) {
    const double gx = left + group_gap / 2 + static_cast<double>(g) * group_w;
    for (int b = 0; b < 2; ++b) {
      const auto it = std::find_if(cells[g]->conditions.begin(), cells[g]->conditions.end(),
                                   [&](const ConditionStats& s) { return s.condition == r.contrast[b]; });
      if (it == cells[g]->conditions.end()) continue;
      const double x = gx + b * bar_w;
      const double m = it->summary.mean;
      svg << "<rect class=\"bar\" x=\"" << f2(x) << "\" y=\"" << f2(ypos(m)) << "\" width=\"" << f2(bar_w - 2) << "\" height=\""
          << f2(top + plot_h - ypos(m)) << "\" fill=\"" << colors[b] << "\"/>\n";
      if (it->summary.std_error) {
        const double cx = x + (bar_w - 2) / 2, se = *it->summary.std_error;
        svg << "<line class=\"error\" x1=\"" << f2(cx) << "\" y1=\"" << f2(ypos(m + se)) << "\" x2=\"" << f2(cx) << "\" y2=\""
            << f2(ypos(std::max(m - se, 0.0))) << "\" stroke=\"black\"/>\n";
        for (double yv : {m + se, std::max(m - se, 0.0)})
          svg << "<line class=\"error\" x1=\"" << f2(cx - 5) << "\" y1=\"" << f2(ypos(yv)) << "\" x2=\"" << f2(cx + 5) << "\" y2=\""
              << f2(ypos(yv)) << "\" stroke=\"black\"/>\n";
      }
    }
    svg << "<text x=\"" << f2(gx + bar_w) << "\" y=\"" << f2(top + plot_h + 16) << "\" text-anchor=\"middle\">"
        << xml_escape(cells[g]->model_id) << "</text>\n";
  }
  for (int b = 0; b < 2; ++b) {
    const double ly = top + 10 + b * 18;
    svg << "<rect x=\"" << f2(width - 100) << "\" y=\"" << f2(ly) << "\" width=\"12\" height=\"12\" fill=\"" << colors[b]
        << "\"/>\n";
    svg << "<text x=\"" << f2(width - 82) << "\" y=\"" << f2(ly + 10) << "\">" << to_string(r.contrast[b])
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::string> emit_report(const RunReport& report, const std::string& out_dir, const ReportFormats& formats) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir);
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& content) {
    const auto path = fs::path(out_dir) / name;
    write_file(path, content);
    written.push_back(path.string());
  };
  if (formats.json) put("report.json", report_to_json(report));
  if (formats.table) {
    put("anova_table.txt", anova_table(report));
    put("condition_means.tsv", condition_means_table(report));
  }
  if (formats.plots)
    for (const auto& e : report.experiments) put("plot_" + file_safe(e) + ".svg", condition_plot_svg(report, e));
  return written;
}

}  // namespace relanom
