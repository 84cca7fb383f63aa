// relanom: score stimuli, fit mixed models, write reports.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "relanom/errors.hpp"
#include "relanom/pipeline.hpp"
#include "relanom/report.hpp"
#include "relanom/synthetic.hpp"

namespace fs = std::filesystem;
using namespace relanom;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw IoError("cannot create " + dir);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

void write_surprisals(const std::string& dir, const ScoreOutput& scores) {
  ensure_dir(dir);
  const auto path = (fs::path(dir) / "surprisals.tsv").string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_surprisal_table(out, scores.rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surprisal-based analysis of relatedness effects in language models"};
  app.require_subcommand(1);

  std::string config_path, out_dir, surprisals_path, report_path;
  unsigned jobs = 0;

  auto* validate = app.add_subcommand("validate", "Check a config and its corpora");
  validate->add_option("--config", config_path, "Run config (JSON)")->required();

  auto* score = app.add_subcommand("score", "Compute per-word surprisal");
  auto* fit = app.add_subcommand("fit", "Fit mixed models on a surprisal table");
  auto* run_cmd = app.add_subcommand("run", "Score, fit and report");
  for (auto* sub : {score, fit, run_cmd}) {
    sub->add_option("--config", config_path, "Run config (JSON)")->required();
    sub->add_option("--out", out_dir, "Output directory (overrides config)");
    sub->add_option("--jobs", jobs, "Worker threads (overrides config)");
  }
  fit->add_option("--surprisals", surprisals_path, "Surprisal table; default <out>/surprisals.tsv");

  auto* report = app.add_subcommand("report", "Re-render tables and plots from report.json");
  report->add_option("--report", report_path, "report.json")->required()->check(CLI::ExistingFile);
  report->add_option("--out", out_dir, "Output directory; default: alongside report.json");

  SyntheticOptions synth_opt;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus, training text and config");
  synth->add_option("--out", synth_dir, "Directory")->required();
  synth->add_option("--seed", synth_opt.seed, "Generator seed");
  synth->add_option("--frames", synth_opt.n_frames, "Number of frames");

  CLI11_PARSE(app, argc, argv);

  try {
    auto load = [&] {
      RunConfig c = load_config(config_path);
      if (!out_dir.empty()) c.output_dir = out_dir;
      if (jobs > 0) c.jobs = jobs;
      validate_config(c);
      return c;
    };

    if (*validate) {
      const RunConfig c = load();
      const auto items = load_corpora(c);
      std::cout << "ok: " << items.size() << " items, " << c.backends.size() << " backends\n";
    } else if (*score) {
      const RunConfig c = load();
      const auto scores = score_items(c, load_corpora(c));
      print_warnings(scores.warnings);
      write_surprisals(c.output_dir, scores);
      std::cout << "wrote " << scores.rows.size() << " rows to "
                << (fs::path(c.output_dir) / "surprisals.tsv").string() << "\n";
    } else if (*fit) {
      const RunConfig c = load();
      if (surprisals_path.empty()) surprisals_path = (fs::path(c.output_dir) / "surprisals.tsv").string();
      std::ifstream in(surprisals_path, std::ios::binary);
      if (!in) throw IoError("cannot open " + surprisals_path);
      const RunReport r = analyze(read_surprisal_table(in), c);
      print_warnings(r.warnings);
      emit_report(r, c.output_dir);
      std::cout << anova_table(r);
    } else if (*run_cmd) {
      const RunConfig c = load();
      const RunOutput out = run(c);
      print_warnings(out.scores.warnings);
      print_warnings(out.report.warnings);
      write_surprisals(c.output_dir, out.scores);
      emit_report(out.report, c.output_dir);
      std::cout << anova_table(out.report);
    } else if (*report) {
      const RunReport r = report_from_json(read_file(report_path));
      if (out_dir.empty()) out_dir = fs::path(report_path).parent_path().string();
      if (out_dir.empty()) out_dir = ".";
      emit_report(r, out_dir, ReportFormats{false, true, true});
      std::cout << anova_table(r);
    } else if (*synth) {
      std::cout << write_synthetic_run(synth_opt, synth_dir) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
