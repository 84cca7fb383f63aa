#include "relanom/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "relanom/errors.hpp"
#include "relanom/external_scores.hpp"
#include "relanom/inference.hpp"
#include "relanom/ngram.hpp"
#include "relanom/scoring.hpp"

namespace relanom {

namespace fs = std::filesystem;

namespace {

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base) / path).lexically_normal().string();
}

void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename F>
void parallel_for(std::size_t n, unsigned jobs, F&& body) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::shared_ptr<const NGramModel> build_ngram(const BackendConfig& b) {
  if (!b.model_file.empty()) {
    std::ifstream in(b.model_file);
    if (!in) throw IoError("cannot open n-gram model " + b.model_file);
    return std::make_shared<const NGramModel>(NGramModel::load(in));
  }
  std::ifstream in(b.train_text);
  if (!in) throw IoError("cannot open n-gram training text " + b.train_text);
  return std::make_shared<const NGramModel>(NGramModel::train(read_training_text(in), b.order, b.discount));
}

}  // namespace

std::string_view to_string(FdrScope scope) {
  switch (scope) {
    case FdrScope::Run: return "run";
    case FdrScope::Experiment: return "experiment";
    case FdrScope::Model: return "model";
  }
  return "?";
}

FdrScope parse_fdr_scope(std::string_view s) {
  if (s == "run") return FdrScope::Run;
  if (s == "experiment") return FdrScope::Experiment;
  if (s == "model") return FdrScope::Model;
  throw ConfigError("unknown fdr_scope '" + std::string(s) + "'");
}

RunConfig parse_config(std::string_view json_text, const std::string& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(doc,
             {"corpora", "backends", "experiments", "contrast", "random_effects", "fdr_scope", "output_dir", "numeric",
              "infinite_cap_bits", "include_right_context", "jobs"},
             "config");
  RunConfig c;
  try {
    for (const auto& p : doc.value("corpora", nlohmann::json::array())) c.corpora.push_back(resolve(base_dir, p.get<std::string>()));
    for (const auto& b : doc.value("backends", nlohmann::json::array())) {
      BackendConfig bc;
      const auto type = b.at("type").get<std::string>();
      if (type == "ngram") {
        check_keys(b, {"type", "model_id", "train_text", "model_file", "order", "discount"}, "ngram backend");
        bc.kind = BackendConfig::Kind::NGram;
        bc.model_id = b.at("model_id").get<std::string>();
        bc.train_text = resolve(base_dir, b.value("train_text", std::string{}));
        bc.model_file = resolve(base_dir, b.value("model_file", std::string{}));
        bc.order = b.value("order", 3);
        bc.discount = b.value("discount", 0.75);
        if (bc.train_text.empty() == bc.model_file.empty())
          throw ConfigError("ngram backend '" + bc.model_id + "' needs exactly one of train_text or model_file");
      } else if (type == "external") {
        check_keys(b, {"type", "scores", "model_id"}, "external backend");
        bc.kind = BackendConfig::Kind::External;
        bc.scores = resolve(base_dir, b.at("scores").get<std::string>());
        bc.model_id = b.value("model_id", std::string{});
      } else {
        throw ConfigError("unknown backend type '" + type + "'");
      }
      c.backends.push_back(std::move(bc));
    }
    c.experiments = doc.value("experiments", std::vector<std::string>{});
    if (doc.contains("contrast")) {
      const auto labels = doc["contrast"].get<std::vector<std::string>>();
      if (labels.size() != 2) throw ConfigError("contrast must list exactly two conditions");
      c.contrast = {parse_condition(labels[0]), parse_condition(labels[1])};
    }
    if (doc.contains("random_effects")) c.random_effects = doc["random_effects"].get<std::vector<std::string>>();
    if (doc.contains("fdr_scope")) c.fdr_scope = parse_fdr_scope(doc["fdr_scope"].get<std::string>());
    c.output_dir = resolve(base_dir, doc.value("output_dir", std::string("out")));
    if (doc.contains("numeric")) {
      const auto& n = doc["numeric"];
      check_keys(n, {"singular_threshold", "deviance_rel_tol", "parameter_tol", "fd_step", "max_iterations", "start_ratios"},
                 "numeric");
      c.numeric.singular_threshold = n.value("singular_threshold", c.numeric.singular_threshold);
      c.numeric.deviance_rel_tol = n.value("deviance_rel_tol", c.numeric.deviance_rel_tol);
      c.numeric.parameter_tol = n.value("parameter_tol", c.numeric.parameter_tol);
      c.numeric.fd_step = n.value("fd_step", c.numeric.fd_step);
      c.numeric.max_iterations = n.value("max_iterations", c.numeric.max_iterations);
      c.numeric.start_ratios = n.value("start_ratios", c.numeric.start_ratios);
    }
    if (doc.contains("infinite_cap_bits") && !doc["infinite_cap_bits"].is_null())
      c.infinite_cap_bits = doc["infinite_cap_bits"].get<double>();
    c.include_right_context = doc.value("include_right_context", false);
    c.jobs = doc.value("jobs", 1u);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const UnknownCondition& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate_config(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto base = fs::path(path).parent_path().string();
  return parse_config(ss.str(), base.empty() ? "." : base);
}

void validate_config(const RunConfig& c) {
  if (c.corpora.empty()) throw ConfigError("config needs at least one corpus");
  if (c.backends.empty()) throw ConfigError("config needs at least one backend");
  if (c.contrast[0] == c.contrast[1]) throw ConfigError("contrast conditions must differ");
  for (const auto& g : c.random_effects)
    if (g != "frame_id" && g != "critical_word") throw ConfigError("random effect must be frame_id or critical_word");
  std::set<std::string> ngram_ids;
  for (const auto& b : c.backends) {
    if (b.kind != BackendConfig::Kind::NGram) continue;
    if (b.model_id.empty()) throw ConfigError("ngram backend needs a model_id");
    if (!ngram_ids.insert(b.model_id).second) throw ConfigError("duplicate backend model_id '" + b.model_id + "'");
    if (b.model_file.empty() && (b.order < 1 || !(b.discount > 0.0 && b.discount < 1.0)))
      throw ConfigError("ngram backend '" + b.model_id + "' needs order >= 1 and 0 < discount < 1");
  }
  if (!(c.numeric.singular_threshold > 0.0) || !(c.numeric.fd_step > 0.0) || c.numeric.start_ratios.empty())
    throw ConfigError("numeric settings out of range");
  if (c.infinite_cap_bits && !(*c.infinite_cap_bits >= 0.0 && std::isfinite(*c.infinite_cap_bits)))
    throw ConfigError("infinite_cap_bits must be finite and >= 0");
}

ConditionSummary condition_summary(std::span<const double> values) {
  if (values.empty()) throw EmptyGroup("condition has no observations");
  ConditionSummary s;
  s.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std_error = std::sqrt(ss / static_cast<double>(s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

std::vector<StimulusItem> load_corpora(const RunConfig& config) {
  std::vector<StimulusItem> items;
  std::set<ItemRef> seen;
  for (const auto& path : config.corpora) {
    for (auto& it : load_corpus(path)) {
      if (!seen.insert(it.ref()).second) throw DuplicateItem("duplicate item across corpora: " + to_string(it.ref()));
      items.push_back(std::move(it));
    }
  }
  if (!config.experiments.empty()) {
    const std::set<std::string> keep(config.experiments.begin(), config.experiments.end());
    const auto present = experiment_ids(items);
    for (const auto& e : config.experiments)
      if (std::find(present.begin(), present.end(), e) == present.end())
        throw ConfigError("experiment '" + e + "' not found in corpora");
    std::erase_if(items, [&](const StimulusItem& it) { return !keep.count(it.experiment_id); });
  }
  return items;
}

ScoreOutput score_items(const RunConfig& config, const std::vector<StimulusItem>& items) {
  std::map<ItemRef, const StimulusItem*> index;
  for (const auto& it : items) index.emplace(it.ref(), &it);

  ScoreOutput out;
  std::set<std::string> model_ids;
  auto add_model = [&](const std::string& id) {
    if (!model_ids.insert(id).second) throw ConfigError("model id '" + id + "' produced by more than one backend");
    out.models.push_back(id);
  };

  for (const auto& b : config.backends) {
    if (b.kind == BackendConfig::Kind::NGram) {
      add_model(b.model_id);
      const NGramBackend backend(b.model_id, build_ngram(b));
      ScoringOptions opt;
      opt.jobs = config.jobs;
      opt.include_right_context = config.include_right_context;
      ScoredCorpus scored;
      try {
        scored = score_corpus(backend, items, opt);
      } catch (const Error& e) {
        throw Error("model " + b.model_id + ": " + e.what());
      }
      for (auto& s : scored.surprisals) out.rows.push_back({s, index.at(s.item)->critical_word});
      continue;
    }

    // External scores carry every item of every corpus; keep only the selected ones.
    std::vector<StimulusItem> all;
    for (const auto& path : config.corpora)
      for (auto& it : load_corpus(path)) all.push_back(std::move(it));
    ScoreFile file;
    try {
      file = load_scores_file(b.scores, &all);
    } catch (const Error& e) {
      throw Error("scores " + b.scores + ": " + e.what());
    }
    std::vector<std::string> order;
    for (const auto& h : file.headers)
      if (std::find(order.begin(), order.end(), h.model_id) == order.end()) order.push_back(h.model_id);
    for (const auto& r : file.records)
      if (std::find(order.begin(), order.end(), r.model_id) == order.end()) order.push_back(r.model_id);
    if (!b.model_id.empty()) {
      if (std::find(order.begin(), order.end(), b.model_id) == order.end())
        throw ConfigError("model '" + b.model_id + "' not present in " + b.scores);
      order = {b.model_id};
    }
    const auto words = to_word_surprisals(file.records);
    for (const auto& m : order) {
      add_model(m);
      std::size_t missing = 0, present = 0;
      for (const auto& w : words) {
        if (w.model_id != m) continue;
        auto it = index.find(w.item);
        if (it == index.end()) continue;
        out.rows.push_back({w, it->second->critical_word});
        ++present;
      }
      missing = items.size() - present;
      if (missing > 0)
        out.warnings.push_back("model " + m + ": " + std::to_string(missing) + " selected items have no external score");
    }
  }
  return out;
}

RunReport analyze(const std::vector<SurprisalRow>& rows, const RunConfig& config) {
  RunReport report;
  report.contrast = config.contrast;
  report.fdr_scope = config.fdr_scope;

  std::set<std::string> seen_m, seen_e;
  for (const auto& r : rows) {
    if (seen_m.insert(r.score.model_id).second) report.models.push_back(r.score.model_id);
    if (seen_e.insert(r.score.item.experiment_id).second) report.experiments.push_back(r.score.item.experiment_id);
  }
  if (!config.experiments.empty()) {
    std::vector<std::string> kept;
    for (const auto& e : config.experiments)
      if (seen_e.count(e)) kept.push_back(e);
    report.experiments = kept;
  }

  std::map<std::pair<std::string, std::string>, std::vector<const SurprisalRow*>> by_cell;
  for (const auto& r : rows) by_cell[{r.score.model_id, r.score.item.experiment_id}].push_back(&r);

  for (const auto& m : report.models)
    for (const auto& e : report.experiments) {
      CellReport cell;
      cell.model_id = m;
      cell.experiment_id = e;
      report.cells.push_back(std::move(cell));
    }

  ModelSpec maximal;
  maximal.fixed_levels = {std::string(to_string(config.contrast[0])), std::string(to_string(config.contrast[1]))};
  maximal.random_intercepts = config.random_effects;

  parallel_for(report.cells.size(), config.jobs, [&](std::size_t ci) {
    auto& cell = report.cells[ci];
    const auto it = by_cell.find({cell.model_id, cell.experiment_id});
    const std::vector<const SurprisalRow*> empty;
    const auto& cell_rows = it == by_cell.end() ? empty : it->second;
    try {
      std::map<Condition, std::vector<double>> values;
      LmmData data;
      std::size_t dropped = 0;
      for (const SurprisalRow* r : cell_rows) {
        double v = r->score.surprisal_bits;
        if (std::isinf(v)) {
          if (!config.infinite_cap_bits) {
            ++dropped;
            continue;
          }
          v = *config.infinite_cap_bits;
        }
        values[r->score.item.condition].push_back(v);
        if (r->score.item.condition != config.contrast[0] && r->score.item.condition != config.contrast[1]) continue;
        data.response.push_back(v);
        data.fixed.emplace_back(to_string(r->score.item.condition));
        data.groupings["frame_id"].push_back(r->score.item.frame_id);
        data.groupings["critical_word"].push_back(r->critical_word);
      }
      if (dropped > 0)
        cell.warnings.push_back(std::to_string(dropped) + " infinite-surprisal rows dropped");
      for (auto& [cond, vals] : values) cell.conditions.push_back({cond, condition_summary(vals)});

      auto selection = select_random_effects(data, maximal, config.numeric);
      for (const auto& a : selection.attempts)
        if (a.spec != selection.spec && (a.singular || !a.error.empty() || !a.converged))
          cell.warnings.push_back("dropped structure " + describe(a.spec) + ": " +
                                  (!a.error.empty() ? a.error : a.singular ? "singular fit" : "did not converge"));
      const auto& fit = selection.fit;
      cell.random_intercepts = selection.spec.random_intercepts;
      cell.variance_components = fit.variance_components;
      cell.sigma2_resid = fit.sigma2_resid;
      cell.reml_deviance = fit.reml_deviance;
      cell.converged = fit.converged;
      cell.singular = fit.singular;
      if (fit.singular) cell.warnings.push_back("selected fit is singular");
      cell.n_obs = fit.n_obs;
      cell.anova = type3_anova(fit);
    } catch (const std::exception& e) {
      throw Error("model " + cell.model_id + ", experiment " + cell.experiment_id + ": " + e.what());
    }
  });

  // FDR families
  std::map<std::string, std::vector<std::size_t>> families;
  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    const auto& c = report.cells[i];
    const std::string key = config.fdr_scope == FdrScope::Run          ? std::string("run")
                            : config.fdr_scope == FdrScope::Experiment ? c.experiment_id
                                                                       : c.model_id;
    families[key].push_back(i);
  }
  for (const auto& [key, idx] : families) {
    std::vector<double> p;
    for (auto i : idx) p.push_back(report.cells[i].anova.p_raw);
    const auto adj = bh_adjust(p);
    for (std::size_t k = 0; k < idx.size(); ++k) report.cells[idx[k]].anova.p_corrected = adj[k];
  }
  report.n_tests_corrected = report.cells.size();
  return report;
}

RunOutput run(const RunConfig& config) {
  validate_config(config);
  RunOutput out;
  const auto items = load_corpora(config);
  out.scores = score_items(config, items);
  out.report = analyze(out.scores.rows, config);
  out.report.warnings = out.scores.warnings;
  return out;
}

}  // namespace relanom
