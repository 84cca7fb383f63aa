#include "relanom/external_scores.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include "json.hpp"
#include "relanom/errors.hpp"
#include "relanom/text_util.hpp"

namespace relanom {

namespace {

using ojson = nlohmann::ordered_json;

std::string_view strip_prefix(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix ? s.substr(prefix.size()) : s;
}

std::string required_string(const nlohmann::json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_string()) throw MalformedRow(line, std::string("missing string field ") + key);
  return j[key].get<std::string>();
}

ScoreHeader parse_header(const nlohmann::json& j, std::size_t line) {
  ScoreHeader h;
  h.model_id = required_string(j, "model_id", line);
  if (!j.contains("format_version") || !j["format_version"].is_number_integer())
    throw MalformedRow(line, "header lacks integer format_version");
  h.format_version = j["format_version"].get<int>();
  if (h.format_version != kScoreFormatVersion)
    throw MalformedRow(line, "unsupported format_version " + std::to_string(h.format_version));
  if (j.contains("detokenization")) h.detokenization = parse_detokenization(required_string(j, "detokenization", line));
  if (j.contains("checkpoint")) h.checkpoint = required_string(j, "checkpoint", line);
  if (j.contains("tokenizer")) h.tokenizer = required_string(j, "tokenizer", line);
  if (j.contains("mode")) h.mode = required_string(j, "mode", line);
  return h;
}

TokenScoreRecord parse_record(const nlohmann::json& j, std::size_t line) {
  TokenScoreRecord r;
  r.item.experiment_id = required_string(j, "experiment_id", line);
  r.item.frame_id = required_string(j, "frame_id", line);
  r.item.condition = parse_condition(required_string(j, "condition", line));
  r.model_id = required_string(j, "model_id", line);
  if (j.contains("critical_word")) r.critical_word = required_string(j, "critical_word", line);
  if (!j.contains("sub_tokens") || !j["sub_tokens"].is_array()) throw MalformedRow(line, "missing sub_tokens array");
  for (const auto& t : j["sub_tokens"]) {
    if (!t.is_object()) throw MalformedRow(line, "sub_token is not an object");
    SubTokenScore s;
    s.text = required_string(t, "text", line);
    s.infinite = t.contains("infinite") && t["infinite"].is_boolean() && t["infinite"].get<bool>();
    if (s.infinite) {
      s.surprisal_bits = std::numeric_limits<double>::infinity();
    } else {
      if (!t.contains("surprisal_bits") || !t["surprisal_bits"].is_number())
        throw InvalidScore(to_string(r.item) + ": sub-token '" + s.text + "' lacks a numeric surprisal_bits");
      s.surprisal_bits = t["surprisal_bits"].get<double>();
      if (!std::isfinite(s.surprisal_bits) || s.surprisal_bits < 0.0)
        throw InvalidScore(to_string(r.item) + ": surprisal must be finite and >= 0");
    }
    r.sub_tokens.push_back(std::move(s));
  }
  if (r.sub_tokens.empty()) throw InvalidScore(to_string(r.item) + ": record has no sub-tokens");
  return r;
}

}  // namespace

std::string_view to_string(Detokenization rule) {
  switch (rule) {
    case Detokenization::None: return "none";
    case Detokenization::StripSpaceMarker: return "strip_space_marker";
    case Detokenization::WordPiece: return "wordpiece";
  }
  return "?";
}

Detokenization parse_detokenization(std::string_view name) {
  if (name == "none") return Detokenization::None;
  if (name == "strip_space_marker") return Detokenization::StripSpaceMarker;
  if (name == "wordpiece") return Detokenization::WordPiece;
  throw Error("unknown detokenization rule '" + std::string(name) + "'");
}

std::string detokenize(const std::vector<std::string>& pieces, Detokenization rule) {
  std::string out;
  for (const auto& p : pieces) {
    std::string_view v = p;
    if (rule == Detokenization::StripSpaceMarker) {
      while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
      v = strip_prefix(v, "\xC4\xA0");      // U+0120
      v = strip_prefix(v, "\xE2\x96\x81");  // U+2581
    } else if (rule == Detokenization::WordPiece) {
      while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
      v = strip_prefix(v, "##");
    }
    out += v;
  }
  return out;
}

ScoreFile load_scores(std::istream& in, const std::vector<StimulusItem>* corpus) {
  std::map<ItemRef, const StimulusItem*> index;
  if (corpus)
    for (const auto& it : *corpus) index.emplace(it.ref(), &it);

  ScoreFile file;
  std::map<std::string, Detokenization> rules;
  std::set<std::pair<ItemRef, std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    if (!text::is_valid_utf8(line)) throw MalformedRow(line_no, "invalid UTF-8");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedRow(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw MalformedRow(line_no, "record is not an object");

    if (j.contains("record_type")) {
      const auto type = required_string(j, "record_type", line_no);
      if (type == "header") {
        auto h = parse_header(j, line_no);
        rules[h.model_id] = h.detokenization;
        file.headers.push_back(std::move(h));
        continue;
      }
      if (type != "score") throw MalformedRow(line_no, "unknown record_type '" + type + "'");
    }

    auto r = parse_record(j, line_no);
    if (!seen.emplace(r.item, r.model_id).second)
      throw MalformedRow(line_no, "duplicate record for " + to_string(r.item) + " / " + r.model_id);

    std::vector<std::string> pieces;
    for (const auto& s : r.sub_tokens) pieces.push_back(s.text);
    const auto rule_it = rules.find(r.model_id);
    const auto rule = rule_it == rules.end() ? Detokenization::StripSpaceMarker : rule_it->second;
    const auto word = detokenize(pieces, rule);

    std::optional<std::string> expected = r.critical_word;
    if (corpus) {
      auto it = index.find(r.item);
      if (it == index.end()) throw UnknownItem("scores reference unknown item " + to_string(r.item));
      expected = it->second->critical_word;
    }
    if (expected && word != *expected)
      throw TokenMismatch(to_string(r.item) + " (" + r.model_id + "): sub-tokens spell '" + word + "', expected '" +
                          *expected + "'");
    file.records.push_back(std::move(r));
  }
  return file;
}

ScoreFile load_scores_file(const std::string& path, const std::vector<StimulusItem>* corpus) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scores file " + path);
  return load_scores(in, corpus);
}

void emit_scores(std::ostream& out, const ScoreFile& file) {
  for (const auto& h : file.headers) {
    ojson j;
    j["record_type"] = "header";
    j["format_version"] = h.format_version;
    j["model_id"] = h.model_id;
    if (!h.checkpoint.empty()) j["checkpoint"] = h.checkpoint;
    if (!h.tokenizer.empty()) j["tokenizer"] = h.tokenizer;
    j["detokenization"] = std::string(to_string(h.detokenization));
    if (!h.mode.empty()) j["mode"] = h.mode;
    out << j.dump() << '\n';
  }
  for (const auto& r : file.records) {
    ojson j;
    j["experiment_id"] = r.item.experiment_id;
    j["frame_id"] = r.item.frame_id;
    j["condition"] = std::string(to_string(r.item.condition));
    j["model_id"] = r.model_id;
    if (r.critical_word) j["critical_word"] = *r.critical_word;
    auto toks = ojson::array();
    for (const auto& s : r.sub_tokens) {
      ojson t;
      t["text"] = s.text;
      if (s.infinite)
        t["infinite"] = true;
      else
        t["surprisal_bits"] = s.surprisal_bits;
      toks.push_back(std::move(t));
    }
    j["sub_tokens"] = std::move(toks);
    out << j.dump() << '\n';
  }
}

std::vector<WordSurprisal> to_word_surprisals(const std::vector<TokenScoreRecord>& records) {
  std::vector<WordSurprisal> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    WordSurprisal w;
    w.item = r.item;
    w.model_id = r.model_id;
    w.n_subtokens = static_cast<int>(r.sub_tokens.size());
    double total = 0.0;
    for (const auto& s : r.sub_tokens) total += s.infinite ? std::numeric_limits<double>::infinity() : s.surprisal_bits;
    w.surprisal_bits = total;
    out.push_back(std::move(w));
  }
  return out;
}

std::map<std::string, std::vector<WordSurprisal>> by_model(const std::vector<WordSurprisal>& surprisals) {
  std::map<std::string, std::vector<WordSurprisal>> out;
  for (const auto& s : surprisals) out[s.model_id].push_back(s);
  return out;
}

}  // namespace relanom
