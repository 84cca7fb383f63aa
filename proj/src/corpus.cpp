#include "relanom/corpus.hpp"

#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "relanom/errors.hpp"
#include "relanom/text_util.hpp"

namespace relanom {

namespace {

constexpr const char* kColumns[] = {"experiment_id", "frame_id",      "condition", "pre_context",
                                    "post_context",  "critical_word", "cloze"};

void validate_item(const StimulusItem& item, std::size_t line) {
  if (item.experiment_id.empty()) throw MalformedRow(line, "empty experiment_id");
  if (item.frame_id.empty()) throw MalformedRow(line, "empty frame_id");
  if (text::trim(item.critical_word).empty()) throw MalformedRow(line, "empty critical_word");
  if (text::has_outer_whitespace(item.critical_word))
    throw MalformedRow(line, "critical_word has leading or trailing whitespace");
  if (item.cloze && !(*item.cloze >= 0.0 && *item.cloze <= 1.0))
    throw MalformedRow(line, "cloze outside [0,1]");
}

void check_unique(const std::vector<StimulusItem>& items) {
  std::set<ItemRef> seen;
  for (const auto& item : items)
    if (!seen.insert(item.ref()).second) throw DuplicateItem("duplicate item " + to_string(item.ref()));
}

std::vector<StimulusItem> parse_delimited(std::string_view src) {
  std::vector<StimulusItem> items;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> col;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < src.size()) {
    auto end = src.find('\n', pos);
    if (end == std::string_view::npos) end = src.size();
    std::string_view line = src.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (text::trim(line).empty()) continue;

    auto fields = text::split(line, '\t');
    if (!header_seen) {
      for (std::size_t i = 0; i < fields.size(); ++i) col[std::string(text::trim(fields[i]))] = i;
      for (const char* required : {"experiment_id", "frame_id", "condition", "pre_context", "critical_word"})
        if (!col.count(required)) throw MalformedRow(line_no, std::string("header lacks column ") + required);
      header_seen = true;
      continue;
    }
    auto get = [&](const char* name, bool required) -> std::optional<std::string> {
      auto it = col.find(name);
      if (it == col.end() || it->second >= fields.size()) {
        if (required) throw MalformedRow(line_no, std::string("missing field ") + name);
        return std::nullopt;
      }
      return text::unescape_field(fields[it->second]);
    };
    StimulusItem item;
    item.experiment_id = *get("experiment_id", true);
    item.frame_id = *get("frame_id", true);
    item.condition = parse_condition(text::trim(*get("condition", true)));
    item.pre_context = *get("pre_context", true);
    item.post_context = get("post_context", false).value_or("");
    item.critical_word = *get("critical_word", true);
    if (auto cl = get("cloze", false); cl && !text::trim(*cl).empty()) {
      auto v = text::parse_double(*cl);
      if (!v) throw MalformedRow(line_no, "cloze is not a number");
      item.cloze = *v;
    }
    validate_item(item, line_no);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<StimulusItem> parse_structured(std::string_view src) {
  if (text::trim(src).empty()) return {};
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(src);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedRow(0, std::string("invalid JSON: ") + e.what());
  }
  const nlohmann::json* rows = &doc;
  if (doc.is_object()) {
    if (!doc.contains("items")) throw MalformedRow(0, "JSON corpus object lacks \"items\"");
    rows = &doc["items"];
  }
  if (!rows->is_array()) throw MalformedRow(0, "JSON corpus must be an array of items");

  std::vector<StimulusItem> items;
  std::size_t index = 0;
  for (const auto& row : *rows) {
    ++index;
    if (!row.is_object()) throw MalformedRow(index, "item is not an object");
    auto str = [&](const char* name, bool required) -> std::string {
      if (!row.contains(name) || row[name].is_null()) {
        if (required) throw MalformedRow(index, std::string("missing field ") + name);
        return {};
      }
      if (!row[name].is_string()) throw MalformedRow(index, std::string(name) + " must be a string");
      return row[name].get<std::string>();
    };
    StimulusItem item;
    item.experiment_id = str("experiment_id", true);
    item.frame_id = str("frame_id", true);
    item.condition = parse_condition(str("condition", true));
    item.pre_context = str("pre_context", true);
    item.post_context = str("post_context", false);
    item.critical_word = str("critical_word", true);
    if (row.contains("cloze") && !row["cloze"].is_null()) {
      if (!row["cloze"].is_number()) throw MalformedRow(index, "cloze must be a number");
      item.cloze = row["cloze"].get<double>();
    }
    validate_item(item, index);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Predictable: return "Predictable";
    case Condition::Related: return "Related";
    case Condition::Unrelated: return "Unrelated";
  }
  return "?";
}

Condition parse_condition(std::string_view label) {
  const auto l = text::ascii_lower(text::trim(label));
  if (l == "predictable") return Condition::Predictable;
  if (l == "related") return Condition::Related;
  if (l == "unrelated") return Condition::Unrelated;
  throw UnknownCondition("unknown condition label '" + std::string(label) + "'");
}

std::string to_string(const ItemRef& ref) {
  return ref.experiment_id + "/" + ref.frame_id + "/" + std::string(to_string(ref.condition));
}

std::vector<StimulusItem> parse_corpus(std::string_view source, CorpusFormat format) {
  if (!text::is_valid_utf8(source)) throw MalformedRow(0, "corpus is not valid UTF-8");
  auto items = format == CorpusFormat::Delimited ? parse_delimited(source) : parse_structured(source);
  check_unique(items);
  return items;
}

std::vector<StimulusItem> parse_corpus(std::istream& source, CorpusFormat format) {
  std::string data((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
  return parse_corpus(std::string_view(data), format);
}

std::vector<StimulusItem> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path);
  return parse_corpus(in, corpus_format_for_path(path));
}

CorpusFormat corpus_format_for_path(std::string_view path) {
  return path.size() >= 5 && path.substr(path.size() - 5) == ".json" ? CorpusFormat::Structured
                                                                     : CorpusFormat::Delimited;
}

std::string serialize_corpus(const std::vector<StimulusItem>& items, CorpusFormat format) {
  if (format == CorpusFormat::Structured) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& it : items) {
      nlohmann::ordered_json row;
      row["experiment_id"] = it.experiment_id;
      row["frame_id"] = it.frame_id;
      row["condition"] = std::string(to_string(it.condition));
      row["pre_context"] = it.pre_context;
      row["post_context"] = it.post_context;
      row["critical_word"] = it.critical_word;
      row["cloze"] = it.cloze ? nlohmann::ordered_json(*it.cloze) : nlohmann::ordered_json(nullptr);
      arr.push_back(std::move(row));
    }
    return arr.dump(2) + "\n";
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < std::size(kColumns); ++i) out << (i ? "\t" : "") << kColumns[i];
  out << '\n';
  for (const auto& it : items) {
    out << text::escape_field(it.experiment_id) << '\t' << text::escape_field(it.frame_id) << '\t'
        << to_string(it.condition) << '\t' << text::escape_field(it.pre_context) << '\t'
        << text::escape_field(it.post_context) << '\t' << text::escape_field(it.critical_word) << '\t'
        << (it.cloze ? text::format_double(*it.cloze) : "") << '\n';
  }
  return out.str();
}

ScoringInput truncate_to_context(const StimulusItem& item) {
  return ScoringInput{item.ref(), item.pre_context, item.critical_word};
}

std::vector<std::string> experiment_ids(const std::vector<StimulusItem>& items) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& it : items)
    if (seen.insert(it.experiment_id).second) out.push_back(it.experiment_id);
  return out;
}

}  // namespace relanom
