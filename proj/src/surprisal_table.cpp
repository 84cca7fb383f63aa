#include "relanom/surprisal_table.hpp"

#include <istream>
#include <map>
#include <ostream>

#include "relanom/errors.hpp"
#include "relanom/text_util.hpp"

namespace relanom {

namespace {
constexpr const char* kHeader[] = {"experiment_id", "frame_id",       "condition",  "critical_word",
                                   "model_id",      "surprisal_bits", "n_subtokens"};
}

void write_surprisal_table(std::ostream& out, const std::vector<SurprisalRow>& rows) {
  for (std::size_t i = 0; i < std::size(kHeader); ++i) out << (i ? "\t" : "") << kHeader[i];
  out << '\n';
  for (const auto& r : rows) {
    out << text::escape_field(r.score.item.experiment_id) << '\t' << text::escape_field(r.score.item.frame_id) << '\t'
        << to_string(r.score.item.condition) << '\t' << text::escape_field(r.critical_word) << '\t'
        << text::escape_field(r.score.model_id) << '\t' << text::format_double(r.score.surprisal_bits) << '\t'
        << r.score.n_subtokens << '\n';
  }
}

std::vector<SurprisalRow> read_surprisal_table(std::istream& in) {
  std::vector<SurprisalRow> rows;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> col;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, '\t');
    if (col.empty()) {
      for (std::size_t i = 0; i < f.size(); ++i) col[std::string(text::trim(f[i]))] = i;
      for (const char* h : kHeader)
        if (!col.count(h)) throw MalformedRow(line_no, std::string("surprisal table lacks column ") + h);
      continue;
    }
    auto get = [&](const char* name) {
      const auto i = col.at(name);
      if (i >= f.size()) throw MalformedRow(line_no, std::string("missing field ") + name);
      return text::unescape_field(f[i]);
    };
    SurprisalRow r;
    r.score.item.experiment_id = get("experiment_id");
    r.score.item.frame_id = get("frame_id");
    r.score.item.condition = parse_condition(get("condition"));
    r.critical_word = get("critical_word");
    r.score.model_id = get("model_id");
    const auto bits = text::parse_double(get("surprisal_bits"));
    if (!bits || *bits < 0.0) throw MalformedRow(line_no, "surprisal_bits must be a number >= 0");
    r.score.surprisal_bits = *bits;
    const auto nsub = text::parse_int(get("n_subtokens"));
    if (!nsub || *nsub < 1) throw MalformedRow(line_no, "n_subtokens must be a positive integer");
    r.score.n_subtokens = static_cast<int>(*nsub);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace relanom
