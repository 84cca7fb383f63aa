#include "relanom/ngram.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <set>

#include "json.hpp"
#include "relanom/errors.hpp"
#include "relanom/text_util.hpp"

namespace relanom {

namespace {

bool splits_off(char c) {
  const auto u = static_cast<unsigned char>(c);
  if (u >= 0x80) return false;
  if (c == '\'' || c == '-') return false;
  return std::ispunct(u) != 0;
}

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::vector<std::string> ngram_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(text::ascii_lower(cur));
    cur.clear();
  };
  for (char c : text) {
    if (is_ws(c)) {
      flush();
    } else if (splits_off(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

NGramModel NGramModel::train(const std::vector<std::vector<std::string>>& sentences, int order, double discount) {
  if (order < 1) throw Error("n-gram order must be >= 1");
  if (!(discount > 0.0 && discount < 1.0)) throw Error("n-gram discount must lie in (0,1)");

  std::set<std::string> types;
  std::size_t n_tokens = 0;
  for (const auto& s : sentences) {
    for (const auto& t : s) types.insert(t);
    n_tokens += s.size();
  }
  if (n_tokens == 0) throw EmptyCorpus("n-gram training corpus has no tokens");

  NGramModel m;
  m.order_ = order;
  m.discount_ = discount;
  types.erase(kUnkToken);
  m.vocabulary_.push_back(kUnkToken);
  m.vocabulary_.insert(m.vocabulary_.end(), types.begin(), types.end());
  for (std::size_t i = 0; i < m.vocabulary_.size(); ++i) m.index_.emplace(m.vocabulary_[i], static_cast<TokenId>(i));

  m.counts_.resize(order);
  for (const auto& s : sentences) {
    const auto ids = m.ids(s);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (int k = 0; k < order && static_cast<std::size_t>(k) <= i; ++k) {
        std::vector<TokenId> history(ids.begin() + static_cast<std::ptrdiff_t>(i - k),
                                     ids.begin() + static_cast<std::ptrdiff_t>(i));
        auto& cc = m.counts_[k][history];
        ++cc.successors[ids[i]];
        ++cc.total;
      }
    }
  }
  return m;
}

TokenId NGramModel::id(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<TokenId> NGramModel::ids(std::span<const std::string> tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

const NGramModel::ContextCounts* NGramModel::find(std::span<const TokenId> history) const {
  const std::size_t k = history.size();
  if (k >= counts_.size()) return nullptr;
  auto it = counts_[k].find(std::vector<TokenId>(history.begin(), history.end()));
  return it == counts_[k].end() ? nullptr : &it->second;
}

std::uint64_t NGramModel::count(std::span<const TokenId> history, TokenId token) const {
  const auto* cc = find(history);
  if (!cc) return 0;
  auto it = cc->successors.find(token);
  return it == cc->successors.end() ? 0 : it->second;
}

std::vector<double> NGramModel::distribution(std::span<const TokenId> history) const {
  const std::size_t v = vocabulary_.size();
  std::vector<double> p(v, 1.0 / static_cast<double>(v));
  const std::size_t max_k = std::min<std::size_t>(history.size(), static_cast<std::size_t>(order_ - 1));
  for (std::size_t k = 0; k <= max_k; ++k) {
    const auto* cc = find(history.last(k));
    if (!cc || cc->total == 0) continue;
    const double total = static_cast<double>(cc->total);
    const double backoff = discount_ * static_cast<double>(cc->successors.size()) / total;
    for (auto& x : p) x *= backoff;
    for (const auto& [w, c] : cc->successors) p[w] += std::max(static_cast<double>(c) - discount_, 0.0) / total;
  }
  return p;
}

double NGramModel::probability(std::span<const TokenId> history, TokenId token) const {
  double p = 1.0 / static_cast<double>(vocabulary_.size());
  const std::size_t max_k = std::min<std::size_t>(history.size(), static_cast<std::size_t>(order_ - 1));
  for (std::size_t k = 0; k <= max_k; ++k) {
    const auto* cc = find(history.last(k));
    if (!cc || cc->total == 0) continue;
    const double total = static_cast<double>(cc->total);
    const double backoff = discount_ * static_cast<double>(cc->successors.size()) / total;
    auto it = cc->successors.find(token);
    const double c = it == cc->successors.end() ? 0.0 : static_cast<double>(it->second);
    p = backoff * p + std::max(c - discount_, 0.0) / total;
  }
  return p;
}

void NGramModel::save(std::ostream& out) const {
  nlohmann::ordered_json doc;
  doc["format"] = "relanom-ngram";
  doc["version"] = 1;
  doc["order"] = order_;
  doc["discount"] = discount_;
  doc["vocabulary"] = vocabulary_;
  auto counts = nlohmann::ordered_json::array();
  for (const auto& level : counts_) {
    for (const auto& [history, cc] : level) {
      nlohmann::ordered_json entry;
      auto h = nlohmann::ordered_json::array();
      for (TokenId t : history) h.push_back(vocabulary_[t]);
      entry["history"] = std::move(h);
      auto succ = nlohmann::ordered_json::array();
      for (const auto& [w, c] : cc.successors) succ.push_back(nlohmann::ordered_json::array({vocabulary_[w], c}));
      entry["successors"] = std::move(succ);
      counts.push_back(std::move(entry));
    }
  }
  doc["counts"] = std::move(counts);
  out << doc.dump(1) << '\n';
}

NGramModel NGramModel::load(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("n-gram model file: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "relanom-ngram" || doc.at("version").get<int>() != 1)
      throw Error("n-gram model file: unsupported format or version");
    NGramModel m;
    m.order_ = doc.at("order").get<int>();
    m.discount_ = doc.at("discount").get<double>();
    if (m.order_ < 1 || !(m.discount_ > 0.0 && m.discount_ < 1.0)) throw Error("n-gram model file: bad order/discount");
    m.vocabulary_ = doc.at("vocabulary").get<std::vector<std::string>>();
    if (m.vocabulary_.empty() || m.vocabulary_[0] != kUnkToken)
      throw Error("n-gram model file: vocabulary must start with <unk>");
    for (std::size_t i = 0; i < m.vocabulary_.size(); ++i)
      if (!m.index_.emplace(m.vocabulary_[i], static_cast<TokenId>(i)).second)
        throw Error("n-gram model file: duplicate vocabulary entry");
    m.counts_.resize(m.order_);
    auto lookup = [&](const std::string& tok) {
      auto it = m.index_.find(tok);
      if (it == m.index_.end()) throw Error("n-gram model file: token not in vocabulary: " + tok);
      return it->second;
    };
    for (const auto& entry : doc.at("counts")) {
      std::vector<TokenId> history;
      for (const auto& t : entry.at("history")) history.push_back(lookup(t.get<std::string>()));
      if (history.size() >= m.counts_.size()) throw Error("n-gram model file: history longer than order-1");
      auto& cc = m.counts_[history.size()][history];
      for (const auto& pair : entry.at("successors")) {
        const auto c = pair.at(1).get<std::uint64_t>();
        cc.successors[lookup(pair.at(0).get<std::string>())] += c;
        cc.total += c;
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("n-gram model file: ") + e.what());
  }
}

NGramBackend::NGramBackend(std::string model_id, std::shared_ptr<const NGramModel> model)
    : model_id_(std::move(model_id)), model_(std::move(model)) {
  if (!model_) throw Error("NGramBackend needs a model");
}

std::vector<TokenId> NGramBackend::tokenize_context(const std::string& context) const {
  return model_->ids(ngram_tokenize(context));
}

std::vector<TokenId> NGramBackend::tokenize_word(const std::string& word, const std::string&) const {
  return model_->ids(ngram_tokenize(word));
}

TokenDistribution NGramBackend::next_token_distribution(std::span<const TokenId> context,
                                                        std::optional<std::span<const TokenId>>) const {
  return TokenDistribution::dense(model_->distribution(context));
}

std::vector<std::vector<std::string>> read_training_text(std::istream& in) {
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = ngram_tokenize(line);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

}  // namespace relanom
