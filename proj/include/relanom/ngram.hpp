#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relanom/scoring.hpp"

namespace relanom {

/// Lowercased split on whitespace; ASCII punctuation other than ' and - becomes its own token.
std::vector<std::string> ngram_tokenize(std::string_view text);

/// Interpolated absolute-discounting n-gram model with a uniform base:
///
///   P_0(w)       = 1 / |V|
///   P_k(w | h)   = max(c(h w) - D, 0) / c(h) + D * N1+(h .) / c(h) * P_{k-1}(w | h')
///
/// where h' drops the oldest token of h, c(h) sums successor counts of h and
/// N1+(h .) counts distinct successors. A history never seen in training
/// contributes nothing at its order (P_k = P_{k-1}).
class NGramModel {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr const char* kUnkToken = "<unk>";

  struct ContextCounts {
    std::map<TokenId, std::uint64_t> successors;
    std::uint64_t total = 0;
  };

  /// Counts every n-gram of order 1..order inside each sentence. Throws EmptyCorpus, Error.
  static NGramModel train(const std::vector<std::vector<std::string>>& sentences, int order, double discount);

  int order() const { return order_; }
  double discount() const { return discount_; }
  std::size_t vocabulary_size() const { return vocabulary_.size(); }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

  /// kUnk for out-of-vocabulary tokens.
  TokenId id(std::string_view token) const;
  std::vector<TokenId> ids(std::span<const std::string> tokens) const;

  /// Raw count of `token` following `history` (history may be empty for unigrams).
  std::uint64_t count(std::span<const TokenId> history, TokenId token) const;

  /// Dense distribution over ids 0..vocabulary_size()-1, using at most the last order-1 history tokens.
  std::vector<double> distribution(std::span<const TokenId> history) const;
  double probability(std::span<const TokenId> history, TokenId token) const;

  void save(std::ostream& out) const;
  static NGramModel load(std::istream& in);

 private:
  const ContextCounts* find(std::span<const TokenId> history) const;

  int order_ = 1;
  double discount_ = 0.5;
  std::vector<std::string> vocabulary_;  // id -> token, id 0 is <unk>
  std::map<std::string, TokenId, std::less<>> index_;
  // counts_[k] maps histories of length k to successor counts.
  std::vector<std::map<std::vector<TokenId>, ContextCounts>> counts_;
};

/// Scoring adaptor: each word maps to the tokens of ngram_tokenize (normally one).
class NGramBackend final : public ScoringBackend {
 public:
  NGramBackend(std::string model_id, std::shared_ptr<const NGramModel> model);

  std::string model_id() const override { return model_id_; }
  ScoringMode mode() const override { return ScoringMode::Causal; }
  std::vector<TokenId> tokenize_context(const std::string& context) const override;
  std::vector<TokenId> tokenize_word(const std::string& word, const std::string& context) const override;
  TokenDistribution next_token_distribution(std::span<const TokenId> context,
                                            std::optional<std::span<const TokenId>> right_context) const override;

  const NGramModel& model() const { return *model_; }

 private:
  std::string model_id_;
  std::shared_ptr<const NGramModel> model_;
};

/// One sentence per non-blank line, tokenized with ngram_tokenize.
std::vector<std::vector<std::string>> read_training_text(std::istream& in);

}  // namespace relanom
