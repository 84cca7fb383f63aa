#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relanom/corpus.hpp"

namespace relanom {

using TokenId = std::int32_t;

/// A backend's conditional next-token distribution.
class TokenDistribution {
 public:
  TokenDistribution() = default;
  /// Throws Error unless the probabilities are nonnegative, parallel to the ids, and sum to 1 within 1e-6.
  TokenDistribution(std::vector<TokenId> vocabulary_ids, std::vector<double> probabilities);

  /// Dense distribution over ids 0..p.size()-1.
  static TokenDistribution dense(std::vector<double> probabilities);

  std::span<const TokenId> vocabulary_ids() const { return ids_; }
  std::span<const double> probabilities() const { return probs_; }
  std::size_t size() const { return probs_.size(); }

  /// 0 for ids outside the support.
  double probability(TokenId id) const;

 private:
  std::vector<TokenId> ids_;
  std::vector<double> probs_;
  bool dense_ = false;
};

enum class ScoringMode { Causal, Masked };

/// Contract every language-model backend implements. Implementations must be
/// deterministic and safe to call concurrently through a const reference.
class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;

  virtual std::string model_id() const = 0;
  virtual ScoringMode mode() const = 0;

  /// True when the tokenizer folds a word's leading space into its first token
  /// (the caller then passes " word" to tokenize_word).
  virtual bool encodes_leading_whitespace() const { return false; }

  virtual std::vector<TokenId> tokenize_context(const std::string& context) const = 0;
  virtual std::vector<TokenId> tokenize_word(const std::string& word, const std::string& context) const = 0;

  /// Causal backends ignore right_context. Masked backends predict the slot
  /// after `context`, optionally conditioning on tokens to its right.
  virtual TokenDistribution next_token_distribution(std::span<const TokenId> context,
                                                    std::optional<std::span<const TokenId>> right_context) const = 0;
};

struct WordSurprisal {
  ItemRef item;
  std::string model_id;
  double surprisal_bits = 0.0;  // +inf marks a zero-probability sub-token
  int n_subtokens = 1;

  bool is_infinite() const;
  friend bool operator==(const WordSurprisal&, const WordSurprisal&) = default;
};

double surprisal_bits(double probability);

struct ScoringOptions {
  bool include_right_context = false;  // masked mode only
  bool fail_fast = true;
  unsigned jobs = 1;
};

/// Sum of -log2 P(t_i | context, t_1..t_{i-1}) over `target`. Masked backends
/// get the right context only when `right_context` is set.
double sequence_surprisal(const ScoringBackend& backend, std::span<const TokenId> context,
                          std::span<const TokenId> target,
                          std::optional<std::span<const TokenId>> right_context = std::nullopt);

/// Throws EmptyTokenization, BackendError.
WordSurprisal word_surprisal(const ScoringBackend& backend, const ScoringInput& input,
                             const ScoringOptions& options = {}, const std::string& post_context = {});

struct ItemFailure {
  ItemRef item;
  std::string message;
};

struct ScoredCorpus {
  std::vector<WordSurprisal> surprisals;  // input order; failed items omitted
  std::vector<ItemFailure> failures;      // only populated when fail_fast is off
  std::size_t infinite_count = 0;
};

/// One WordSurprisal per item in input order. Items may be scored on
/// `options.jobs` threads; the result does not depend on the schedule.
ScoredCorpus score_corpus(const ScoringBackend& backend, const std::vector<StimulusItem>& items,
                          const ScoringOptions& options = {});

}  // namespace relanom
