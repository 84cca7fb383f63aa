#include "relanom/scoring.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "relanom/errors.hpp"

namespace relanom {

TokenDistribution::TokenDistribution(std::vector<TokenId> vocabulary_ids, std::vector<double> probabilities)
    : ids_(std::move(vocabulary_ids)), probs_(std::move(probabilities)) {
  if (ids_.size() != probs_.size()) throw Error("token distribution: ids and probabilities differ in length");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw Error("token distribution: negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw Error("token distribution does not sum to 1");
  dense_ = true;
  for (std::size_t i = 0; i < ids_.size() && dense_; ++i) dense_ = ids_[i] == static_cast<TokenId>(i);
}

TokenDistribution TokenDistribution::dense(std::vector<double> probabilities) {
  std::vector<TokenId> ids(probabilities.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(i);
  return TokenDistribution(std::move(ids), std::move(probabilities));
}

double TokenDistribution::probability(TokenId id) const {
  if (dense_) return id >= 0 && static_cast<std::size_t>(id) < probs_.size() ? probs_[id] : 0.0;
  for (std::size_t i = 0; i < ids_.size(); ++i)
    if (ids_[i] == id) return probs_[i];
  return 0.0;
}

bool WordSurprisal::is_infinite() const { return std::isinf(surprisal_bits); }

double surprisal_bits(double probability) {
  if (probability <= 0.0) return std::numeric_limits<double>::infinity();
  return -std::log2(probability);
}

double sequence_surprisal(const ScoringBackend& backend, std::span<const TokenId> context,
                          std::span<const TokenId> target, std::optional<std::span<const TokenId>> right_context) {
  std::vector<TokenId> history(context.begin(), context.end());
  history.reserve(context.size() + target.size());
  double total = 0.0;
  for (TokenId t : target) {
    const auto dist = backend.next_token_distribution(history, right_context);
    total += surprisal_bits(dist.probability(t));
    history.push_back(t);
  }
  return total;
}

WordSurprisal word_surprisal(const ScoringBackend& backend, const ScoringInput& input,
                             const ScoringOptions& options, const std::string& post_context) {
  try {
    const std::string word = backend.encodes_leading_whitespace() && !input.context.empty()
                                 ? " " + input.target_word
                                 : input.target_word;
    const auto target = backend.tokenize_word(word, input.context);
    if (target.empty())
      throw EmptyTokenization("'" + input.target_word + "' tokenizes to zero tokens");
    const auto context = backend.tokenize_context(input.context);

    std::optional<std::vector<TokenId>> right;
    if (backend.mode() == ScoringMode::Masked && options.include_right_context)
      right = backend.tokenize_context(post_context);
    std::optional<std::span<const TokenId>> right_view;
    if (right) right_view = std::span<const TokenId>(*right);

    WordSurprisal out;
    out.item = input.item;
    out.model_id = backend.model_id();
    out.surprisal_bits = sequence_surprisal(backend, context, target, right_view);
    out.n_subtokens = static_cast<int>(target.size());
    return out;
  } catch (const EmptyTokenization&) {
    throw;
  } catch (const BackendError&) {
    throw;
  } catch (const std::exception& e) {
    throw BackendError(backend.model_id() + ": " + e.what());
  }
}

ScoredCorpus score_corpus(const ScoringBackend& backend, const std::vector<StimulusItem>& items,
                          const ScoringOptions& options) {
  const std::size_t n = items.size();
  std::vector<std::optional<WordSurprisal>> results(n);
  std::vector<std::string> errors(n);
  std::vector<std::exception_ptr> causes(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        results[i] = word_surprisal(backend, truncate_to_context(items[i]), options, items[i].post_context);
      } catch (const std::exception& e) {
        causes[i] = std::current_exception();
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
        if (options.fail_fast) abort.store(true);
      }
    }
  };

  const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ScoredCorpus out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      if (options.fail_fast) {
        const std::string where = to_string(items[i].ref()) + ": ";
        try {
          std::rethrow_exception(causes[i]);
        } catch (const EmptyTokenization& e) {
          throw EmptyTokenization(where + e.what());
        } catch (const std::exception& e) {
          throw BackendError(where + e.what());
        }
      }
      out.failures.push_back({items[i].ref(), errors[i]});
      continue;
    }
    if (!results[i]) continue;  // not reached after an abort
    if (results[i]->is_infinite()) ++out.infinite_count;
    out.surprisals.push_back(std::move(*results[i]));
  }
  return out;
}

}  // namespace relanom
