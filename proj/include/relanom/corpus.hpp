#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace relanom {

enum class Condition { Predictable, Related, Unrelated };

std::string_view to_string(Condition c);
/// Case-insensitive label lookup; throws UnknownCondition.
Condition parse_condition(std::string_view label);

/// Key of a stimulus row: unique within a corpus.
struct ItemRef {
  std::string experiment_id;
  std::string frame_id;
  Condition condition = Condition::Predictable;

  friend auto operator<=>(const ItemRef&, const ItemRef&) = default;
  friend bool operator==(const ItemRef&, const ItemRef&) = default;
};

std::string to_string(const ItemRef& ref);

struct StimulusItem {
  std::string experiment_id;
  std::string frame_id;
  Condition condition = Condition::Predictable;
  std::string pre_context;   // may span several sentences
  std::string post_context;  // possibly empty; never scored by default
  std::string critical_word;
  std::optional<double> cloze;

  ItemRef ref() const { return {experiment_id, frame_id, condition}; }
  friend bool operator==(const StimulusItem&, const StimulusItem&) = default;
};

/// What a backend actually sees: the preceding context and the word to score.
struct ScoringInput {
  ItemRef item;
  std::string context;
  std::string target_word;
};

enum class CorpusFormat { Delimited, Structured };

/// Parses a tab-delimited (header + one row per item) or JSON corpus.
/// Row order is preserved. Throws DuplicateItem, MalformedRow, UnknownCondition.
std::vector<StimulusItem> parse_corpus(std::istream& source, CorpusFormat format);
std::vector<StimulusItem> parse_corpus(std::string_view source, CorpusFormat format);
std::vector<StimulusItem> load_corpus(const std::string& path);

std::string serialize_corpus(const std::vector<StimulusItem>& items, CorpusFormat format);

/// Guesses the format from the file extension (.json → Structured).
CorpusFormat corpus_format_for_path(std::string_view path);

ScoringInput truncate_to_context(const StimulusItem& item);

/// Experiment ids in first-appearance order.
std::vector<std::string> experiment_ids(const std::vector<StimulusItem>& items);

}  // namespace relanom
