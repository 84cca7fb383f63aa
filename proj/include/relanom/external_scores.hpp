#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relanom/corpus.hpp"
#include "relanom/scoring.hpp"

namespace relanom {

/// Wire-format version written and accepted by this build.
inline constexpr int kScoreFormatVersion = 1;

/// How sub-token texts are glued back into a word before comparing with the critical word.
enum class Detokenization {
  None,              // plain concatenation
  StripSpaceMarker,  // drop leading ' ', U+0120 (byte-level BPE) and U+2581 (sentencepiece)
  WordPiece,         // drop leading "##" continuation markers and ' '
};

std::string_view to_string(Detokenization rule);
Detokenization parse_detokenization(std::string_view name);
std::string detokenize(const std::vector<std::string>& pieces, Detokenization rule);

/// Per-model sidecar record: {"record_type":"header","format_version":1,"model_id",...}.
struct ScoreHeader {
  std::string model_id;
  int format_version = kScoreFormatVersion;
  Detokenization detokenization = Detokenization::StripSpaceMarker;
  std::string checkpoint;  // provenance, e.g. hub name of the checkpoint
  std::string tokenizer;
  std::string mode;  // "causal" | "masked", informational

  friend bool operator==(const ScoreHeader&, const ScoreHeader&) = default;
};

struct SubTokenScore {
  std::string text;
  double surprisal_bits = 0.0;
  bool infinite = false;

  friend bool operator==(const SubTokenScore&, const SubTokenScore&) = default;
};

struct TokenScoreRecord {
  ItemRef item;
  std::string model_id;
  std::vector<SubTokenScore> sub_tokens;
  std::optional<std::string> critical_word;  // optional echo of the scored word

  friend bool operator==(const TokenScoreRecord&, const TokenScoreRecord&) = default;
};

struct ScoreFile {
  std::vector<ScoreHeader> headers;
  std::vector<TokenScoreRecord> records;
};

/// Reads line-delimited JSON records. When `corpus` is given, item refs must
/// exist in it and the detokenized sub-tokens must equal its critical word.
/// Throws TokenMismatch, InvalidScore, UnknownItem, MalformedRow.
ScoreFile load_scores(std::istream& in, const std::vector<StimulusItem>* corpus = nullptr);
ScoreFile load_scores_file(const std::string& path, const std::vector<StimulusItem>* corpus = nullptr);

/// Writes headers first, then records, one JSON object per line.
void emit_scores(std::ostream& out, const ScoreFile& file);

/// Whole-word surprisal = sum of sub-token surprisals (infinite if any sub-token is).
std::vector<WordSurprisal> to_word_surprisals(const std::vector<TokenScoreRecord>& records);

/// Groups word surprisals by model id, keeping record order inside each series.
std::map<std::string, std::vector<WordSurprisal>> by_model(const std::vector<WordSurprisal>& surprisals);

}  // namespace relanom
