#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "relanom/scoring.hpp"

namespace relanom {

/// One row of the surprisal interchange table.
struct SurprisalRow {
  WordSurprisal score;
  std::string critical_word;

  friend bool operator==(const SurprisalRow&, const SurprisalRow&) = default;
};

/// Tab-delimited with header
/// experiment_id, frame_id, condition, critical_word, model_id, surprisal_bits, n_subtokens.
/// Infinite surprisal is written as "inf"; finite values use the shortest round-trip decimal form.
void write_surprisal_table(std::ostream& out, const std::vector<SurprisalRow>& rows);
std::vector<SurprisalRow> read_surprisal_table(std::istream& in);

}  // namespace relanom
