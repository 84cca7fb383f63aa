#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relanom/corpus.hpp"

namespace relanom {

struct SyntheticOptions {
  std::uint64_t seed = 1;
  int n_frames = 30;
  int word_pool = 10;  // critical words per condition; words recur across frames
  std::string experiment_id = "synthetic";
};

/// A stimulus set plus n-gram training text built so that, for every frame,
/// the Related word follows the frame's closing bigram in training while the
/// Unrelated word never does. Any n-gram backend of order >= 2 trained on
/// `training_text` therefore assigns Related words higher probability.
struct SyntheticDesign {
  std::vector<StimulusItem> items;
  std::vector<std::string> training_text;  // one sentence per line
};

SyntheticDesign make_synthetic_design(const SyntheticOptions& options);

/// Writes corpus.tsv, train.txt and config.json (two n-gram backends) into `dir`.
/// Returns the path of config.json.
std::string write_synthetic_run(const SyntheticOptions& options, const std::string& dir);

}  // namespace relanom
