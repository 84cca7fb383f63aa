#include "relanom/synthetic.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "json.hpp"
#include "relanom/errors.hpp"

namespace relanom {

namespace fs = std::filesystem;

namespace {

// std::uniform_int_distribution is implementation-defined; keep output identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  std::uint64_t below(std::uint64_t n) { return gen_() % n; }
  int between(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }

 private:
  std::mt19937_64 gen_;
};

std::string pseudo_word(Rng& rng, std::set<std::string>& used) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* nuclei[] = {"a", "e", "i", "o", "u"};
  while (true) {
    std::string w;
    const int syl = rng.between(2, 3);
    for (int s = 0; s < syl; ++s) {
      w += onsets[rng.below(std::size(onsets))];
      w += nuclei[rng.below(std::size(nuclei))];
    }
    if (used.insert(w).second) return w;
  }
}

}  // namespace

SyntheticDesign make_synthetic_design(const SyntheticOptions& o) {
  if (o.n_frames < 4 || o.word_pool < 2) throw Error("synthetic design needs >= 4 frames and a pool of >= 2 words");
  Rng rng(o.seed);
  std::set<std::string> used{"the", "in", "scene", "we", "looked", "at", "a", "was", "here", "there", "is"};
  std::vector<std::string> related, unrelated, predictable;
  for (int i = 0; i < o.word_pool; ++i) related.push_back(pseudo_word(rng, used));
  for (int i = 0; i < o.word_pool; ++i) unrelated.push_back(pseudo_word(rng, used));
  for (int i = 0; i < o.word_pool; ++i) predictable.push_back(pseudo_word(rng, used));

  SyntheticDesign d;
  // Unrelated words exist in the vocabulary only through filler sentences,
  // with word-specific frequencies.
  for (const auto& w : unrelated) {
    const int k = rng.between(1, 6);
    for (int i = 0; i < k; ++i) d.training_text.push_back("there is a " + w + " here");
  }
  for (const auto& w : related) d.training_text.push_back("a " + w + " was here");

  for (int f = 0; f < o.n_frames; ++f) {
    const std::string cue = pseudo_word(rng, used);
    const std::string frame_id = "f" + std::to_string(f + 1);
    const std::string context = "In scene " + std::to_string(f + 1) + " we looked at the " + cue;
    const std::string& pw = predictable[static_cast<std::size_t>(f) % predictable.size()];
    const std::string& rw = related[rng.below(related.size())];
    const std::string& uw = unrelated[rng.below(unrelated.size())];

    const int n_pred = rng.between(6, 10);
    const int n_rel = rng.between(2, 5);
    for (int i = 0; i < n_pred; ++i) d.training_text.push_back("we looked at the " + cue + " " + pw + " here");
    for (int i = 0; i < n_rel; ++i) d.training_text.push_back("we looked at the " + cue + " " + rw + " there");

    const std::string exp = o.experiment_id;
    d.items.push_back({exp, frame_id, Condition::Predictable, context, "here.", pw, 0.8});
    d.items.push_back({exp, frame_id, Condition::Related, context, "here.", rw, 0.0});
    d.items.push_back({exp, frame_id, Condition::Unrelated, context, "here.", uw, 0.0});
  }
  return d;
}

std::string write_synthetic_run(const SyntheticOptions& options, const std::string& dir) {
  const auto design = make_synthetic_design(options);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create " + dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw IoError("cannot write " + (fs::path(dir) / name).string());
    out << content;
  };
  write("corpus.tsv", serialize_corpus(design.items, CorpusFormat::Delimited));
  std::string train;
  for (const auto& s : design.training_text) train += s + "\n";
  write("train.txt", train);

  nlohmann::ordered_json cfg;
  cfg["corpora"] = {"corpus.tsv"};
  cfg["backends"] = {
      {{"type", "ngram"}, {"model_id", "ngram3"}, {"train_text", "train.txt"}, {"order", 3}, {"discount", 0.75}},
      {{"type", "ngram"}, {"model_id", "ngram2"}, {"train_text", "train.txt"}, {"order", 2}, {"discount", 0.75}},
  };
  cfg["contrast"] = {"Related", "Unrelated"};
  cfg["random_effects"] = {"frame_id", "critical_word"};
  cfg["fdr_scope"] = "run";
  cfg["output_dir"] = "out";
  write("config.json", cfg.dump(2) + "\n");
  return (fs::path(dir) / "config.json").string();
}

}  // namespace relanom
