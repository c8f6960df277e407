#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace coda::corpus {

// Lowercases, trims, and collapses runs of whitespace to single spaces.
std::string normalize_text(const std::string& text);

// Lowercased whitespace tokens of `text`.
std::vector<std::string> split_tokens(const std::string& text);

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kNumReserved = 3;

  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;      // index == id, reserved first
  std::vector<std::int64_t> unigram_freq;    // per id, 0 for reserved ids
  std::vector<double> unigram_cdf;           // over non-reserved ids, for sampling

  int size() const { return static_cast<int>(id_to_token.size()); }
  bool is_reserved(int id) const { return id >= 0 && id < kNumReserved; }
  int lookup(const std::string& token) const;

  // id sampled from the unigram distribution over non-reserved tokens;
  // requires at least one non-reserved entry.
  int sample_unigram(double u01) const;
};

struct TokenSequence {
  std::vector<int> ids;
  std::string source_text;

  int length() const { return static_cast<int>(ids.size()); }
};

struct LabeledExample {
  TokenSequence tokens;
  Eigen::VectorXd label;  // probability vector over classes
};

struct LabeledDataset {
  std::vector<LabeledExample> examples;
  int num_classes = 0;

  int size() const { return static_cast<int>(examples.size()); }
};

enum class DatasetFormat { kTsv, kJsonl };

// `text<TAB>label` lines or JSONL objects {"text": str, "label": int}.
// Labels become one-hot vectors; record order is preserved.
LabeledDataset load_dataset(const std::string& path, DatasetFormat format, int num_classes);

// Frequency-sorted vocabulary (descending count, lexicographic tie-break).
// Tokens below min_freq are dropped; at most max_size entries total
// including the three reserved ids.
Vocabulary build_vocab(const std::vector<std::string>& texts, int min_freq, int max_size);
Vocabulary build_vocab(const LabeledDataset& dataset, int min_freq, int max_size);

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab);

// Re-tokenizes every example's source text against `vocab`.
LabeledDataset tokenize_dataset(const LabeledDataset& dataset, const Vocabulary& vocab);

// Offline paraphrase store keyed on normalized source text.
class ParaphraseTable {
 public:
  ParaphraseTable() = default;
  ParaphraseTable(ParaphraseTable&& other) noexcept;
  ParaphraseTable& operator=(ParaphraseTable&& other) noexcept;

  static ParaphraseTable from_entries(
      const std::vector<std::pair<std::string, std::string>>& entries);

  // nullptr on miss; hit/miss counters update either way.
  const std::string* lookup(const std::string& text) const;

  std::uint64_t hits() const { return hits_.load(std::memory_order_relaxed); }
  std::uint64_t misses() const { return misses_.load(std::memory_order_relaxed); }
  std::size_t size() const { return entries_.size(); }
  int duplicate_warnings() const { return duplicate_warnings_; }

  // All paraphrase target strings; useful for vocabulary construction.
  std::vector<std::string> targets() const;

 private:
  friend ParaphraseTable load_paraphrases(const std::string& path);

  std::unordered_map<std::string, std::string> entries_;
  mutable std::atomic<std::uint64_t> hits_{0};
  mutable std::atomic<std::uint64_t> misses_{0};
  int duplicate_warnings_ = 0;
};

// TSV `source<TAB>paraphrase` per line. Duplicate sources keep the last
// entry and emit a warning on stderr; a missing column is an error.
ParaphraseTable load_paraphrases(const std::string& path);

// Stratified subsample: per class keeps ceil(fraction * class_count)
// examples chosen by a seeded generator; original order is preserved.
LabeledDataset subsample(const LabeledDataset& dataset, double fraction, std::uint64_t seed);

}  // namespace coda::corpus
