#include "coda/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "coda/rng.hpp"
#include "json.hpp"

namespace coda::corpus {

std::string normalize_text(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_space = true;  // swallows leading whitespace
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

int Vocabulary::sample_unigram(double u01) const {
  if (unigram_cdf.empty()) throw std::logic_error("vocabulary has no sampleable tokens");
  auto it = std::lower_bound(unigram_cdf.begin(), unigram_cdf.end(), u01);
  auto idx = static_cast<int>(it - unigram_cdf.begin());
  idx = std::min<int>(idx, static_cast<int>(unigram_cdf.size()) - 1);
  return kNumReserved + idx;
}

namespace {

Eigen::VectorXd one_hot(int cls, int num_classes) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(num_classes);
  v(cls) = 1.0;
  return v;
}

[[noreturn]] void record_error(const std::string& path, int line_no, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

LabeledDataset load_dataset(const std::string& path, DatasetFormat format, int num_classes) {
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);

  LabeledDataset ds;
  ds.num_classes = num_classes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::string text;
    long cls = 0;
    if (format == DatasetFormat::kTsv) {
      auto tab = line.rfind('\t');
      if (tab == std::string::npos) record_error(path, line_no, "expected text<TAB>label");
      text = line.substr(0, tab);
      const std::string label_str = line.substr(tab + 1);
      try {
        std::size_t pos = 0;
        cls = std::stol(label_str, &pos);
        if (pos != label_str.size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        record_error(path, line_no, "label is not an integer: '" + label_str + "'");
      }
    } else {
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(line);
      } catch (const std::exception& e) {
        record_error(path, line_no, std::string("invalid JSON: ") + e.what());
      }
      if (!rec.contains("text") || !rec["text"].is_string())
        record_error(path, line_no, "missing string field 'text'");
      if (!rec.contains("label") || !rec["label"].is_number_integer())
        record_error(path, line_no, "missing integer field 'label'");
      text = rec["text"].get<std::string>();
      cls = rec["label"].get<long>();
    }
    if (cls < 0 || cls >= num_classes)
      record_error(path, line_no,
                   "class " + std::to_string(cls) + " out of range [0, " +
                       std::to_string(num_classes) + ")");
    LabeledExample ex;
    ex.tokens.source_text = text;
    ex.label = one_hot(static_cast<int>(cls), num_classes);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

Vocabulary build_vocab(const std::vector<std::string>& texts, int min_freq, int max_size) {
  if (min_freq < 1) throw std::invalid_argument("min_freq must be >= 1");
  if (max_size < Vocabulary::kNumReserved)
    throw std::invalid_argument("max_size must leave room for reserved ids");

  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& text : texts)
    for (auto& tok : split_tokens(text)) ++counts[tok];

  std::vector<std::pair<std::string, std::int64_t>> sorted;
  sorted.reserve(counts.size());
  for (auto& kv : counts)
    if (kv.second >= min_freq) sorted.emplace_back(kv.first, kv.second);
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  const std::size_t keep =
      std::min<std::size_t>(sorted.size(), static_cast<std::size_t>(max_size) - Vocabulary::kNumReserved);

  Vocabulary v;
  v.id_to_token = {"<pad>", "<unk>", "<mask>"};
  v.unigram_freq = {0, 0, 0};
  for (std::size_t i = 0; i < keep; ++i) {
    const int id = static_cast<int>(v.id_to_token.size());
    v.token_to_id.emplace(sorted[i].first, id);
    v.id_to_token.push_back(sorted[i].first);
    v.unigram_freq.push_back(sorted[i].second);
  }

  // cumulative unigram mass over non-reserved ids
  double total = 0;
  for (std::size_t i = Vocabulary::kNumReserved; i < v.unigram_freq.size(); ++i)
    total += static_cast<double>(v.unigram_freq[i]);
  double acc = 0;
  for (std::size_t i = Vocabulary::kNumReserved; i < v.unigram_freq.size(); ++i) {
    acc += static_cast<double>(v.unigram_freq[i]) / total;
    v.unigram_cdf.push_back(acc);
  }
  if (!v.unigram_cdf.empty()) v.unigram_cdf.back() = 1.0;
  return v;
}

Vocabulary build_vocab(const LabeledDataset& dataset, int min_freq, int max_size) {
  std::vector<std::string> texts;
  texts.reserve(dataset.examples.size());
  for (const auto& ex : dataset.examples) texts.push_back(ex.tokens.source_text);
  return build_vocab(texts, min_freq, max_size);
}

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab) {
  TokenSequence seq;
  seq.source_text = text;
  for (const auto& tok : split_tokens(text)) seq.ids.push_back(vocab.lookup(tok));
  return seq;
}

LabeledDataset tokenize_dataset(const LabeledDataset& dataset, const Vocabulary& vocab) {
  LabeledDataset out;
  out.num_classes = dataset.num_classes;
  out.examples.reserve(dataset.examples.size());
  for (const auto& ex : dataset.examples) {
    LabeledExample copy;
    copy.tokens = tokenize(ex.tokens.source_text, vocab);
    copy.label = ex.label;
    out.examples.push_back(std::move(copy));
  }
  return out;
}

ParaphraseTable::ParaphraseTable(ParaphraseTable&& other) noexcept
    : entries_(std::move(other.entries_)),
      hits_(other.hits_.load(std::memory_order_relaxed)),
      misses_(other.misses_.load(std::memory_order_relaxed)),
      duplicate_warnings_(other.duplicate_warnings_) {}

ParaphraseTable& ParaphraseTable::operator=(ParaphraseTable&& other) noexcept {
  entries_ = std::move(other.entries_);
  hits_.store(other.hits_.load(std::memory_order_relaxed), std::memory_order_relaxed);
  misses_.store(other.misses_.load(std::memory_order_relaxed), std::memory_order_relaxed);
  duplicate_warnings_ = other.duplicate_warnings_;
  return *this;
}

ParaphraseTable ParaphraseTable::from_entries(
    const std::vector<std::pair<std::string, std::string>>& entries) {
  ParaphraseTable t;
  for (const auto& [src, dst] : entries) {
    if (dst.empty()) throw std::invalid_argument("paraphrase target must be non-empty");
    t.entries_[normalize_text(src)] = dst;
  }
  return t;
}

const std::string* ParaphraseTable::lookup(const std::string& text) const {
  auto it = entries_.find(normalize_text(text));
  if (it == entries_.end()) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return nullptr;
  }
  hits_.fetch_add(1, std::memory_order_relaxed);
  return &it->second;
}

std::vector<std::string> ParaphraseTable::targets() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& kv : entries_) out.push_back(kv.second);
  return out;
}

ParaphraseTable load_paraphrases(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open paraphrase file: " + path);

  ParaphraseTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      record_error(path, line_no, "expected source<TAB>paraphrase");
    std::string src = normalize_text(line.substr(0, tab));
    std::string dst = line.substr(tab + 1);
    if (dst.empty()) record_error(path, line_no, "empty paraphrase column");
    auto [it, inserted] = t.entries_.emplace(src, dst);
    if (!inserted) {
      std::cerr << "warning: " << path << ":" << line_no
                << ": duplicate source '" << src << "', last entry wins\n";
      ++t.duplicate_warnings_;
      it->second = dst;  // last entry wins
    }
  }
  return t;
}

LabeledDataset subsample(const LabeledDataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("fraction must lie in (0, 1]");

  // group indices by argmax class
  std::vector<std::vector<int>> by_class(std::max(dataset.num_classes, 1));
  for (int i = 0; i < dataset.size(); ++i) {
    Eigen::Index cls = 0;
    if (dataset.examples[i].label.size() > 0) dataset.examples[i].label.maxCoeff(&cls);
    by_class[static_cast<int>(cls)].push_back(i);
  }

  std::vector<int> keep;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    const auto want = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(idx.size())));
    Rng rng = make_rng(derive_seed(seed, c));
    std::shuffle(idx.begin(), idx.end(), rng);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<long>(want));
  }
  std::sort(keep.begin(), keep.end());

  LabeledDataset out;
  out.num_classes = dataset.num_classes;
  out.examples.reserve(keep.size());
  for (int i : keep) out.examples.push_back(dataset.examples[i]);
  return out;
}

}  // namespace coda::corpus
