// Generates the bundled two-class sentiment corpus plus its paraphrase
// table. Train sentences draw adjectives from one synonym pool per class;
// paraphrases swap each adjective (and the subject noun) for an aligned
// synonym, and the dev split leans on those synonyms. A model that never
// learns the paraphrase vocabulary is blind to most of the dev set, which
// is exactly the gap augmentation is supposed to close.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coda/rng.hpp"

namespace {

const std::vector<std::string> kPosA = {
    "good",  "great",      "enjoyable", "pleasant", "charming", "solid",
    "engaging", "satisfying", "warm",      "lively",   "crisp",    "memorable"};
const std::vector<std::string> kPosB = {
    "superb",   "splendid", "marvelous", "delightful", "brilliant", "stellar",
    "exquisite", "radiant",  "glorious",  "sublime",    "masterful", "luminous"};
const std::vector<std::string> kNegA = {
    "bad",    "dull",  "boring",  "weak",  "tedious", "flat",
    "clumsy", "messy", "shallow", "stale", "grim",    "lifeless"};
const std::vector<std::string> kNegB = {
    "dreadful", "atrocious", "dismal", "abysmal",   "woeful", "lousy",
    "horrid",   "wretched",  "dire",   "appalling", "bleak",  "insufferable"};

const std::vector<std::string> kSubjects = {
    "the movie",  "the film",   "the plot",       "the acting", "the script",
    "the pacing", "the soundtrack", "the ending", "the cast",   "the dialogue"};
const std::map<std::string, std::string> kSubjectSynonym = {
    {"movie", "picture"},     {"film", "feature"},   {"plot", "storyline"},
    {"acting", "performances"}, {"script", "writing"}, {"pacing", "rhythm"},
    {"soundtrack", "score"},  {"ending", "finale"},  {"cast", "ensemble"},
    {"dialogue", "lines"}};
const std::vector<std::string> kModifiers = {"", "really ", "quite ", "truly ", "rather "};

struct Sentence {
  std::string text;
  std::vector<int> adj_slots;  // pool indices used, for paraphrasing
  int subject = 0;
  int cls = 0;
};

Sentence make_sentence(int cls, const std::vector<std::string>& pool, coda::Rng& rng) {
  std::uniform_int_distribution<int> pick_subject(0, static_cast<int>(kSubjects.size()) - 1);
  std::uniform_int_distribution<int> pick_adj(0, static_cast<int>(pool.size()) - 1);
  std::uniform_int_distribution<int> pick_mod(0, static_cast<int>(kModifiers.size()) - 1);
  std::uniform_int_distribution<int> pick_tpl(0, 5);

  Sentence s;
  s.cls = cls;
  s.subject = pick_subject(rng);
  const std::string& subj = kSubjects[static_cast<std::size_t>(s.subject)];
  const int a1 = pick_adj(rng);
  const int a2 = pick_adj(rng);
  const std::string& mod = kModifiers[static_cast<std::size_t>(pick_mod(rng))];
  s.adj_slots = {a1};
  switch (pick_tpl(rng)) {
    case 0: s.text = subj + " was " + mod + pool[a1]; break;
    case 1:
      s.text = subj + " felt " + pool[a1] + " and " + pool[a2];
      s.adj_slots.push_back(a2);
      break;
    case 2: s.text = "i thought " + subj + " was " + mod + pool[a1]; break;
    case 3: s.text = subj + " seemed " + pool[a1] + " overall"; break;
    case 4:
      s.text = "honestly " + subj + " was " + pool[a1] + " and " + pool[a2];
      s.adj_slots.push_back(a2);
      break;
    default: s.text = subj + " was " + pool[a1] + " from start to finish"; break;
  }
  return s;
}

// aligned-synonym rewrite: A-pool adjectives -> B-pool, subject noun -> synonym
std::string paraphrase_of(const Sentence& s) {
  const auto& from = s.cls == 1 ? kPosA : kNegA;
  const auto& to = s.cls == 1 ? kPosB : kNegB;
  std::string out;
  std::string word;
  auto flush = [&](const std::string& w) {
    std::string r = w;
    for (std::size_t i = 0; i < from.size(); ++i)
      if (w == from[i]) {
        r = to[i];
        break;
      }
    auto it = kSubjectSynonym.find(w);
    if (it != kSubjectSynonym.end()) r = it->second;
    if (!out.empty()) out.push_back(' ');
    out += r;
  };
  for (char c : s.text) {
    if (c == ' ') {
      if (!word.empty()) flush(word);
      word.clear();
    } else {
      word.push_back(c);
    }
  }
  if (!word.empty()) flush(word);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generate the bundled toy sentiment corpus"};
  std::string out_dir = "data";
  int train_size = 2400;
  int dev_size = 600;
  long seed = 7;
  double miss_rate = 0.05;
  double dev_b_fraction = 0.7;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--train-size", train_size, "number of training lines");
  app.add_option("--dev-size", dev_size, "number of dev lines");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--miss-rate", miss_rate, "fraction of train sentences without a paraphrase");
  app.add_option("--dev-b-fraction", dev_b_fraction,
                 "fraction of dev sentences drawn from the synonym pools");
  CLI11_PARSE(app, argc, argv);

  std::filesystem::create_directories(out_dir);
  coda::Rng rng = coda::make_rng(static_cast<std::uint64_t>(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::ofstream train(std::filesystem::path(out_dir) / "train.tsv");
  std::ofstream dev(std::filesystem::path(out_dir) / "dev.tsv");
  std::ofstream para(std::filesystem::path(out_dir) / "paraphrases.tsv");

  std::set<std::string> para_written;
  long misses = 0;
  for (int i = 0; i < train_size; ++i) {
    const int cls = i % 2;
    const Sentence s = make_sentence(cls, cls == 1 ? kPosA : kNegA, rng);
    train << s.text << "\t" << cls << "\n";
    if (para_written.insert(s.text).second) {
      if (unit(rng) < miss_rate) {
        ++misses;
        continue;
      }
      para << s.text << "\t" << paraphrase_of(s) << "\n";
    }
  }
  for (int i = 0; i < dev_size; ++i) {
    const int cls = i % 2;
    const bool synonym_pool = unit(rng) < dev_b_fraction;
    const auto& pool = cls == 1 ? (synonym_pool ? kPosB : kPosA)
                                : (synonym_pool ? kNegB : kNegA);
    dev << make_sentence(cls, pool, rng).text << "\t" << cls << "\n";
  }

  std::cout << "wrote " << train_size << " train / " << dev_size << " dev lines, "
            << para_written.size() - static_cast<std::size_t>(misses)
            << " paraphrase entries (" << misses << " deliberately missing)\n";
  return 0;
}
