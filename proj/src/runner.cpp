#include "coda/runner.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "coda/diagnostics.hpp"
#include "coda/version.hpp"
#include "json.hpp"

namespace coda::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("key '" + key + "': expected a number, got '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("key '" + key + "': expected an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v, ',')) out.push_back(to_double(key, item));
  return out;
}

std::vector<std::uint64_t> to_seed_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(v, ','))
    out.push_back(static_cast<std::uint64_t>(to_long(key, item)));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs, const char* sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) os << sep;
    if constexpr (std::is_same_v<T, double>) {
      os << json(xs[i]).dump();  // shortest round-trip formatting
    } else {
      os << xs[i];
    }
  }
  return os.str();
}

std::string fmt(double v) { return json(v).dump(); }

std::uint64_t fnv64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void apply_key(RunManifest& m, const std::string& key, const std::string& value) {
  auto& c = m.config;
  auto& s = c.strategy.settings;
  if (key == "out") m.out_dir = value;
  else if (key == "train_path") m.train_path = value;
  else if (key == "dev_path") m.dev_path = value;
  else if (key == "paraphrase_path") m.paraphrase_path = value;
  else if (key == "init_from") m.init_from = value;
  else if (key == "format") {
    if (value != "tsv" && value != "jsonl")
      throw std::invalid_argument("format must be 'tsv' or 'jsonl'");
    m.format = value;
  } else if (key == "num_classes") m.num_classes = static_cast<int>(to_long(key, value));
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_long(key, value));
  else if (key == "eval_every") c.eval_every = static_cast<int>(to_long(key, value));
  else if (key == "alpha") c.alpha = to_double(key, value);
  else if (key == "beta") c.beta = to_double(key, value);
  else if (key == "lambda_weight") c.lambda_weight = to_double(key, value);
  else if (key == "adv_term") c.adv_term = value;
  else if (key == "consistency_div") c.consistency_div = value;
  else if (key == "js_stop_grad") c.js_stop_grad = to_bool(key, value);
  else if (key == "tau") c.tau = to_double(key, value);
  else if (key == "gamma") c.gamma = to_double(key, value);
  else if (key == "bank_capacity") c.bank_capacity = static_cast<int>(to_long(key, value));
  else if (key == "contrast_warmup_steps")
    c.contrast_warmup_steps = static_cast<int>(to_long(key, value));
  else if (key == "bank_in_checkpoint") c.bank_in_checkpoint = to_bool(key, value);
  else if (key == "strategy") {
    auto settings = c.strategy.settings;  // keep already-applied knobs
    c.strategy = augment::parse_strategy(value);
    c.strategy.settings = settings;
  } else if (key == "cutoff_ratio") s.cutoff_ratio = to_double(key, value);
  else if (key == "replace_rate") s.replace_rate = to_double(key, value);
  else if (key == "epsilon") s.epsilon = to_double(key, value);
  else if (key == "adv_steps") s.adv_steps = static_cast<int>(to_long(key, value));
  else if (key == "mixup_alpha") s.mixup_alpha = to_double(key, value);
  else if (key == "d_emb") c.d_emb = static_cast<int>(to_long(key, value));
  else if (key == "d_hid") c.d_hid = static_cast<int>(to_long(key, value));
  else if (key == "d_proj") c.d_proj = static_cast<int>(to_long(key, value));
  else if (key == "vocab_min_freq") c.vocab_min_freq = static_cast<int>(to_long(key, value));
  else if (key == "vocab_max_size") c.vocab_max_size = static_cast<int>(to_long(key, value));
  else if (key == "dropout_rate") c.dropout_rate = to_double(key, value);
  else if (key == "lr") c.lr = to_double(key, value);
  else if (key == "batch_size") c.batch_size = static_cast<int>(to_long(key, value));
  else if (key == "epochs") c.epochs = static_cast<int>(to_long(key, value));
  else if (key == "warmup_ratio") c.warmup_ratio = to_double(key, value);
  else if (key == "weight_decay") c.weight_decay = to_double(key, value);
  else if (key == "adam_beta1") c.adam_beta1 = to_double(key, value);
  else if (key == "adam_beta2") c.adam_beta2 = to_double(key, value);
  else if (key == "adam_eps") c.adam_eps = to_double(key, value);
  else if (key == "subsample_fraction") c.subsample_fraction = to_double(key, value);
  else if (key == "sweep_fractions") m.sweep_fractions = to_double_list(key, value);
  else if (key == "sweep_seeds") m.sweep_seeds = to_seed_list(key, value);
  else if (key == "sweep_methods") m.sweep_methods = split_list(value, ',');
  else if (key == "mmd_strategies") m.mmd_strategies = split_list(value, ';');
  else if (key == "mmd_sample_count") m.mmd_sample_count = static_cast<int>(to_long(key, value));
  else if (key == "mmd_warm_epochs") m.mmd_warm_epochs = static_cast<int>(to_long(key, value));
  else if (key == "mmd_unbiased") m.mmd_unbiased = to_bool(key, value);
  else if (key == "mmd_bandwidth_scales") m.mmd_bandwidth_scales = to_double_list(key, value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

std::map<std::string, std::string> RunManifest::to_map() const {
  const auto& c = config;
  const auto& s = c.strategy.settings;
  std::map<std::string, std::string> kv;
  kv["out"] = out_dir;
  kv["train_path"] = train_path;
  kv["dev_path"] = dev_path;
  kv["paraphrase_path"] = paraphrase_path;
  kv["init_from"] = init_from;
  kv["format"] = format;
  kv["num_classes"] = std::to_string(num_classes);
  kv["seed"] = std::to_string(c.seed);
  kv["eval_every"] = std::to_string(c.eval_every);
  kv["alpha"] = fmt(c.alpha);
  kv["beta"] = fmt(c.beta);
  kv["lambda_weight"] = fmt(c.lambda_weight);
  kv["adv_term"] = c.adv_term;
  kv["consistency_div"] = c.consistency_div;
  kv["js_stop_grad"] = c.js_stop_grad ? "true" : "false";
  kv["tau"] = fmt(c.tau);
  kv["gamma"] = fmt(c.gamma);
  kv["bank_capacity"] = std::to_string(c.bank_capacity);
  kv["contrast_warmup_steps"] = std::to_string(c.contrast_warmup_steps);
  kv["bank_in_checkpoint"] = c.bank_in_checkpoint ? "true" : "false";
  kv["strategy"] = augment::to_string(c.strategy);
  kv["cutoff_ratio"] = fmt(s.cutoff_ratio);
  kv["replace_rate"] = fmt(s.replace_rate);
  kv["epsilon"] = fmt(s.epsilon);
  kv["adv_steps"] = std::to_string(s.adv_steps);
  kv["mixup_alpha"] = fmt(s.mixup_alpha);
  kv["d_emb"] = std::to_string(c.d_emb);
  kv["d_hid"] = std::to_string(c.d_hid);
  kv["d_proj"] = std::to_string(c.d_proj);
  kv["vocab_min_freq"] = std::to_string(c.vocab_min_freq);
  kv["vocab_max_size"] = std::to_string(c.vocab_max_size);
  kv["dropout_rate"] = fmt(c.dropout_rate);
  kv["lr"] = fmt(c.lr);
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["epochs"] = std::to_string(c.epochs);
  kv["warmup_ratio"] = fmt(c.warmup_ratio);
  kv["weight_decay"] = fmt(c.weight_decay);
  kv["adam_beta1"] = fmt(c.adam_beta1);
  kv["adam_beta2"] = fmt(c.adam_beta2);
  kv["adam_eps"] = fmt(c.adam_eps);
  kv["subsample_fraction"] = fmt(c.subsample_fraction);
  kv["sweep_fractions"] = join(sweep_fractions, ",");
  kv["sweep_seeds"] = join(sweep_seeds, ",");
  kv["sweep_methods"] = join(sweep_methods, ",");
  kv["mmd_strategies"] = join(mmd_strategies, ";");
  kv["mmd_sample_count"] = std::to_string(mmd_sample_count);
  kv["mmd_warm_epochs"] = std::to_string(mmd_warm_epochs);
  kv["mmd_unbiased"] = mmd_unbiased ? "true" : "false";
  kv["mmd_bandwidth_scales"] = join(mmd_bandwidth_scales, ",");
  return kv;
}

std::string RunManifest::to_json() const {
  json j;
  j["command"] = command;
  j["version"] = version;
  j["force_weights"] = force_weights;
  j["seed"] = config.seed;
  j["out"] = out_dir;
  j["config"] = json(to_map());
  return j.dump(2) + "\n";
}

RunManifest parse_config(const std::string& command, const std::string& config_path,
                         const std::vector<std::pair<std::string, std::string>>& overrides,
                         bool force_weights) {
  RunManifest m;
  m.command = command;
  m.version = kVersion;
  m.force_weights = force_weights;

  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config file: " + config_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(config_path + ":" + std::to_string(line_no) +
                                 ": expected key = value");
      apply_key(m, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  for (const auto& [key, value] : overrides) apply_key(m, key, value);

  m.config.validate(force_weights);
  if (m.command.empty()) throw std::invalid_argument("missing command");
  const bool needs_train = command == "train" || command == "sweep" || command == "augment" ||
                           command == "mmd";
  if (needs_train && m.train_path.empty())
    throw std::invalid_argument("command '" + command + "' requires train_path");
  if ((command == "train" || command == "sweep" || command == "eval") && m.dev_path.empty())
    throw std::invalid_argument("command '" + command + "' requires dev_path");
  if (command == "eval" && m.init_from.empty())
    throw std::invalid_argument("command 'eval' requires init_from");
  return m;
}

// ---------------------------------------------------------------------------
// command implementations

namespace {

corpus::DatasetFormat dataset_format(const RunManifest& m) {
  return m.format == "jsonl" ? corpus::DatasetFormat::kJsonl : corpus::DatasetFormat::kTsv;
}

json loss_json(const objectives::LossBreakdown& loss) {
  json j;
  j["ce"] = loss.ce;
  j["adv_ce"] = loss.adv_ce;
  j["consistency"] = loss.consistency;
  j["contrast_self"] = loss.contrast_self;
  j["contrast_aug"] = loss.contrast_aug;
  j["total"] = loss.total;
  return j;
}

// deterministic metrics line; wall time deliberately stays out of the stream
std::string metrics_line(const trainer::MetricsRecord& rec) {
  json j = loss_json(rec.loss);
  j["step"] = rec.step;
  j["epoch"] = rec.epoch;
  j["split"] = rec.split;
  if (rec.split != "train") j["accuracy"] = rec.accuracy;
  return j.dump() + "\n";
}

std::string checkpoint_meta(const RunManifest& m, const corpus::Vocabulary& vocab,
                            int num_classes) {
  json j;
  j["config"] = json(m.to_map());
  j["num_classes"] = num_classes;
  json tokens = json::array();
  json freqs = json::array();
  for (int id = corpus::Vocabulary::kNumReserved; id < vocab.size(); ++id) {
    tokens.push_back(vocab.id_to_token[static_cast<std::size_t>(id)]);
    freqs.push_back(vocab.unigram_freq[static_cast<std::size_t>(id)]);
  }
  j["vocab_tokens"] = std::move(tokens);
  j["vocab_freqs"] = std::move(freqs);
  return j.dump();
}

corpus::Vocabulary vocab_from_meta(const std::string& meta_json) {
  const json j = json::parse(meta_json);
  std::vector<std::string> texts;
  const auto& tokens = j.at("vocab_tokens");
  const auto& freqs = j.at("vocab_freqs");
  // reconstruct by replaying the frequency table
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto n = freqs[i].get<std::int64_t>();
    for (std::int64_t k = 0; k < n; ++k) texts.push_back(tokens[i].get<std::string>());
  }
  return corpus::build_vocab(texts, 1, static_cast<int>(tokens.size()) +
                                           corpus::Vocabulary::kNumReserved);
}

struct LoadedData {
  corpus::LabeledDataset train_raw;
  corpus::LabeledDataset dev_raw;
  corpus::ParaphraseTable table;
  bool has_table = false;
};

LoadedData load_inputs(const RunManifest& m, bool need_dev) {
  LoadedData data;
  if (!m.train_path.empty())
    data.train_raw = corpus::load_dataset(m.train_path, dataset_format(m), m.num_classes);
  if (need_dev && !m.dev_path.empty())
    data.dev_raw = corpus::load_dataset(m.dev_path, dataset_format(m), m.num_classes);
  if (!m.paraphrase_path.empty()) {
    data.table = corpus::load_paraphrases(m.paraphrase_path);
    data.has_table = true;
  }
  return data;
}

int run_train(const RunManifest& m) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedData data = load_inputs(m, /*need_dev=*/true);
  const corpus::ParaphraseTable* table = data.has_table ? &data.table : nullptr;

  corpus::LabeledDataset train_raw = m.config.subsample_fraction < 1.0
                                         ? corpus::subsample(data.train_raw,
                                                             m.config.subsample_fraction,
                                                             m.config.seed)
                                         : std::move(data.train_raw);
  const corpus::Vocabulary vocab = trainer::build_run_vocab(
      train_raw, table, m.config.vocab_min_freq, m.config.vocab_max_size);
  const auto train_tok = corpus::tokenize_dataset(train_raw, vocab);
  const auto dev_tok = corpus::tokenize_dataset(data.dev_raw, vocab);

  encoder::ModelParams init;
  const encoder::ModelParams* init_ptr = nullptr;
  if (!m.init_from.empty()) {
    init = encoder::load_checkpoint(m.init_from).params;
    init_ptr = &init;
  }

  const fs::path out(m.out_dir);
  std::ofstream metrics(out / "metrics.jsonl");
  if (!metrics) throw std::runtime_error("cannot open metrics.jsonl for writing");

  trainer::TrainCallbacks cb;
  cb.sink = [&metrics](const trainer::MetricsRecord& rec) { metrics << metrics_line(rec); };
  cb.checkpoint = [&](long step, const encoder::ModelParams& params) {
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt_step_%06ld.bin", step);
    encoder::save_checkpoint((out / name).string(), params,
                             checkpoint_meta(m, vocab, train_tok.num_classes));
  };

  const auto result = trainer::train(train_tok, dev_tok, m.config, vocab, table, cb, init_ptr);
  metrics.flush();

  std::vector<std::pair<std::string, Eigen::MatrixXd>> extra;
  encoder::save_checkpoint((out / "ckpt_final.bin").string(), result.params,
                           checkpoint_meta(m, vocab, train_tok.num_classes), extra);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json report;
  report["best_dev_accuracy"] = result.best_dev_accuracy;
  report["best_step"] = result.best_step;
  report["final_dev_accuracy"] = result.final_dev_accuracy;
  report["final_loss"] = loss_json(result.final_loss);
  report["total_steps"] = result.total_steps;
  report["train_examples"] = train_tok.size();
  report["vocab_size"] = vocab.size();
  report["wall_time_s"] = wall;
  std::ofstream(out / "report.json") << report.dump(2) << "\n";

  std::cout << "train: best dev accuracy " << result.best_dev_accuracy << " at step "
            << result.best_step << ", final " << result.final_dev_accuracy << "\n";
  return kExitOk;
}

int run_eval(const RunManifest& m) {
  const auto ck = encoder::load_checkpoint(m.init_from);
  const corpus::Vocabulary vocab = vocab_from_meta(ck.meta_json);
  const auto dev_raw = corpus::load_dataset(m.dev_path, dataset_format(m), m.num_classes);
  const auto dev_tok = corpus::tokenize_dataset(dev_raw, vocab);
  const auto rec = trainer::evaluate(ck.params, dev_tok, m.config);

  json report;
  report["accuracy"] = rec.accuracy;
  report["ce"] = rec.loss.ce;
  report["examples"] = dev_tok.size();
  std::ofstream(fs::path(m.out_dir) / "report.json") << report.dump(2) << "\n";
  std::cout << "eval: accuracy " << rec.accuracy << " over " << dev_tok.size()
            << " examples\n";
  return kExitOk;
}

int run_augment(const RunManifest& m) {
  LoadedData data = load_inputs(m, /*need_dev=*/false);
  const corpus::ParaphraseTable* table = data.has_table ? &data.table : nullptr;
  const corpus::Vocabulary vocab = trainer::build_run_vocab(
      data.train_raw, table, m.config.vocab_min_freq, m.config.vocab_max_size);
  const auto train_tok = corpus::tokenize_dataset(data.train_raw, vocab);

  encoder::ModelParams params =
      m.init_from.empty()
          ? encoder::init_params(vocab.size(), m.config.d_emb, m.config.d_hid, m.config.d_proj,
                                 train_tok.num_classes, m.config.seed)
          : encoder::load_checkpoint(m.init_from).params;

  augment::ModelContext ctx;
  ctx.params = &params;
  ctx.vocab = &vocab;
  ctx.table = table;

  std::ofstream out_file(fs::path(m.out_dir) / "augmented.jsonl");
  if (!out_file) throw std::runtime_error("cannot open augmented.jsonl for writing");

  const int bs = std::max(m.config.batch_size, 1);
  for (int start = 0; start < train_tok.size(); start += bs) {
    const int end = std::min(train_tok.size(), start + bs);
    std::vector<corpus::LabeledExample> chunk(
        train_tok.examples.begin() + start, train_tok.examples.begin() + end);
    const auto pairs = augment::apply_strategy(
        m.config.strategy, chunk, ctx,
        derive_seed(m.config.seed, 0xC0000000ULL + static_cast<std::uint64_t>(start)));
    for (const auto& pair : pairs) {
      json j;
      j["original_text"] = pair.original_text;
      j["provenance"] = pair.provenance;
      j["label"] = std::vector<double>(pair.label.data(), pair.label.data() + pair.label.size());
      if (pair.augmented_tokens) {
        j["augmented_text"] = pair.augmented_tokens->source_text.empty()
                                  ? pair.original_text
                                  : pair.augmented_tokens->source_text;
      } else {
        const auto& slice = *pair.augmented_embeddings;
        json digest;
        digest["rows"] = slice.values.rows();
        digest["cols"] = slice.values.cols();
        digest["l2_norm"] = slice.values.norm();
        char hex[32];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(fnv64(
                          slice.values.data(), sizeof(double) * static_cast<std::size_t>(
                                                                    slice.values.size()))));
        digest["fnv64"] = hex;
        j["embedding_digest"] = std::move(digest);
      }
      out_file << j.dump() << "\n";
    }
  }
  std::cout << "augment: wrote " << train_tok.size() << " records\n";
  return kExitOk;
}

int run_mmd(const RunManifest& m) {
  LoadedData data = load_inputs(m, /*need_dev=*/false);
  const corpus::ParaphraseTable* table = data.has_table ? &data.table : nullptr;
  const corpus::Vocabulary vocab = trainer::build_run_vocab(
      data.train_raw, table, m.config.vocab_min_freq, m.config.vocab_max_size);
  const auto train_tok = corpus::tokenize_dataset(data.train_raw, vocab);

  encoder::ModelParams params =
      m.init_from.empty()
          ? encoder::init_params(vocab.size(), m.config.d_emb, m.config.d_hid, m.config.d_proj,
                                 train_tok.num_classes, m.config.seed)
          : encoder::load_checkpoint(m.init_from).params;

  if (m.mmd_warm_epochs > 0 && m.init_from.empty()) {
    // representations from a briefly trained encoder separate transforms
    // far better than random init
    trainer::TrainConfig warm = trainer::apply_method(m.config, "ce");
    warm.epochs = m.mmd_warm_epochs;
    warm.eval_every = 0;
    const auto r = trainer::train(train_tok, train_tok, warm, vocab, table, {}, &params);
    params = r.params;
  }

  std::vector<augment::StrategySpec> strategies;
  for (const auto& text : m.mmd_strategies) {
    auto spec = augment::parse_strategy(text);
    spec.settings = m.config.strategy.settings;
    strategies.push_back(std::move(spec));
  }

  diagnostics::DiversityConfig dcfg;
  dcfg.sample_count = m.mmd_sample_count;
  dcfg.batch_size = m.config.batch_size;
  dcfg.bandwidth_scales = m.mmd_bandwidth_scales;
  dcfg.unbiased = m.mmd_unbiased;

  const auto rows = diagnostics::diversity_report(train_tok, strategies, params, vocab, table,
                                                  dcfg, m.config.seed);

  const fs::path out(m.out_dir);
  std::ofstream tsv(out / "diversity.tsv");
  tsv << "strategy\tmmd\tsample_count\n";
  json jrows = json::array();
  for (const auto& row : rows) {
    tsv << row.strategy << "\t" << fmt(row.mmd) << "\t" << row.sample_count << "\n";
    json j;
    j["strategy"] = row.strategy;
    j["mmd"] = row.mmd;
    j["sample_count"] = row.sample_count;
    jrows.push_back(std::move(j));
    std::cout << row.strategy << "\tmmd=" << row.mmd << "\tn=" << row.sample_count << "\n";
  }
  std::ofstream(out / "diversity.json") << jrows.dump(2) << "\n";
  return kExitOk;
}

int run_sweep(const RunManifest& m) {
  LoadedData data = load_inputs(m, /*need_dev=*/true);
  const corpus::ParaphraseTable* table = data.has_table ? &data.table : nullptr;

  const fs::path out(m.out_dir);
  std::ofstream tsv(out / "sweep_results.tsv");
  tsv << "fraction\tseed\tmethod\tdev_accuracy\tbest_dev_accuracy\tok\terror\n";
  json jrows = json::array();

  const auto cells = trainer::low_resource_sweep(
      data.train_raw, data.dev_raw, table, m.config, m.sweep_fractions, m.sweep_seeds,
      m.sweep_methods, [&](const trainer::SweepCell& cell) {
        tsv << fmt(cell.fraction) << "\t" << cell.seed << "\t" << cell.method << "\t"
            << fmt(cell.dev_accuracy) << "\t" << fmt(cell.best_dev_accuracy) << "\t"
            << (cell.ok ? "1" : "0") << "\t" << cell.error << "\n";
        tsv.flush();
        std::cout << "sweep: fraction=" << cell.fraction << " seed=" << cell.seed
                  << " method=" << cell.method << " dev_accuracy=" << cell.dev_accuracy
                  << (cell.ok ? "" : (" ERROR " + cell.error)) << "\n";
      });
  for (const auto& cell : cells) {
    json j;
    j["fraction"] = cell.fraction;
    j["seed"] = cell.seed;
    j["method"] = cell.method;
    j["dev_accuracy"] = cell.dev_accuracy;
    j["best_dev_accuracy"] = cell.best_dev_accuracy;
    j["ok"] = cell.ok;
    j["error"] = cell.error;
    jrows.push_back(std::move(j));
  }
  std::ofstream(out / "sweep_results.json") << jrows.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int run(const RunManifest& manifest) {
  try {
    fs::create_directories(manifest.out_dir);
    std::ofstream(fs::path(manifest.out_dir) / "manifest.json") << manifest.to_json();

    if (manifest.command == "train") return run_train(manifest);
    if (manifest.command == "eval") return run_eval(manifest);
    if (manifest.command == "augment") return run_augment(manifest);
    if (manifest.command == "mmd") return run_mmd(manifest);
    if (manifest.command == "sweep") return run_sweep(manifest);
    std::cerr << "unknown command '" << manifest.command << "'\n";
    return kExitUsage;
  } catch (const trainer::NonFiniteLossError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNonFinite;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace coda::cli
