#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "coda/encoder.hpp"
#include "coda/runner.hpp"
#include "json.hpp"

using namespace coda;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path dir;

  Workspace() {
    dir = fs::temp_directory_path() /
          ("coda_runner_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    std::ofstream train(dir / "train.tsv");
    std::ofstream dev(dir / "dev.tsv");
    std::ofstream para(dir / "para.tsv");
    std::set<std::string> para_seen;
    for (int i = 0; i < 32; ++i) {
      const bool pos = i % 2;
      const std::string text = std::string(pos ? "bright warm kind" : "gray cold harsh") +
                               " item " + std::to_string(i % 5);
      train << text << "\t" << (pos ? 1 : 0) << "\n";
      if (i < 12) dev << text << "\t" << (pos ? 1 : 0) << "\n";
      if (para_seen.insert(text).second)
        para << text << "\t"
             << (pos ? "sunny mild gentle item " : "dim chilly stern item ") +
                    std::to_string(i % 5)
             << "\n";
    }
    std::ofstream config(dir / "run.conf");
    config << "# tiny smoke configuration\n"
           << "train_path = " << (dir / "train.tsv").string() << "\n"
           << "dev_path = " << (dir / "dev.tsv").string() << "\n"
           << "paraphrase_path = " << (dir / "para.tsv").string() << "\n"
           << "num_classes = 2\n"
           << "d_emb = 8\nd_hid = 10\nd_proj = 4\n"
           << "batch_size = 8\nepochs = 1\neval_every = 2\n"
           << "seed = 3\n";
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string config() const { return (dir / "run.conf").string(); }
  fs::path out(const std::string& name) const { return dir / name; }
};

}  // namespace

TEST_CASE("parse_config: every default echoed, overrides win") {
  Workspace ws;
  auto m = cli::parse_config("train", ws.config(), {{"seed", "7"}}, false);
  CHECK(m.config.seed == 7);  // override beats the file's seed 3

  const auto kv = m.to_map();
  CHECK(kv.size() >= 40);  // fully resolved manifest
  CHECK(kv.at("alpha") == "1.0");
  CHECK(kv.at("lambda_weight") == "0.03");
  CHECK(kv.at("strategy") == "stack(back,adv)");
  CHECK(kv.at("gamma") == "0.99");
  CHECK(kv.at("tau") == "1.0");
  CHECK(kv.at("bank_capacity") == "65536");
  CHECK(kv.at("warmup_ratio") == "0.06");
  CHECK(kv.at("weight_decay") == "0.1");
  CHECK(kv.at("epochs") == "1");
}

TEST_CASE("parse_config: weight windows and unknown keys") {
  Workspace ws;
  try {
    cli::parse_config("train", ws.config(), {{"lambda_weight", "0.5"}}, false);
    FAIL("expected a validation error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("[0, 0.03]") != std::string::npos);
  }
  CHECK_NOTHROW(cli::parse_config("train", ws.config(), {{"lambda_weight", "0.5"}}, true));
  CHECK_THROWS(cli::parse_config("train", ws.config(), {{"no_such_key", "1"}}, false));
  CHECK_THROWS(cli::parse_config("train", "", {}, false));  // missing train_path
  CHECK_THROWS(cli::parse_config("eval", ws.config(), {}, false));  // missing init_from
}

TEST_CASE("run train: output files exist and metrics are byte-reproducible") {
  Workspace ws;
  auto run_once = [&](const std::string& out) {
    auto m = cli::parse_config("train", ws.config(),
                               {{"out", (ws.dir / out).string()}}, false);
    REQUIRE(cli::run(m) == cli::kExitOk);
  };
  run_once("out_a");
  run_once("out_b");

  for (const char* f : {"manifest.json", "metrics.jsonl", "report.json", "ckpt_final.bin"})
    CHECK(fs::exists(ws.out("out_a") / f));

  // two runs from the same manifest modulo the out dir: identical streams
  CHECK(slurp(ws.out("out_a") / "metrics.jsonl") == slurp(ws.out("out_b") / "metrics.jsonl"));

  // eval boundaries produced mid-training checkpoints
  bool found_step_ckpt = false;
  for (const auto& entry : fs::directory_iterator(ws.out("out_a")))
    found_step_ckpt |= entry.path().filename().string().rfind("ckpt_step_", 0) == 0;
  CHECK(found_step_ckpt);

  const auto line = slurp(ws.out("out_a") / "metrics.jsonl");
  const auto first = nlohmann::json::parse(line.substr(0, line.find('\n')));
  for (const char* field :
       {"step", "epoch", "split", "ce", "adv_ce", "consistency", "contrast_self",
        "contrast_aug", "total"})
    CHECK(first.contains(field));
  CHECK_FALSE(first.contains("wall_time_s"));

  const auto report = nlohmann::json::parse(slurp(ws.out("out_a") / "report.json"));
  CHECK(report.contains("best_dev_accuracy"));
  CHECK(report.contains("wall_time_s"));
}

TEST_CASE("run eval: reads back a trained checkpoint") {
  Workspace ws;
  auto train = cli::parse_config("train", ws.config(),
                                 {{"out", (ws.dir / "t").string()}}, false);
  REQUIRE(cli::run(train) == cli::kExitOk);

  auto eval = cli::parse_config(
      "eval", ws.config(),
      {{"out", (ws.dir / "e").string()},
       {"init_from", (ws.dir / "t" / "ckpt_final.bin").string()}},
      false);
  REQUIRE(cli::run(eval) == cli::kExitOk);
  const auto report = nlohmann::json::parse(slurp(ws.dir / "e" / "report.json"));
  CHECK(report.at("examples").get<int>() == 12);
  CHECK(report.at("accuracy").get<double>() >= 0.0);
}

TEST_CASE("run augment: jsonl records with provenance") {
  Workspace ws;
  auto m = cli::parse_config(
      "augment", ws.config(),
      {{"out", (ws.dir / "aug").string()}, {"strategy", "back"}}, false);
  REQUIRE(cli::run(m) == cli::kExitOk);
  std::ifstream in(ws.dir / "aug" / "augmented.jsonl");
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("original_text"));
    CHECK(j.contains("augmented_text"));
    CHECK(j.at("provenance")[0] == "back");
    ++count;
  }
  CHECK(count == 32);

  // embedding-level strategies emit digests instead of text
  auto m2 = cli::parse_config(
      "augment", ws.config(),
      {{"out", (ws.dir / "aug2").string()}, {"strategy", "stack(back,adv)"}}, false);
  REQUIRE(cli::run(m2) == cli::kExitOk);
  std::ifstream in2(ws.dir / "aug2" / "augmented.jsonl");
  std::getline(in2, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(j.contains("embedding_digest"));
  CHECK(j.at("embedding_digest").contains("fnv64"));
}

TEST_CASE("run mmd: diversity tables") {
  Workspace ws;
  auto m = cli::parse_config(
      "mmd", ws.config(),
      {{"out", (ws.dir / "mmd").string()},
       {"mmd_strategies", "identity;back"},
       {"mmd_sample_count", "16"}},
      false);
  REQUIRE(cli::run(m) == cli::kExitOk);
  const auto tsv = slurp(ws.dir / "mmd" / "diversity.tsv");
  CHECK(tsv.find("strategy\tmmd\tsample_count") == 0);
  CHECK(tsv.find("single(back)") != std::string::npos);
  const auto rows = nlohmann::json::parse(slurp(ws.dir / "mmd" / "diversity.json"));
  CHECK(rows.size() == 2);
}

TEST_CASE("run sweep: summary table with one row per cell") {
  Workspace ws;
  auto m = cli::parse_config(
      "sweep", ws.config(),
      {{"out", (ws.dir / "sw").string()},
       {"sweep_fractions", "1.0"},
       {"sweep_seeds", "1,2"},
       {"sweep_methods", "ce"},
       {"epochs", "1"}},
      false);
  REQUIRE(cli::run(m) == cli::kExitOk);
  const auto rows = nlohmann::json::parse(slurp(ws.dir / "sw" / "sweep_results.json"));
  CHECK(rows.size() == 2);
  for (const auto& row : rows) CHECK(row.at("ok").get<bool>());
}

TEST_CASE("manifest json embeds the resolved config") {
  Workspace ws;
  auto m = cli::parse_config("train", ws.config(), {}, false);
  const auto j = nlohmann::json::parse(m.to_json());
  CHECK(j.at("command") == "train");
  CHECK(j.at("config").at("strategy") == "stack(back,adv)");
  CHECK(j.at("config").size() == m.to_map().size());
}
