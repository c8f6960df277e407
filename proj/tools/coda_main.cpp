#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coda/runner.hpp"
#include "coda/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"coda: consistency + contrastive data augmentation for text classification"};
  app.set_version_flag("--version", std::string(coda::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  long seed = -1;
  bool force_weights = false;
  std::vector<std::string> sets;

  for (const char* name : {"train", "eval", "augment", "mmd", "sweep"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "flat key=value config file");
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--seed", seed, "random seed (overrides config)");
    sub->add_flag("--force-weights", force_weights,
                  "allow objective weights outside the validated windows");
    sub->add_option("--set", sets, "extra key=value overrides")->take_all();
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& kv : sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!out_dir.empty()) overrides.emplace_back("out", out_dir);
    if (seed >= 0) overrides.emplace_back("seed", std::to_string(seed));

    const auto manifest = coda::cli::parse_config(command, config_path, overrides, force_weights);
    return coda::cli::run(manifest);
  } catch (const std::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return coda::cli::kExitUsage;
  }
}
