#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "jumpsae_cli/commands.hpp"

using namespace jumpsae::cli;

namespace {

struct Subcommand {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::function<int(const RunConfig&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate JumpReLU, ReLU, Gated and TopK sparse autoencoders"};
  app.require_subcommand(1);

  const std::pair<const char*, const char*> names[] = {
      {"datagen", "write a synthetic activation file and its ground-truth sidecar"},
      {"train", "train one SAE and write a checkpoint plus a metrics log"},
      {"eval", "evaluate a checkpoint and write a JSON report"},
      {"sweep", "train one SAE per sweep value and write a pareto CSV"},
      {"verify", "run the gradient-estimator checks and write a JSON report"},
  };
  const std::map<std::string, std::function<int(const RunConfig&)>> handlers = {
      {"datagen", cmd_datagen}, {"train", cmd_train}, {"eval", cmd_eval},
      {"sweep", cmd_sweep},     {"verify", cmd_verify},
  };

  std::map<std::string, Subcommand> subs;
  for (const auto& [name, help] : names) {
    Subcommand& s = subs[name];
    s.app = app.add_subcommand(name, help);
    s.run = handlers.at(name);
    s.app->add_option("--config", s.config_path, "flat key = value config file");
    for (const auto& key : config_keys()) {
      std::string desc(key.help);
      if (!key.default_value.empty()) desc += " [" + std::string(key.default_value) + "]";
      s.app->add_option("--" + std::string(key.name), s.overrides[std::string(key.name)], desc);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  for (auto& [name, s] : subs) {
    if (!s.app->parsed()) continue;
    try {
      RunConfig cfg;
      if (!s.config_path.empty()) cfg.load_file(s.config_path);
      for (const auto& key : config_keys()) {
        const std::string k(key.name);
        if (s.app->get_option("--" + k)->count() > 0) cfg.set(k, s.overrides.at(k));
      }
      return s.run(cfg);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }
  return kExitConfig;
}
