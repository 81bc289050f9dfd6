#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "softgrip/cli.hpp"

using namespace softgrip;

namespace {

std::string readFile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-finger simulation scenarios: identification, adaptive control and cooperative grasping."};
  std::string scenario, config_path, out_dir;
  std::uint64_t seed = 0;
  std::vector<std::string> sets;
  bool list_keys = false;
  app.add_option("scenario", scenario, "one of: " + CLI::detail::join(scenario_names(), ", "));
  app.add_option("--config", config_path, "INI file with parameter overrides");
  app.add_option("--out", out_dir, "output directory (default: $SOFTGRIP_OUT, else ./softgrip-out)");
  auto* seed_opt = app.add_option("--seed", seed, "random seed for sensor noise");
  app.add_option("--set", sets, "override as section.key=value; repeatable");
  app.add_flag("--list-keys", list_keys, "print every configuration key and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  if (list_keys) {
    for (const auto& k : config_keys()) std::cout << k << '\n';
    return 0;
  }

  try {
    if (scenario.empty()) throw ConfigError("missing scenario; one of: " + CLI::detail::join(scenario_names(), ", "));
    RunConfig cfg;
    if (!config_path.empty()) cfg = parse_config(readFile(config_path));
    cfg.scenario = parse_scenario(scenario);
    if (*seed_opt) cfg.seed = seed;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
      apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!out_dir.empty()) {
      cfg.out_dir = out_dir;
    } else if (const char* env = std::getenv("SOFTGRIP_OUT"); env && *env) {
      cfg.out_dir = env;
    }
    const ScenarioOutput out = run(cfg);
    std::cout << scenario << ": " << out.summary;
    std::cout << "wrote " << out.files.size() + out.plots.size() << " files to " << cfg.out_dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}
