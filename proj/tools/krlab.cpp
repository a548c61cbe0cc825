// Command-line entry point: krlab <experiment> [options]

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "krlab/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + std::to_string(v[k]);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel-regime experiments for shallow attention models", "krlab"};
  app.set_version_flag("--version", std::string(KRLAB_VERSION));

  std::string experiment;
  std::string preset;
  std::string out_dir;
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<int> seeds, tau, width;
  std::vector<int> widths, lags;

  app.add_option("experiment", experiment, "scaling | rnn-vs-transformer | ntk-convergence | gradcheck")->required();
  app.add_option("--preset", preset, "named parameter preset");
  app.add_option("--out", out_dir, "output directory (KRLAB_OUT overrides)");
  app.add_option("--seeds", seeds, "number of seeds");
  app.add_option("--widths", widths, "comma-separated widths")->delimiter(',');
  app.add_option("--lags", lags, "comma-separated AR lags")->delimiter(',');
  app.add_option("--tau", tau, "training steps");
  app.add_option("--width", width, "model width for rnn-vs-transformer and gradcheck");
  app.add_option("--config", config_path, "key=value file (a run manifest works)");
  app.add_option("--set", sets, "extra key=value override, repeatable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const krlab::ExperimentId id = krlab::parse_experiment(experiment);

    std::vector<std::pair<std::string, std::string>> file_settings;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw krlab::ConfigError("cannot read config file " + config_path);
      file_settings = krlab::parse_config(in);
    }
    std::string preset_name = preset;
    for (const auto& [key, value] : file_settings) {
      if (key == "experiment" && value != experiment)
        throw krlab::ConfigError("config is for experiment '" + value + "', not '" + experiment + "'");
      if (key == "preset" && preset_name.empty()) preset_name = value;
    }

    krlab::ExperimentSpec spec = krlab::preset_spec(id, preset_name);
    for (const auto& [key, value] : file_settings) {
      if (key == "experiment" || key == "preset") continue;
      if (key == "version") {
        if (value != KRLAB_VERSION)
          std::cerr << "warning: config written by version " << value << ", running " << KRLAB_VERSION << "\n";
        continue;
      }
      krlab::apply_setting(spec, key, value);
    }
    if (seeds) krlab::apply_setting(spec, "seeds", std::to_string(*seeds));
    if (!widths.empty()) krlab::apply_setting(spec, "widths", join(widths));
    if (!lags.empty()) krlab::apply_setting(spec, "lags", join(lags));
    if (tau) krlab::apply_setting(spec, "tau", std::to_string(*tau));
    if (width) krlab::apply_setting(spec, "width", std::to_string(*width));
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw krlab::ConfigError("--set expects key=value, got '" + kv + "'");
      krlab::apply_setting(spec, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!out_dir.empty()) spec.out_dir = out_dir;
    if (const char* env = std::getenv("KRLAB_OUT"); env != nullptr && *env != '\0') spec.out_dir = env;

    krlab::validate_spec(spec);
    std::cout << "krlab " << krlab::experiment_name(id) << " preset=" << spec.preset << " out=" << spec.out_dir
              << "\n";
    return krlab::run_experiment(spec, std::cout);
  } catch (const std::invalid_argument& e) {
    std::cerr << "krlab: invalid configuration: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "krlab: error: " << e.what() << "\n";
    return 1;
  }
}
