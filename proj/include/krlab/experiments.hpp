#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "krlab/params.hpp"
#include "krlab/teacher.hpp"
#include "krlab/train.hpp"

namespace krlab {

enum class ExperimentId { kScaling, kRnnVsTransformer, kNtkConvergence, kGradcheck };

std::string experiment_name(ExperimentId id);
/// Throws ConfigError for unknown names.
ExperimentId parse_experiment(const std::string& name);

/// Invalid configuration (maps to exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fully resolved experiment configuration.
struct ExperimentSpec {
  ExperimentId experiment = ExperimentId::kScaling;
  std::string preset;
  std::string out_dir = "krlab_out";  ///< not part of the manifest
  std::uint64_t master_seed = 0;
  std::string activation = "tanh";

  // shared
  std::vector<int> widths;
  int seeds = 1;
  int tau = 1;
  std::optional<double> eta;  ///< unset: 1/√τ
  int record_every = 0;
  bool enforce = true;  ///< gate the exit code on the acceptance thresholds
  double r2_min = 0.9;

  // scaling / ntk
  int d = 4;
  int T = 8;
  int n = 200;
  TransportCaps nu{3.0, 3.0, 3.0};
  Radii rho{3.0, 3.0, 3.0};
  int pool = 1024;
  int anchors = 16;
  double delta = 0.05;
  double delta_prime = 0.05;
  BoundaryDirections boundary = BoundaryDirections::kShared;
  long long mc_samples = 1000000;

  // rnn-vs-transformer
  std::vector<int> lags;
  int width = 64;
  double gamma = 1.0;
  double alpha = 0.9;
  double noise_var = 0.1;
  int d_pos = 8;
  int n_val = 1000;
  double growth_min = 0.0;  ///< required IndRNN norm growth from smallest to largest lag; 0 disables

  // gradcheck
  int instances = 100;
  double gradcheck_perturbation = 0.0;

  double resolved_eta() const;
  std::uint64_t run_seed(int k) const { return master_seed + static_cast<std::uint64_t>(k); }
};

/// Presets: scaling {paper-6.1, desk-6.1, smoke}, rnn-vs-transformer
/// {paper-6.2, desk-6.2, smoke}, ntk-convergence {default, smoke},
/// gradcheck {default}. An empty name selects the experiment's default.
ExperimentSpec preset_spec(ExperimentId id, const std::string& preset = "");
std::string default_preset(ExperimentId id);

/// Sets one key; throws ConfigError on unknown keys or unparsable values.
void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value);

/// key=value lines; blank lines and '#' comments are ignored.
std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in);

/// Throws ConfigError when the spec is outside the experiment's domain.
void validate_spec(const ExperimentSpec& spec);

/// Resolved key=value configuration plus tool version; read back by parse_config.
std::string manifest_text(const ExperimentSpec& spec);

/// Runs the experiment, writing outputs under spec.out_dir.
/// Returns 0 on success and 1 when acceptance thresholds fail.
int run_experiment(const ExperimentSpec& spec, std::ostream& log);

int run_scaling(const ExperimentSpec& spec, std::ostream& log);
int run_rnn_vs_transformer(const ExperimentSpec& spec, std::ostream& log);
int run_ntk_convergence(const ExperimentSpec& spec, std::ostream& log);
int run_gradcheck(const ExperimentSpec& spec, std::ostream& log);

}  // namespace krlab
