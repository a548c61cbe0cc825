#include "krlab/experiments.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <sstream>

#include "krlab/activation.hpp"
#include "krlab/data.hpp"
#include "krlab/gradcheck.hpp"
#include "krlab/indrnn.hpp"
#include "krlab/ntk.hpp"
#include "krlab/numerics.hpp"
#include "krlab/svg.hpp"

namespace fs = std::filesystem;

namespace krlab {

namespace {

constexpr double kSlopeLow = -0.75;
constexpr double kSlopeHigh = -0.25;
constexpr double kCiLevel = 0.95;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---- value parsing -------------------------------------------------------

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("invalid value for '" + key + "': '" + value + "'");
}

long long parse_integer(const std::string& key, const std::string& value) {
  long long out = 0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value);
  return out;
}

int parse_int(const std::string& key, const std::string& value) {
  const long long v = parse_integer(key, value);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) bad_value(key, value);
  return static_cast<int>(v);
}

std::uint64_t parse_seed(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value);
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty() || !std::isfinite(out)) bad_value(key, value);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (const auto& part : split(value, ',')) out.push_back(parse_int(key, part));
  // empty lists are legal here; validate_spec rejects them where the experiment needs one
  return out;
}

std::array<double, 3> parse_triple(const std::string& key, const std::string& value) {
  const auto parts = split(value, ',');
  if (parts.size() != 3) bad_value(key, value);
  return {parse_double(key, parts[0]), parse_double(key, parts[1]), parse_double(key, parts[2])};
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + std::to_string(v[k]);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// ---- key table -----------------------------------------------------------

struct Key {
  const char* name;
  std::function<void(ExperimentSpec&, const std::string&)> set;
  std::function<std::string(const ExperimentSpec&)> get;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"master_seed", [](auto& s, const auto& v) { s.master_seed = parse_seed("master_seed", v); },
       [](const auto& s) { return std::to_string(s.master_seed); }},
      {"activation",
       [](auto& s, const auto& v) {
         try {
           activation_by_name(v);
         } catch (const std::invalid_argument&) {
           bad_value("activation", v);
         }
         s.activation = v;
       },
       [](const auto& s) { return s.activation; }},
      {"widths", [](auto& s, const auto& v) { s.widths = parse_int_list("widths", v); },
       [](const auto& s) { return join(s.widths); }},
      {"seeds", [](auto& s, const auto& v) { s.seeds = parse_int("seeds", v); },
       [](const auto& s) { return std::to_string(s.seeds); }},
      {"tau", [](auto& s, const auto& v) { s.tau = parse_int("tau", v); },
       [](const auto& s) { return std::to_string(s.tau); }},
      {"eta",
       [](auto& s, const auto& v) {
         if (v == "auto")
           s.eta.reset();
         else
           s.eta = parse_double("eta", v);
       },
       [](const auto& s) { return s.eta ? fmt(*s.eta) : std::string("auto"); }},
      {"record_every", [](auto& s, const auto& v) { s.record_every = parse_int("record_every", v); },
       [](const auto& s) { return std::to_string(s.record_every); }},
      {"enforce", [](auto& s, const auto& v) { s.enforce = parse_bool("enforce", v); },
       [](const auto& s) { return std::string(s.enforce ? "true" : "false"); }},
      {"r2_min", [](auto& s, const auto& v) { s.r2_min = parse_double("r2_min", v); },
       [](const auto& s) { return fmt(s.r2_min); }},
      {"d", [](auto& s, const auto& v) { s.d = parse_int("d", v); }, [](const auto& s) { return std::to_string(s.d); }},
      {"T", [](auto& s, const auto& v) { s.T = parse_int("T", v); }, [](const auto& s) { return std::to_string(s.T); }},
      {"n", [](auto& s, const auto& v) { s.n = parse_int("n", v); }, [](const auto& s) { return std::to_string(s.n); }},
      {"nu",
       [](auto& s, const auto& v) {
         const auto t = parse_triple("nu", v);
         s.nu = {t[0], t[1], t[2]};
       },
       [](const auto& s) { return fmt(s.nu.c) + "," + fmt(s.nu.u) + "," + fmt(s.nu.w); }},
      {"rho",
       [](auto& s, const auto& v) {
         const auto t = parse_triple("rho", v);
         s.rho = {t[0], t[1], t[2]};
       },
       [](const auto& s) { return fmt(s.rho.rho_c) + "," + fmt(s.rho.rho_u) + "," + fmt(s.rho.rho_w); }},
      {"pool", [](auto& s, const auto& v) { s.pool = parse_int("pool", v); },
       [](const auto& s) { return std::to_string(s.pool); }},
      {"anchors", [](auto& s, const auto& v) { s.anchors = parse_int("anchors", v); },
       [](const auto& s) { return std::to_string(s.anchors); }},
      {"delta", [](auto& s, const auto& v) { s.delta = parse_double("delta", v); },
       [](const auto& s) { return fmt(s.delta); }},
      {"delta_prime", [](auto& s, const auto& v) { s.delta_prime = parse_double("delta_prime", v); },
       [](const auto& s) { return fmt(s.delta_prime); }},
      {"boundary",
       [](auto& s, const auto& v) {
         if (v == "shared")
           s.boundary = BoundaryDirections::kShared;
         else if (v == "independent")
           s.boundary = BoundaryDirections::kIndependent;
         else
           bad_value("boundary", v);
       },
       [](const auto& s) {
         return std::string(s.boundary == BoundaryDirections::kShared ? "shared" : "independent");
       }},
      {"mc_samples", [](auto& s, const auto& v) { s.mc_samples = parse_integer("mc_samples", v); },
       [](const auto& s) { return std::to_string(s.mc_samples); }},
      {"lags", [](auto& s, const auto& v) { s.lags = parse_int_list("lags", v); },
       [](const auto& s) { return join(s.lags); }},
      {"width", [](auto& s, const auto& v) { s.width = parse_int("width", v); },
       [](const auto& s) { return std::to_string(s.width); }},
      {"gamma", [](auto& s, const auto& v) { s.gamma = parse_double("gamma", v); },
       [](const auto& s) { return fmt(s.gamma); }},
      {"alpha", [](auto& s, const auto& v) { s.alpha = parse_double("alpha", v); },
       [](const auto& s) { return fmt(s.alpha); }},
      {"noise_var", [](auto& s, const auto& v) { s.noise_var = parse_double("noise_var", v); },
       [](const auto& s) { return fmt(s.noise_var); }},
      {"d_pos", [](auto& s, const auto& v) { s.d_pos = parse_int("d_pos", v); },
       [](const auto& s) { return std::to_string(s.d_pos); }},
      {"n_val", [](auto& s, const auto& v) { s.n_val = parse_int("n_val", v); },
       [](const auto& s) { return std::to_string(s.n_val); }},
      {"growth_min", [](auto& s, const auto& v) { s.growth_min = parse_double("growth_min", v); },
       [](const auto& s) { return fmt(s.growth_min); }},
      {"instances", [](auto& s, const auto& v) { s.instances = parse_int("instances", v); },
       [](const auto& s) { return std::to_string(s.instances); }},
      {"gradcheck_perturbation",
       [](auto& s, const auto& v) { s.gradcheck_perturbation = parse_double("gradcheck_perturbation", v); },
       [](const auto& s) { return fmt(s.gradcheck_perturbation); }},
  };
  return table;
}

// ---- output helpers ------------------------------------------------------

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  return out;
}

void write_manifest(const ExperimentSpec& spec) {
  auto out = open_out(fs::path(spec.out_dir) / "manifest.txt");
  out << manifest_text(spec);
}

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void check_widths(const std::vector<int>& widths, const char* what) {
  check(!widths.empty(), std::string(what) + " must be nonempty");
  for (int m : widths) check(m >= 2 && m % 2 == 0, std::string(what) + " entries must be even and >= 2");
}

struct SlopeResult {
  numerics::PowerLawFit fit;
  bool pass = false;
};

SlopeResult judge_slope(const std::vector<std::pair<double, double>>& points, double r2_min) {
  SlopeResult r;
  r.fit = numerics::fit_power_law(points);
  r.pass = r.fit.slope >= kSlopeLow && r.fit.slope <= kSlopeHigh && r.fit.r_squared >= r2_min;
  return r;
}

void report(std::ostream& log, bool pass, const std::string& what) {
  log << (pass ? "[PASS] " : "[FAIL] ") << what << "\n";
}

svg::Series reference_slope(const std::vector<double>& xs, double y0, double slope) {
  svg::Series ref;
  ref.label = "slope " + fmt_short(slope);
  for (double x : xs) {
    ref.x.push_back(x);
    ref.y.push_back(y0 * std::pow(x / xs.front(), slope));
  }
  return ref;
}

}  // namespace

// ---- spec ----------------------------------------------------------------

std::string experiment_name(ExperimentId id) {
  switch (id) {
    case ExperimentId::kScaling: return "scaling";
    case ExperimentId::kRnnVsTransformer: return "rnn-vs-transformer";
    case ExperimentId::kNtkConvergence: return "ntk-convergence";
    case ExperimentId::kGradcheck: return "gradcheck";
  }
  return "";
}

ExperimentId parse_experiment(const std::string& name) {
  for (auto id : {ExperimentId::kScaling, ExperimentId::kRnnVsTransformer, ExperimentId::kNtkConvergence,
                  ExperimentId::kGradcheck})
    if (experiment_name(id) == name) return id;
  throw ConfigError("unknown experiment '" + name + "'");
}

double ExperimentSpec::resolved_eta() const {
  return eta ? *eta : 1.0 / std::sqrt(static_cast<double>(tau));
}

std::string default_preset(ExperimentId id) {
  switch (id) {
    case ExperimentId::kScaling: return "paper-6.1";
    case ExperimentId::kRnnVsTransformer: return "paper-6.2";
    default: return "default";
  }
}

ExperimentSpec preset_spec(ExperimentId id, const std::string& preset) {
  const std::string name = preset.empty() ? default_preset(id) : preset;
  ExperimentSpec s;
  s.experiment = id;
  s.preset = name;
  const auto unknown = [&] {
    return ConfigError("unknown preset '" + name + "' for experiment " + experiment_name(id));
  };

  switch (id) {
    case ExperimentId::kScaling:
      s.nu = {3.0, 3.0, 3.0};
      s.rho = {3.0, 3.0, 3.0};
      s.anchors = 16;
      s.delta = 0.05;
      s.delta_prime = 0.05;
      if (name == "paper-6.1") {
        s.d = 8;
        s.T = 16;
        s.n = 5000;
        s.pool = 8192;
        s.tau = 4000;
        s.widths = {8, 16, 64, 128, 256};
        s.seeds = 10;
        s.r2_min = 0.9;
      } else if (name == "desk-6.1") {
        s.d = 4;
        s.T = 8;
        s.n = 200;
        s.pool = 1024;
        s.tau = 500;
        s.widths = {8, 16, 32, 64, 128};
        s.seeds = 5;
        s.r2_min = 0.85;
      } else if (name == "smoke") {
        s.d = 3;
        s.T = 4;
        s.n = 24;
        s.pool = 64;
        s.anchors = 4;
        s.tau = 20;
        s.widths = {4, 8, 16};
        s.seeds = 2;
        s.enforce = false;
      } else {
        throw unknown();
      }
      break;
    case ExperimentId::kRnnVsTransformer:
      s.alpha = 0.9;
      s.noise_var = 0.1;
      s.d_pos = 8;
      s.width = 64;
      if (name == "paper-6.2") {
        s.n = 5000;
        s.n_val = 1000;
        s.seeds = 20;
        s.tau = 2000;
        s.lags = {1, 2, 4, 8, 16, 32};
        s.gamma = 1.0;
        s.growth_min = 0.0;
      } else if (name == "desk-6.2") {
        s.n = 1000;
        s.n_val = 1000;
        s.seeds = 8;
        s.tau = 500;
        s.lags = {1, 4, 16, 32};
        s.gamma = 1.5;
        s.growth_min = 4.0;
      } else if (name == "smoke") {
        s.n = 40;
        s.n_val = 20;
        s.seeds = 2;
        s.tau = 10;
        s.lags = {1, 3};
        s.width = 8;
        s.d_pos = 2;
        s.gamma = 1.5;
        s.enforce = false;
      } else {
        throw unknown();
      }
      break;
    case ExperimentId::kNtkConvergence:
      s.d = 4;
      s.T = 8;
      if (name == "default") {
        s.widths = {16, 64, 256, 1024};
        s.seeds = 10;
        s.mc_samples = 1000000;
      } else if (name == "smoke") {
        s.widths = {4, 16};
        s.seeds = 2;
        s.mc_samples = 5000;
        s.enforce = false;
      } else {
        throw unknown();
      }
      break;
    case ExperimentId::kGradcheck:
      if (name != "default") throw unknown();
      s.d = 4;
      s.T = 5;
      s.width = 4;
      s.instances = 100;
      break;
  }
  return s;
}

void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(spec, value);
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void validate_spec(const ExperimentSpec& s) {
  check(s.seeds >= 1, "seeds must be >= 1");
  check(s.tau >= 1, "tau must be >= 1");
  check(!s.eta || *s.eta > 0.0, "eta must be positive");
  check(s.record_every >= 0, "record_every must be >= 0");
  switch (s.experiment) {
    case ExperimentId::kScaling:
      check_widths(s.widths, "widths");
      check(s.seeds >= 2, "scaling needs seeds >= 2");
      check(s.d >= 1 && s.T >= 1 && s.n >= 1, "d, T, n must be >= 1");
      check(s.pool >= 1 && s.anchors >= 1, "pool and anchors must be >= 1");
      check(s.nu.c >= 0.0 && s.nu.u >= 0.0 && s.nu.w >= 0.0, "nu entries must be nonnegative");
      check(s.rho.rho_c > 0.0 && s.rho.rho_u > 0.0 && s.rho.rho_w > 0.0, "rho entries must be positive");
      check(s.delta > 0.0 && s.delta < 1.0 && s.delta_prime > 0.0 && s.delta_prime < 1.0,
            "delta and delta_prime must lie in (0,1)");
      check(s.r2_min >= 0.0 && s.r2_min <= 1.0, "r2_min must lie in [0,1]");
      break;
    case ExperimentId::kRnnVsTransformer:
      check(!s.lags.empty(), "lags must be nonempty");
      for (int L : s.lags) check(L >= 1, "lags must be >= 1");
      check(s.width >= 2 && s.width % 2 == 0, "width must be even and >= 2");
      check(std::abs(s.alpha) < 1.0, "|alpha| must be < 1");
      check(s.noise_var >= 0.0, "noise_var must be >= 0");
      check(s.gamma > 0.0, "gamma must be positive");
      check(s.d_pos >= 1 && s.n >= 1 && s.n_val >= 1, "d_pos, n, n_val must be >= 1");
      check(s.growth_min >= 0.0, "growth_min must be >= 0");
      break;
    case ExperimentId::kNtkConvergence:
      check_widths(s.widths, "widths");
      check(s.d >= 1 && s.T >= 1, "d and T must be >= 1");
      check(s.mc_samples >= 2, "mc_samples must be >= 2");
      break;
    case ExperimentId::kGradcheck:
      check(s.instances >= 1, "instances must be >= 1");
      check(s.d >= 1 && s.T >= 1, "d and T must be >= 1");
      check(s.width >= 2 && s.width % 2 == 0, "width must be even and >= 2");
      break;
  }
}

std::string manifest_text(const ExperimentSpec& spec) {
  std::ostringstream out;
  out << "# krlab run manifest\n";
  out << "version=" << KRLAB_VERSION << "\n";
  out << "experiment=" << experiment_name(spec.experiment) << "\n";
  out << "preset=" << spec.preset << "\n";
  for (const auto& k : keys()) out << k.name << "=" << k.get(spec) << "\n";
  return out.str();
}

int run_experiment(const ExperimentSpec& spec, std::ostream& log) {
  switch (spec.experiment) {
    case ExperimentId::kScaling: return run_scaling(spec, log);
    case ExperimentId::kRnnVsTransformer: return run_rnn_vs_transformer(spec, log);
    case ExperimentId::kNtkConvergence: return run_ntk_convergence(spec, log);
    case ExperimentId::kGradcheck: return run_gradcheck(spec, log);
  }
  return 2;
}

// ---- scaling -------------------------------------------------------------

int run_scaling(const ExperimentSpec& spec, std::ostream& log) {
  validate_spec(spec);
  const ActivationSpec act = activation_by_name(spec.activation);
  const fs::path out(spec.out_dir);
  fs::create_directories(out);
  write_manifest(spec);

  const std::size_t W = spec.widths.size();
  const std::size_t S = static_cast<std::size_t>(spec.seeds);
  const char* const names[3] = {"linearization", "approximation", "min_loss"};
  std::vector<std::vector<std::array<double, 3>>> value(W, std::vector<std::array<double, 3>>(S));

  auto diag = open_out(out / "diagnostics.csv");
  diag << "m,seed,event_u,B_U,L1,L2,B_lin,B_app,B_cof,B_grad,lin_error,app_error,min_loss,avg_iterate_loss,"
          "max_grad_norm\n";

  for (std::size_t k = 0; k < S; ++k) {
    const std::uint64_t seed = spec.run_seed(static_cast<int>(k));
    Dataset data;
    data.inputs = gaussian_sequences(spec.n, spec.d, spec.T, seed);
    const TransportMap map = make_anchor_map(spec.anchors, spec.d, spec.T, spec.nu, act, seed);
    data.labels = generate_labels(data.inputs, map, spec.pool, seed);
    data.meta = {spec.d, spec.T, spec.n, seed, "teacher"};

    for (std::size_t w = 0; w < W; ++w) {
      const int m = spec.widths[w];
      const ModelParams init = symmetric_init(m, spec.d, seed);
      const double lin = linearization_error(boundary_params(init, spec.rho, seed, spec.boundary), data, act);
      const double app = approximation_error(transported_params(init, map), data, act);

      TrainConfig cfg;
      cfg.steps = spec.tau;
      cfg.step_size = spec.resolved_eta();
      cfg.radii = spec.rho;
      cfg.seed = seed;
      cfg.record_every = spec.record_every;
      const RunRecord rec = run_projgd(init, data, cfg, act);
      write_run_csv((out / run_csv_name("scaling", m, seed)).string(), rec);

      value[w][k] = {lin, app, rec.min_loss};
      const TheoreticalBounds b =
          theoretical_bounds(spec.d, m, spec.n, spec.rho, spec.nu, spec.delta, spec.delta_prime, act);
      const EventU ev = check_event_u(init, spec.delta_prime, spec.rho.rho_u);
      diag << m << "," << seed << "," << (ev.holds ? 1 : 0) << "," << fmt(b.B_U) << "," << fmt(b.L1) << ","
           << fmt(b.L2) << "," << fmt(b.B_lin) << "," << fmt(b.B_app) << "," << fmt(b.B_cof) << "," << fmt(b.B_grad)
           << "," << fmt(lin) << "," << fmt(app) << "," << fmt(rec.min_loss) << "," << fmt(rec.avg_iterate_loss)
           << "," << fmt(rec.max_grad_norm) << "\n";
      log << "scaling seed=" << seed << " m=" << m << " lin=" << fmt_short(lin) << " app=" << fmt_short(app)
          << " min_loss=" << fmt_short(rec.min_loss) << "\n";
    }
  }

  auto summary = open_out(out / "summary.csv");
  summary << "metric,m,mean,ci_lower,ci_upper,slope,r_squared\n";
  bool all_pass = true;
  for (int metric = 0; metric < 3; ++metric) {
    auto csv = open_out(out / (std::string(names[metric]) + ".csv"));
    csv << "m,seed,value\n";
    std::vector<numerics::ConfidenceInterval> ci(W);
    std::vector<std::pair<double, double>> points;
    for (std::size_t w = 0; w < W; ++w) {
      std::vector<double> vals;
      for (std::size_t k = 0; k < S; ++k) {
        vals.push_back(value[w][k][static_cast<std::size_t>(metric)]);
        csv << spec.widths[w] << "," << spec.run_seed(static_cast<int>(k)) << "," << fmt(vals.back()) << "\n";
      }
      ci[w] = numerics::mean_ci(vals, kCiLevel);
      points.emplace_back(spec.widths[w], ci[w].mean);
    }
    const SlopeResult r = judge_slope(points, spec.r2_min);
    for (std::size_t w = 0; w < W; ++w)
      summary << names[metric] << "," << spec.widths[w] << "," << fmt(ci[w].mean) << "," << fmt(ci[w].lower) << ","
              << fmt(ci[w].upper) << "," << fmt(r.fit.slope) << "," << fmt(r.fit.r_squared) << "\n";

    svg::Series s;
    s.label = std::string(names[metric]) + " (mean, 95% CI)";
    for (std::size_t w = 0; w < W; ++w) {
      s.x.push_back(spec.widths[w]);
      s.y.push_back(ci[w].mean);
      s.lower.push_back(ci[w].lower);
      s.upper.push_back(ci[w].upper);
    }
    svg::Panel panel{std::string(names[metric]) + " vs width", "m", names[metric], true, true, {s}};
    panel.series.push_back(reference_slope(s.x, s.y.front(), -0.5));
    svg::write((out / (std::string(names[metric]) + ".svg")).string(), {panel});

    report(log, r.pass,
           std::string(names[metric]) + " slope " + fmt_short(r.fit.slope) + " (r2 " + fmt_short(r.fit.r_squared) +
               ") in [" + fmt_short(kSlopeLow) + ", " + fmt_short(kSlopeHigh) + "] with r2 >= " +
               fmt_short(spec.r2_min));
    all_pass = all_pass && r.pass;
  }
  return spec.enforce && !all_pass ? 1 : 0;
}

// ---- rnn vs transformer --------------------------------------------------

int run_rnn_vs_transformer(const ExperimentSpec& spec, std::ostream& log) {
  validate_spec(spec);
  const ActivationSpec act = activation_by_name(spec.activation);
  const fs::path out(spec.out_dir);
  fs::create_directories(out);
  write_manifest(spec);

  const int d = 1 + 2 * spec.d_pos;
  const std::size_t nl = spec.lags.size();
  // [model][lag] -> per-seed values; model 0 = transformer, 1 = indrnn
  std::vector<std::vector<double>> gnorm[2], vloss[2];
  for (int md = 0; md < 2; ++md) {
    gnorm[md].assign(nl, {});
    vloss[md].assign(nl, {});
  }
  bool bound_ok = true;

  auto csv = open_out(out / "results.csv");
  csv << "model,L,seed,max_grad_norm,min_val_loss\n";
  for (std::size_t li = 0; li < nl; ++li) {
    const int L = spec.lags[li];
    const fs::path tf_dir = out / "transformer" / ("L" + std::to_string(L));
    const fs::path rnn_dir = out / "indrnn" / ("L" + std::to_string(L));
    fs::create_directories(tf_dir);
    fs::create_directories(rnn_dir);
    for (int k = 0; k < spec.seeds; ++k) {
      const std::uint64_t seed = spec.run_seed(k);
      ArConfig ac;
      ac.n = spec.n;
      ac.L = L;
      ac.alpha = spec.alpha;
      ac.noise_var = spec.noise_var;
      ac.d_pos = spec.d_pos;
      ac.seed = seed;
      const Dataset train = ar_sequences(ac, ArSplit::kTrain);
      ac.n = spec.n_val;
      const Dataset val = ar_sequences(ac, ArSplit::kValidation);

      TrainConfig cfg;
      cfg.steps = spec.tau;
      cfg.step_size = spec.resolved_eta();
      cfg.seed = seed;
      cfg.record_every = spec.record_every;

      const RunRecord tf = run_projgd(symmetric_init(spec.width, d, seed), train, cfg, act, &val);
      write_run_csv((tf_dir / run_csv_name("rnn-vs-transformer", spec.width, seed)).string(), tf);
      const RnnRunRecord rnn =
          run_rnn_descent(rnn_symmetric_init(spec.width, d, spec.gamma, seed), train, cfg, act, &val);
      write_run_csv((rnn_dir / run_csv_name("rnn-vs-transformer", spec.width, seed)).string(), rnn);

      bound_ok = bound_ok && tf.max_grad_norm <= tf.max_grad_bound * (1.0 + 1e-12);
      gnorm[0][li].push_back(tf.max_grad_norm);
      vloss[0][li].push_back(tf.min_val_loss);
      gnorm[1][li].push_back(rnn.max_grad_norm);
      vloss[1][li].push_back(rnn.min_val_loss);
      csv << "transformer," << L << "," << seed << "," << fmt(tf.max_grad_norm) << "," << fmt(tf.min_val_loss) << "\n";
      csv << "indrnn," << L << "," << seed << "," << fmt(rnn.max_grad_norm) << "," << fmt(rnn.min_val_loss) << "\n";
      log << "rnn-vs-transformer L=" << L << " seed=" << seed << " tf_norm=" << fmt_short(tf.max_grad_norm)
          << " rnn_norm=" << fmt_short(rnn.max_grad_norm) << " tf_val=" << fmt_short(tf.min_val_loss)
          << " rnn_val=" << fmt_short(rnn.min_val_loss) << "\n";
    }
  }

  const char* const model_names[2] = {"transformer", "indrnn"};
  std::vector<double> med_norm_v[2], med_val_v[2];
  auto summary = open_out(out / "summary.csv");
  summary << "model,L,median_max_grad_norm,median_min_val_loss\n";
  svg::Panel norm_panel{"max gradient norm", "L", "max norm (seed median)", true, true, {}};
  svg::Panel val_panel{"min validation loss", "L", "loss (seed median)", true, true, {}};
  for (int md = 0; md < 2; ++md) {
    svg::Series sn, sv;
    sn.label = sv.label = std::string(model_names[md]) + " (median, range)";
    for (std::size_t li = 0; li < nl; ++li) {
      med_norm_v[md].push_back(numerics::median(gnorm[md][li]));
      med_val_v[md].push_back(numerics::median(vloss[md][li]));
      summary << model_names[md] << "," << spec.lags[li] << "," << fmt(med_norm_v[md].back()) << ","
              << fmt(med_val_v[md].back()) << "\n";
      sn.x.push_back(spec.lags[li]);
      sn.y.push_back(med_norm_v[md].back());
      sn.lower.push_back(*std::min_element(gnorm[md][li].begin(), gnorm[md][li].end()));
      sn.upper.push_back(*std::max_element(gnorm[md][li].begin(), gnorm[md][li].end()));
      sv.x.push_back(spec.lags[li]);
      sv.y.push_back(med_val_v[md].back());
      sv.lower.push_back(*std::min_element(vloss[md][li].begin(), vloss[md][li].end()));
      sv.upper.push_back(*std::max_element(vloss[md][li].begin(), vloss[md][li].end()));
    }
    norm_panel.series.push_back(sn);
    val_panel.series.push_back(sv);
  }
  svg::write((out / "rnn_vs_transformer.svg").string(), {norm_panel, val_panel});

  // Lags sorted by value for the smallest/largest comparisons.
  const auto lo = static_cast<std::size_t>(std::min_element(spec.lags.begin(), spec.lags.end()) - spec.lags.begin());
  const auto hi = static_cast<std::size_t>(std::max_element(spec.lags.begin(), spec.lags.end()) - spec.lags.begin());
  const auto [tf_min, tf_max] = std::minmax_element(med_norm_v[0].begin(), med_norm_v[0].end());
  const double tf_ratio = *tf_max / *tf_min;
  const bool flat = tf_ratio < 2.0;
  const double growth = med_norm_v[1][hi] / med_norm_v[1][lo];
  const bool rnn_grows =
      spec.growth_min > 0.0 ? growth >= spec.growth_min : med_norm_v[1][hi] > med_norm_v[0][hi];
  const bool val_order = med_val_v[1][lo] <= med_val_v[0][lo] && med_val_v[1][hi] >= med_val_v[0][hi];

  report(log, flat, "transformer max-norm ratio across lags " + fmt_short(tf_ratio) + " < 2");
  report(log, bound_ok, "transformer norms within sigma1*max|c|*max|U| bound");
  if (spec.growth_min > 0.0)
    report(log, rnn_grows, "indrnn norm growth L=" + std::to_string(spec.lags[hi]) + " vs L=" +
                               std::to_string(spec.lags[lo]) + ": " + fmt_short(growth) + " >= " +
                               fmt_short(spec.growth_min));
  else
    report(log, rnn_grows, "indrnn max norm exceeds transformer at L=" + std::to_string(spec.lags[hi]));
  report(log, val_order, "indrnn val loss <= transformer at L=" + std::to_string(spec.lags[lo]) +
                             " and >= at L=" + std::to_string(spec.lags[hi]));
  const bool all_pass = flat && bound_ok && rnn_grows && val_order;
  return spec.enforce && !all_pass ? 1 : 0;
}

// ---- ntk -----------------------------------------------------------------

int run_ntk_convergence(const ExperimentSpec& spec, std::ostream& log) {
  validate_spec(spec);
  const ActivationSpec act = activation_by_name(spec.activation);
  const fs::path out(spec.out_dir);
  fs::create_directories(out);
  write_manifest(spec);

  const auto inputs = gaussian_sequences(2, spec.d, spec.T, spec.master_seed, stream::kValidation);
  const KernelEstimate ref = mc_kernel(inputs[0], inputs[1], spec.mc_samples, spec.master_seed, act);
  log << "ntk reference k=" << fmt_short(ref.k_total) << " (se " << fmt_short(ref.std_error) << ", "
      << ref.n_samples << " samples)\n";

  auto csv = open_out(out / "deviation.csv");
  csv << "m,seed,k_c,k_u,k_w,k_total,reference,deviation,additivity\n";
  std::vector<std::pair<double, double>> points;
  double worst_add = 0.0;
  svg::Series s;
  s.label = "|k_m - k_inf| (median, range)";
  for (int m : spec.widths) {
    std::vector<double> dev;
    for (int k = 0; k < spec.seeds; ++k) {
      const std::uint64_t seed = spec.run_seed(k);
      const KernelEstimate e = empirical_ntk(inputs[0], inputs[1], symmetric_init(m, spec.d, seed), act);
      const double add = std::abs(e.k_total - (e.k_c + e.k_u + e.k_w));
      worst_add = std::max(worst_add, add);
      dev.push_back(std::abs(e.k_total - ref.k_total));
      csv << m << "," << seed << "," << fmt(e.k_c) << "," << fmt(e.k_u) << "," << fmt(e.k_w) << "," << fmt(e.k_total)
          << "," << fmt(ref.k_total) << "," << fmt(dev.back()) << "," << fmt(add) << "\n";
    }
    const double med = numerics::median(dev);
    points.emplace_back(m, med);
    s.x.push_back(m);
    s.y.push_back(med);
    s.lower.push_back(*std::min_element(dev.begin(), dev.end()));
    s.upper.push_back(*std::max_element(dev.begin(), dev.end()));
    log << "ntk m=" << m << " median deviation=" << fmt_short(med) << "\n";
  }
  const auto fit = numerics::fit_power_law(points);
  auto summary = open_out(out / "summary.csv");
  summary << "slope,intercept,r_squared,reference,reference_std_error,max_additivity\n";
  summary << fmt(fit.slope) << "," << fmt(fit.intercept) << "," << fmt(fit.r_squared) << "," << fmt(ref.k_total) << ","
          << fmt(ref.std_error) << "," << fmt(worst_add) << "\n";
  svg::Panel panel{"kernel deviation vs width", "m", "deviation", true, true, {s}};
  panel.series.push_back(reference_slope(s.x, s.y.front(), -0.5));
  svg::write((out / "deviation.svg").string(), {panel});

  const bool slope_ok = fit.slope >= kSlopeLow && fit.slope <= kSlopeHigh;
  const bool add_ok = worst_add <= 1e-12;
  report(log, slope_ok, "deviation slope " + fmt_short(fit.slope) + " (r2 " + fmt_short(fit.r_squared) + ") in [" +
                            fmt_short(kSlopeLow) + ", " + fmt_short(kSlopeHigh) + "]");
  report(log, add_ok, "block additivity error " + fmt_short(worst_add) + " <= 1e-12");
  return spec.enforce && !(slope_ok && add_ok) ? 1 : 0;
}

// ---- gradcheck -----------------------------------------------------------

int run_gradcheck(const ExperimentSpec& spec, std::ostream& log) {
  validate_spec(spec);
  const ActivationSpec act = activation_by_name(spec.activation);
  const fs::path out(spec.out_dir);
  fs::create_directories(out);
  write_manifest(spec);

  GradcheckConfig cfg;
  cfg.instances = spec.instances;
  cfg.d = spec.d;
  cfg.T = spec.T;
  cfg.m = spec.width;
  cfg.seed = spec.master_seed;
  cfg.perturbation = spec.gradcheck_perturbation;
  const GradcheckReport rep = run_gradient_checks(cfg, act);

  auto csv = open_out(out / "gradcheck.csv");
  csv << "block,worst_rel_err\n";
  for (const auto& b : rep.blocks) {
    csv << b.name << "," << fmt(b.worst) << "\n";
    report(log, b.worst <= rep.tolerance, b.name + " worst rel-err " + fmt_short(b.worst));
  }
  log << "gradcheck: " << rep.instances << " instances, tolerance " << fmt_short(rep.tolerance) << ", "
      << (rep.passed() ? "pass" : "fail") << "\n";
  return rep.passed() ? 0 : 1;
}

}  // namespace krlab
