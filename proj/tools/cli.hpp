#pragma once

// Command-line front end. Kept in a header so the test suite can drive
// run_cli() in-process.

#include <CLI11.hpp>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "treespread/treespread.hpp"

namespace treespread::cli {

enum ExitCode : int {
  kSuccess = 0,
  kConfigError = 1,
  kBudgetOrMismatch = 2,
  kNotFound = 3,
};

struct RunConfig {
  std::string subcommand;
  std::string config_path;
  std::string offspring = "zary:2";
  std::optional<int> k;
  std::optional<std::string> profile;
  std::optional<double> alpha;
  int height = 1;
  std::uint64_t trials = 10000;
  std::uint64_t seed = 0;
  double tol = 1e-10;
  std::size_t max_iters = 100000;
  std::size_t keep_last = 0;
  std::string format = "csv";
  std::string output;
  int period = 2;
  std::optional<int> dominant;
  std::size_t starts = 10000;
  std::size_t grid = 0;
  double budget = 1e8;
  double z_threshold = 4.0;
};

namespace detail {

inline std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw InvalidArgument("cannot parse '" + item + "' as a number");
    }
    if (used != item.size()) throw InvalidArgument("cannot parse '" + item + "' as a number");
    out.push_back(v);
  }
  return out;
}

inline int parse_positive_int(const std::string& text, const char* what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || v < 1)
    throw InvalidArgument(std::string(what) + " must be a positive integer, got '" + text + "'");
  return v;
}

}  // namespace detail

// "uniform:K" gives every disease mass 1/(K+1); "uniform:K:X" gives each mass
// X. "dominant:I" weights the first I diseases 2, the rest 1 and the sane
// mass 2, then normalizes. Anything else is a comma-separated list of k + 1
// masses.
inline DiseaseProfile parse_profile(const std::string& text, int k) {
  if (k < 1) throw InvalidArgument("k must be at least 1");
  if (text.starts_with("uniform:")) {
    const std::string rest = text.substr(8);
    const auto colon = rest.find(':');
    const int count = detail::parse_positive_int(rest.substr(0, colon), "uniform count");
    if (count != k)
      throw InvalidArgument("uniform:" + std::to_string(count) +
                            " does not match k = " + std::to_string(k));
    double x = 1.0 / (k + 1);
    if (colon != std::string::npos) {
      const auto values = detail::parse_number_list(rest.substr(colon + 1));
      if (values.size() != 1) throw InvalidArgument("uniform:K:X takes a single mass X");
      x = values[0];
    }
    if (!(x > 0.0) || !(k * x < 1.0))
      throw InvalidArgument("uniform disease mass must lie in (0, 1/k)");
    return DiseaseProfile::uniform(k, x);
  }
  if (text.starts_with("dominant:")) {
    const int i = detail::parse_positive_int(text.substr(9), "dominant count");
    if (i > k) throw InvalidArgument("dominant count exceeds k");
    const double total = 2.0 * i + (k - i) + 2.0;
    std::vector<double> m;
    for (int j = 0; j < k; ++j) m.push_back((j < i ? 2.0 : 1.0) / total);
    m.push_back(2.0 / total);
    return DiseaseProfile::from_masses(std::move(m), i);
  }
  auto masses = detail::parse_number_list(text);
  if (masses.size() != static_cast<std::size_t>(k) + 1)
    throw InvalidArgument("profile has " + std::to_string(masses.size()) +
                          " entries, expected k + 1 = " + std::to_string(k + 1));
  return DiseaseProfile::from_masses(std::move(masses));
}

// Pulls fields from a --config JSON object; explicit flags override later.
inline void apply_json_config(RunConfig& cfg, const nlohmann::json& j, const CLI::App& sub) {
  if (!j.is_object()) throw InvalidArgument("--config must contain a JSON object");
  auto given = [&](const char* flag) { return sub.count(flag) > 0; };
  auto take = [&](const char* key, const char* flag, auto& field) {
    if (j.contains(key) && !given(flag)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  if (j.contains("offspring") && !given("--offspring"))
    cfg.offspring = j.at("offspring").is_string() ? j.at("offspring").get<std::string>()
                                                  : j.at("offspring").dump();
  if (j.contains("k") && !given("--k")) cfg.k = j.at("k").get<int>();
  if (j.contains("profile") && !given("--profile")) {
    const auto& p = j.at("profile");
    if (p.is_array()) {
      std::string joined;
      for (const auto& v : p)
        joined += (joined.empty() ? "" : ",") + io::format_double(v.get<double>());
      cfg.profile = joined;
    } else {
      cfg.profile = p.get<std::string>();
    }
  }
  if (j.contains("alpha") && !given("--alpha")) cfg.alpha = j.at("alpha").get<double>();
  if (j.contains("i") && !given("--i")) cfg.dominant = j.at("i").get<int>();
  take("height", "--height", cfg.height);
  take("trials", "--trials", cfg.trials);
  take("seed", "--seed", cfg.seed);
  take("tol", "--tol", cfg.tol);
  take("max_iters", "--max-iters", cfg.max_iters);
  take("keep_last", "--keep-last", cfg.keep_last);
  take("format", "--format", cfg.format);
  take("output", "--output", cfg.output);
  take("period", "--period", cfg.period);
  take("starts", "--starts", cfg.starts);
  take("grid", "--grid", cfg.grid);
  take("budget", "--budget", cfg.budget);
  take("z_threshold", "--z-threshold", cfg.z_threshold);
}

// Everything a run depends on, validated.
struct Resolved {
  OffspringDistribution dist;
  int k;
  DiseaseProfile profile;
  nlohmann::json config;
};

inline Resolved resolve(const RunConfig& cfg) {
  auto dist = parse_offspring(cfg.offspring);
  int k = 0;
  if (cfg.k) {
    k = *cfg.k;
  } else if (cfg.profile && cfg.profile->find(':') == std::string::npos) {
    k = static_cast<int>(detail::parse_number_list(*cfg.profile).size()) - 1;
  } else {
    throw InvalidArgument("--k is required");
  }
  if (k < 1) throw InvalidArgument("k must be at least 1 (got " + std::to_string(k) + ")");
  auto profile = parse_profile(cfg.profile.value_or("uniform:" + std::to_string(k)), k);
  if (cfg.alpha && !(*cfg.alpha > 0.0 && *cfg.alpha <= 1.0))
    throw InvalidArgument("alpha must lie in (0, 1]");
  if (!(cfg.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (cfg.format != "csv" && cfg.format != "json")
    throw InvalidArgument("format must be csv or json");

  nlohmann::json c{{"command", cfg.subcommand},
                   {"offspring", to_json(dist)},
                   {"k", k},
                   {"profile", profile.vector()},
                   {"alpha", cfg.alpha ? nlohmann::json(*cfg.alpha) : nlohmann::json()},
                   {"tol", cfg.tol},
                   {"max_iters", cfg.max_iters},
                   {"format", cfg.format}};
  if (cfg.subcommand == "simulate") {
    c["height"] = cfg.height;
    c["trials"] = cfg.trials;
    c["seed"] = cfg.seed;
    c["budget"] = cfg.budget;
    c["z_threshold"] = cfg.z_threshold;
  }
  if (cfg.subcommand == "orbit" || cfg.subcommand == "basin") c["period"] = cfg.period;
  if (cfg.subcommand == "basin") {
    c["starts"] = cfg.grid ? cfg.grid : cfg.starts;
    c["sampling"] = cfg.grid ? "grid" : "random";
    c["seed"] = cfg.seed;
  }
  if (cfg.subcommand == "analyze") c["i"] = cfg.dominant.value_or(k);
  return {std::move(dist), k, std::move(profile), std::move(c)};
}

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw InvalidArgument("cannot open output file '" + path + "'");
    }
    os_ = path.empty() ? &fallback : &file_;
  }
  std::ostream& stream() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

inline ScalarMap scalar_map_for(const Resolved& r, const RunConfig& cfg) {
  return ScalarMap::gw(r.dist, r.k, cfg.alpha);
}

inline int cmd_iterate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto r = resolve(cfg);
  IterateOptions opts{cfg.max_iters, cfg.tol, cfg.keep_last};
  const Trajectory t = cfg.alpha ? iterate_variant(r.dist, r.profile, *cfg.alpha, opts)
                                 : iterate_full(r.dist, r.profile, opts);
  Output o(cfg.output, out);
  if (cfg.format == "json")
    o.stream() << to_json(t, r.config).dump(2) << '\n';
  else
    write_trajectory_csv(o.stream(), t, r.config);
  err << "stop_reason=" << to_string(t.stop_reason) << " iterations=" << t.iterations << '\n';
  return t.stop_reason == StopReason::max_iters ? kBudgetOrMismatch : kSuccess;
}

// Sign changes of the fixed-point equation over a uniform grid of (0, 1/k].
inline std::size_t count_fixed_point_roots(const ScalarMap& map, std::size_t cells = 10000) {
  std::size_t roots = 0;
  double prev = fixed_point_equation(map, 0.0);
  for (std::size_t c = 1; c <= cells; ++c) {
    const double h = fixed_point_equation(map, map.upper() * static_cast<double>(c) / cells);
    if (h == 0.0 || (h > 0.0) != (prev > 0.0)) ++roots;
    prev = h == 0.0 ? -prev : h;
  }
  return roots;
}

inline int cmd_analyze(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const auto r = resolve(cfg);
  if (cfg.alpha) throw InvalidArgument("analyze covers the standard rule; drop --alpha");
  const auto map = scalar_map_for(r, cfg);
  const int i = cfg.dominant.value_or(r.k);
  if (i < 1 || i > r.k) throw InvalidArgument("--i must satisfy 1 <= i <= k");

  nlohmann::json report{{"config", r.config}};
  report["fixed_point"] = to_json(find_fixed_point(map));
  report["fixed_point_roots"] = count_fixed_point_roots(map);
  report["mean_offspring"] = r.dist.mean();
  if (map.z()) {
    const int z = *map.z();
    report["z"] = z;
    report["critical_points"] = to_json(critical_points(z, r.k));
    if (r.k >= 2) {
      auto [lo, hi] = framing_bounds(z, r.k);
      report["framing_bounds"] = {lo, hi};
    }
    report["asymptotic_multiplier"] = asymptotic_multiplier(z);
    report["nonuniform_spectrum"] = {{"i", i}, {"eigenvalues", nonuniform_spectrum(z, r.k, i)}};
    if (z >= 3) report["orbit_conditions"] = to_json(check_orbit_conditions(z, i));
  }
  Output o(cfg.output, out);
  o.stream() << report.dump(2) << '\n';
  return kSuccess;
}

inline int cmd_orbit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto r = resolve(cfg);
  const auto map = scalar_map_for(r, cfg);
  const auto orbit = find_orbit(map, cfg.period);
  nlohmann::json report{{"config", r.config}};
  report["orbit"] = orbit ? to_json(*orbit) : nlohmann::json();
  Output o(cfg.output, out);
  o.stream() << report.dump(2) << '\n';
  if (!orbit) {
    err << "no orbit of period " << cfg.period << " found\n";
    return kNotFound;
  }
  return kSuccess;
}

inline int cmd_basin(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const auto r = resolve(cfg);
  const auto map = scalar_map_for(r, cfg);
  std::vector<double> starts;
  if (cfg.grid) {
    for (std::size_t j = 1; j <= cfg.grid; ++j)
      starts.push_back(map.upper() * static_cast<double>(j) / static_cast<double>(cfg.grid));
  } else {
    auto rng = SplitMix64::for_stream(cfg.seed, 0);
    for (std::size_t j = 0; j < cfg.starts; ++j)
      starts.push_back(map.upper() * (1.0 - rng.uniform()));
  }
  BasinOptions opts;
  opts.max_iters = cfg.max_iters;
  const auto report = basin_classify(map, starts, opts);
  if (!cfg.output.empty()) {
    Output o(cfg.output, out);
    write_basin_csv(o.stream(), report, r.config);
  }
  auto summary = basin_summary_json(report);
  summary["config"] = r.config;
  out << summary.dump(2) << '\n';
  return kSuccess;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto r = resolve(cfg);
  SimConfig sc;
  sc.dist = r.dist;
  sc.profile = r.profile;
  sc.height = cfg.height;
  sc.trials = cfg.trials;
  sc.seed = cfg.seed;
  sc.node_budget = cfg.budget;
  if (cfg.alpha) sc.rule = PropagationRule::variant(*cfg.alpha);
  const auto result = simulate_root(sc);
  const auto analytic = analytic_root(sc);

  Output o(cfg.output, out);
  double worst = 0.0;
  if (cfg.format == "json") {
    auto j = to_json(result, r.config);
    std::vector<double> z;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      z.push_back(z_score(result.masses[i], analytic[i], result.standard_errors[i], result.trials));
      worst = std::max(worst, std::abs(z.back()));
    }
    j["analytic"] = analytic;
    j["z_scores"] = z;
    o.stream() << j.dump(2) << '\n';
  } else {
    worst = write_comparison_csv(o.stream(), result, analytic, r.config);
  }
  err << "max |z| = " << worst << '\n';
  return worst > cfg.z_threshold ? kBudgetOrMismatch : kSuccess;
}

inline void add_common_options(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--config", cfg.config_path, "JSON file with any of the options below");
  sub->add_option("--offspring", cfg.offspring, "zary:Z or {\"masses\": [[z, q], ...]}");
  sub->add_option("--k", cfg.k, "number of diseases");
  sub->add_option("--profile", cfg.profile, "uniform:K[:X], dominant:I or p_1,...,p_{k+1}");
  sub->add_option("--alpha", cfg.alpha, "retention probability for the variant rule");
  sub->add_option("--tol", cfg.tol, "convergence tolerance");
  sub->add_option("--max-iters", cfg.max_iters, "iteration cap");
  sub->add_option("--format", cfg.format, "csv or json");
  sub->add_option("--output,-o", cfg.output, "output file (stdout if omitted)");
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Competing infections on Galton-Watson and z-ary trees", "treespread"};
  app.require_subcommand(1);

  auto* iterate_cmd = app.add_subcommand("iterate", "iterate the root-law recursion");
  auto* analyze_cmd = app.add_subcommand("analyze", "fixed point, critical points and spectra");
  auto* orbit_cmd = app.add_subcommand("orbit", "locate a periodic orbit of the uniform map");
  auto* basin_cmd = app.add_subcommand("basin", "classify starts by their period-2 limit");
  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo check against the recursion");
  for (auto* s : {iterate_cmd, analyze_cmd, orbit_cmd, basin_cmd, simulate_cmd})
    add_common_options(s, cfg);
  iterate_cmd->add_option("--keep-last", cfg.keep_last, "keep only the last N states");
  analyze_cmd->add_option("--i", cfg.dominant, "dominant count for spectrum and orbit conditions");
  orbit_cmd->add_option("--period", cfg.period, "orbit period (2 or 4)");
  basin_cmd->add_option("--starts", cfg.starts, "number of uniform random starts");
  basin_cmd->add_option("--grid", cfg.grid, "use N evenly spaced starts instead");
  basin_cmd->add_option("--seed", cfg.seed, "seed for random starts");
  simulate_cmd->add_option("--height", cfg.height, "tree height");
  simulate_cmd->add_option("--trials", cfg.trials, "number of sampled trees");
  simulate_cmd->add_option("--seed", cfg.seed, "master seed");
  simulate_cmd->add_option("--budget", cfg.budget, "max expected leaves per trial");
  simulate_cmd->add_option("--z-threshold", cfg.z_threshold, "largest acceptable |z-score|");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  CLI::App* sub = app.get_subcommands().front();
  cfg.subcommand = sub->get_name();
  try {
    if (sub->count("--config")) {
      const auto& path = cfg.config_path;
      std::ifstream in(path);
      if (!in) throw InvalidArgument("cannot read config file '" + path + "'");
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("bad config JSON: ") + e.what());
      }
      apply_json_config(cfg, j, *sub);
    }
    if (cfg.subcommand == "iterate") return cmd_iterate(cfg, out, err);
    if (cfg.subcommand == "analyze") return cmd_analyze(cfg, out, err);
    if (cfg.subcommand == "orbit") return cmd_orbit(cfg, out, err);
    if (cfg.subcommand == "basin") return cmd_basin(cfg, out, err);
    return cmd_simulate(cfg, out, err);
  } catch (const BudgetExceeded& e) {
    err << "error: " << e.what() << '\n';
    return kBudgetOrMismatch;
  } catch (const nlohmann::json::exception& e) {
    err << "error: bad config value: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

}  // namespace treespread::cli
