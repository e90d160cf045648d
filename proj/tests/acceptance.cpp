// Acceptance checks: one PASS/FAIL line per criterion, each with its time
// limit. Exit status is nonzero if any required criterion fails. The last
// criterion is best-effort and only reported.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "generators.hpp"
#include "oracle.hpp"
#include "treespread/treespread.hpp"

using namespace treespread;
namespace frozen = oracle::frozen;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::string fmt(double v) { return io::format_double(v); }

DiseaseProfile dominant_profile(int k, int i) {
  const double total = 2.0 * i + (k - i) + 2.0;
  std::vector<double> m;
  for (int j = 0; j < k; ++j) m.push_back((j < i ? 2.0 : 1.0) / total);
  m.push_back(2.0 / total);
  return DiseaseProfile::from_masses(std::move(m), i);
}

Outcome binary_closed_form() {
  Outcome o;
  for (int k = 2; k <= 6; ++k) {
    const auto t =
        iterate_full(OffspringDistribution::zary(2), DiseaseProfile::uniform(k, 1.0 / (k + 1)));
    o.require(t.stop_reason == StopReason::converged && t.iterations <= 100000,
              "k=" + std::to_string(k) + " did not converge");
    const double target = 1.0 / (2 * k - 1);
    for (int i = 0; i < k; ++i)
      o.require(
          std::abs(t.final_state()[i] - target) <= 1e-9,
          "k=" + std::to_string(k) + " p_" + std::to_string(i + 1) + "=" + fmt(t.final_state()[i]));
  }
  return o;
}

Outcome single_dominant() {
  Outcome o;
  const auto p = DiseaseProfile::from_masses({0.5, 0.2, 0.3});
  for (const auto& dist : {OffspringDistribution::zary(2), make_offspring(oracle::three_atom_law())}) {
    const auto t = iterate_full(dist, p);
    o.require(t.final_state()[0] >= 1.0 - 1e-6, "p_1 ended at " + fmt(t.final_state()[0]));
  }
  return o;
}

Outcome framing() {
  Outcome o;
  for (int z = 2; z <= 12; ++z)
    for (int k = 2; k <= 100; ++k) {
      const auto [lo, hi] = framing_bounds(z, k);
      const double x = find_fixed_point(ScalarMap::zary(z, k)).x_bar;
      const std::string at = "(z,k)=(" + std::to_string(z) + "," + std::to_string(k) + ")";
      o.require(lo < x && x < hi, "framing fails at " + at);
      o.require(std::abs(z * std::pow(1.0 - k * lo, z - 1) - 1.0) <= 1e-12,
                "identity fails at " + at);
    }
  return o;
}

Outcome classification() {
  Outcome o;
  for (int k = 2; k <= 50; ++k) {
    for (int z : {3, 4, 5}) {
      const auto r = classify_uniform(z, k);
      o.require(r.classification == Stability::attracting && std::abs(r.multiplier) < 1.0,
                "z=" + std::to_string(z) + " k=" + std::to_string(k) + " multiplier " +
                    fmt(r.multiplier));
    }
    const auto r6 = classify_uniform(6, k);
    o.require(r6.classification == Stability::repelling && r6.multiplier < -1.0,
              "z=6 k=" + std::to_string(k) + " multiplier " + fmt(r6.multiplier));
  }
  for (int z = 2; z <= 5; ++z)
    o.require(std::abs(asymptotic_multiplier(z)) < 1.0, "asymptotic z=" + std::to_string(z));
  for (int z = 6; z <= 12; ++z)
    o.require(asymptotic_multiplier(z) < -1.0, "asymptotic z=" + std::to_string(z));
  return o;
}

Outcome period_two() {
  Outcome o;
  const auto map = ScalarMap::zary(6, 2);
  const auto orbit = find_orbit(map, 2);
  if (!orbit || orbit->points.size() != 2) {
    o.require(false, "no period-2 orbit found");
    return o;
  }
  const double l = orbit->points[0], r = orbit->points[1];
  const double x_bar = find_fixed_point(map).x_bar;
  const double x_hat = critical_points(6, 2).x_hat;
  const double x_hat_r = max_preimage_right(map, x_hat);
  const auto oracle_l = static_cast<double>(oracle::zary_f2_root(6, 2, x_hat, x_bar - 1e-3));
  const auto oracle_r = static_cast<double>(oracle::zary_f2_root(6, 2, x_bar + 1e-3, x_hat_r));
  o.require(std::abs(l - oracle_l) <= 1e-12 && std::abs(r - oracle_r) <= 1e-12,
            "orbit differs from the bisection oracle");
  o.require(std::abs(l - frozen::orbit_left_6_2) <= 1e-12 &&
                std::abs(r - frozen::orbit_right_6_2) <= 1e-12,
            "orbit differs from the pinned values");
  o.require(x_hat < l && l < x_bar && x_bar < r && r < x_hat_r, "orbit bracketing fails");
  o.require(
      std::abs(scalar_eval(map, l) - r) <= 1e-10 && std::abs(scalar_eval(map, r) - l) <= 1e-10,
      "f does not swap the orbit points");
  o.require(orbit->multiplier >= 0.0 && orbit->multiplier < 1.0,
            "multiplier " + fmt(orbit->multiplier));
  const auto c = check_orbit_conditions(6, 2);
  o.require(c.repelling_fixed_point && c.second_iterate_above_max && c.endpoint_below_max,
            "orbit conditions not all true");
  return o;
}

Outcome basin() {
  Outcome o;
  const auto map = ScalarMap::zary(6, 2);
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  std::vector<double> starts(10000);
  for (auto& s : starts) {
    do s = u(rng);
    while (s == 0.0);
  }
  const auto r = basin_classify(map, starts);
  const double frac = r.fraction(BasinVerdict::orbit_left) + r.fraction(BasinVerdict::orbit_right);
  o.require(frac >= 0.999, "orbit fraction " + fmt(frac));
  const std::vector<double> fixed{find_fixed_point(map).x_bar};
  o.require(basin_classify(map, fixed).entries[0].verdict == BasinVerdict::fixed_point,
            "start at the fixed point did not stay");
  return o;
}

Outcome nonuniform() {
  Outcome o;
  const int k = 6;
  for (int z : {3, 4, 5})
    for (int i : {2, 3}) {
      const std::string at = "(z,i)=(" + std::to_string(z) + "," + std::to_string(i) + ")";
      for (double e : nonuniform_spectrum(z, k, i))
        o.require(std::abs(e) < 1.0, "eigenvalue " + fmt(e) + " at " + at);
      const double x = find_fixed_point(ScalarMap::zary(z, i)).x_bar;
      const auto t = iterate_full(OffspringDistribution::zary(z), dominant_profile(k, i));
      o.require(t.stop_reason == StopReason::converged, "no convergence at " + at);
      const auto& s = t.final_state();
      for (int j = 0; j < k; ++j)
        o.require(std::abs(s[j] - (j < i ? x : 0.0)) <= 1e-8, "coordinate off at " + at);
      o.require(std::abs(s[k] - (1.0 - i * x)) <= 1e-8, "sane mass off at " + at);
    }
  return o;
}

double worst_z(const SimConfig& cfg) {
  const auto r = simulate_root(cfg);
  const auto a = analytic_root(cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(z_score(r.masses[i], a[i], r.standard_errors[i], r.trials)));
  return worst;
}

Outcome monte_carlo() {
  Outcome o;
  SimConfig cfg;
  cfg.dist = OffspringDistribution::zary(2);
  cfg.profile = DiseaseProfile::uniform(2, 1.0 / 3);
  cfg.seed = 7;

  cfg.height = 1;
  cfg.trials = 1000000;
  double z = worst_z(cfg);
  o.require(z <= 4.0, "height 1 max |z| " + fmt(z));

  cfg.height = 15;
  cfg.trials = 100000;
  z = worst_z(cfg);
  o.require(z <= 4.0, "height 15 max |z| " + fmt(z));

  cfg.dist = make_offspring(oracle::three_atom_law());
  cfg.height = 6;
  cfg.trials = 20000;
  z = worst_z(cfg);
  o.require(z <= 4.0, "three-atom law height 6 max |z| " + fmt(z));

  cfg.height = 11;
  bool refused = false;
  try {
    simulate_root(cfg);
  } catch (const BudgetExceeded&) {
    refused = true;
  }
  o.require(refused, "budget guard did not refuse height 11");
  return o;
}

Outcome variant() {
  Outcome o;
  const auto bin = OffspringDistribution::zary(2);
  const auto fixed = step_variant(bin, DiseaseProfile::from_masses({0.25, 0.25, 0.5}), 0.75);
  o.require(std::abs(fixed[0] - 0.25) <= 1e-12 && std::abs(fixed[1] - 0.25) <= 1e-12 &&
                std::abs(fixed[2] - 0.5) <= 1e-12,
            "alpha=0.75 profile is not fixed");

  const auto half = iterate_variant(bin, DiseaseProfile::from_masses({0.5, 0.2, 0.3}), 0.5);
  const auto& s = half.final_state();
  o.require(std::abs(s[0] - 0.3) <= 1e-8 && std::abs(s[1]) <= 1e-8 && std::abs(s[2] - 0.7) <= 1e-8,
            "alpha=0.5 limit (" + fmt(s[0]) + "," + fmt(s[1]) + "," + fmt(s[2]) + ")");

  const auto fig = make_offspring(oracle::three_atom_law());
  for (const auto& [dist, alpha] : {std::pair{bin, 0.75}, std::pair{fig, 0.3}}) {
    o.require(alpha > 1.0 / dist.mean(), "alpha below the threshold");
    const auto t = iterate_variant(dist, DiseaseProfile::from_masses({0.5, 0.2, 0.3}), alpha);
    o.require(t.final_state()[0] >= 1.0 - 1e-6, "p_1 ended at " + fmt(t.final_state()[0]));
  }
  return o;
}

Outcome ratio_invariant() {
  Outcome o;
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> kdraw(2, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto dist = make_offspring(gen::random_law(rng));
    const int k = kdraw(rng);
    IterateOptions opts;
    opts.max_iters = 5000;
    const auto t =
        iterate_full(dist, DiseaseProfile::from_masses(gen::random_profile(rng, k)), opts);
    for (std::size_t n = 0; n + 1 < t.states.size(); ++n)
      for (int j = 1; j < k; ++j) {
        const auto& a = t.states[n];
        const auto& b = t.states[n + 1];
        o.require(b[j] / b[0] <= a[j] / a[0] + 1e-12,
                  "ratio increased in trajectory " + std::to_string(trial));
      }
  }
  return o;
}

Outcome period_four() {
  Outcome o;
  const auto orbit = find_orbit(ScalarMap::zary(12, 2), 4);
  o.require(orbit.has_value(), "no 4-cycle located");
  if (orbit) {
    o.require(orbit->stable, "4-cycle multiplier " + fmt(orbit->multiplier));
    for (int j = 0; j < 4 && j < static_cast<int>(orbit->points.size()); ++j)
      o.require(std::abs(orbit->points[j] - frozen::cycle4_12_2[j]) <= 1e-10,
                "4-cycle differs from the pinned values");
  }
  o.require(!check_orbit_conditions(12, 2).second_iterate_above_max, "condition 2 holds at (12,2)");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  bool best_effort;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "binary-tree closed form", 1, false, binary_closed_form},
      {2, "single dominant disease", 1, false, single_dominant},
      {3, "framing bounds", 10, false, framing},
      {4, "classification matrix", 10, false, classification},
      {5, "period-2 orbit at (6,2)", 1, false, period_two},
      {6, "basin sweep", 30, false, basin},
      {7, "non-uniform spectrum", 5, false, nonuniform},
      {8, "Monte Carlo vs recursion", 60, false, monte_carlo},
      {9, "variant closed forms", 2, false, variant},
      {10, "monotone ratio invariant", 5, false, ratio_invariant},
      {11, "period-4 observation", 5, true, period_four},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.ok && secs >= c.limit_seconds) {
      o.ok = false;
      o.detail = "took " + fmt(secs) + " s, limit " + fmt(c.limit_seconds) + " s";
    }
    std::printf("%s %2d %s (%.2f s)%s%s%s\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs,
                c.best_effort ? " [best-effort]" : "", o.ok ? "" : ": ", o.detail.c_str());
    if (!o.ok && !c.best_effort) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
