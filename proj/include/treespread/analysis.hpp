#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "treespread/dynamics.hpp"
#include "treespread/error.hpp"
#include "treespread/io.hpp"
#include "treespread/parallel.hpp"

namespace treespread {

// Multipliers within this distance of the unit circle are not classified.
inline constexpr double kHyperbolicityMargin = 1e-9;

enum class Stability { attracting, repelling, indeterminate };

inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::attracting:
      return "attracting";
    case Stability::repelling:
      return "repelling";
    case Stability::indeterminate:
      return "indeterminate";
  }
  return "?";
}

inline Stability classify_multiplier(double m) {
  if (std::abs(m) < 1.0 - kHyperbolicityMargin) return Stability::attracting;
  if (std::abs(m) > 1.0 + kHyperbolicityMargin) return Stability::repelling;
  return Stability::indeterminate;
}

struct FixedPointReport {
  double x_bar = 0.0;
  double multiplier = 0.0;
  Stability classification = Stability::indeterminate;
  // Closed-form brackets, present for z-ary maps with k >= 2.
  std::optional<double> lower_bound;
  std::optional<double> upper_bound;
  double residual = 0.0;
};

struct CriticalPointReport {
  double x_hat = 0.0;
  // Inflection point; absent for z = 2 where f is a concave quadratic.
  std::optional<double> x_star;
  double f_at_x_hat = 0.0;
};

struct OrbitReport {
  int period = 0;
  std::vector<double> points;  // ascending
  double multiplier = 0.0;     // derivative of f^period along the cycle
  bool stable = false;
  double residual = 0.0;  // max |f(y_j) - y_{j+1}| around the cycle
};

struct OrbitConditions {
  bool repelling_fixed_point = false;     // f'(x_bar) < -1
  bool second_iterate_above_max = false;  // f(f(x_hat)) > x_hat
  bool endpoint_below_max = false;        // f(1/i) < x_hat
};

namespace detail {

template <typename F>
double bisect(F&& g, double lo, double hi, int max_iter = 200) {
  double glo = g(lo);
  for (int it = 0; it < max_iter; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double gm = g(mid);
    if (gm == 0.0) return mid;
    if ((gm > 0.0) == (glo > 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline void require_standard(const ScalarMap& map, const char* what) {
  if (map.variant_alpha() && *map.variant_alpha() != 1.0)
    throw InvalidArgument(std::string(what) + " applies to the standard rule only");
}

inline int require_zary(const ScalarMap& map, const char* what) {
  require_standard(map, what);
  if (!map.z()) throw InvalidArgument(std::string(what) + " needs a deterministic z-ary law");
  return *map.z();
}

inline double iterate_map(const ScalarMap& map, double x, int times) {
  for (int i = 0; i < times; ++i) x = scalar_eval(map, x);
  return x;
}

}  // namespace detail

/// Fixed-point equation divided through by x:
///   h(x) = sum_z q_z sum_{j<z} (1-(k-1)x)^(z-1-j) (1-kx)^j - 1,
/// strictly decreasing on (0, 1/k], positive near 0.
inline double fixed_point_equation(const ScalarMap& map, double x) {
  const double a = 1.0 - (map.k() - 1) * x;
  const double b = std::max(0.0, 1.0 - map.k() * x);
  double total = 0.0;
  for (const auto& atom : map.offspring().atoms()) {
    double sum = 0.0, bpow = 1.0;
    for (int j = 0; j < atom.children; ++j) {
      sum += std::pow(a, atom.children - 1 - j) * bpow;
      bpow *= b;
    }
    total += atom.mass * sum;
  }
  return total - 1.0;
}

inline std::pair<double, double> framing_bounds(int z, int k) {
  if (z < 2) throw InvalidArgument("framing bounds need z >= 2");
  if (k < 2) throw InvalidArgument("framing bounds need k >= 2");
  const double c = 1.0 - std::pow(1.0 / z, 1.0 / (z - 1));
  return {c / k, c / (k - 1)};
}

/// Unique fixed point of the uniform scalar map, by bisection on the monotone
/// form h. Multiplier and classification come from the analytic derivative.
inline FixedPointReport find_fixed_point(const ScalarMap& map) {
  detail::require_standard(map, "find_fixed_point");
  const double hi = map.upper();
  auto h = [&](double x) { return fixed_point_equation(map, x); };
  if (!(h(0.0) > 0.0)) throw InternalError("fixed-point equation is not positive at 0");

  FixedPointReport r;
  if (h(hi) >= 0.0) {
    r.x_bar = hi;
  } else {
    r.x_bar = detail::bisect(h, 0.0, hi);
  }
  r.multiplier = scalar_deriv(map, r.x_bar, 1);
  r.classification = classify_multiplier(r.multiplier);
  r.residual = std::abs(scalar_eval(map, r.x_bar) - r.x_bar);
  if (map.z() && map.k() >= 2) {
    auto [lo, up] = framing_bounds(*map.z(), map.k());
    r.lower_bound = lo;
    r.upper_bound = up;
  }
  return r;
}

// Closed forms for the maximum x_hat and the inflection point x_star of
// (1-(k-1)x)^z - (1-kx)^z on (0, 1/k].
inline CriticalPointReport critical_points(int z, int k) {
  if (z < 2) throw InvalidArgument("critical points need z >= 2");
  if (k < 1) throw InvalidArgument("k must be at least 1");
  auto ratio = [&](double num_exp, double den_exp) {
    return (std::pow(k, num_exp) - std::pow(k - 1, num_exp)) /
           (std::pow(k, den_exp) - std::pow(k - 1, den_exp));
  };
  CriticalPointReport r;
  r.x_hat = ratio(1.0 / (z - 1), static_cast<double>(z) / (z - 1));
  if (z >= 3) r.x_star = ratio(2.0 / (z - 2), static_cast<double>(z) / (z - 2));
  r.f_at_x_hat = scalar_eval(ScalarMap::zary(z, k), r.x_hat);
  return r;
}

inline FixedPointReport classify_uniform(int z, int k) {
  return find_fixed_point(ScalarMap::zary(z, k));
}

// Large-k limit of the multiplier at the uniform fixed point.
inline double asymptotic_multiplier(int z) {
  if (z < 2) throw InvalidArgument("asymptotic multiplier needs z >= 2");
  const double e = 1.0 / (z - 1);
  return 1.0 - (z - 1) * std::pow(z, e) * (1.0 - std::pow(1.0 / z, e));
}

/// Spectrum of the truncated map's Jacobian at (x_bar_{z,i}, 0, ..., 0) when
/// i of the k diseases dominate: the uniform multiplier of f_{z,i}, then
/// z (1 - i x_bar)^(z-1) repeated k - i times.
inline std::vector<double> nonuniform_spectrum(int z, int k, int i) {
  if (i < 1 || i > k) throw InvalidArgument("dominant count must satisfy 1 <= i <= k");
  const double x = find_fixed_point(ScalarMap::zary(z, i)).x_bar;
  const double lead = -z * (i - 1) * std::pow(1.0 - (i - 1) * x, z - 1) +
                      z * i * std::pow(std::max(0.0, 1.0 - i * x), z - 1);
  const double minor = z * std::pow(std::max(0.0, 1.0 - i * x), z - 1);
  std::vector<double> spectrum{lead};
  spectrum.insert(spectrum.end(), static_cast<std::size_t>(k - i), minor);
  return spectrum;
}

// Largest x in (x_hat, 1/k] with f(x) = x_hat, or 1/k when f(1/k) >= x_hat.
inline double max_preimage_right(const ScalarMap& map, double x_hat) {
  const double fx = scalar_eval(map, map.upper());
  if (fx >= x_hat) return map.upper();
  return detail::bisect([&](double x) { return scalar_eval(map, x) - x_hat; }, x_hat, map.upper());
}

// The x in (0, x_hat) with f(x) = x_hat; f is increasing there.
inline double max_preimage_left(const ScalarMap& map, double x_hat) {
  return detail::bisect([&](double x) { return scalar_eval(map, x) - x_hat; }, 0.0, x_hat);
}

inline OrbitConditions check_orbit_conditions(int z, int i) {
  if (z < 3) throw InvalidArgument("orbit conditions need z >= 3");
  const auto map = ScalarMap::zary(z, i);
  const auto fp = find_fixed_point(map);
  const double x_hat = critical_points(z, i).x_hat;
  OrbitConditions c;
  c.repelling_fixed_point = fp.multiplier < -1.0;
  c.second_iterate_above_max = detail::iterate_map(map, x_hat, 2) > x_hat;
  c.endpoint_below_max = scalar_eval(map, map.upper()) < x_hat;
  return c;
}

struct OrbitSearchOptions {
  std::size_t grid_cells = 10000;
  // Roots this close to a lower-period point are discarded.
  double exclusion = 1e-8;
};

/// All distinct prime-period cycles that have a point in (x_hat, x_hat_r),
/// located by a sign scan of f^period(x) - x plus bisection. The cycle itself
/// may leave that window (the z = 12 four-cycle does).
inline std::vector<OrbitReport> find_orbits(const ScalarMap& map, int period,
                                            const OrbitSearchOptions& opts = {}) {
  const int z = detail::require_zary(map, "find_orbit");
  if (period < 2) throw InvalidArgument("orbit period must be at least 2");
  if (opts.grid_cells < 1) throw InvalidArgument("grid needs at least one cell");

  const double x_hat = critical_points(z, map.k()).x_hat;
  const double x_hat_r = max_preimage_right(map, x_hat);
  auto g = [&](double x) { return detail::iterate_map(map, x, period) - x; };

  std::vector<double> roots;
  const double width = (x_hat_r - x_hat) / static_cast<double>(opts.grid_cells);
  double a = x_hat, ga = g(a);
  for (std::size_t c = 1; c <= opts.grid_cells; ++c) {
    const double b = c == opts.grid_cells ? x_hat_r : x_hat + width * static_cast<double>(c);
    const double gb = g(b);
    if (ga == 0.0) {
      roots.push_back(a);
    } else if ((ga > 0.0) != (gb > 0.0) && gb != 0.0) {
      roots.push_back(detail::bisect(g, a, b));
    }
    a = b;
    ga = gb;
  }
  if (ga == 0.0) roots.push_back(a);

  std::vector<OrbitReport> orbits;
  for (double y : roots) {
    bool lower_period = false;
    for (int d = 1; d < period && !lower_period; ++d)
      if (period % d == 0 && std::abs(detail::iterate_map(map, y, d) - y) < opts.exclusion)
        lower_period = true;
    if (lower_period) continue;

    std::vector<double> cycle{y};
    for (int j = 1; j < period; ++j) cycle.push_back(scalar_eval(map, cycle.back()));
    OrbitReport r;
    r.period = period;
    r.multiplier = 1.0;
    for (std::size_t j = 0; j < cycle.size(); ++j) {
      r.multiplier *= scalar_deriv(map, cycle[j], 1);
      const double next = cycle[(j + 1) % cycle.size()];
      r.residual = std::max(r.residual, std::abs(scalar_eval(map, cycle[j]) - next));
    }
    r.stable = std::abs(r.multiplier) < 1.0;
    std::sort(cycle.begin(), cycle.end());
    r.points = std::move(cycle);

    const bool seen = std::any_of(orbits.begin(), orbits.end(), [&](const OrbitReport& o) {
      for (std::size_t j = 0; j < o.points.size(); ++j)
        if (std::abs(o.points[j] - r.points[j]) >= opts.exclusion) return false;
      return true;
    });
    if (!seen) orbits.push_back(std::move(r));
  }
  return orbits;
}

// The stable cycle if there is one, otherwise the first cycle found, otherwise
// nothing (a legitimate outcome, e.g. for an attracting fixed point).
inline std::optional<OrbitReport> find_orbit(const ScalarMap& map, int period,
                                             const OrbitSearchOptions& opts = {}) {
  auto orbits = find_orbits(map, period, opts);
  if (orbits.empty()) return std::nullopt;
  auto it = std::find_if(orbits.begin(), orbits.end(), [](const auto& o) { return o.stable; });
  return it != orbits.end() ? *it : orbits.front();
}

// ---------------------------------------------------------------------------
// Basins of attraction for the period-2 regime

enum class BasinVerdict { orbit_left, orbit_right, fixed_point, unresolved };

inline const char* to_string(BasinVerdict v) {
  switch (v) {
    case BasinVerdict::orbit_left:
      return "orbit_left";
    case BasinVerdict::orbit_right:
      return "orbit_right";
    case BasinVerdict::fixed_point:
      return "fixed_point";
    case BasinVerdict::unresolved:
      return "unresolved";
  }
  return "?";
}

struct BasinOptions {
  std::size_t max_iters = 100000;  // applications of f o f
  double tol = 1e-8;
  // Consecutive even steps the orbit must stay inside the tol-ball.
  std::size_t settle_steps = 10;
  unsigned workers = 0;
};

struct BasinEntry {
  double start = 0.0;
  BasinVerdict verdict = BasinVerdict::unresolved;
  std::size_t iterations = 0;
};

struct BasinReport {
  OrbitReport orbit;
  double x_bar = 0.0;
  double x_hat = 0.0;
  double x_hat_left = 0.0;   // pre-image of x_hat below it
  double x_hat_right = 0.0;  // largest pre-image of x_hat
  std::vector<BasinEntry> entries;
  std::array<double, 4> fractions{};

  double fraction(BasinVerdict v) const { return fractions[static_cast<std::size_t>(v)]; }
};

inline BasinVerdict classify_start(const ScalarMap& map, double start, double left, double right,
                                   double fixed, const BasinOptions& opts,
                                   std::size_t& iterations) {
  const std::array<std::pair<double, BasinVerdict>, 3> targets{{
      {left, BasinVerdict::orbit_left},
      {right, BasinVerdict::orbit_right},
      {fixed, BasinVerdict::fixed_point},
  }};
  double y = start;
  std::optional<BasinVerdict> current;
  std::size_t streak = 0;
  for (std::size_t n = 0; n <= opts.max_iters; ++n) {
    std::optional<BasinVerdict> near;
    for (const auto& [value, verdict] : targets)
      if (std::abs(y - value) < opts.tol) near = verdict;
    if (near && near == current) {
      ++streak;
    } else {
      current = near;
      streak = near ? 1 : 0;
    }
    if (current && streak >= opts.settle_steps) {
      iterations = n;
      return *current;
    }
    if (n < opts.max_iters) y = scalar_eval(map, scalar_eval(map, y));
  }
  iterations = opts.max_iters;
  return BasinVerdict::unresolved;
}

/// Classifies each start by where the even subsequence f^(2n)(x0) settles:
/// the left or right point of the attracting 2-cycle, or the fixed point.
inline BasinReport basin_classify(const ScalarMap& map, std::span<const double> starts,
                                  const BasinOptions& opts = {}) {
  const int z = detail::require_zary(map, "basin_classify");
  auto orbit = find_orbit(map, 2);
  if (!orbit || orbit->points.size() != 2)
    throw InvalidArgument("basin_classify needs a map with a period-2 orbit");
  for (double s : starts)
    if (!(s > 0.0) || s > map.upper() + kProbabilityTolerance)
      throw DomainError("basin start " + io::format_double(s) + " is outside (0, 1/k]");

  BasinReport r;
  r.orbit = *orbit;
  r.x_bar = find_fixed_point(map).x_bar;
  r.x_hat = critical_points(z, map.k()).x_hat;
  r.x_hat_left = max_preimage_left(map, r.x_hat);
  r.x_hat_right = max_preimage_right(map, r.x_hat);
  r.entries.resize(starts.size());

  const double left = orbit->points[0], right = orbit->points[1];
  parallel_blocks(
      starts.size(), worker_count(opts.workers), [&](std::size_t begin, std::size_t end, unsigned) {
        for (std::size_t s = begin; s < end; ++s) {
          auto& e = r.entries[s];
          e.start = std::min(starts[s], map.upper());
          e.verdict = classify_start(map, e.start, left, right, r.x_bar, opts, e.iterations);
        }
      });

  std::array<std::size_t, 4> counts{};
  for (const auto& e : r.entries) ++counts[static_cast<std::size_t>(e.verdict)];
  for (std::size_t v = 0; v < counts.size(); ++v)
    r.fractions[v] = starts.empty() ? 0.0 : static_cast<double>(counts[v]) / starts.size();
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const FixedPointReport& r) {
  nlohmann::json j{{"x_bar", r.x_bar},
                   {"multiplier", r.multiplier},
                   {"classification", to_string(r.classification)},
                   {"residual", r.residual}};
  if (r.lower_bound) j["lower_bound"] = *r.lower_bound;
  if (r.upper_bound) j["upper_bound"] = *r.upper_bound;
  return j;
}

inline nlohmann::json to_json(const CriticalPointReport& r) {
  nlohmann::json j{{"x_hat", r.x_hat}, {"f_at_x_hat", r.f_at_x_hat}};
  if (r.x_star) j["x_star"] = *r.x_star;
  return j;
}

inline nlohmann::json to_json(const OrbitReport& r) {
  return {{"period", r.period},
          {"points", r.points},
          {"multiplier", r.multiplier},
          {"stable", r.stable},
          {"residual", r.residual}};
}

inline nlohmann::json to_json(const OrbitConditions& c) {
  return {{"repelling_fixed_point", c.repelling_fixed_point},
          {"second_iterate_above_max", c.second_iterate_above_max},
          {"endpoint_below_max", c.endpoint_below_max},
          {"all", c.repelling_fixed_point && c.second_iterate_above_max && c.endpoint_below_max}};
}

inline nlohmann::json basin_summary_json(const BasinReport& r) {
  nlohmann::json fr;
  for (auto v : {BasinVerdict::orbit_left, BasinVerdict::orbit_right, BasinVerdict::fixed_point,
                 BasinVerdict::unresolved})
    fr[to_string(v)] = r.fraction(v);
  return {{"orbit", to_json(r.orbit)},
          {"x_bar", r.x_bar},
          {"x_hat", r.x_hat},
          {"x_hat_left", r.x_hat_left},
          {"x_hat_right", r.x_hat_right},
          {"starts", r.entries.size()},
          {"fractions", fr}};
}

// Columns start, verdict, iterations.
inline void write_basin_csv(std::ostream& os, const BasinReport& r,
                            const nlohmann::json& config = nullptr) {
  io::write_csv_config(os, config);
  os << "start,verdict,iterations\n";
  for (const auto& e : r.entries)
    os << io::format_double(e.start) << ',' << to_string(e.verdict) << ',' << e.iterations << '\n';
}

}  // namespace treespread
