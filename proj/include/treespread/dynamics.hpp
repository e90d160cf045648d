#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "treespread/error.hpp"
#include "treespread/io.hpp"
#include "treespread/offspring.hpp"

namespace treespread {

// Law of a node's state: masses[0..k-1] are the k diseases in non-increasing
// order, masses[k] is the sane mass. The leading dominant_count() disease
// masses are exactly equal and strictly larger than the rest.
class DiseaseProfile {
 public:
  // User-facing construction: every entry strictly positive.
  static DiseaseProfile from_masses(std::vector<double> masses,
                                    std::optional<int> declared_dominant = std::nullopt) {
    for (double m : masses)
      if (!(m > 0.0)) throw InvalidArgument("profile entries must be strictly positive");
    return build(std::move(masses), declared_dominant);
  }

  // Same checks but zero entries are allowed, e.g. (x, x, 0, 0, 1 - 2x).
  static DiseaseProfile boundary(std::vector<double> masses,
                                 std::optional<int> declared_dominant = std::nullopt) {
    for (double m : masses)
      if (!(m >= 0.0)) throw InvalidArgument("profile entries must be nonnegative");
    return build(std::move(masses), declared_dominant);
  }

  // (x, ..., x, 1 - kx).
  static DiseaseProfile uniform(int k, double x) {
    if (k < 1) throw InvalidArgument("k must be at least 1");
    std::vector<double> m(static_cast<std::size_t>(k) + 1, x);
    m.back() = 1.0 - k * x;
    return x > 0.0 && m.back() > 0.0 ? from_masses(std::move(m)) : boundary(std::move(m));
  }

  int k() const noexcept { return static_cast<int>(masses_.size()) - 1; }
  int dominant_count() const noexcept { return dominant_; }
  std::span<const double> masses() const noexcept { return masses_; }
  const std::vector<double>& vector() const noexcept { return masses_; }
  double operator[](std::size_t i) const { return masses_.at(i); }
  double sane() const noexcept { return masses_.back(); }

 private:
  static DiseaseProfile build(std::vector<double> masses, std::optional<int> declared) {
    if (masses.size() < 2)
      throw InvalidArgument("profile needs at least one disease mass and the sane mass");
    double total = 0.0;
    for (double m : masses) {
      if (!std::isfinite(m)) throw InvalidArgument("profile entries must be finite");
      total += m;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance)
      throw InvalidArgument("profile masses sum to " + io::format_double(total) + ", not 1");
    const std::size_t k = masses.size() - 1;
    for (std::size_t j = 1; j < k; ++j)
      if (masses[j] > masses[j - 1])
        throw InvalidArgument("disease masses must be non-increasing (relabel diseases)");
    int dominant = 1;
    while (static_cast<std::size_t>(dominant) < k && masses[dominant] == masses[0]) ++dominant;
    if (declared && *declared != dominant)
      throw InvalidArgument("declared dominant count " + std::to_string(*declared) +
                            " but the profile has " + std::to_string(dominant) +
                            " equal leading masses");
    DiseaseProfile p;
    p.masses_ = std::move(masses);
    p.dominant_ = dominant;
    return p;
  }

  std::vector<double> masses_;
  int dominant_ = 1;
};

namespace detail {

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
}

// Disease coordinate update shared by the standard (alpha = 1) and the
// retention variant: G(s + p) - G(s + (1 - alpha) p) + G((1 - alpha) p).
inline double disease_update(const OffspringDistribution& dist, double sane, double p,
                             double alpha) {
  if (alpha == 1.0) return pgf(dist, sane + p) - pgf(dist, sane);
  const double kept = (1.0 - alpha) * p;
  return pgf(dist, sane + p) - pgf(dist, sane + kept) + pgf(dist, kept);
}

inline std::vector<double> step_impl(const OffspringDistribution& dist, std::span<const double> p,
                                     double alpha) {
  if (p.size() < 2) throw InvalidArgument("state needs k >= 1 disease masses plus sane mass");
  const std::size_t k = p.size() - 1;
  const double sane = p[k];
  std::vector<double> next(p.size());
  double infected = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    next[i] = std::max(0.0, disease_update(dist, sane, p[i], alpha));
    infected += next[i];
  }
  next[k] = std::max(0.0, 1.0 - infected);
  return next;
}

inline DiseaseProfile rewrap(std::vector<double> next) {
  // The recursion preserves ordering; a violation here is a bug, not bad input.
  for (std::size_t j = 1; j + 1 < next.size(); ++j)
    if (next[j] > next[j - 1]) throw InternalError("recursion broke disease ordering");
  return DiseaseProfile::boundary(std::move(next));
}

}  // namespace detail

/// One generation of the root recursion: disease i gets G(sane + p_i) - G(sane),
/// the sane mass takes the remainder. Operates on raw state vectors of size k + 1.
inline std::vector<double> step_full(const OffspringDistribution& dist, std::span<const double> p) {
  return detail::step_impl(dist, p, 1.0);
}

inline DiseaseProfile step_full(const OffspringDistribution& dist, const DiseaseProfile& p) {
  return detail::rewrap(step_full(dist, p.masses()));
}

/// Recursion under the retention rule where a lone disease among sane
/// children survives with probability 1 - (1 - alpha)^(infected children).
inline std::vector<double> step_variant(const OffspringDistribution& dist,
                                        std::span<const double> p, double alpha) {
  detail::check_alpha(alpha);
  return detail::step_impl(dist, p, alpha);
}

inline DiseaseProfile step_variant(const OffspringDistribution& dist, const DiseaseProfile& p,
                                   double alpha) {
  return detail::rewrap(step_variant(dist, p.masses(), alpha));
}

// The uniform-case scalar map on (0, 1/k]:
//   f(x) = G(1 - (k-1)x) - G(1 - (k-1)x - alpha x) + G((1 - alpha) x),
// which for alpha = 1 is G(1 - (k-1)x) - G(1 - kx).
class ScalarMap {
 public:
  static ScalarMap gw(OffspringDistribution dist, int k,
                      std::optional<double> alpha = std::nullopt) {
    return ScalarMap(std::move(dist), k, alpha, std::nullopt);
  }

  static ScalarMap zary(int z, int k, std::optional<double> alpha = std::nullopt) {
    if (z < 2) throw InvalidArgument("z must be at least 2");
    return ScalarMap(OffspringDistribution::zary(z), k, alpha, z);
  }

  const OffspringDistribution& offspring() const noexcept { return dist_; }
  int k() const noexcept { return k_; }
  // Set when the offspring law is a deterministic z-ary tree.
  std::optional<int> z() const noexcept { return z_; }
  std::optional<double> variant_alpha() const noexcept { return alpha_; }
  double alpha() const noexcept { return alpha_.value_or(1.0); }
  double upper() const noexcept { return 1.0 / k_; }

 private:
  ScalarMap(OffspringDistribution dist, int k, std::optional<double> alpha, std::optional<int> z)
      : dist_(std::move(dist)), k_(k), alpha_(alpha), z_(z) {
    if (k < 1) throw InvalidArgument("k must be at least 1");
    if (alpha) detail::check_alpha(*alpha);
    if (!z_ && dist_.is_deterministic()) z_ = dist_.max_children();
  }

  OffspringDistribution dist_;
  int k_;
  std::optional<double> alpha_;
  std::optional<int> z_;
};

namespace detail {

inline double check_scalar_domain(const ScalarMap& map, double x) {
  if (!(x >= 0.0) || x > map.upper() + kProbabilityTolerance)
    throw DomainError("scalar map argument " + io::format_double(x) + " is outside (0, 1/" +
                      std::to_string(map.k()) + "]");
  return std::min(x, map.upper());
}

}  // namespace detail

inline double scalar_eval(const ScalarMap& map, double x) {
  x = detail::check_scalar_domain(map, x);
  const double a = map.alpha();
  const double outer = 1.0 - (map.k() - 1) * x;
  const auto& g = map.offspring();
  if (a == 1.0) return pgf(g, outer) - pgf(g, std::max(0.0, 1.0 - map.k() * x));
  return pgf(g, outer) - pgf(g, std::max(0.0, outer - a * x)) + pgf(g, (1.0 - a) * x);
}

inline double scalar_deriv(const ScalarMap& map, double x, int order) {
  if (order != 1 && order != 2) throw InvalidArgument("scalar_deriv order must be 1 or 2");
  x = detail::check_scalar_domain(map, x);
  const double a = map.alpha();
  const double km1 = map.k() - 1;
  const double outer = 1.0 - km1 * x;
  const double inner = std::max(0.0, a == 1.0 ? 1.0 - map.k() * x : outer - a * x);
  const double kept = (1.0 - a) * x;
  const auto& g = map.offspring();
  if (order == 1) {
    double d = -km1 * pgf_deriv(g, outer, 1) + (km1 + a) * pgf_deriv(g, inner, 1);
    if (a != 1.0) d += (1.0 - a) * pgf_deriv(g, kept, 1);
    return d;
  }
  double d = km1 * km1 * pgf_deriv(g, outer, 2) - (km1 + a) * (km1 + a) * pgf_deriv(g, inner, 2);
  if (a != 1.0) d += (1.0 - a) * (1.0 - a) * pgf_deriv(g, kept, 2);
  return d;
}

// ---------------------------------------------------------------------------
// Trajectories

enum class StopReason { converged, period2, max_iters };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::converged:
      return "converged";
    case StopReason::period2:
      return "period2";
    case StopReason::max_iters:
      return "max_iters";
  }
  return "?";
}

struct IterateOptions {
  std::size_t max_iters = 100000;
  double tol = 1e-10;
  // Keep only this many trailing states (0 keeps the whole orbit).
  std::size_t keep_last = 0;
};

struct Trajectory {
  // states[j] is the state after first_index + j steps.
  std::vector<std::vector<double>> states;
  std::size_t first_index = 0;
  StopReason stop_reason = StopReason::max_iters;
  std::size_t iterations = 0;

  const std::vector<double>& final_state() const { return states.back(); }
};

namespace detail {

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace detail

// Iterates `step` from `start`. Stops as converged once consecutive states are
// within tol, as period2 once states two apart are within tol while
// consecutive ones are not. The period-2 verdict also requires the two
// alternating states to be at least sqrt(tol) apart: a fixed point with a
// multiplier close to -1 otherwise trips the two-step test long before the
// one-step test.
template <typename StepFn>
Trajectory iterate(StepFn&& step, std::vector<double> start, const IterateOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  const double min_gap = std::sqrt(opts.tol);

  Trajectory t;
  t.states.push_back(std::move(start));
  auto record = [&](std::vector<double> s) {
    t.states.push_back(std::move(s));
    if (opts.keep_last && t.states.size() >= 2 * opts.keep_last + 2) {
      // Trim in blocks so the erase cost stays amortized.
      const std::size_t drop = t.states.size() - opts.keep_last;
      t.states.erase(t.states.begin(), t.states.begin() + static_cast<std::ptrdiff_t>(drop));
      t.first_index += drop;
    }
  };

  std::vector<double> prev, cur = t.states.back();
  for (std::size_t n = 0; n < opts.max_iters; ++n) {
    std::vector<double> next = step(std::span<const double>(cur));
    const double d1 = detail::sup_distance(next, cur);
    t.iterations = n + 1;
    if (d1 < opts.tol) {
      record(next);
      t.stop_reason = StopReason::converged;
      return t;
    }
    if (!prev.empty()) {
      const double d2 = detail::sup_distance(next, prev);
      const double gap = detail::sup_distance(cur, prev);
      if (d2 < opts.tol && gap >= opts.tol && gap >= min_gap) {
        record(next);
        t.stop_reason = StopReason::period2;
        return t;
      }
    }
    record(next);
    prev = std::move(cur);
    cur = std::move(next);
  }
  if (opts.keep_last && t.states.size() > opts.keep_last) {
    const std::size_t drop = t.states.size() - opts.keep_last;
    t.states.erase(t.states.begin(), t.states.begin() + static_cast<std::ptrdiff_t>(drop));
    t.first_index += drop;
  }
  t.stop_reason = StopReason::max_iters;
  return t;
}

inline Trajectory iterate_full(const OffspringDistribution& dist, const DiseaseProfile& start,
                               const IterateOptions& opts = {}) {
  return iterate([&](std::span<const double> p) { return step_full(dist, p); }, start.vector(),
                 opts);
}

inline Trajectory iterate_variant(const OffspringDistribution& dist, const DiseaseProfile& start,
                                  double alpha, const IterateOptions& opts = {}) {
  detail::check_alpha(alpha);
  return iterate([&](std::span<const double> p) { return step_variant(dist, p, alpha); },
                 start.vector(), opts);
}

inline Trajectory iterate_scalar(const ScalarMap& map, double x0, const IterateOptions& opts = {}) {
  detail::check_scalar_domain(map, x0);
  return iterate(
      [&](std::span<const double> x) { return std::vector<double>{scalar_eval(map, x[0])}; },
      std::vector<double>{x0}, opts);
}

// ---------------------------------------------------------------------------
// Export

// Columns n, p_1, ..., p_{k+1}. Scalar trajectories get the single column x.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& t,
                                 const nlohmann::json& config = nullptr) {
  io::write_csv_config(os, config);
  const std::size_t width = t.states.empty() ? 0 : t.states.front().size();
  std::vector<std::string> row{"n"};
  if (width == 1) {
    row.push_back("x");
  } else {
    for (std::size_t i = 1; i <= width; ++i) row.push_back("p_" + std::to_string(i));
  }
  io::write_csv_row(os, row);
  for (std::size_t j = 0; j < t.states.size(); ++j) {
    row.assign({std::to_string(t.first_index + j)});
    for (double v : t.states[j]) row.push_back(io::format_double(v));
    io::write_csv_row(os, row);
  }
}

inline nlohmann::json to_json(const Trajectory& t, const nlohmann::json& config = nullptr) {
  nlohmann::json j{
      {"stop_reason", to_string(t.stop_reason)},
      {"iterations", t.iterations},
      {"first_index", t.first_index},
      {"states", t.states},
      {"final_state", t.states.empty() ? nlohmann::json() : nlohmann::json(t.final_state())}};
  if (!config.is_null()) j["config"] = config;
  return j;
}

}  // namespace treespread
