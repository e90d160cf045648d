#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "treespread/error.hpp"

namespace treespread {

inline constexpr double kProbabilityTolerance = 1e-12;

// One atom of an offspring law: P(N = children) = mass.
struct OffspringAtom {
  int children = 0;
  double mass = 0.0;

  friend bool operator==(const OffspringAtom&, const OffspringAtom&) = default;
};

// Finite-support offspring law of a Galton-Watson tree with no mass at 0 or 1.
// Immutable once built; every member is safe to call concurrently.
class OffspringDistribution {
 public:
  // Validates and sorts the atoms. Duplicate child counts are merged.
  static OffspringDistribution from_masses(std::vector<OffspringAtom> atoms) {
    if (atoms.empty()) throw InvalidArgument("offspring law needs at least one atom");
    std::sort(atoms.begin(), atoms.end(),
              [](const auto& a, const auto& b) { return a.children < b.children; });
    std::vector<OffspringAtom> merged;
    for (const auto& a : atoms) {
      if (a.children < 0) throw InvalidArgument("offspring count must be nonnegative");
      if (a.children <= 1)
        throw InvalidArgument("offspring law puts mass on " + std::to_string(a.children) +
                              " children; q_0 + q_1 must be 0");
      if (!(a.mass >= 0.0) || !std::isfinite(a.mass))
        throw InvalidArgument("offspring mass must be a nonnegative finite number");
      if (!merged.empty() && merged.back().children == a.children)
        merged.back().mass += a.mass;
      else
        merged.push_back(a);
    }
    std::erase_if(merged, [](const auto& a) { return a.mass == 0.0; });
    if (merged.empty()) throw InvalidArgument("offspring law has no positive mass");

    double total = 0.0;
    double mean = 0.0;
    for (const auto& a : merged) {
      if (a.mass > 1.0) throw InvalidArgument("offspring mass exceeds 1");
      total += a.mass;
      mean += a.children * a.mass;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance)
      throw InvalidArgument("offspring masses sum to " + std::to_string(total) + ", not 1");
    if (mean < 2.0 - kProbabilityTolerance) throw InvalidArgument("offspring mean is below 2");

    OffspringDistribution d;
    d.atoms_ = std::move(merged);
    d.mean_ = mean;
    return d;
  }

  // Deterministic z-ary tree.
  static OffspringDistribution zary(int z) { return from_masses({{z, 1.0}}); }

  const std::vector<OffspringAtom>& atoms() const noexcept { return atoms_; }
  double mean() const noexcept { return mean_; }
  int max_children() const noexcept { return atoms_.back().children; }
  bool is_deterministic() const noexcept { return atoms_.size() == 1; }

  friend bool operator==(const OffspringDistribution&, const OffspringDistribution&) = default;

 private:
  OffspringDistribution() = default;

  std::vector<OffspringAtom> atoms_;
  double mean_ = 0.0;
};

inline OffspringDistribution make_offspring(const std::vector<std::pair<int, double>>& masses) {
  std::vector<OffspringAtom> atoms;
  atoms.reserve(masses.size());
  for (const auto& [z, q] : masses) atoms.push_back({z, q});
  return OffspringDistribution::from_masses(std::move(atoms));
}

namespace detail {

inline double clamp_unit(double s, const char* what) {
  if (!(s >= -kProbabilityTolerance && s <= 1.0 + kProbabilityTolerance))
    throw DomainError(std::string(what) + ": argument " + std::to_string(s) + " is outside [0, 1]");
  return std::clamp(s, 0.0, 1.0);
}

}  // namespace detail

/// Probability generating function G(s) = sum_z q_z s^z on [0, 1].
inline double pgf(const OffspringDistribution& dist, double s) {
  s = detail::clamp_unit(s, "pgf");
  double total = 0.0;
  for (const auto& a : dist.atoms()) total += a.mass * std::pow(s, a.children);
  return total;
}

/// First or second derivative of the generating function, evaluated exactly
/// as a polynomial.
inline double pgf_deriv(const OffspringDistribution& dist, double s, int order) {
  s = detail::clamp_unit(s, "pgf_deriv");
  double total = 0.0;
  switch (order) {
    case 1:
      for (const auto& a : dist.atoms()) total += a.mass * a.children * std::pow(s, a.children - 1);
      return total;
    case 2:
      for (const auto& a : dist.atoms())
        total += a.mass * a.children * (a.children - 1) * std::pow(s, a.children - 2);
      return total;
    default:
      throw InvalidArgument("pgf_deriv order must be 1 or 2");
  }
}

// JSON form: {"masses": [[z, q], ...]}.
inline OffspringDistribution offspring_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("masses") || !j.at("masses").is_array())
    throw InvalidArgument(R"(offspring JSON must look like {"masses": [[z, q], ...]})");
  std::vector<OffspringAtom> atoms;
  for (const auto& entry : j.at("masses")) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_integer() ||
        !entry[1].is_number())
      throw InvalidArgument("each offspring entry must be [integer, number]");
    atoms.push_back({entry[0].get<int>(), entry[1].get<double>()});
  }
  return OffspringDistribution::from_masses(std::move(atoms));
}

inline nlohmann::json to_json(const OffspringDistribution& dist) {
  nlohmann::json masses = nlohmann::json::array();
  for (const auto& a : dist.atoms()) masses.push_back({a.children, a.mass});
  return {{"masses", masses}};
}

// Accepts either "zary:Z" or an inline JSON object.
inline OffspringDistribution parse_offspring(std::string_view text) {
  constexpr std::string_view prefix = "zary:";
  if (text.starts_with(prefix)) {
    std::string digits(text.substr(prefix.size()));
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      throw InvalidArgument("bad z-ary shorthand '" + std::string(text) + "'");
    return OffspringDistribution::zary(std::stoi(digits));
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    throw InvalidArgument("offspring must be 'zary:Z' or a JSON object, got '" + std::string(text) +
                          "'");
  }
  return offspring_from_json(j);
}

}  // namespace treespread
