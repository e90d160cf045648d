#pragma once

// Hand-rolled generators for property tests.

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "oracle.hpp"

namespace gen {

// Law with 1 to max_atoms atoms, child counts in [2, max_children].
inline oracle::Law random_law(std::mt19937_64& rng, int max_atoms = 5, int max_children = 8) {
  std::uniform_int_distribution<int> children(2, max_children), atoms(1, max_atoms);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  oracle::Law law;
  double total = 0.0;
  const int n = atoms(rng);
  for (int a = 0; a < n; ++a) {
    law.push_back({children(rng), unit(rng)});
    total += law.back().second;
  }
  for (auto& [z, q] : law) q /= total;
  return law;
}

// Strictly positive profile with non-increasing disease masses.
inline std::vector<double> random_profile(std::mt19937_64& rng, int k) {
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  std::vector<double> m(k + 1);
  double total = 0.0;
  for (auto& v : m) total += (v = unit(rng));
  for (auto& v : m) v /= total;
  std::sort(m.begin(), m.end() - 1, std::greater<>());
  double head = 0.0;
  for (int i = 0; i < k; ++i) head += m[i];
  m[k] = 1.0 - head;
  return m;
}

}  // namespace gen
