#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <json.hpp>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "treespread/dynamics.hpp"
#include "treespread/error.hpp"
#include "treespread/io.hpp"
#include "treespread/offspring.hpp"
#include "treespread/parallel.hpp"
#include "treespread/rng.hpp"

namespace treespread {

// State of one node: sane, or infected by disease 1..k.
class NodeState {
 public:
  static constexpr NodeState sane() noexcept { return NodeState(0); }
  static NodeState disease(int index) {
    if (index < 1) throw InvalidArgument("disease index must be >= 1");
    return NodeState(index);
  }

  constexpr bool is_sane() const noexcept { return code_ == 0; }
  // 1-based disease index; 0 for sane.
  constexpr int code() const noexcept { return code_; }

  friend constexpr bool operator==(NodeState, NodeState) = default;

 private:
  explicit constexpr NodeState(int code) noexcept : code_(code) {}
  int code_;
};

// Standard propagation, or the variant where a lone disease among sane
// children keeps the parent sane with probability (1 - alpha)^(infected).
struct PropagationRule {
  std::optional<double> alpha;

  static PropagationRule standard() { return {}; }
  static PropagationRule variant(double a) {
    detail::check_alpha(a);
    return {a};
  }
  bool is_variant() const noexcept { return alpha.has_value(); }
};

/// Parent state from its children's states.
///   all sane                      -> sane
///   two different diseases        -> sane
///   one disease, possibly with sane children -> that disease
/// Under the variant rule the last case, when at least one child is sane,
/// becomes sane with probability (1 - alpha)^(number of infected children);
/// only this case consumes a variate from rng.
template <typename Rng>
NodeState combine_children(std::span<const NodeState> states, const PropagationRule& rule,
                           Rng& rng) {
  if (states.empty()) throw InvalidArgument("combine_children needs at least one child");
  int disease = 0;
  int infected = 0;
  for (NodeState s : states) {
    if (s.is_sane()) continue;
    if (disease != 0 && s.code() != disease) return NodeState::sane();
    disease = s.code();
    ++infected;
  }
  if (disease == 0) return NodeState::sane();
  const auto n = static_cast<int>(states.size());
  if (rule.is_variant() && infected < n) {
    const double stay_sane = std::pow(1.0 - *rule.alpha, infected);
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < stay_sane) return NodeState::sane();
  }
  return NodeState::disease(disease);
}

struct SimConfig {
  OffspringDistribution dist = OffspringDistribution::zary(2);
  DiseaseProfile profile = DiseaseProfile::uniform(1, 0.5);
  int height = 1;
  std::uint64_t trials = 1;
  PropagationRule rule;
  std::uint64_t seed = 0;
  // Refuse runs whose expected leaf count per trial, mean^height, exceeds this.
  double node_budget = 1e8;
  unsigned workers = 0;
};

struct SimResult {
  std::vector<double> masses;           // empirical p_1..p_{k+1}
  std::vector<double> standard_errors;  // sqrt(p (1 - p) / trials)
  std::vector<std::uint64_t> counts;
  std::uint64_t trials = 0;
};

namespace detail {

// Depth-first evaluation of a freshly sampled tree. Nothing is materialized:
// child counts and leaf states are drawn on the fly, and once two different
// diseases are seen among a node's children the remaining subtrees are
// skipped, since they are independent and cannot change the outcome.
//
// Under the standard rule a node's state is a fold of its children's states
// over {none, disease d, conflict}; that fold is table-driven and evaluated by
// an explicit stack so the hot loop has few unpredictable branches.
class TreeEvaluator {
 public:
  static constexpr int kMaxHeight = 64;
  static constexpr int kMaxDiseases = 250;

  TreeEvaluator(const OffspringDistribution& dist, std::span<const double> profile,
                const PropagationRule& rule)
      : rule_(rule), k_(static_cast<int>(profile.size()) - 1) {
    if (k_ < 1 || k_ > kMaxDiseases)
      throw InvalidArgument("simulation supports 1 to " + std::to_string(kMaxDiseases) +
                            " diseases");
    double acc = 0.0;
    for (int i = 0; i < k_; ++i) {
      acc += profile[static_cast<std::size_t>(i)];
      leaf_thresholds_.push_back(probability_threshold(acc));
    }
    // A uniform u lies below `below` of the cumulative thresholds; u falls in
    // disease k - below + 1, or is sane when below == 0.
    leaf_code_.resize(static_cast<std::size_t>(k_) + 1);
    leaf_code_[0] = 0;
    for (int below = 1; below <= k_; ++below)
      leaf_code_[static_cast<std::size_t>(below)] = static_cast<std::uint8_t>(k_ - below + 1);

    acc = 0.0;
    for (const auto& a : dist.atoms()) {
      acc += a.mass;
      child_thresholds_.push_back(probability_threshold(acc));
      child_counts_.push_back(a.children);
    }
    child_thresholds_.back() = std::numeric_limits<std::uint64_t>::max();

    // Fold table: accumulator code in [0, k+1] (0 none, k+1 conflict) times
    // child state in [0, k].
    conflict_ = static_cast<std::uint8_t>(k_ + 1);
    const int width = k_ + 1;
    fold_.assign(static_cast<std::size_t>((k_ + 2) * width), 0);
    for (int a = 0; a <= k_ + 1; ++a)
      for (int v = 0; v <= k_; ++v) {
        int out;
        if (a == k_ + 1)
          out = a;
        else if (v == 0)
          out = a;
        else if (a == 0 || a == v)
          out = v;
        else
          out = k_ + 1;
        fold_[static_cast<std::size_t>(a * width + v)] = static_cast<std::uint8_t>(out);
      }

    if (rule.is_variant()) {
      for (int m = 0; m <= dist.max_children(); ++m)
        stay_sane_.push_back(std::pow(1.0 - *rule.alpha, m));
    }

    if (dist.is_deterministic()) {
      fixed_children_ = dist.max_children();
      std::size_t leaves = static_cast<std::size_t>(fixed_children_);
      batch_depth_ = 1;
      while (leaves * static_cast<std::size_t>(fixed_children_) <= kBatchLeaves) {
        leaves *= static_cast<std::size_t>(fixed_children_);
        ++batch_depth_;
      }
      if (leaves > kBatchLeaves) batch_depth_ = 0;
    }
    // Two-child node straight from its children's states.
    pair_.assign(static_cast<std::size_t>(width * width), 0);
    for (int x = 0; x <= k_; ++x)
      for (int y = 0; y <= k_; ++y) {
        const int a =
            fold_[static_cast<std::size_t>(fold_[static_cast<std::size_t>(x)] * width + y)];
        pair_[static_cast<std::size_t>(x * width + y)] =
            static_cast<std::uint8_t>(a == k_ + 1 ? 0 : a);
      }
  }

  int evaluate(int depth, SplitMix64& rng) const {
    if (depth < 0 || depth > kMaxHeight) throw InvalidArgument("unsupported tree height");
    if (depth == 0) return draw_leaf(rng);
    if (rule_.is_variant()) return evaluate_variant(depth, rng);
    if (batch_depth_ > 0) return evaluate_fixed(depth, rng);
    return evaluate_standard(depth, rng);
  }

 private:
  // Leaves per batch; the batch buffer stays in L1.
  static constexpr std::size_t kBatchLeaves = 4096;

  // Deterministic z-ary tree: plain recursion near the root, and below
  // batch_depth_ the whole subtree is drawn into a buffer and reduced level by
  // level with table lookups.
  int evaluate_fixed(int depth, SplitMix64& rng) const {
    if (depth <= batch_depth_) return evaluate_batch(depth, rng);
    const int width = k_ + 1;
    std::uint8_t a = 0;
    for (int c = 0; c < fixed_children_; ++c) {
      a = fold_[static_cast<std::size_t>(a * width + evaluate_fixed(depth - 1, rng))];
      if (a == conflict_) return 0;
    }
    return a;
  }

  int evaluate_batch(int depth, SplitMix64& rng) const {
    std::array<std::uint8_t, kBatchLeaves> buf;
    const auto z = static_cast<std::size_t>(fixed_children_);
    const auto width = static_cast<std::size_t>(k_ + 1);
    std::size_t n = 1;
    for (int d = 0; d < depth; ++d) n *= z;
    for (std::size_t i = 0; i < n; ++i) buf[i] = static_cast<std::uint8_t>(draw_leaf(rng));
    while (n > 1) {
      const std::size_t parents = n / z;
      if (z == 2) {
        for (std::size_t j = 0; j < parents; ++j)
          buf[j] = pair_[buf[2 * j] * width + buf[2 * j + 1]];
      } else {
        for (std::size_t j = 0; j < parents; ++j) {
          std::uint8_t a = 0;
          for (std::size_t c = 0; c < z; ++c) a = fold_[a * width + buf[j * z + c]];
          buf[j] = a == conflict_ ? 0 : a;
        }
      }
      n = parents;
    }
    return buf[0];
  }

  int evaluate_standard(int height, SplitMix64& rng) const {
    std::array<std::uint8_t, kMaxHeight> acc;
    std::array<int, kMaxHeight> remaining;
    const int width = k_ + 1;
    int level = 0;
    acc[0] = 0;
    remaining[0] = draw_children(rng);
    for (;;) {
      if (level < height - 1) {
        ++level;
        acc[static_cast<std::size_t>(level)] = 0;
        remaining[static_cast<std::size_t>(level)] = draw_children(rng);
        continue;
      }
      int v = draw_leaf(rng);
      for (;;) {
        auto& a = acc[static_cast<std::size_t>(level)];
        a = fold_[static_cast<std::size_t>(a * width + v)];
        if (--remaining[static_cast<std::size_t>(level)] != 0 && a != conflict_) break;
        v = a == conflict_ ? 0 : a;
        if (level == 0) return v;
        --level;
      }
    }
  }

  int evaluate_variant(int depth, SplitMix64& rng) const {
    if (depth == 0) return draw_leaf(rng);
    const int z = draw_children(rng);
    int disease = 0;
    int infected = 0;
    for (int c = 0; c < z; ++c) {
      const int s = evaluate_variant(depth - 1, rng);
      if (s == 0) continue;
      if (disease != 0 && s != disease) return 0;
      disease = s;
      ++infected;
    }
    if (disease == 0) return 0;
    if (infected < z && rng.uniform() < stay_sane_[static_cast<std::size_t>(infected)]) return 0;
    return disease;
  }

  int draw_leaf(SplitMix64& rng) const {
    const std::uint64_t u = rng();
    std::size_t below = 0;
    for (std::uint64_t t : leaf_thresholds_) below += u < t;
    return leaf_code_[below];
  }

  int draw_children(SplitMix64& rng) const {
    if (child_counts_.size() == 1) return child_counts_[0];
    const std::uint64_t u = rng();
    for (std::size_t i = 0; i + 1 < child_thresholds_.size(); ++i)
      if (u < child_thresholds_[i]) return child_counts_[i];
    return child_counts_.back();
  }

  PropagationRule rule_;
  int k_;
  std::uint8_t conflict_ = 0;
  std::vector<std::uint64_t> leaf_thresholds_;
  std::vector<std::uint8_t> leaf_code_;
  std::vector<std::uint8_t> fold_;
  std::vector<std::uint8_t> pair_;
  int fixed_children_ = 0;
  int batch_depth_ = 0;
  std::vector<std::uint64_t> child_thresholds_;
  std::vector<int> child_counts_;
  std::vector<double> stay_sane_;
};

}  // namespace detail

inline double expected_leaves(const OffspringDistribution& dist, int height) {
  return std::pow(dist.mean(), height);
}

/// Empirical law of the root of height-`height` trees with i.i.d. leaves drawn
/// from the profile. Trial t always uses the stream (seed, t), so results do
/// not depend on the worker count.
inline SimResult simulate_root(const SimConfig& cfg) {
  if (cfg.height < 1) throw InvalidArgument("tree height must be at least 1");
  if (cfg.trials < 1) throw InvalidArgument("trials must be at least 1");
  if (cfg.rule.is_variant()) detail::check_alpha(*cfg.rule.alpha);
  const double leaves = expected_leaves(cfg.dist, cfg.height);
  if (leaves > cfg.node_budget)
    throw BudgetExceeded("expected " + io::format_double(leaves) +
                         " leaves per trial exceeds the budget of " +
                         io::format_double(cfg.node_budget));

  const detail::TreeEvaluator eval(cfg.dist, cfg.profile.masses(), cfg.rule);
  const std::size_t width = cfg.profile.masses().size();
  const unsigned workers = worker_count(cfg.workers);
  std::vector<std::vector<std::uint64_t>> partial(workers, std::vector<std::uint64_t>(width));

  parallel_blocks(cfg.trials, workers, [&](std::size_t begin, std::size_t end, unsigned w) {
    auto& counts = partial[w];
    for (std::size_t t = begin; t < end; ++t) {
      auto rng = SplitMix64::for_stream(cfg.seed, t);
      const int s = eval.evaluate(cfg.height, rng);
      ++counts[s == 0 ? width - 1 : static_cast<std::size_t>(s - 1)];
    }
  });

  SimResult r;
  r.trials = cfg.trials;
  r.counts.assign(width, 0);
  for (const auto& c : partial)
    for (std::size_t i = 0; i < width; ++i) r.counts[i] += c[i];
  const double n = static_cast<double>(cfg.trials);
  for (std::size_t i = 0; i < width; ++i) {
    const double p = static_cast<double>(r.counts[i]) / n;
    r.masses.push_back(p);
    r.standard_errors.push_back(std::sqrt(p * (1.0 - p) / n));
  }
  return r;
}

// Analytic root law after `height` generations of the matching recursion.
inline std::vector<double> analytic_root(const SimConfig& cfg) {
  std::vector<double> p = cfg.profile.vector();
  for (int n = 0; n < cfg.height; ++n)
    p = cfg.rule.is_variant() ? step_variant(cfg.dist, p, *cfg.rule.alpha) : step_full(cfg.dist, p);
  return p;
}

// (empirical - analytic) / sigma. Sigma falls back to the analytic binomial
// error when the empirical mass is 0 or 1; a mismatch with zero spread in
// both is reported as infinite.
inline double z_score(double empirical, double analytic, double stderr_empirical,
                      std::uint64_t trials) {
  double sigma = stderr_empirical;
  if (sigma == 0.0) sigma = std::sqrt(analytic * (1.0 - analytic) / static_cast<double>(trials));
  const double diff = empirical - analytic;
  if (sigma == 0.0)
    return std::abs(diff) <= 1e-12 ? 0.0
                                   : std::copysign(std::numeric_limits<double>::infinity(), diff);
  return diff / sigma;
}

inline nlohmann::json to_json(const SimResult& r, const nlohmann::json& config = nullptr) {
  nlohmann::json j{{"masses", r.masses},
                   {"standard_errors", r.standard_errors},
                   {"counts", r.counts},
                   {"trials", r.trials}};
  if (!config.is_null()) j["config"] = config;
  return j;
}

// Columns coordinate, analytic, empirical, stderr, z_score. Returns the
// largest |z|.
inline double write_comparison_csv(std::ostream& os, const SimResult& r,
                                   std::span<const double> analytic,
                                   const nlohmann::json& config = nullptr) {
  io::write_csv_config(os, config);
  os << "coordinate,analytic,empirical,stderr,z_score\n";
  double worst = 0.0;
  for (std::size_t i = 0; i < r.masses.size(); ++i) {
    const double z = z_score(r.masses[i], analytic[i], r.standard_errors[i], r.trials);
    worst = std::max(worst, std::abs(z));
    const std::string name =
        i + 1 == r.masses.size() ? std::string("sane") : "p_" + std::to_string(i + 1);
    os << name << ',' << io::format_double(analytic[i]) << ',' << io::format_double(r.masses[i])
       << ',' << io::format_double(r.standard_errors[i]) << ',' << io::format_double(z) << '\n';
  }
  return worst;
}

}  // namespace treespread
