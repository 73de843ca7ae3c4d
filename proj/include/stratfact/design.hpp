#ifndef STRATFACT_DESIGN_HPP
#define STRATFACT_DESIGN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "stratfact/errors.hpp"

namespace stratfact {

// Contrast structure of a 2^K factorial experiment: Q = 2^K arms, F = Q - 1
// effects. Arms are ordered so the level vector of arm 1 is all +1 and the
// last factor flips fastest; effect rows are the K main effects followed by
// interactions of increasing order (lexicographic within an order). Each
// interaction row is the elementwise product of its factors' main rows.
class FactorialDesign {
 public:
  int k() const { return k_; }
  int q() const { return q_; }
  int f() const { return f_; }

  // Contrast sign g_{f,q}; effect and arm are 0-based.
  int sign(int effect, int arm) const { return g_[static_cast<size_t>(effect) * q_ + arm]; }
  // Level of `factor` (0-based) at `arm` (0-based): +1 or -1.
  int level(int factor, int arm) const;

  const std::vector<std::vector<int>>& effect_factors() const { return effect_factors_; }
  const std::vector<std::string>& effect_labels() const { return effect_labels_; }

  // Maps a vector of K levels in {-1,+1} to the 0-based arm index.
  int arm_from_levels(const std::vector<int>& levels) const;

  friend FactorialDesign build_design(int k);

 private:
  FactorialDesign() = default;
  int k_ = 0, q_ = 0, f_ = 0;
  std::vector<int8_t> g_;  // F x Q, entries +1/-1
  std::vector<std::vector<int>> effect_factors_;  // 1-based factor subsets
  std::vector<std::string> effect_labels_;
};

FactorialDesign build_design(int k);

// Per-stratum assignment targets. Arm counts are in design arm order.
struct StratumPlan {
  std::string id;
  int size = 0;
  std::vector<int> arm_counts;
};

struct AssignmentPlan {
  std::vector<StratumPlan> strata;
  uint64_t seed = 0;
};

void validate_plan(const AssignmentPlan& plan);

// Uniform stratified assignment: within each stratum, exactly the planned
// number of units get each arm, drawn by a Fisher-Yates shuffle of the arm
// multiset. Each stratum uses its own substream (seed ^ fnv1a64(id)), so
// the draw for one stratum does not depend on the others. Returns 1-based
// arms, units ordered stratum block by stratum block.
std::vector<int> assign_treatments(const AssignmentPlan& plan);

}  // namespace stratfact

#endif  // STRATFACT_DESIGN_HPP
