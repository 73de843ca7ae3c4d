#include "stratfact/design.hpp"

#include <algorithm>
#include <bit>

#include "stratfact/numerics.hpp"

namespace stratfact {

int FactorialDesign::level(int factor, int arm) const {
  // factor 0 maps to the highest bit, the last factor flips fastest
  const int bit = (arm >> (k_ - 1 - factor)) & 1;
  return bit ? -1 : +1;
}

int FactorialDesign::arm_from_levels(const std::vector<int>& levels) const {
  if (static_cast<int>(levels.size()) != k_)
    throw ValidationError("expected " + std::to_string(k_) + " factor levels");
  int arm = 0;
  for (int f = 0; f < k_; ++f) {
    if (levels[f] != 1 && levels[f] != -1)
      throw ValidationError("factor levels must be -1 or +1");
    if (levels[f] == -1) arm |= 1 << (k_ - 1 - f);
  }
  return arm;
}

FactorialDesign build_design(int k) {
  if (k < 1 || k > 16) throw ValidationError("number of factors must be between 1 and 16");
  FactorialDesign d;
  d.k_ = k;
  d.q_ = 1 << k;
  d.f_ = d.q_ - 1;

  // Effect order: subsets by size, lexicographic within size. Enumerate by
  // popcount passes over the bitmask range.
  d.effect_factors_.reserve(d.f_);
  for (int size = 1; size <= k; ++size) {
    for (int mask = 1; mask < d.q_; ++mask) {
      if (std::popcount(static_cast<unsigned>(mask)) != size) continue;
      std::vector<int> factors;
      for (int f = 0; f < k; ++f)
        if (mask & (1 << f)) factors.push_back(f + 1);
      d.effect_factors_.push_back(std::move(factors));
    }
  }

  d.effect_labels_.reserve(d.f_);
  for (const auto& factors : d.effect_factors_) {
    std::string label;
    for (size_t i = 0; i < factors.size(); ++i) {
      if (i) label += '*';
      label += std::to_string(factors[i]);
    }
    d.effect_labels_.push_back(std::move(label));
  }

  d.g_.assign(static_cast<size_t>(d.f_) * d.q_, 0);
  for (int e = 0; e < d.f_; ++e) {
    for (int a = 0; a < d.q_; ++a) {
      int s = 1;
      for (int factor : d.effect_factors_[e]) s *= d.level(factor - 1, a);
      d.g_[static_cast<size_t>(e) * d.q_ + a] = static_cast<int8_t>(s);
    }
  }
  return d;
}

void validate_plan(const AssignmentPlan& plan) {
  if (plan.strata.empty()) throw ValidationError("assignment plan has no strata");
  const size_t q = plan.strata.front().arm_counts.size();
  if (q < 2) throw ValidationError("assignment plan needs at least two arms");
  for (const auto& s : plan.strata) {
    if (s.arm_counts.size() != q)
      throw ValidationError("stratum '" + s.id + "': inconsistent arm count columns");
    int total = 0;
    for (size_t a = 0; a < q; ++a) {
      if (s.arm_counts[a] < 1)
        throw ValidationError("stratum '" + s.id + "': arm " + std::to_string(a + 1) +
                              " has count below 1");
      total += s.arm_counts[a];
    }
    if (total != s.size)
      throw ValidationError("stratum '" + s.id + "': arm counts sum to " + std::to_string(total) +
                            " but stratum size is " + std::to_string(s.size));
  }
}

std::vector<int> assign_treatments(const AssignmentPlan& plan) {
  validate_plan(plan);
  std::vector<int> out;
  size_t n = 0;
  for (const auto& s : plan.strata) n += s.size;
  out.reserve(n);
  for (const auto& s : plan.strata) {
    std::vector<int> labels;
    labels.reserve(s.size);
    for (size_t a = 0; a < s.arm_counts.size(); ++a)
      labels.insert(labels.end(), s.arm_counts[a], static_cast<int>(a) + 1);
    Rng rng(plan.seed ^ fnv1a64(s.id));
    for (size_t i = labels.size() - 1; i > 0; --i) {
      const size_t j = rng.below(i + 1);
      std::swap(labels[i], labels[j]);
    }
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

}  // namespace stratfact
