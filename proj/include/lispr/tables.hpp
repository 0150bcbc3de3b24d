#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "lispr/mdp.hpp"

namespace lispr {

/// Dense per-(state, action) table. The tag keeps learner Q and success
/// predictor G from being mixed up at call sites.
template <class Tag>
class ActionTable {
public:
  ActionTable() = default;
  ActionTable(std::size_t num_states, std::size_t num_actions, double init = 0.0)
      : num_states_(num_states), num_actions_(num_actions), values_(num_states * num_actions, init) {}

  std::size_t num_states() const noexcept { return num_states_; }
  std::size_t num_actions() const noexcept { return num_actions_; }

  double &operator()(StateId s, ActionId a) { return values_[s * num_actions_ + a]; }
  double operator()(StateId s, ActionId a) const { return values_[s * num_actions_ + a]; }

  std::span<double> row(StateId s) { return {values_.data() + s * num_actions_, num_actions_}; }
  std::span<const double> row(StateId s) const {
    return {values_.data() + s * num_actions_, num_actions_};
  }

  double max(StateId s) const {
    const auto r = row(s);
    return *std::max_element(r.begin(), r.end());
  }

  const std::vector<double> &values() const noexcept { return values_; }
  std::vector<double> &values() noexcept { return values_; }

  bool operator==(const ActionTable &) const = default;

private:
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> values_;
};

struct QTag {};
struct GTag {};

/// Learner action values (recovery, student or baseline).
using QTable = ActionTable<QTag>;
/// Success predictor G(s, a) of the source policy.
using GTable = ActionTable<GTag>;

/// Dense per-state values.
class VTable {
public:
  VTable() = default;
  explicit VTable(std::size_t num_states, double init = 0.0) : values_(num_states, init) {}

  std::size_t num_states() const noexcept { return values_.size(); }
  double &operator()(StateId s) { return values_[s]; }
  double operator()(StateId s) const { return values_[s]; }
  const std::vector<double> &values() const noexcept { return values_; }
  std::vector<double> &values() noexcept { return values_; }

  bool operator==(const VTable &) const = default;

private:
  std::vector<double> values_;
};

/**
 * Replacing eligibility trace over (state, action).
 *
 * Values are dense; the indices of nonzero entries are tracked so decay and
 * the Q update touch only active entries. Entries that decay below
 * kPruneThreshold are dropped.
 */
class EligibilityTrace {
public:
  static constexpr double kPruneThreshold = 1e-12;

  EligibilityTrace() = default;
  EligibilityTrace(std::size_t num_states, std::size_t num_actions)
      : num_actions_(num_actions), values_(num_states * num_actions, 0.0) {}

  double operator()(StateId s, ActionId a) const { return values_[s * num_actions_ + a]; }

  void replace(StateId s, ActionId a) {
    const std::size_t idx = s * num_actions_ + a;
    if (values_[idx] == 0.0) active_.push_back(idx);
    values_[idx] = 1.0;
  }

  void clear() {
    for (auto idx : active_) values_[idx] = 0.0;
    active_.clear();
  }

  void scale(double factor) {
    if (factor == 0.0) {
      clear();
      return;
    }
    std::size_t kept = 0;
    for (auto idx : active_) {
      values_[idx] *= factor;
      if (values_[idx] < kPruneThreshold) {
        values_[idx] = 0.0;
      } else {
        active_[kept++] = idx;
      }
    }
    active_.resize(kept);
  }

  /// Flat indices (s * num_actions + a) of nonzero entries.
  const std::vector<std::size_t> &active() const noexcept { return active_; }
  double at_index(std::size_t idx) const { return values_[idx]; }
  const std::vector<double> &values() const noexcept { return values_; }

private:
  std::size_t num_actions_ = 0;
  std::vector<double> values_;
  std::vector<std::size_t> active_;
};

} // namespace lispr
