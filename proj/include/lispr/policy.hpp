#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "lispr/mdp.hpp"
#include "lispr/rng.hpp"

namespace lispr {

/// Stationary Markov policy: per-state action distribution.
class Policy {
public:
  Policy() = default;
  Policy(std::size_t num_states, std::size_t num_actions)
      : num_states_(num_states), num_actions_(num_actions), probs_(num_states * num_actions, 0.0),
        deterministic_(num_states, kStochastic) {}

  static Policy deterministic(std::size_t num_actions, const std::vector<ActionId> &actions) {
    Policy p(actions.size(), num_actions);
    for (StateId s = 0; s < actions.size(); ++s) p.set_action(s, actions[s]);
    return p;
  }

  static Policy uniform(std::size_t num_states, std::size_t num_actions) {
    Policy p(num_states, num_actions);
    std::vector<double> row(num_actions, 1.0 / static_cast<double>(num_actions));
    for (StateId s = 0; s < num_states; ++s) p.set_distribution(s, row);
    return p;
  }

  std::size_t num_states() const noexcept { return num_states_; }
  std::size_t num_actions() const noexcept { return num_actions_; }

  void set_action(StateId s, ActionId a) {
    if (a >= num_actions_) throw std::out_of_range("Policy::set_action: action out of range");
    auto r = mutable_row(s);
    std::fill(r.begin(), r.end(), 0.0);
    r[a] = 1.0;
    deterministic_[s] = a;
  }

  void set_distribution(StateId s, std::span<const double> dist) {
    if (dist.size() != num_actions_) throw std::invalid_argument("Policy: distribution size mismatch");
    auto r = mutable_row(s);
    std::copy(dist.begin(), dist.end(), r.begin());
    deterministic_[s] = kStochastic;
    std::size_t support = 0;
    ActionId last = 0;
    for (ActionId a = 0; a < num_actions_; ++a)
      if (dist[a] > 0.0) {
        ++support;
        last = a;
      }
    if (support == 1 && dist[last] == 1.0) deterministic_[s] = last;
  }

  double prob(StateId s, ActionId a) const { return probs_[s * num_actions_ + a]; }
  std::span<const double> row(StateId s) const { return {probs_.data() + s * num_actions_, num_actions_}; }

  bool is_deterministic_at(StateId s) const { return deterministic_[s] != kStochastic; }
  bool is_deterministic() const {
    for (auto d : deterministic_)
      if (d == kStochastic) return false;
    return true;
  }

  /// Action of a deterministic state; throws for stochastic rows.
  ActionId action(StateId s) const {
    if (deterministic_[s] == kStochastic) throw std::logic_error("Policy::action: stochastic state");
    return deterministic_[s];
  }

  /// Deterministic rows consume no random draws.
  ActionId sample(StateId s, Rng &rng) const {
    if (deterministic_[s] != kStochastic) return deterministic_[s];
    const double u = rng.uniform();
    double acc = 0.0;
    ActionId last = 0;
    for (ActionId a = 0; a < num_actions_; ++a) {
      const double p = prob(s, a);
      if (p <= 0.0) continue;
      acc += p;
      last = a;
      if (u < acc) return a;
    }
    return last;
  }

  /// Expectation of a per-action row under this policy at s.
  double expectation(StateId s, std::span<const double> values) const {
    if (deterministic_[s] != kStochastic) return values[deterministic_[s]];
    double v = 0.0;
    for (ActionId a = 0; a < num_actions_; ++a) v += prob(s, a) * values[a];
    return v;
  }

  bool operator==(const Policy &) const = default;

private:
  static constexpr std::size_t kStochastic = std::numeric_limits<std::size_t>::max();

  std::span<double> mutable_row(StateId s) {
    if (s >= num_states_) throw std::out_of_range("Policy: state out of range");
    return {probs_.data() + s * num_actions_, num_actions_};
  }

  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> probs_;
  std::vector<std::size_t> deterministic_;
};

/// Black-box source policy mu transferred into the target task.
using SourcePolicy = Policy;

/// Lowest-id argmax; the deterministic extraction used for source policies.
template <class Table>
Policy greedy_policy_lowest(const Table &q) {
  std::vector<ActionId> actions(q.num_states());
  for (StateId s = 0; s < q.num_states(); ++s) {
    const auto r = q.row(s);
    ActionId best = 0;
    for (ActionId a = 1; a < r.size(); ++a)
      if (r[a] > r[best]) best = a;
    actions[s] = best;
  }
  return Policy::deterministic(q.num_actions(), actions);
}

} // namespace lispr
