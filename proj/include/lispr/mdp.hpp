#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lispr/rng.hpp"

namespace lispr {

using StateId = std::size_t;
using ActionId = std::size_t;

/// One successor of a (state, action) pair.
struct Outcome {
  StateId next;
  double prob;
  double reward;
};

/**
 * Finite MDP with explicit absorbing terminal states.
 *
 * Transitions are stored sparsely per (s, a); the logical table P(s'|s,a)
 * is available through probability(). Rewards are expected values
 * r(s, a, s'). Terminal states self-loop with probability 1 and reward 0.
 */
class TabularMdp {
public:
  TabularMdp() = default;
  TabularMdp(std::size_t num_states, std::size_t num_actions, double discount)
      : num_states_(num_states), num_actions_(num_actions), discount_(discount),
        outcomes_(num_states * num_actions), terminal_(num_states, false),
        initial_(num_states, 0.0) {}

  std::size_t num_states() const noexcept { return num_states_; }
  std::size_t num_actions() const noexcept { return num_actions_; }
  double discount() const noexcept { return discount_; }
  void set_discount(double gamma) { discount_ = gamma; }

  /// Permits gamma = 1; only valid when every policy of interest terminates.
  bool episodic_proper() const noexcept { return episodic_proper_; }
  void set_episodic_proper(bool flag) { episodic_proper_ = flag; }

  /// Adds probability mass to (s, a) -> next; repeated calls accumulate.
  void add_transition(StateId s, ActionId a, StateId next, double prob, double reward) {
    check_index(s, a);
    if (next >= num_states_) throw std::out_of_range("add_transition: next state out of range");
    auto &row = outcomes_[s * num_actions_ + a];
    for (auto &o : row) {
      if (o.next == next) {
        // mass-weighted reward keeps r(s,a,s') an expectation
        const double total = o.prob + prob;
        o.reward = total > 0.0 ? (o.reward * o.prob + reward * prob) / total : reward;
        o.prob = total;
        return;
      }
    }
    row.push_back({next, prob, reward});
  }

  /// Replaces all outcomes of (s, a).
  void set_outcomes(StateId s, ActionId a, std::vector<Outcome> row) {
    check_index(s, a);
    outcomes_[s * num_actions_ + a] = std::move(row);
  }

  /// Marks s terminal and makes it absorbing with zero reward.
  void set_terminal(StateId s) {
    if (s >= num_states_) throw std::out_of_range("set_terminal: state out of range");
    terminal_[s] = true;
    for (ActionId a = 0; a < num_actions_; ++a) outcomes_[s * num_actions_ + a] = {{s, 1.0, 0.0}};
  }

  /// Marks a state terminal without rewriting its rows (used by validate tests).
  void mark_terminal_unchecked(StateId s) { terminal_.at(s) = true; }

  bool is_terminal(StateId s) const { return terminal_[s]; }
  const std::vector<bool> &terminal_mask() const noexcept { return terminal_; }

  std::span<const Outcome> outcomes(StateId s, ActionId a) const {
    return outcomes_[s * num_actions_ + a];
  }

  double probability(StateId s, ActionId a, StateId next) const {
    double p = 0.0;
    for (const auto &o : outcomes(s, a))
      if (o.next == next) p += o.prob;
    return p;
  }

  double reward(StateId s, ActionId a, StateId next) const {
    for (const auto &o : outcomes(s, a))
      if (o.next == next) return o.reward;
    return 0.0;
  }

  /// Expected immediate reward sum_{s'} P(s'|s,a) r(s,a,s').
  double expected_reward(StateId s, ActionId a) const {
    double r = 0.0;
    for (const auto &o : outcomes(s, a)) r += o.prob * o.reward;
    return r;
  }

  const std::vector<double> &initial() const noexcept { return initial_; }
  void set_initial(std::vector<double> dist) {
    if (dist.size() != num_states_) throw std::invalid_argument("set_initial: size mismatch");
    initial_ = std::move(dist);
  }

  /// Uniform initial distribution over the given states.
  void set_uniform_initial(const std::vector<StateId> &states) {
    std::fill(initial_.begin(), initial_.end(), 0.0);
    if (states.empty()) return;
    const double p = 1.0 / static_cast<double>(states.size());
    for (auto s : states) initial_.at(s) = p;
  }

  bool deterministic() const {
    for (const auto &row : outcomes_)
      if (row.size() != 1) return false;
    return true;
  }

private:
  void check_index(StateId s, ActionId a) const {
    if (s >= num_states_ || a >= num_actions_) throw std::out_of_range("state/action out of range");
  }

  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  double discount_ = 0.99;
  bool episodic_proper_ = false;
  std::vector<std::vector<Outcome>> outcomes_;
  std::vector<bool> terminal_;
  std::vector<double> initial_;
};

/// Option that generated a transition.
enum class OptionKind { Primal, Learner };

/// Experience atom (s, o, a, r, continuation, s').
struct TransitionRecord {
  StateId s = 0;
  OptionKind option = OptionKind::Learner;
  ActionId a = 0;
  double r = 0.0;
  double continuation = 0.0;
  StateId next = 0;
};

struct ValidationError {
  std::string message;
  std::optional<StateId> state;
  std::optional<ActionId> action;
};

inline constexpr double kRowSumTolerance = 1e-12;

inline std::vector<ValidationError> validate(const TabularMdp &mdp) {
  std::vector<ValidationError> errors;
  const double gamma = mdp.discount();
  if (!(gamma >= 0.0 && (gamma < 1.0 || (gamma == 1.0 && mdp.episodic_proper()))))
    errors.push_back({"discount outside [0,1) (gamma = 1 requires episodic_proper)", {}, {}});

  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      double total = 0.0;
      bool bad_entry = false;
      for (const auto &o : mdp.outcomes(s, a)) {
        if (!(o.prob >= 0.0) || !std::isfinite(o.reward)) bad_entry = true;
        total += o.prob;
      }
      if (bad_entry) errors.push_back({"negative probability or non-finite reward", s, a});
      if (mdp.is_terminal(s)) {
        bool absorbing = mdp.probability(s, a, s) == 1.0 && mdp.reward(s, a, s) == 0.0;
        if (!absorbing) errors.push_back({"terminal not absorbing", s, a});
      } else if (std::abs(total - 1.0) > kRowSumTolerance) {
        errors.push_back({"transition row does not sum to 1 (sum = " + std::to_string(total) + ")", s, a});
      }
    }
  }

  double mass = 0.0;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    const double p = mdp.initial()[s];
    if (p < 0.0) errors.push_back({"negative initial probability", s, {}});
    if (p > 0.0 && mdp.is_terminal(s)) errors.push_back({"initial mass on terminal state", s, {}});
    mass += p;
  }
  if (std::abs(mass - 1.0) > kRowSumTolerance)
    errors.push_back({"initial distribution does not sum to 1", {}, {}});
  return errors;
}

struct StepResult {
  StateId next;
  double reward;
  bool done;
};

/// Samples one transition. Stepping from a terminal state is a contract violation.
inline StepResult step(Rng &rng, const TabularMdp &mdp, StateId s, ActionId a) {
  if (s >= mdp.num_states() || a >= mdp.num_actions())
    throw std::out_of_range("step: state or action out of range");
  if (mdp.is_terminal(s)) throw std::logic_error("step: called from a terminal state");
  const auto row = mdp.outcomes(s, a);
  const Outcome *chosen = &row.back();
  if (row.size() > 1) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (const auto &o : row) {
      acc += o.prob;
      if (u < acc && o.prob > 0.0) {
        chosen = &o;
        break;
      }
    }
    // rounding slack: fall back to the last outcome with positive mass
    if (u >= acc)
      for (auto it = row.rbegin(); it != row.rend(); ++it)
        if (it->prob > 0.0) {
          chosen = &*it;
          break;
        }
  }
  return {chosen->next, chosen->reward, mdp.is_terminal(chosen->next)};
}

inline StateId sample_initial(Rng &rng, const TabularMdp &mdp) {
  const auto &init = mdp.initial();
  const double u = rng.uniform();
  double acc = 0.0;
  StateId last = 0;
  for (StateId s = 0; s < init.size(); ++s) {
    if (init[s] <= 0.0) continue;
    acc += init[s];
    last = s;
    if (u < acc) return s;
  }
  return last;
}

/// Copy of mdp with a different discount.
inline TabularMdp with_discount(TabularMdp mdp, double gamma) {
  mdp.set_discount(gamma);
  return mdp;
}

} // namespace lispr
