#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "lispr/mdp.hpp"
#include "lispr/policy.hpp"
#include "lispr/rng.hpp"
#include "lispr/tables.hpp"

namespace lispr {

/// Linear epsilon decay from `initial` to `final_rate` over `max_steps`.
struct EpsilonSchedule {
  double initial = 1.0;
  double final_rate = 0.1;
  std::size_t max_steps = 0;
};

inline double anneal(const EpsilonSchedule &sched, std::size_t step) {
  if (sched.max_steps == 0 || step >= sched.max_steps) return sched.final_rate;
  const double frac = static_cast<double>(step) / static_cast<double>(sched.max_steps);
  return std::max(sched.final_rate, sched.initial + (sched.final_rate - sched.initial) * frac);
}

/// True iff a attains the row maximum (exact comparison).
inline bool in_greedy_set(const QTable &q, StateId s, ActionId a) { return q(s, a) == q.max(s); }

/// argmax_a q(s, a); ties broken uniformly. A unique maximum consumes no draw.
inline ActionId greedy_action(const QTable &q, StateId s, Rng &rng) {
  const auto row = q.row(s);
  double best = row[0];
  std::size_t count = 1;
  for (std::size_t a = 1; a < row.size(); ++a) {
    if (row[a] > best) {
      best = row[a];
      count = 1;
    } else if (row[a] == best) {
      ++count;
    }
  }
  if (count == 1) return static_cast<ActionId>(std::find(row.begin(), row.end(), best) - row.begin());
  std::size_t pick = rng.uniform_int(count);
  for (std::size_t a = 0; a < row.size(); ++a)
    if (row[a] == best && pick-- == 0) return a;
  return 0;
}

struct EpsilonGreedyChoice {
  ActionId action;
  bool was_greedy;
};

/// Draw order: one uniform for the explore test, then the action draw.
inline EpsilonGreedyChoice epsilon_greedy(const QTable &q, StateId s, double epsilon, Rng &rng) {
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("epsilon_greedy: epsilon outside [0,1]");
  if (rng.uniform() < epsilon) {
    const auto a = static_cast<ActionId>(rng.uniform_int(q.num_actions()));
    return {a, in_greedy_set(q, s, a)};
  }
  return {greedy_action(q, s, rng), true};
}

/**
 * Watkins Q(lambda) step with replacing traces.
 *
 *   e = 0 if a was not greedy at s
 *   delta = r + c * max_a q(s', a) - q(s, a)
 *   e(s, a) = 1;  q += alpha * delta * e;  e *= c * lambda
 *
 * The cut comes before the update so an exploratory action's error never
 * reaches the pairs that preceded it.
 */
inline void q_lambda_update(QTable &q, EligibilityTrace &e, const TransitionRecord &t, double alpha, double lambda,
                            bool was_greedy) {
  if (!was_greedy) e.clear();
  const double target = t.r + (t.continuation != 0.0 ? t.continuation * q.max(t.next) : 0.0);
  const double delta = target - q(t.s, t.a);
  e.replace(t.s, t.a);
  if (alpha != 0.0 && delta != 0.0) {
    auto &values = q.values();
    const double step = alpha * delta;
    for (auto idx : e.active()) values[idx] += step * e.at_index(idx);
  }
  e.scale(t.continuation * lambda);
}

/**
 * Off-policy TD(0) for the success predictor:
 *   a_hat ~ mu(s'),  delta = g(s,a) - (r + c * g(s', a_hat)),  g(s,a) -= alpha * delta
 */
inline void g_td_update(GTable &g, const TransitionRecord &t, const SourcePolicy &mu, double alpha, Rng &rng) {
  const ActionId a_hat = mu.sample(t.next, rng);
  const double target = t.r + (t.continuation != 0.0 ? t.continuation * g(t.next, a_hat) : 0.0);
  const double delta = g(t.s, t.a) - target;
  g(t.s, t.a) -= alpha * delta;
}

/// On-policy TD(0) estimate of the behavior policy's value.
inline void v_behavior_update(VTable &v, const TransitionRecord &t, double alpha) {
  const double target = t.r + (t.continuation != 0.0 ? t.continuation * v(t.next) : 0.0);
  v(t.s) += alpha * (target - v(t.s));
}

/// Per-state view G(s) = E_{a~mu(s)} g(s, a).
inline double success(const GTable &g, const SourcePolicy &mu, StateId s) { return mu.expectation(s, g.row(s)); }

} // namespace lispr
