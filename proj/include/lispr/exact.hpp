#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "lispr/mdp.hpp"
#include "lispr/policy.hpp"

namespace lispr {

/// Exact state and action values with the solve residual.
struct ExactValues {
  std::vector<double> v;
  std::vector<double> q; // [s * num_actions + a]
  std::size_t num_actions = 0;
  double residual = 0.0;

  double q_at(StateId s, ActionId a) const { return q[s * num_actions + a]; }
};

/// Reward and continuation factor attached to one (s, a, s') transition.
struct TransitionLabel {
  double reward;
  double continuation;
};

/// Standard labelling: target reward, continuation gamma.
inline auto standard_label(const TabularMdp &mdp) {
  const double gamma = mdp.discount();
  return [gamma](StateId, ActionId, const Outcome &o) { return TransitionLabel{o.reward, gamma}; };
}

namespace detail {

template <class LabelFn>
std::vector<double> action_values(const TabularMdp &mdp, const std::vector<double> &v, LabelFn &&label) {
  const std::size_t n = mdp.num_states(), na = mdp.num_actions();
  std::vector<double> q(n * na, 0.0);
  for (StateId s = 0; s < n; ++s) {
    if (mdp.is_terminal(s)) continue;
    for (ActionId a = 0; a < na; ++a) {
      double acc = 0.0;
      for (const auto &o : mdp.outcomes(s, a)) {
        const auto l = label(s, a, o);
        acc += o.prob * (l.reward + (mdp.is_terminal(o.next) ? 0.0 : l.continuation * v[o.next]));
      }
      q[s * na + a] = acc;
    }
  }
  return q;
}

inline double tie_tolerance(double x) { return 1e-12 * (1.0 + std::abs(x)); }

} // namespace detail

inline constexpr double kLinearResidualTarget = 1e-12;

/**
 * Solves V(s) = sum_a pi(a|s) sum_s' P(s'|s,a) [R + C V(s')] exactly, with
 * (R, C) = label(s, a, outcome). Terminal states are pinned to 0. Uses a
 * sparse LU factorization followed by iterative refinement.
 */
template <class LabelFn>
ExactValues evaluate_labeled(const TabularMdp &mdp, const Policy &pi, LabelFn &&label) {
  const std::size_t n = mdp.num_states(), na = mdp.num_actions();
  if (pi.num_states() != n || pi.num_actions() != na) throw std::invalid_argument("evaluate: policy shape mismatch");
  std::vector<long> index(n, -1);
  std::vector<StateId> states;
  for (StateId s = 0; s < n; ++s)
    if (!mdp.is_terminal(s)) {
      index[s] = static_cast<long>(states.size());
      states.push_back(s);
    }
  const long m = static_cast<long>(states.size());
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  for (long i = 0; i < m; ++i) {
    const StateId s = states[static_cast<std::size_t>(i)];
    triplets.emplace_back(i, i, 1.0);
    for (ActionId a = 0; a < na; ++a) {
      const double pa = pi.prob(s, a);
      if (pa == 0.0) continue;
      for (const auto &o : mdp.outcomes(s, a)) {
        const auto l = label(s, a, o);
        b[i] += pa * o.prob * l.reward;
        if (index[o.next] >= 0 && l.continuation != 0.0)
          triplets.emplace_back(i, index[o.next], -pa * o.prob * l.continuation);
      }
    }
  }
  Eigen::SparseMatrix<double> A(m, m);
  A.setFromTriplets(triplets.begin(), triplets.end());
  A.makeCompressed();

  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
  double residual = 0.0;
  if (m > 0) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    if (lu.info() != Eigen::Success) throw std::runtime_error("evaluate: singular system (improper policy?)");
    x = lu.solve(b);
    if (lu.info() != Eigen::Success || !x.allFinite()) throw std::runtime_error("evaluate: linear solve failed");
    Eigen::VectorXd r = b - A * x;
    residual = r.cwiseAbs().maxCoeff();
    for (int it = 0; it < 5 && residual > kLinearResidualTarget; ++it) {
      x += lu.solve(r);
      r = b - A * x;
      residual = r.cwiseAbs().maxCoeff();
    }
  }
  ExactValues out;
  out.num_actions = na;
  out.v.assign(n, 0.0);
  for (long i = 0; i < m; ++i) out.v[states[static_cast<std::size_t>(i)]] = x[i];
  out.q = detail::action_values(mdp, out.v, label);
  out.residual = residual;
  return out;
}

inline ExactValues policy_evaluation_exact(const TabularMdp &mdp, const Policy &pi) {
  return evaluate_labeled(mdp, pi, standard_label(mdp));
}

/// Lowest action id among those within round-off of the maximum.
inline Policy greedy_from_q(const std::vector<double> &q, std::size_t num_states, std::size_t num_actions) {
  std::vector<ActionId> actions(num_states, 0);
  for (StateId s = 0; s < num_states; ++s) {
    double best = q[s * num_actions];
    for (ActionId a = 1; a < num_actions; ++a) best = std::max(best, q[s * num_actions + a]);
    for (ActionId a = 0; a < num_actions; ++a)
      if (q[s * num_actions + a] >= best - detail::tie_tolerance(best)) {
        actions[s] = a;
        break;
      }
  }
  return Policy::deterministic(num_actions, actions);
}

struct OptimalSolution {
  ExactValues values;
  Policy policy;
};

/**
 * Optimal control under a labelling. Value iteration to `tol`, then policy
 * iteration with exact evaluations until the greedy policy is stable; the
 * returned values are the exact values of the returned greedy policy
 * (lowest-id tie-break) and residual is the Bellman optimality residual.
 */
template <class LabelFn>
OptimalSolution optimal_labeled(const TabularMdp &mdp, LabelFn &&label, double tol = 1e-10) {
  const std::size_t n = mdp.num_states(), na = mdp.num_actions();
  std::vector<double> v(n, 0.0);
  for (int it = 0; it < 100000; ++it) {
    const auto q = detail::action_values(mdp, v, label);
    double change = 0.0;
    for (StateId s = 0; s < n; ++s) {
      if (mdp.is_terminal(s)) continue;
      double best = q[s * na];
      for (ActionId a = 1; a < na; ++a) best = std::max(best, q[s * na + a]);
      change = std::max(change, std::abs(best - v[s]));
      v[s] = best;
    }
    if (change < tol) break;
  }
  Policy policy = greedy_from_q(detail::action_values(mdp, v, label), n, na);
  ExactValues values;
  for (int it = 0; it < 1000; ++it) {
    values = evaluate_labeled(mdp, policy, label);
    std::vector<ActionId> next(n);
    bool stable = true;
    for (StateId s = 0; s < n; ++s) {
      const ActionId cur = policy.action(s);
      double best = values.q_at(s, 0);
      for (ActionId a = 1; a < na; ++a) best = std::max(best, values.q_at(s, a));
      const double cutoff = best - detail::tie_tolerance(best);
      if (values.q_at(s, cur) >= cutoff) {
        next[s] = cur;
        continue;
      }
      for (ActionId a = 0; a < na; ++a)
        if (values.q_at(s, a) >= cutoff) {
          next[s] = a;
          break;
        }
      stable = false;
    }
    if (stable) break;
    policy = Policy::deterministic(na, next);
  }
  policy = greedy_from_q(values.q, n, na);
  double bellman = 0.0;
  for (StateId s = 0; s < n; ++s) {
    if (mdp.is_terminal(s)) continue;
    double best = values.q_at(s, 0);
    for (ActionId a = 1; a < na; ++a) best = std::max(best, values.q_at(s, a));
    bellman = std::max(bellman, std::abs(best - values.v[s]));
  }
  values.residual = bellman;
  return {std::move(values), std::move(policy)};
}

/// Optimal values and the lowest-id greedy policy of the target MDP.
inline OptimalSolution value_iteration(const TabularMdp &mdp, double tol = 1e-10) {
  if (mdp.discount() >= 1.0) throw std::invalid_argument("value_iteration: requires gamma < 1");
  return optimal_labeled(mdp, standard_label(mdp), tol);
}

/// Exact success predictor G of mu: V is G(s), Q is G(s, a).
inline ExactValues compute_G_exact(const TabularMdp &mdp, const SourcePolicy &mu) {
  return policy_evaluation_exact(mdp, mu);
}

/**
 * Recovery labelling for initiation set L: entering a non-terminal s' in L
 * pays r + gamma G(s') and stops; entering a terminal stops with r.
 * Evaluating with this labelling gives V^R off L, and at s in L the value
 * of starting the recovery option there.
 */
inline auto recovery_label(const TabularMdp &mdp, const std::vector<bool> &in_l, const std::vector<double> &g_state) {
  const double gamma = mdp.discount();
  return [&mdp, &in_l, &g_state, gamma](StateId, ActionId, const Outcome &o) {
    if (mdp.is_terminal(o.next)) return TransitionLabel{o.reward, 0.0};
    if (in_l[o.next]) return TransitionLabel{o.reward + gamma * g_state[o.next], 0.0};
    return TransitionLabel{o.reward, gamma};
  };
}

/**
 * Recovery MDP: states of L become absorbing terminals and transitions into
 * them carry r + gamma G(s'). The initial distribution is restricted to
 * S \ L and renormalized (all zero when S \ L is empty).
 */
inline TabularMdp build_recovery_mdp(const TabularMdp &mdp, const std::vector<bool> &in_l,
                                     const std::vector<double> &g_state) {
  TabularMdp out(mdp.num_states(), mdp.num_actions(), mdp.discount());
  out.set_episodic_proper(mdp.episodic_proper());
  const double gamma = mdp.discount();
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      std::vector<Outcome> row;
      for (const auto &o : mdp.outcomes(s, a)) {
        double r = o.reward;
        if (in_l[o.next] && !mdp.is_terminal(o.next)) r += gamma * g_state[o.next];
        row.push_back({o.next, o.prob, r});
      }
      out.set_outcomes(s, a, std::move(row));
    }
  }
  std::vector<double> init(mdp.num_states(), 0.0);
  double mass = 0.0;
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    if (mdp.is_terminal(s)) out.set_terminal(s);
    if (in_l[s]) {
      out.set_terminal(s);
      continue;
    }
    init[s] = mdp.initial()[s];
    mass += init[s];
  }
  if (mass > 0.0)
    for (auto &p : init) p /= mass;
  out.set_initial(std::move(init));
  return out;
}

/// Stationary switched policy: mu on L, learner off L (reversed when anti).
inline Policy switched_policy(const SourcePolicy &mu, const Policy &learner, const std::vector<bool> &in_l,
                             bool anti = false) {
  Policy pi(mu.num_states(), mu.num_actions());
  for (StateId s = 0; s < mu.num_states(); ++s) {
    const bool use_mu = in_l[s] != anti;
    pi.set_distribution(s, use_mu ? mu.row(s) : learner.row(s));
  }
  return pi;
}

/// Exact value of the main policy (or the anti-main policy).
inline ExactValues evaluate_main_exact(const TabularMdp &mdp, const SourcePolicy &mu, const Policy &learner,
                                       const std::vector<bool> &in_l, bool anti = false) {
  return policy_evaluation_exact(mdp, switched_policy(mu, learner, in_l, anti));
}

/// Discounted reward over the first T steps of the unique trajectory from s.
inline double finite_horizon_value(const TabularMdp &mdp, const Policy &pi, StateId s, std::size_t horizon) {
  double total = 0.0, discount = 1.0;
  for (std::size_t i = 0; i < horizon; ++i) {
    if (mdp.is_terminal(s)) break;
    if (!pi.is_deterministic_at(s)) throw std::invalid_argument("finite_horizon_value: stochastic policy");
    const auto row = mdp.outcomes(s, pi.action(s));
    if (row.size() != 1) throw std::invalid_argument("finite_horizon_value: stochastic MDP");
    total += discount * row[0].reward;
    discount *= mdp.discount();
    s = row[0].next;
  }
  return total;
}

/// State reached after T steps of the unique trajectory from s.
inline StateId finite_horizon_state(const TabularMdp &mdp, const Policy &pi, StateId s, std::size_t horizon) {
  for (std::size_t i = 0; i < horizon && !mdp.is_terminal(s); ++i) s = mdp.outcomes(s, pi.action(s))[0].next;
  return s;
}

} // namespace lispr
