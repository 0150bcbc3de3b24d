#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lispr/learning.hpp"
#include "lispr/lispr.hpp"
#include "lispr/mdp.hpp"
#include "lispr/policy.hpp"
#include "lispr/proxy.hpp"
#include "lispr/rng.hpp"
#include "lispr/tables.hpp"

namespace lispr {

enum class Algorithm { BaselineQ, LisprRecovery, LisprStudent };

inline std::string to_string(Algorithm a) {
  switch (a) {
  case Algorithm::BaselineQ: return "baseline-q";
  case Algorithm::LisprRecovery: return "lispr-recovery";
  case Algorithm::LisprStudent: return "lispr-student";
  }
  return "?";
}

inline Algorithm algorithm_from_string(const std::string &s) {
  if (s == "baseline-q") return Algorithm::BaselineQ;
  if (s == "lispr-recovery") return Algorithm::LisprRecovery;
  if (s == "lispr-student") return Algorithm::LisprStudent;
  throw std::invalid_argument("unknown algorithm: " + s);
}

struct TrainConfig {
  Algorithm algorithm = Algorithm::BaselineQ;
  ProxyKind proxy = ProxyKind::Oracle;
  RelabelMode relabel = RelabelMode::Definition;
  double alpha = 0.1;
  double lambda = 0.0;
  double epsilon_initial = 1.0;
  double epsilon_final = 0.1;
  /// Steps over which epsilon anneals; 0 means max_steps.
  std::size_t epsilon_anneal_steps = 0;
  double main_epsilon = 0.25;
  /// Step sizes of the success predictor and behavior value; negative means alpha.
  double g_alpha = -1.0;
  double v_alpha = -1.0;
  std::size_t max_steps = 0;
  std::size_t eval_every = 1000;
  std::size_t eval_episodes = 10;
  std::size_t episode_cap = 500;
  std::size_t warmup_primal_steps = 0;
  ThresholdSpec threshold;
};

struct EvalResult {
  double mean_return = 0.0;
  double success_rate = 0.0;
};

struct CurvePoint {
  std::size_t step = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  QTable q;
  GTable g;
  VTable v;
};

/// Everything a run learns. The primal option owns mu, g and the threshold.
struct AgentState {
  PrimalOption primal;
  QTable q;
  VTable v;
};

inline LearnerTables learner_tables(const AgentState &agent, Algorithm algorithm) {
  LearnerTables t;
  t.behavior_v = &agent.v;
  if (algorithm == Algorithm::LisprRecovery) t.recovery_q = &agent.q;
  if (algorithm == Algorithm::LisprStudent) t.student_q = &agent.q;
  return t;
}

inline void validate(const TrainConfig &cfg) {
  auto rate = [](double x, const char *name) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument(std::string(name) + " outside [0,1]");
  };
  rate(cfg.alpha, "alpha");
  rate(cfg.lambda, "lambda");
  rate(cfg.epsilon_initial, "epsilon_initial");
  rate(cfg.epsilon_final, "epsilon_final");
  rate(cfg.main_epsilon, "main_epsilon");
  if (cfg.g_alpha >= 0.0) rate(cfg.g_alpha, "g_alpha");
  if (cfg.v_alpha >= 0.0) rate(cfg.v_alpha, "v_alpha");
  if (cfg.eval_every == 0) throw std::invalid_argument("eval_every must be positive");
  if (cfg.eval_episodes == 0) throw std::invalid_argument("eval_episodes must be positive");
  if (cfg.episode_cap == 0) throw std::invalid_argument("episode_cap must be positive");
  if (!(cfg.threshold.tolerance >= 0.0)) throw std::invalid_argument("threshold tolerance must be non-negative");
  if (cfg.threshold.kind == ThresholdKind::RecoveryValue && cfg.algorithm != Algorithm::LisprRecovery)
    throw std::invalid_argument("recovery-value threshold requires lispr-recovery");
  if (cfg.threshold.kind == ThresholdKind::StudentValue && cfg.algorithm != Algorithm::LisprStudent)
    throw std::invalid_argument("student-value threshold requires lispr-student");
  if (cfg.algorithm != Algorithm::LisprRecovery && cfg.proxy != ProxyKind::Oracle)
    throw std::invalid_argument("proxy rewards apply to lispr-recovery only");
}

/**
 * Test episodes of the greedy main policy (greedy learner for the baseline).
 * Reads the tables only. Returns are undiscounted.
 */
inline EvalResult evaluate_greedy(const TabularMdp &mdp, const AgentState &agent, const TrainConfig &cfg, Rng &rng) {
  const bool lispr = cfg.algorithm != Algorithm::BaselineQ;
  const auto tables = learner_tables(agent, cfg.algorithm);
  EvalResult out;
  for (std::size_t ep = 0; ep < cfg.eval_episodes; ++ep) {
    StateId s = sample_initial(rng, mdp);
    double ret = 0.0;
    bool done = false;
    for (std::size_t t = 0; t < cfg.episode_cap && !done; ++t) {
      const bool primal = lispr && main_select(agent.primal, s, tables).chosen == OptionKind::Primal;
      const ActionId a = primal ? agent.primal.mu.sample(s, rng) : greedy_action(agent.q, s, rng);
      const auto r = step(rng, mdp, s, a);
      ret += r.reward;
      done = r.done;
      s = r.next;
    }
    out.mean_return += ret;
    out.success_rate += done ? 1.0 : 0.0;
  }
  out.mean_return /= static_cast<double>(cfg.eval_episodes);
  out.success_rate /= static_cast<double>(cfg.eval_episodes);
  return out;
}

namespace detail {
inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kEvalStream = 2;
inline constexpr std::uint64_t kWarmupStream = 3;
} // namespace detail

/// Primal-only episodes that update g (and the behavior value) before training.
inline void warmup_primal(const TabularMdp &mdp, AgentState &agent, const TrainConfig &cfg, double g_alpha,
                          double v_alpha, Rng &rng) {
  StateId s = sample_initial(rng, mdp);
  std::size_t ep_len = 0;
  for (std::size_t i = 0; i < cfg.warmup_primal_steps; ++i) {
    const ActionId a = agent.primal.mu.sample(s, rng);
    const auto r = step(rng, mdp, s, a);
    const TransitionRecord t{s, OptionKind::Primal, a, r.reward, r.done ? 0.0 : mdp.discount(), r.next};
    g_td_update(agent.primal.g, t, agent.primal.mu, g_alpha, rng);
    v_behavior_update(agent.v, t, v_alpha);
    if (r.done || ++ep_len >= cfg.episode_cap) {
      s = sample_initial(rng, mdp);
      ep_len = 0;
    } else {
      s = r.next;
    }
  }
}

/**
 * One seeded training run of the baseline learner or a LISPR learner.
 *
 * Per step the draws happen in a fixed order: learner epsilon-greedy,
 * option exploration, mu's action, environment, then the a_hat draw of the
 * g update. Every transition updates g, the behavior value and the learner
 * (recovery learners see relabelled rewards). Episodes end at a terminal or
 * after episode_cap steps; a capped episode still bootstraps. Evaluation
 * runs at step 0, every eval_every steps and at max_steps, on its own
 * derived seeds.
 */
inline TrainResult train(const TabularMdp &mdp, const SourcePolicy *mu, const TrainConfig &cfg, std::uint64_t seed) {
  validate(cfg);
  const bool lispr = cfg.algorithm != Algorithm::BaselineQ;
  if (lispr && !mu) throw std::invalid_argument("train: LISPR algorithms need a source policy");
  const std::size_t n = mdp.num_states(), na = mdp.num_actions();
  if (mu && (mu->num_states() != n || mu->num_actions() != na))
    throw std::invalid_argument("train: source policy shape mismatch");
  const double gamma = mdp.discount();
  const double g_alpha = cfg.g_alpha >= 0.0 ? cfg.g_alpha : cfg.alpha;
  const double v_alpha = cfg.v_alpha >= 0.0 ? cfg.v_alpha : cfg.alpha;

  AgentState agent{PrimalOption{mu ? *mu : Policy::uniform(n, na), GTable(n, na), cfg.threshold}, QTable(n, na),
                   VTable(n)};
  const auto tables = learner_tables(agent, cfg.algorithm);
  EligibilityTrace trace(n, na);
  Rng rng(derive_seed(seed, detail::kTrainStream));
  const std::uint64_t eval_base = derive_seed(seed, detail::kEvalStream);
  const EpsilonSchedule schedule{cfg.epsilon_initial, cfg.epsilon_final,
                                 cfg.epsilon_anneal_steps ? cfg.epsilon_anneal_steps : cfg.max_steps};

  if (lispr && cfg.warmup_primal_steps > 0) {
    Rng warm(derive_seed(seed, detail::kWarmupStream));
    warmup_primal(mdp, agent, cfg, g_alpha, v_alpha, warm);
  }

  TrainResult result;
  std::size_t eval_index = 0;
  auto record = [&](std::size_t at) {
    Rng eval_rng(derive_seed(eval_base, eval_index++));
    const auto e = evaluate_greedy(mdp, agent, cfg, eval_rng);
    result.curve.push_back({at, e.mean_return, e.success_rate});
  };
  record(0);

  StateId s = sample_initial(rng, mdp);
  std::size_t ep_len = 0;
  for (std::size_t i = 0; i < cfg.max_steps; ++i) {
    const double eps = anneal(schedule, i);
    const auto choice = epsilon_greedy(agent.q, s, eps, rng);
    OptionKind option = OptionKind::Learner;
    if (lispr) option = main_select_explore(agent.primal, s, cfg.main_epsilon, rng, tables).chosen;
    ActionId a = choice.action;
    bool was_greedy = choice.was_greedy;
    if (option == OptionKind::Primal) {
      a = agent.primal.mu.sample(s, rng);
      was_greedy = in_greedy_set(agent.q, s, a);
    }
    const auto r = step(rng, mdp, s, a);
    const TransitionRecord t{s, option, a, r.reward, r.done ? 0.0 : gamma, r.next};

    if (lispr) {
      g_td_update(agent.primal.g, t, agent.primal.mu, g_alpha, rng);
      v_behavior_update(agent.v, t, v_alpha);
    }
    if (cfg.algorithm == Algorithm::LisprRecovery) {
      TransitionRecord learner_t = t;
      if (cfg.proxy == ProxyKind::Oracle) {
        learner_t = relabel_recovery(t, agent.primal, tables, cfg.relabel);
      } else {
        const auto label = proxy_label(cfg.proxy, t, agent.primal, tables, gamma);
        learner_t.r = label.reward;
        learner_t.continuation = label.continuation;
      }
      q_lambda_update(agent.q, trace, learner_t, cfg.alpha, cfg.lambda, was_greedy);
    } else {
      q_lambda_update(agent.q, trace, t, cfg.alpha, cfg.lambda, was_greedy);
    }

    if (r.done || ++ep_len >= cfg.episode_cap) {
      s = sample_initial(rng, mdp);
      ep_len = 0;
      trace.clear();
    } else {
      s = r.next;
    }
    const std::size_t done_steps = i + 1;
    if (done_steps % cfg.eval_every == 0 || done_steps == cfg.max_steps) record(done_steps);
  }
  result.q = std::move(agent.q);
  result.g = std::move(agent.primal.g);
  result.v = std::move(agent.v);
  return result;
}

} // namespace lispr
