#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "lispr/learning.hpp"
#include "lispr/mdp.hpp"
#include "lispr/policy.hpp"
#include "lispr/rng.hpp"
#include "lispr/tables.hpp"

namespace lispr {

enum class ThresholdKind { Constant, RecoveryValue, StudentValue, BehaviorValue };

/// Baseline threshold tau(s) plus the equality tolerance of the membership test.
struct ThresholdSpec {
  ThresholdKind kind = ThresholdKind::Constant;
  double constant = 0.0;
  double tolerance = 0.0;

  static ThresholdSpec constant_at(double lambda, double tol = 0.0) {
    return {ThresholdKind::Constant, lambda, tol};
  }
  static ThresholdSpec of(ThresholdKind kind, double tol = 0.0) { return {kind, 0.0, tol}; }
};

/// Non-owning view of the learner tables a threshold may read.
struct LearnerTables {
  const QTable *recovery_q = nullptr;
  const QTable *student_q = nullptr;
  const VTable *behavior_v = nullptr;
};

/// Source policy, its success predictor and the threshold defining L.
struct PrimalOption {
  SourcePolicy mu;
  GTable g;
  ThresholdSpec threshold;

  double success_at(StateId s) const { return success(g, mu, s); }
};

struct MainDecision {
  OptionKind chosen = OptionKind::Learner;
  bool explored = false;
};

inline double threshold_value(const ThresholdSpec &spec, StateId s, const LearnerTables &tables) {
  switch (spec.kind) {
  case ThresholdKind::Constant: return spec.constant;
  case ThresholdKind::RecoveryValue:
    if (!tables.recovery_q) throw std::invalid_argument("threshold_value: RecoveryValue needs a recovery Q table");
    return tables.recovery_q->max(s);
  case ThresholdKind::StudentValue:
    if (!tables.student_q) throw std::invalid_argument("threshold_value: StudentValue needs a student Q table");
    return tables.student_q->max(s);
  case ThresholdKind::BehaviorValue:
    if (!tables.behavior_v) throw std::invalid_argument("threshold_value: BehaviorValue needs a behavior V table");
    return (*tables.behavior_v)(s);
  }
  throw std::logic_error("threshold_value: unknown kind");
}

/// s in L iff G(s) >= tau(s) - tolerance (inclusive).
inline bool in_initiation_set(const PrimalOption &p, StateId s, const LearnerTables &tables) {
  return p.success_at(s) >= threshold_value(p.threshold, s, tables) - p.threshold.tolerance;
}

/// Primal termination: 1 outside L or at a terminal state.
inline int primal_beta(const PrimalOption &p, StateId s, bool terminal, const LearnerTables &tables) {
  return (terminal || !in_initiation_set(p, s, tables)) ? 1 : 0;
}

inline MainDecision main_select(const PrimalOption &p, StateId s, const LearnerTables &tables) {
  return {in_initiation_set(p, s, tables) ? OptionKind::Primal : OptionKind::Learner, false};
}

/// With probability epsilon a uniformly random option (one draw for the test, one for the pick).
inline MainDecision main_select_explore(const PrimalOption &p, StateId s, double epsilon, Rng &rng,
                                        const LearnerTables &tables) {
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("main_select_explore: epsilon outside [0,1]");
  if (rng.uniform() < epsilon)
    return {rng.uniform_int(2) == 0 ? OptionKind::Primal : OptionKind::Learner, true};
  return main_select(p, s, tables);
}

struct RecoveryLabel {
  double reward;
  double continuation;
};

/**
 * Recovery reward and continuation for one transition.
 *
 * Entering L at a non-terminal s' pays r + gamma * G(s') and ends the
 * recovery option; a terminal s' ends it with r. Otherwise unchanged.
 * gamma is read from the record (continuation is gamma iff s' is not
 * terminal).
 */
inline RecoveryLabel recovery_reward(const TransitionRecord &t, const PrimalOption &p, const LearnerTables &tables) {
  if (t.continuation == 0.0) return {t.r, 0.0};
  if (in_initiation_set(p, t.next, tables)) return {t.r + t.continuation * p.success_at(t.next), 0.0};
  return {t.r, t.continuation};
}

enum class RelabelMode {
  /// Recovery reward from the current G (definition of the recovery option).
  Definition,
  /// Printed minibatch rule: where main picks the learner at s', c = 0 and r = G(s, a).
  AlgorithmLiteral
};

inline TransitionRecord relabel_recovery(const TransitionRecord &t, const PrimalOption &p,
                                         const LearnerTables &tables, RelabelMode mode = RelabelMode::Definition) {
  TransitionRecord out = t;
  if (mode == RelabelMode::Definition) {
    const auto label = recovery_reward(t, p, tables);
    out.r = label.reward;
    out.continuation = label.continuation;
  } else if (main_select(p, t.next, tables).chosen == OptionKind::Learner) {
    out.continuation = 0.0;
    out.r = p.g(t.s, t.a);
  }
  return out;
}

/// Relabels records with the current g; stored rewards are never reused.
inline std::vector<TransitionRecord> relabel_recovery_batch(const std::vector<TransitionRecord> &batch,
                                                            const PrimalOption &p, const LearnerTables &tables,
                                                            RelabelMode mode = RelabelMode::Definition) {
  std::vector<TransitionRecord> out;
  out.reserve(batch.size());
  for (const auto &t : batch) out.push_back(relabel_recovery(t, p, tables, mode));
  return out;
}

inline std::string to_string(ThresholdKind k) {
  switch (k) {
  case ThresholdKind::Constant: return "constant";
  case ThresholdKind::RecoveryValue: return "recovery-value";
  case ThresholdKind::StudentValue: return "student-value";
  case ThresholdKind::BehaviorValue: return "behavior-value";
  }
  return "?";
}

inline ThresholdKind threshold_kind_from_string(const std::string &s) {
  if (s == "constant") return ThresholdKind::Constant;
  if (s == "recovery-value") return ThresholdKind::RecoveryValue;
  if (s == "student-value") return ThresholdKind::StudentValue;
  if (s == "behavior-value") return ThresholdKind::BehaviorValue;
  throw std::invalid_argument("unknown threshold kind: " + s);
}

} // namespace lispr
