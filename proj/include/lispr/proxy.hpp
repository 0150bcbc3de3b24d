#pragma once

#include <stdexcept>
#include <string>

#include "lispr/lispr.hpp"

namespace lispr {

/// Recovery reward built from G alone; Oracle is the exact recovery reward.
enum class ProxyKind { Oracle, Diff, ScaledG, ScaledNextG, Indicator };

/// zeta(s') = gamma * (1 - beta(s')): zero where the recovery option stops.
inline double continuation_zeta(bool in_l, bool terminal, double gamma) {
  return (in_l || terminal) ? 0.0 : gamma;
}

/**
 * Surrogate reward for transition t.
 *
 *   Diff        G(s,a) - zeta * G(s')
 *   ScaledG     (1 - zeta) * G(s,a)
 *   ScaledNextG (1 - zeta) * G(s')
 *   Indicator   [s' in L]
 *
 * Oracle is not a G-only proxy; use recovery_reward for it.
 */
inline double proxy_reward(ProxyKind kind, const TransitionRecord &t, const GTable &g, const SourcePolicy &mu,
                           bool in_l, bool terminal, double gamma) {
  const double zeta = continuation_zeta(in_l, terminal, gamma);
  switch (kind) {
  case ProxyKind::Diff: return g(t.s, t.a) - zeta * success(g, mu, t.next);
  case ProxyKind::ScaledG: return (1.0 - zeta) * g(t.s, t.a);
  case ProxyKind::ScaledNextG: return (1.0 - zeta) * success(g, mu, t.next);
  case ProxyKind::Indicator: return in_l ? 1.0 : 0.0;
  case ProxyKind::Oracle: break;
  }
  throw std::invalid_argument("proxy_reward: Oracle has no G-only form");
}

/// Recovery label under any proxy kind. Terminal s' is read from t.continuation == 0.
inline RecoveryLabel proxy_label(ProxyKind kind, const TransitionRecord &t, const PrimalOption &p,
                                 const LearnerTables &tables, double gamma) {
  if (kind == ProxyKind::Oracle) return recovery_reward(t, p, tables);
  const bool terminal = t.continuation == 0.0;
  const bool in_l = in_initiation_set(p, t.next, tables);
  return {proxy_reward(kind, t, p.g, p.mu, in_l, terminal, gamma), continuation_zeta(in_l, terminal, gamma)};
}

inline std::string to_string(ProxyKind k) {
  switch (k) {
  case ProxyKind::Oracle: return "oracle";
  case ProxyKind::Diff: return "diff";
  case ProxyKind::ScaledG: return "scaled-g";
  case ProxyKind::ScaledNextG: return "scaled-next-g";
  case ProxyKind::Indicator: return "indicator";
  }
  return "?";
}

inline ProxyKind proxy_kind_from_string(const std::string &s) {
  if (s == "oracle") return ProxyKind::Oracle;
  if (s == "diff") return ProxyKind::Diff;
  if (s == "scaled-g") return ProxyKind::ScaledG;
  if (s == "scaled-next-g") return ProxyKind::ScaledNextG;
  if (s == "indicator") return ProxyKind::Indicator;
  throw std::invalid_argument("unknown proxy kind: " + s);
}

} // namespace lispr
