#include <gtest/gtest.h>

#include <cmath>
#include <deque>

#include "lispr/exact.hpp"
#include "lispr/gridworld.hpp"
#include "lispr/verify.hpp"

using namespace lispr;

namespace {

// Reverse BFS over positive-probability edges; steps to reach a terminal.
std::vector<int> steps_to_terminal(const TabularMdp &mdp) {
  const std::size_t n = mdp.num_states();
  std::vector<std::vector<StateId>> preds(n);
  for (StateId s = 0; s < n; ++s) {
    if (mdp.is_terminal(s)) continue;
    for (ActionId a = 0; a < mdp.num_actions(); ++a)
      for (const auto &o : mdp.outcomes(s, a))
        if (o.prob > 0.0) preds[o.next].push_back(s);
  }
  std::vector<int> dist(n, -1);
  std::deque<StateId> queue;
  for (StateId s = 0; s < n; ++s)
    if (mdp.is_terminal(s)) {
      dist[s] = 0;
      queue.push_back(s);
    }
  while (!queue.empty()) {
    const StateId s = queue.front();
    queue.pop_front();
    for (StateId p : preds[s])
      if (dist[p] < 0) {
        dist[p] = dist[s] + 1;
        queue.push_back(p);
      }
  }
  return dist;
}

double monte_carlo_value(const TabularMdp &mdp, const Policy &pi, StateId start, int episodes, std::size_t horizon,
                         Rng &rng) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    StateId s = start;
    double disc = 1.0;
    for (std::size_t t = 0; t < horizon && !mdp.is_terminal(s); ++t) {
      const auto out = step(rng, mdp, s, pi.sample(s, rng));
      total += disc * out.reward;
      disc *= mdp.discount();
      s = out.next;
    }
  }
  return total / episodes;
}

} // namespace

TEST(PolicyEvaluation, RightwardChainIsGeometric) {
  const auto mdp = make_chain(6, 0.9);
  const auto pi = Policy::deterministic(2, std::vector<ActionId>(7, 1));
  const auto v = policy_evaluation_exact(mdp, pi);
  for (StateId s = 0; s < 6; ++s) EXPECT_NEAR(v.v[s], std::pow(0.9, 5 - s), 1e-12);
  EXPECT_EQ(v.v[6], 0.0);
  EXPECT_LE(v.residual, 1e-12);
}

TEST(PolicyEvaluation, SymmetricLoopIsGeometricSeries) {
  TabularMdp m(2, 1, 0.8);
  m.add_transition(0, 0, 1, 1.0, 0.5);
  m.add_transition(1, 0, 0, 1.0, 0.5);
  m.set_initial({1.0, 0.0});
  const auto v = policy_evaluation_exact(m, Policy::uniform(2, 1));
  EXPECT_NEAR(v.v[0], 0.5 / 0.2, 1e-12);
  EXPECT_NEAR(v.v[1], 0.5 / 0.2, 1e-12);
}

TEST(PolicyEvaluation, AgreesWithMonteCarloOnRandomMdp) {
  const auto f = random_fixture(3, 10, 3, 0.9);
  const auto pi = Policy::uniform(10, 3);
  const auto v = policy_evaluation_exact(f.mdp, pi);
  Rng rng(17);
  for (StateId s : {0, 4, 9}) EXPECT_NEAR(monte_carlo_value(f.mdp, pi, s, 20000, 250, rng), v.v[s], 0.05) << s;
}

TEST(PolicyEvaluation, QIsOneStepLookahead) {
  const auto f = fixture_slippery_chain();
  const auto v = policy_evaluation_exact(f.mdp, f.mu);
  for (StateId s = 0; s < 5; ++s)
    for (ActionId a = 0; a < 2; ++a) {
      double q = 0.0;
      for (const auto &o : f.mdp.outcomes(s, a))
        q += o.prob * (o.reward + (f.mdp.is_terminal(o.next) ? 0.0 : 0.95 * v.v[o.next]));
      EXPECT_NEAR(v.q_at(s, a), q, 1e-12);
    }
}

TEST(ValueIteration, ChainValuesFollowDistance) {
  const auto mdp = make_chain(5, 0.9);
  const auto opt = value_iteration(mdp);
  const auto dist = steps_to_terminal(mdp);
  for (StateId s = 0; s < 5; ++s) {
    EXPECT_NEAR(opt.values.v[s], std::pow(0.9, dist[s] - 1), 1e-10);
    EXPECT_EQ(opt.policy.action(s), 1u);
  }
}

TEST(ValueIteration, MultiroomValuesFollowBfsDistance) {
  const auto w = build_multiroom(GridVariant::Target);
  const auto opt = value_iteration(w.mdp);
  const auto dist = steps_to_terminal(w.mdp);
  for (StateId s = 0; s < w.meta.num_states(); ++s) {
    if (w.mdp.is_terminal(s)) continue;
    ASSERT_GT(dist[s], 0);
    EXPECT_NEAR(opt.values.v[s], std::pow(0.99, dist[s] - 1), 1e-9) << s;
  }
  EXPECT_LE(opt.values.residual, 1e-9);
}

TEST(ValueIteration, TiesGoToLowestAction) {
  TabularMdp m(2, 3, 0.9);
  for (ActionId a = 0; a < 3; ++a) m.add_transition(0, a, 1, 1.0, a == 0 ? 0.5 : 1.0);
  m.set_terminal(1);
  m.set_initial({1.0, 0.0});
  EXPECT_EQ(value_iteration(m).policy.action(0), 1u);
}

TEST(ValueIteration, RejectsUndiscounted) {
  auto m = make_chain(2, 1.0);
  m.set_episodic_proper(true);
  EXPECT_THROW(value_iteration(m), std::invalid_argument);
}

TEST(SuccessPredictor, BoundedByOptimalValue) {
  for (const auto &f : bundled_fixtures()) {
    const auto g = compute_G_exact(f.mdp, f.mu);
    const auto opt = value_iteration(f.mdp);
    for (StateId s = 0; s < f.mdp.num_states(); ++s) EXPECT_LE(g.v[s], opt.values.v[s] + 1e-10) << f.id;
  }
}

TEST(SuccessPredictor, StateValueIsExpectationOverMu) {
  const auto f = fixture_chain_suboptimal();
  const auto g = compute_G_exact(f.mdp, f.mu);
  for (StateId s = 0; s < 5; ++s) EXPECT_EQ(g.v[s] == 0.0, s < 2) << s;
  for (StateId s = 0; s < 5; ++s) EXPECT_NEAR(g.v[s], g.q_at(s, f.mu.action(s)), 1e-12);
}

TEST(RecoveryMdp, LStatesBecomeTerminalAndPaySuccess) {
  const auto f = fixture_chain_suboptimal();
  const auto g = compute_G_exact(f.mdp, f.mu);
  const auto r = build_recovery_mdp(f.mdp, f.proxy_l, g.v);
  EXPECT_TRUE(r.is_terminal(3));
  EXPECT_TRUE(r.is_terminal(4));
  EXPECT_FALSE(r.is_terminal(2));
  EXPECT_NEAR(r.outcomes(2, 1)[0].reward, 0.9 * g.v[3], 1e-12);
  EXPECT_EQ(r.outcomes(1, 1)[0].reward, 0.0);
  for (StateId s = 0; s < 3; ++s) EXPECT_NEAR(r.initial()[s], 1.0 / 3.0, 1e-12);
  EXPECT_EQ(r.initial()[3], 0.0);
}

TEST(RecoveryMdp, FullLHasNoStartMass) {
  const auto f = fixture_chain_suboptimal();
  const auto g = compute_G_exact(f.mdp, f.mu);
  const auto r = build_recovery_mdp(f.mdp, std::vector<bool>(6, true), g.v);
  for (double p : r.initial()) EXPECT_EQ(p, 0.0);
}

TEST(RecoveryMdp, LabelledEvaluationMatchesBuiltMdpOffL) {
  const auto f = fixture_slippery_chain();
  const auto g = compute_G_exact(f.mdp, f.mu);
  const auto pi = Policy::uniform(6, 2);
  const auto built = policy_evaluation_exact(build_recovery_mdp(f.mdp, f.proxy_l, g.v), pi);
  const auto labelled = evaluate_labeled(f.mdp, pi, recovery_label(f.mdp, f.proxy_l, g.v));
  for (StateId s = 0; s < 6; ++s)
    if (!f.proxy_l[s]) EXPECT_NEAR(built.v[s], labelled.v[s], 1e-12) << s;
}

TEST(MainPolicy, FullLGivesSuccessPredictor) {
  const auto f = fixture_slippery_chain();
  const auto g = compute_G_exact(f.mdp, f.mu);
  const auto main = evaluate_main_exact(f.mdp, f.mu, Policy::uniform(6, 2), std::vector<bool>(6, true));
  for (StateId s = 0; s < 6; ++s) EXPECT_NEAR(main.v[s], g.v[s], 1e-12);
}

TEST(MainPolicy, EmptyLGivesLearnerValue) {
  const auto f = fixture_slippery_chain();
  const auto learner = Policy::uniform(6, 2);
  const auto v = policy_evaluation_exact(f.mdp, learner);
  const auto main = evaluate_main_exact(f.mdp, f.mu, learner, std::vector<bool>(6, false));
  for (StateId s = 0; s < 6; ++s) EXPECT_NEAR(main.v[s], v.v[s], 1e-12);
}

TEST(MainPolicy, AntiSwapsTheOptions) {
  const auto f = fixture_chain_suboptimal();
  const auto learner = Policy::uniform(6, 2);
  const auto pi = switched_policy(f.mu, learner, f.proxy_l, true);
  EXPECT_EQ(pi.prob(3, 0), 0.5);
  EXPECT_EQ(pi.prob(0, 0), 1.0);
}

TEST(FiniteHorizon, TelescopesToFullValue) {
  const auto mdp = make_chain(8, 0.99);
  const auto pi = Policy::deterministic(2, {1, 0, 1, 1, 1, 1, 1, 1, 0});
  const auto v = policy_evaluation_exact(mdp, Policy::deterministic(2, std::vector<ActionId>(9, 1)));
  const auto right = Policy::deterministic(2, std::vector<ActionId>(9, 1));
  for (std::size_t t = 0; t <= 10; ++t) {
    const StateId st = finite_horizon_state(mdp, right, 0, t);
    const double head = finite_horizon_value(mdp, right, 0, t);
    const double disc = std::pow(0.99, static_cast<double>(std::min<std::size_t>(t, 8)));
    EXPECT_NEAR(head + disc * v.v[st], v.v[0], 1e-12) << t;
  }
  EXPECT_THROW(finite_horizon_value(mdp, Policy::uniform(9, 2), 0, 3), std::invalid_argument);
  EXPECT_EQ(finite_horizon_state(mdp, pi, 0, 2), 0u);
}

TEST(Checks, PassOnBundledFixtures) {
  for (const auto &f : bundled_fixtures())
    for (auto kind : {LearnerKind::Recovery, LearnerKind::Student}) {
      EXPECT_TRUE(check_optimality(f, kind).pass) << f.id;
      EXPECT_TRUE(check_lower_bound(f, kind, LearnerChoice::Optimal).pass) << f.id;
      EXPECT_TRUE(check_lower_bound(f, kind, LearnerChoice::Uniform).pass) << f.id;
      EXPECT_TRUE(check_improvement(f, kind).pass) << f.id;
      EXPECT_TRUE(check_contraction(f, kind).pass) << f.id;
    }
}

TEST(Checks, ZeroThresholdHandsControlToFailingMu) {
  // tau = 0 puts every state in L, so main runs mu from states where it never succeeds.
  const auto f = fixture_chain_suboptimal();
  const auto opt = value_iteration(f.mdp);
  const auto main = evaluate_main_exact(f.mdp, f.mu, opt.policy, std::vector<bool>(6, true));
  EXPECT_LT(main.v[0], opt.values.v[0] - 0.5);
}

TEST(Checks, AntiMainIdentityOnAlignedChain) {
  const auto f = fixture_chain_aligned();
  const auto opt = value_iteration(f.mdp);
  for (const auto &learner : {Policy::uniform(6, 2), opt.policy}) {
    EXPECT_TRUE(check_anti_main_identity(f, learner, f.proxy_l, "fixture", true).pass);
    EXPECT_TRUE(check_anti_main_identity(f, learner, std::vector<bool>(6, false), "empty", true).pass);
  }
}

TEST(Checks, RecoveryFixpointSettles) {
  const auto f = fixture_micro_tworoom();
  const auto g = compute_G_exact(f.mdp, f.mu);
  const auto fp = recovery_fixpoint(f.mdp, g, LearnerChoice::Optimal);
  EXPECT_FALSE(fp.cycled);
  EXPECT_EQ(initiation_from_values(g.v, fp.recovery.v), fp.in_l);
}

TEST(Suites, UnknownNameThrows) { EXPECT_THROW(run_suite("everything"), std::invalid_argument); }

TEST(Suites, DiagnosticsNeverAsserted) {
  for (const auto &r : run_suite("diagnostics", {0, 2})) EXPECT_FALSE(r.asserted) << r.check;
}
