#pragma once

// Single-player solvers: fewest expected turns to check out, and the turn-free
// variant counting darts.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "darts/engine.hpp"
#include "darts/rules.hpp"
#include "darts/skill.hpp"

namespace darts {

struct NsSolution {
  int start_score = 0;
  std::vector<double> values;         // expected turns, [s * kNumSlots + slot]
  std::vector<std::uint32_t> policy;  // target index, same layout
  std::vector<int> sweeps;            // greedy passes used per score

  double value(int s, int i, int u) const {
    if (s == 0) return 0.0;
    const int k = SlotLayout::get().slot(i, u);
    if (!SlotLayout::get().reachable(s, i, u) || s > start_score) throw std::out_of_range("state not in solution");
    return values[static_cast<std::size_t>(s) * kNumSlots + k];
  }
  double start_value(int s) const { return value(s, 3, 0); }

  std::uint32_t action(int s, int i, int u) const {
    const int k = SlotLayout::get().slot(i, u);
    if (!SlotLayout::get().reachable(s, i, u) || s > start_score) throw std::out_of_range("state not in solution");
    return policy[static_cast<std::size_t>(s) * kNumSlots + k];
  }
  const std::uint32_t* block_policy(int s) const { return policy.data() + static_cast<std::size_t>(s) * kNumSlots; }
};

// Scores are solved in ascending order: a turn from s only reaches lower scores
// or, through a bust, its own start.
inline NsSolution solve_ns(const HitTable& hit, const SolveConfig& cfg) {
  cfg.validate();
  hit.validate();
  const int S = cfg.start_score;
  NsSolution sol;
  sol.start_score = S;
  sol.values.assign(static_cast<std::size_t>(S + 1) * kNumSlots, 0.0);
  sol.policy.assign(static_cast<std::size_t>(S + 1) * kNumSlots, 0);
  sol.sweeps.assign(S + 1, 0);

  const ClassKernel kernel(hit);
  TurnSolver solver(kernel);
  // Maximisation form: end values are negated turn counts.
  std::vector<double> neg_turns(S + 1, 0.0);
  SlotPolicy pol{};
  SlotValues coef{};
  const auto& layout = SlotLayout::get();
  for (int s = 2; s <= S; ++s) {
    const TurnProblem pb{s, neg_turns.data(), 0.0, -1.0};
    const double guess = s > 2 ? neg_turns[s - 1] - 2.0 : -2.0;
    const TurnBrResult r = solve_turn_br(solver, pb, 0.0, 1.0, guess, pol, coef, cfg.rel_tol,
                                         cfg.max_policy_iters, true);
    sol.sweeps[s] = r.sweeps;
    neg_turns[s] = r.x;
    for (int i = 1; i <= 3; ++i) {
      const int g0 = layout.group_start(i);
      for (int j = 0; j < layout.count(s, i); ++j) {
        sol.values[static_cast<std::size_t>(s) * kNumSlots + g0 + j] = -coef[g0 + j].at(r.bust);
        sol.policy[static_cast<std::size_t>(s) * kNumSlots + g0 + j] = pol[g0 + j];
      }
    }
  }
  return sol;
}

// Largest |V - T V| / V over all reachable states, computed label by label
// without the class compression or batching used by the solver.
inline double ns_bellman_residual(const NsSolution& sol, const HitTable& hit) {
  const auto& layout = SlotLayout::get();
  double worst = 0.0;
  for (int s = 2; s <= sol.start_score; ++s) {
    for (int slot = 0; slot < kNumSlots; ++slot) {
      const auto [i, u] = layout.state_of(slot);
      if (!layout.reachable(s, i, u)) continue;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < hit.size(); ++a) {
        double v = (i == 3) ? 1.0 : 0.0;
        for (int k = 0; k < kNumLabels; ++k) {
          const double p = hit.row(a)[k];
          if (p == 0.0) continue;
          const auto next = ns_transition({s, i, u}, Label::from_index(k));
          if (const auto* st = std::get_if<TurnState>(&next)) v += p * sol.value(st->s, st->i, st->u);
        }
        best = std::min(best, v);
      }
      const double have = sol.value(s, i, u);
      worst = std::max(worst, std::abs(have - best) / std::max(std::abs(have), 1e-12));
    }
  }
  return worst;
}

// Turn-free model: V(s) = min_a (1 + sum over moves p V(s')) / (1 - p(stay)).
inline std::vector<double> solve_ns_dartcount(const HitTable& hit, const SolveConfig& cfg,
                                              std::vector<std::uint32_t>* policy_out = nullptr) {
  cfg.validate();
  hit.validate();
  const int S = cfg.start_score;
  const ClassKernel kernel(hit);
  const auto& cls = score_classes();
  std::vector<double> v(S + 1, std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> pol(S + 1, 0);
  v[0] = 0.0;
  for (int s = 2; s <= S; ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < kernel.size(); ++a) {
      double stay = 0.0, acc = 1.0;
      for (std::uint32_t k = kernel.begin(a); k < kernel.end(a); ++k) {
        const ScoreClass& c = cls[kernel.cls(k)];
        const double p = kernel.prob(k);
        const int rem = s - c.h;
        if (rem == 0 && c.dbl) continue;
        if (rem > 1 && c.h > 0) {
          acc += p * v[rem];
        } else {
          stay += p;
        }
      }
      if (stay >= 1.0 - 1e-15) continue;
      const double val = acc / (1.0 - stay);
      if (val < best) {
        best = val;
        pol[s] = static_cast<std::uint32_t>(a);
      }
    }
    v[s] = best;
  }
  if (policy_out) *policy_out = std::move(pol);
  return v;
}

// Number of turns taken by one simulated leg from score s under the policy.
template <class Rng>
int rollout_ns(const NsSolution& sol, const HitTable& hit, int s, Rng& rng, int max_turns = 100000) {
  TurnState st{s, 3, 0};
  int turns = 0;
  while (turns < max_turns) {
    if (st.i == 3) ++turns;
    const std::uint32_t a = sol.action(st.s, st.i, st.u);
    const auto next = ns_transition(st, sample_label(hit.row(a), rng));
    if (std::holds_alternative<Checkout>(next)) return turns;
    st = std::get<TurnState>(next);
  }
  throw std::runtime_error("rollout exceeded the turn cap");
}

}  // namespace darts
