#pragma once

// Opponent-aware play: best response to a fixed opponent turn kernel, the
// equilibrium of the two-player leg, Q-values and Delta-P heat maps.

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "darts/eval.hpp"
#include "darts/game.hpp"
#include "darts/ns_solver.hpp"

namespace darts {

using ZsgState = GameState;
using ZsgSolution = GameSolution;

// Equilibrium by alternating best responses, starting B from its
// single-player optimum unless another starting policy is given.
inline ZsgSolution solve_equilibrium(const HitTable& hit_a, const HitTable& hit_b, const SolveConfig& cfg,
                                     bool keep_history = false, const Policy* initial_b = nullptr) {
  Policy init;
  if (!initial_b) init = Policy::from_ns(solve_ns(hit_b, cfg));
  GameRoles roles;
  roles.initial_b = initial_b ? initial_b : &init;
  roles.keep_history = keep_history;
  return solve_game(hit_a, hit_b, roles, cfg);
}

struct BestResponse {
  Policy policy;     // aware, [sA][sB][slot]
  ValueTable value;  // [sA][sB][slot]
  std::vector<std::uint16_t> sweeps;
};

// Best response of A to an opponent described only by its turn kernel.
// Blocks are visited with sB ascending outside and sA ascending inside.
inline BestResponse best_response(const HitTable& hit_a, const OpponentTurnKernel& kernel_b, const SolveConfig& cfg) {
  cfg.validate();
  hit_a.validate();
  const int S = cfg.start_score;
  if (kernel_b.max_score() < S) throw std::invalid_argument("opponent kernel does not cover the start score");
  kernel_b.validate();

  BestResponse br{Policy(S, true), ValueTable(S), std::vector<std::uint16_t>((S + 1) * (S + 1), 0)};
  const ClassKernel ck(hit_a);
  TurnSolver solver(ck);
  // after[sB][r]: A's value once A's turn ends on r and B has thrown from sB.
  std::vector<double> after(static_cast<std::size_t>(S + 1) * (S + 1), 0.0);
  auto start = [&](int sA, int sB) { return br.value.start(sA, sB); };
  auto expect = [&](int sB, int ctx, int hi) {
    double v = 0.0, stay = 0.0;
    for (int d = 0; d <= std::min(180, sB - 2); ++d) {
      const int sn = sB - d;
      const double p = kernel_b.p(sB, ctx, sn);
      if (p == 0.0) continue;
      if (sn >= hi) {
        stay += p;
      } else {
        v += p * start(ctx, sn);
      }
    }
    return std::pair{v, stay};
  };

  SlotPolicy pol{};
  SlotValues coef{};
  for (int sB = 2; sB <= S; ++sB) {
    double* ea = after.data() + static_cast<std::size_t>(sB) * (S + 1);
    for (int sA = 2; sA <= S; ++sA) {
      const TurnProblem pb{sA, ea, 1.0, 0.0};
      const auto [c0, c1] = expect(sB, sA, sB);
      const double guess = c0 + c1 * (sA > 2 ? start(sA - 1, sB) : 0.5);
      const auto r = solve_turn_br(solver, pb, c0, c1, guess, pol, coef, cfg.rel_tol, cfg.max_policy_iters, false);
      br.sweeps[static_cast<std::size_t>(sA) * (S + 1) + sB] = static_cast<std::uint16_t>(r.sweeps);
      detail::store_block(br.value, &br.policy, sA, sB, coef, pol, r.bust);
      // B's turn from sB after A ends on sA; sB' = sB uses this block's value.
      ea[sA] = expect(sB, sA, sB + 1).first;
    }
  }
  return br;
}

// ---------------------------------------------------------------------------
// Q-values

namespace detail {

// Value of one dart aimed with outcome distribution row at the thrower's state,
// following the stored tables afterwards. self is indexed [own][opp], opp the
// other player's table.
inline double q_from_row(const ValueTable& self, const ValueTable& opp, const GameState& st, const double* row) {
  if (!SlotLayout::get().reachable(st.s_self, st.i, st.u) || st.s_opp < 2) {
    throw std::out_of_range("q-value needs a live state");
  }
  double q = 0.0;
  for (int k = 0; k < kNumLabels; ++k) {
    const double p = row[k];
    if (p == 0.0) continue;
    const DartResult r = apply_dart({st.s_self, st.i, st.u}, Label::from_index(k));
    double w;
    if (std::holds_alternative<Checkout>(r)) {
      w = 1.0;
    } else if (const auto* next = std::get_if<TurnState>(&r)) {
      w = self.value(st.s_self, st.s_opp, next->i, next->u);
    } else {
      w = 1.0 - opp.start(st.s_opp, std::get<TurnOver>(r).next_score);
    }
    q += p * w;
  }
  return q;
}

}  // namespace detail

enum class Side { A, B };

inline double q_value_row(const ZsgSolution& sol, Side side, const GameState& st, const double* row) {
  return side == Side::A ? detail::q_from_row(sol.a, sol.b, st, row) : detail::q_from_row(sol.b, sol.a, st, row);
}

inline double q_value(const ZsgSolution& sol, const HitTable& hit, Side side, const GameState& st,
                      std::size_t target) {
  if (target >= hit.size()) throw std::out_of_range("target is not on the action grid");
  return q_value_row(sol, side, st, hit.row(target));
}

// Q-value at an arbitrary point; throws std::out_of_range off the board.
inline double q_value(const ZsgSolution& sol, const SkillModel& skill, const BoardGeometry& g, double cell, Side side,
                      const GameState& st, Vec2 target) {
  const LabelMasses row = hit_distribution(skill, target, g, cell);
  return q_value_row(sol, side, st, row.data());
}

// Delta-P over the grid: Q at each target minus the reference value at st,
// where ref holds the single-player policy evaluated against the equilibrium
// opponent (its table for the same side).
inline std::vector<double> heatmap(const ZsgSolution& sol, const GameSolution& ref, const HitTable& hit, Side side,
                                   const GameState& st) {
  const ValueTable& rt = side == Side::A ? ref.a : ref.b;
  if (rt.max_score() < std::max(st.s_self, st.s_opp) || rt.raw().empty()) {
    throw std::invalid_argument("heat map needs the single-player vs equilibrium evaluation table");
  }
  const double base = rt.value(st.s_self, st.s_opp, st.i, st.u);
  std::vector<double> out(hit.size());
  parallel_for(hit.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t a = b; a < e; ++a) out[a] = q_value_row(sol, side, st, hit.row(a)) - base;
  });
  return out;
}

// Surface of start-of-turn values with A's aim: sA,sB,J,aimA_x,aimA_y,labelA.
inline void write_surface_csv(std::ostream& os, const ZsgSolution& sol, const ActionGrid& grid,
                              const BoardGeometry& g) {
  os << "sA,sB,J,aimA_x,aimA_y,labelA\n";
  os.precision(17);
  for (int sA = 2; sA <= sol.max_score; ++sA) {
    for (int sB = 2; sB <= sol.max_score; ++sB) {
      const std::uint32_t a = sol.policy_a.block(sA, sB)[0];
      const Vec2 p = grid[a];
      os << sA << ',' << sB << ',' << sol.a.start(sA, sB) << ',' << p.x << ',' << p.y << ','
         << classify(g, p).name() << '\n';
    }
  }
}

}  // namespace darts
