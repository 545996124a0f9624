#pragma once

// Two-player leg solved block by block. A block is the pair of start-of-turn
// scores (sA, sB); it holds A's turn states at (sA, sB) and B's turn states at
// (sB, sA). Every way out of a block leads to a block with a smaller score, so
// blocks are solved in ascending order and each one reduces to two coupled
// scalar unknowns: x = A's value at (sA, sB, 3, 0) and y = B's value at
// (sB, sA, 3, 0). A's bust value is 1 - y and B's is 1 - x.
//
// Each player either plays a fixed policy or optimises. With both optimising
// the block game is solved by alternating best responses; the best-response
// values bound the block value from above (A) and below (B).

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "darts/engine.hpp"
#include "darts/ns_solver.hpp"
#include "darts/parallel.hpp"
#include "darts/rules.hpp"
#include "darts/skill.hpp"

namespace darts {

// Aim table over (own score, opponent score, slot). Opponent-unaware policies
// (such as the single-player optimum) store one block per own score.
class Policy {
 public:
  Policy() = default;
  Policy(int max_score, bool opponent_aware)
      : max_score_(max_score),
        aware_(opponent_aware),
        table_(static_cast<std::size_t>(max_score + 1) * (opponent_aware ? max_score + 1 : 1) * kNumSlots, 0) {}

  static Policy from_ns(const NsSolution& ns) {
    Policy p(ns.start_score, false);
    p.table_ = ns.policy;
    return p;
  }

  int max_score() const { return max_score_; }
  bool opponent_aware() const { return aware_; }
  const std::vector<std::uint32_t>& table() const { return table_; }
  std::vector<std::uint32_t>& table() { return table_; }

  std::size_t offset(int s, int opp) const {
    if (s < 0 || s > max_score_ || (aware_ && (opp < 0 || opp > max_score_))) {
      throw std::out_of_range("policy has no entry for score " + std::to_string(s));
    }
    return (static_cast<std::size_t>(s) * (aware_ ? max_score_ + 1 : 1) + (aware_ ? opp : 0)) * kNumSlots;
  }
  const std::uint32_t* block(int s, int opp) const { return table_.data() + offset(s, opp); }
  std::uint32_t* block(int s, int opp) { return table_.data() + offset(s, opp); }

  std::uint32_t at(int s, int opp, int i, int u) const {
    const int k = SlotLayout::get().slot(i, u);
    if (!SlotLayout::get().reachable(s, i, u)) throw std::out_of_range("unreachable within-turn state");
    return block(s, opp)[k];
  }

  SlotPolicy slots(int s, int opp) const {
    SlotPolicy p{};
    std::copy_n(block(s, opp), kNumSlots, p.begin());
    return p;
  }

 private:
  int max_score_ = 0;
  bool aware_ = false;
  std::vector<std::uint32_t> table_;
};

// Win probability of the player to throw, over (own score, opponent score, slot).
class ValueTable {
 public:
  ValueTable() = default;
  explicit ValueTable(int max_score)
      : max_score_(max_score), values_(static_cast<std::size_t>(max_score + 1) * (max_score + 1) * kNumSlots, 0.0) {}

  int max_score() const { return max_score_; }
  const std::vector<double>& raw() const { return values_; }
  std::vector<double>& raw() { return values_; }

  std::size_t offset(int s, int opp) const {
    return (static_cast<std::size_t>(s) * (max_score_ + 1) + opp) * kNumSlots;
  }
  double start(int s, int opp) const { return values_[offset(s, opp)]; }
  double at_slot(int s, int opp, int slot) const { return values_[offset(s, opp) + slot]; }
  double* block(int s, int opp) { return values_.data() + offset(s, opp); }

  // Value at a live state; 1 if the thrower has already won, 0 if the opponent has.
  double value(int s, int opp, int i, int u) const {
    if (s == 0) return 1.0;
    if (opp == 0) return 0.0;
    if (s > max_score_ || opp > max_score_ || opp < 2 || !SlotLayout::get().reachable(s, i, u)) {
      throw std::out_of_range("state outside the value table");
    }
    return at_slot(s, opp, SlotLayout::get().slot(i, u));
  }

 private:
  int max_score_ = 0;
  std::vector<double> values_;
};

struct BlockStats {
  std::uint16_t alternations = 0;
  std::uint16_t sweeps = 0;
  double lower = 0.0;
  double upper = 0.0;
};

struct GameSolution {
  int max_score = 0;
  ValueTable a;       // A to throw: [sA][sB][slot]
  ValueTable b;       // B to throw: [sB][sA][slot]
  Policy policy_a;
  Policy policy_b;
  std::vector<BlockStats> stats;                         // [sA][sB]
  std::vector<std::pair<double, double>> bound_history;  // (lower, upper) per alternation
  std::vector<std::uint32_t> history_offset;             // [sA][sB] into bound_history, plus end

  std::size_t block_index(int sA, int sB) const { return static_cast<std::size_t>(sA) * (max_score + 1) + sB; }
  const BlockStats& block(int sA, int sB) const { return stats[block_index(sA, sB)]; }

  // P(A wins) with A to throw at (sA, sB).
  double p_a(int sA, int sB) const { return a.start(sA, sB); }
};

// Player role: fixed policy, or optimise (nullptr).
struct GameRoles {
  const Policy* fixed_a = nullptr;
  const Policy* fixed_b = nullptr;
  const Policy* initial_b = nullptr;  // starting policy for B in alternation
  bool keep_history = false;
};

namespace detail {

inline void store_block(ValueTable& vt, Policy* pol, int s, int opp, const SlotValues& coef, const SlotPolicy& sp,
                        double bust) {
  const auto& layout = SlotLayout::get();
  double* v = vt.block(s, opp);
  std::uint32_t* p = pol ? pol->block(s, opp) : nullptr;
  for (int i = 1; i <= 3; ++i) {
    const int g0 = layout.group_start(i);
    for (int j = 0; j < layout.count(s, i); ++j) {
      v[g0 + j] = std::clamp(coef[g0 + j].at(bust), 0.0, 1.0);
      if (p) p[g0 + j] = sp[g0 + j];
    }
  }
}

// Solves x = aA + bA (1 - y), y = aB + bB (1 - x); both zero if the leg never ends.
inline std::pair<double, double> couple(const Affine& A, const Affine& B) {
  const double denom = 1.0 - A.b * B.b;
  if (!(denom > 1e-13)) return {0.0, 0.0};
  const double x = (A.a + A.b * (1.0 - B.a - B.b)) / denom;
  return {x, B.a + B.b * (1.0 - x)};
}

}  // namespace detail

inline GameSolution solve_game(const HitTable& hit_a, const HitTable& hit_b, const GameRoles& roles,
                               const SolveConfig& cfg) {
  cfg.validate();
  hit_a.validate();
  hit_b.validate();
  const int S = cfg.start_score;
  for (const Policy* p : {roles.fixed_a, roles.fixed_b, roles.initial_b}) {
    if (p && p->max_score() < S) throw std::invalid_argument("policy does not cover the start score");
  }
  const bool opt_a = roles.fixed_a == nullptr;
  const bool opt_b = roles.fixed_b == nullptr;
  if (opt_a && opt_b && roles.initial_b == nullptr) {
    throw std::invalid_argument("alternating best responses need an initial policy for B");
  }

  GameSolution sol;
  sol.max_score = S;
  sol.a = ValueTable(S);
  sol.b = ValueTable(S);
  sol.policy_a = opt_a ? Policy(S, true) : *roles.fixed_a;
  sol.policy_b = opt_b ? Policy(S, true) : *roles.fixed_b;
  sol.stats.assign(static_cast<std::size_t>(S + 1) * (S + 1), BlockStats{});
  std::vector<std::vector<std::pair<double, double>>> history;
  if (roles.keep_history) history.resize(sol.stats.size());

  const ClassKernel ka(hit_a);
  const ClassKernel kb(hit_b);

  auto solve_block = [&](int sA, int sB, TurnSolver& tsa, TurnSolver& tsb, std::vector<double>& ea,
                         std::vector<double>& eb) {
    for (int r = 2; r < sA; ++r) ea[r] = 1.0 - sol.b.start(sB, r);
    for (int r = 2; r < sB; ++r) eb[r] = 1.0 - sol.a.start(sA, r);
    const TurnProblem pa{sA, ea.data(), 1.0, 0.0};
    const TurnProblem pb{sB, eb.data(), 1.0, 0.0};
    SlotPolicy pol_a{}, pol_b{};
    SlotValues ca{}, cb{};
    BlockStats& st = sol.stats[sol.block_index(sA, sB)];
    const double x_guess = sA > 2 ? sol.a.start(sA - 1, sB) : 0.5;
    const double y_guess = sB > 2 ? sol.b.start(sB - 1, sA) : 0.5;
    double x = 0.0, y = 0.0;

    if (!opt_a) {
      pol_a = roles.fixed_a->slots(sA, sB);
      tsa.evaluate(pa, pol_a, ca);
    }
    if (!opt_b) {
      pol_b = roles.fixed_b->slots(sB, sA);
      tsb.evaluate(pb, pol_b, cb);
    }

    if (!opt_a && !opt_b) {
      std::tie(x, y) = detail::couple(ca[0], cb[0]);
    } else if (opt_a && !opt_b) {
      const double c0 = 1.0 - cb[0].a - cb[0].b, c1 = cb[0].b;
      const auto r = solve_turn_br(tsa, pa, c0, c1, c0 + c1 * x_guess, pol_a, ca, cfg.rel_tol,
                                   cfg.max_policy_iters, false);
      st.sweeps = static_cast<std::uint16_t>(r.sweeps);
      std::tie(x, y) = detail::couple(ca[0], cb[0]);
    } else if (!opt_a && opt_b) {
      const double c0 = 1.0 - ca[0].a - ca[0].b, c1 = ca[0].b;
      const auto r = solve_turn_br(tsb, pb, c0, c1, c0 + c1 * y_guess, pol_b, cb, cfg.rel_tol,
                                   cfg.max_policy_iters, false);
      st.sweeps = static_cast<std::uint16_t>(r.sweeps);
      std::tie(x, y) = detail::couple(ca[0], cb[0]);
    } else {
      pol_b = roles.initial_b->slots(sB, sA);
      tsb.evaluate(pb, pol_b, cb);
      double yg = y_guess, xg = x_guess;
      bool done = false;
      int k = 0;
      int sweeps = 0;
      while (k < cfg.max_alternations) {
        ++k;
        const double c0 = 1.0 - cb[0].a - cb[0].b, c1 = cb[0].b;
        const auto ra = solve_turn_br(tsa, pa, c0, c1, c0 + c1 * xg, pol_a, ca, cfg.rel_tol,
                                      cfg.max_policy_iters, false);
        const double upper = ra.x;
        // A best-responded to this policy of B; it is the one kept on convergence.
        const SlotPolicy pol_b_used = pol_b;
        const SlotValues cb_used = cb;
        const double d0 = 1.0 - ca[0].a - ca[0].b, d1 = ca[0].b;
        const auto rb = solve_turn_br(tsb, pb, d0, d1, d0 + d1 * yg, pol_b, cb, cfg.rel_tol,
                                      cfg.max_policy_iters, false);
        sweeps += ra.sweeps + rb.sweeps;
        std::tie(x, y) = detail::couple(ca[0], cb[0]);
        const double lower = x;
        if (roles.keep_history) history[sol.block_index(sA, sB)].push_back({lower, upper});
        st.lower = lower;
        st.upper = upper;
        xg = x;
        yg = y;
        if ((upper - lower) / std::max(std::abs(lower), 1e-12) < cfg.rel_tol) {
          pol_b = pol_b_used;
          cb = cb_used;
          std::tie(x, y) = detail::couple(ca[0], cb[0]);
          done = true;
          break;
        }
      }
      st.alternations = static_cast<std::uint16_t>(k);
      st.sweeps = static_cast<std::uint16_t>(std::min(sweeps, 65535));
      if (!done) {
        throw std::runtime_error("equilibrium did not converge in block (" + std::to_string(sA) + ", " +
                                 std::to_string(sB) + ")");
      }
    }
    if (!(opt_a && opt_b)) st.lower = st.upper = x;
    detail::store_block(sol.a, opt_a ? &sol.policy_a : nullptr, sA, sB, ca, pol_a, 1.0 - y);
    detail::store_block(sol.b, opt_b ? &sol.policy_b : nullptr, sB, sA, cb, pol_b, 1.0 - x);
  };

  // Blocks on one anti-diagonal sA + sB = d depend only on earlier diagonals.
  for (int d = 4; d <= 2 * S; ++d) {
    const int lo = std::max(2, d - S), hi = std::min(S, d - 2);
    if (lo > hi) continue;
    parallel_for(
        static_cast<std::size_t>(hi - lo + 1),
        [&](std::size_t b, std::size_t e) {
          TurnSolver tsa(ka), tsb(kb);
          std::vector<double> ea(S + 1, 0.0), eb(S + 1, 0.0);
          for (std::size_t k = b; k < e; ++k) {
            const int sA = lo + static_cast<int>(k);
            solve_block(sA, d - sA, tsa, tsb, ea, eb);
          }
        },
        8);
  }

  if (roles.keep_history) {
    sol.history_offset.reserve(history.size() + 1);
    for (const auto& h : history) {
      sol.history_offset.push_back(static_cast<std::uint32_t>(sol.bound_history.size()));
      sol.bound_history.insert(sol.bound_history.end(), h.begin(), h.end());
    }
    sol.history_offset.push_back(static_cast<std::uint32_t>(sol.bound_history.size()));
  }
  return sol;
}

}  // namespace darts
