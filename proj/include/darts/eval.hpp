#pragma once

// Evaluation of fixed policies: per-turn score kernels, head-to-head leg win
// probabilities, match win probabilities over N legs, and Monte-Carlo legs.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "darts/game.hpp"
#include "darts/rules.hpp"
#include "darts/skill.hpp"

namespace darts {

// Distribution of the end-of-turn score from start score s (index s' in
// 0..s; 0 is a checkout, s includes busts).
inline std::vector<double> turn_kernel(const Policy& pol, const HitTable& hit, int s, int opp) {
  if (s < 2) throw std::invalid_argument("turn kernel needs a live score");
  const auto& layout = SlotLayout::get();
  const std::uint32_t* block = pol.block(s, opp);
  std::vector<double> row(s + 1, 0.0);
  std::array<double, kNumSlots> mass{};
  mass[0] = 1.0;
  for (int i = 3; i >= 1; --i) {
    const int g0 = layout.group_start(i);
    for (int j = 0; j < layout.count(s, i); ++j) {
      const double m = mass[g0 + j];
      if (m == 0.0) continue;
      const std::uint32_t a = block[g0 + j];
      if (a >= hit.size()) throw std::out_of_range("policy undefined at a reachable within-turn state");
      const TurnState st{s, i, layout.totals(i)[j]};
      for (int k = 0; k < kNumLabels; ++k) {
        const double p = hit.row(a)[k];
        if (p == 0.0) continue;
        const DartResult r = apply_dart(st, Label::from_index(k));
        if (std::holds_alternative<Checkout>(r)) {
          row[0] += m * p;
        } else if (const auto* next = std::get_if<TurnState>(&r)) {
          mass[layout.slot(next->i, next->u)] += m * p;
        } else {
          row[std::get<TurnOver>(r).next_score] += m * p;
        }
      }
    }
  }
  return row;
}

// Turn kernels of one player for every (own score, opponent score) pair.
// Each row holds the checkout probability and the drops d = s - s' for
// d in 0..180.
class OpponentTurnKernel {
 public:
  static constexpr int kWidth = 182;

  OpponentTurnKernel() = default;
  explicit OpponentTurnKernel(int max_score)
      : max_score_(max_score), rows_(static_cast<std::size_t>(max_score + 1) * (max_score + 1) * kWidth, 0.0) {}

  static OpponentTurnKernel from_policy(const Policy& pol, const HitTable& hit, int max_score) {
    OpponentTurnKernel k(max_score);
    parallel_for(static_cast<std::size_t>(max_score - 1), [&](std::size_t b, std::size_t e) {
      for (std::size_t idx = b; idx < e; ++idx) {
        const int s = static_cast<int>(idx) + 2;
        for (int ctx = 2; ctx <= max_score; ++ctx) {
          const auto row = turn_kernel(pol, hit, s, ctx);
          for (int sn = 0; sn <= s; ++sn) {
            if (row[sn] != 0.0) k.set(s, ctx, sn, row[sn]);
          }
        }
      }
    }, 4);
    return k;
  }

  // Kernel that never moves: the player never scores.
  static OpponentTurnKernel identity(int max_score) {
    OpponentTurnKernel k(max_score);
    for (int s = 2; s <= max_score; ++s)
      for (int c = 2; c <= max_score; ++c) k.set(s, c, s, 1.0);
    return k;
  }

  int max_score() const { return max_score_; }

  double p(int s, int ctx, int s_next) const {
    if (s_next == 0) return rows_[offset(s, ctx)];
    const int d = s - s_next;
    if (d < 0 || d > 180) return 0.0;
    return rows_[offset(s, ctx) + 1 + d];
  }

  void set(int s, int ctx, int s_next, double v) {
    if (s_next == 0) {
      rows_[offset(s, ctx)] = v;
      return;
    }
    const int d = s - s_next;
    if (d < 0 || d > 180) throw std::out_of_range("kernel entry outside the turn window");
    rows_[offset(s, ctx) + 1 + d] = v;
  }

  void validate(double tol = 1e-9) const {
    for (int s = 2; s <= max_score_; ++s) {
      for (int c = 2; c <= max_score_; ++c) {
        const double* r = rows_.data() + offset(s, c);
        double sum = r[0];
        for (int d = 0; d <= 180; ++d) {
          const int sn = s - d;
          if (r[1 + d] < 0.0) throw std::invalid_argument("negative kernel entry");
          if (sn <= 1 && r[1 + d] != 0.0) throw std::invalid_argument("kernel moves to an impossible score");
          sum += r[1 + d];
        }
        if (std::abs(sum - 1.0) > tol) throw std::invalid_argument("kernel row is not normalised");
      }
    }
  }

 private:
  std::size_t offset(int s, int ctx) const {
    if (s < 0 || s > max_score_ || ctx < 0 || ctx > max_score_) throw std::out_of_range("kernel row out of range");
    return (static_cast<std::size_t>(s) * (max_score_ + 1) + ctx) * kWidth;
  }

  int max_score_ = 0;
  std::vector<double> rows_;
};

// P(A wins) for fixed policies over every state of the leg.
inline GameSolution head_to_head(const Policy& pol_a, const Policy& pol_b, const HitTable& hit_a,
                                 const HitTable& hit_b, const SolveConfig& cfg) {
  GameRoles roles;
  roles.fixed_a = &pol_a;
  roles.fixed_b = &pol_b;
  return solve_game(hit_a, hit_b, roles, cfg);
}

// ---------------------------------------------------------------------------
// Match over N = 2K + 1 legs with alternating starters.

struct MatchSpec {
  int legs = 1;
  double p_a = 0.5;  // P(A wins a leg A starts)
  double p_b = 0.5;  // P(A wins a leg B starts)
  bool a_starts = true;

  void validate() const {
    if (legs < 1 || legs % 2 == 0) throw std::invalid_argument("number of legs must be odd and positive");
    if (!(p_a >= 0.0 && p_a <= 1.0 && p_b >= 0.0 && p_b <= 1.0)) {
      throw std::invalid_argument("leg probabilities must lie in [0, 1]");
    }
  }
};

namespace detail {

// Binomial(n, p) probabilities.
inline std::vector<double> binomial_pmf(int n, double p) {
  std::vector<double> out(n + 1, 0.0);
  if (p <= 0.0) {
    out[0] = 1.0;
    return out;
  }
  if (p >= 1.0) {
    out[n] = 1.0;
    return out;
  }
  const double lp = std::log(p), lq = std::log1p(-p);
  for (int j = 0; j <= n; ++j) {
    if (n <= 60) {
      double c = 1.0;
      for (int k = 1; k <= j; ++k) c = c * (n - j + k) / k;
      out[j] = c * std::pow(p, j) * std::pow(1.0 - p, n - j);
    } else {
      out[j] = std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) + j * lp + (n - j) * lq);
    }
  }
  return out;
}

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

namespace detail {

// P(first player wins) where the first player starts K+1 legs, winning each
// with probability p_first, and the other K with probability p_second.
// The j = 0 term vanishes (B starts only K legs) and is kept for uniformity.
inline double match_sum(int K, double p_first, double p_second) {
  const auto va = binomial_pmf(K + 1, p_first);
  const auto vb = binomial_pmf(K, p_second);
  // tail[t] = P(Vb >= t)
  std::vector<double> tail(K + 2, 0.0);
  for (int t = K; t >= 0; --t) tail[t] = tail[t + 1] + vb[t];
  CompensatedSum acc;
  for (int j = 0; j <= K + 1; ++j) {
    const int need = K + 1 - j;
    acc.add(va[j] * (need <= 0 ? 1.0 : tail[need]));
  }
  return acc.value();
}

}  // namespace detail

// A's legs won among the legs A starts ~ Bin(K+1, p_a) and among those B starts
// ~ Bin(K, p_b); A needs K+1 in total. B's chance is summed the same way and
// the pair normalised, which makes symmetric inputs give exactly one half.
inline double match_win_prob(const MatchSpec& m) {
  m.validate();
  const int K = (m.legs - 1) / 2;
  const double p_first = m.a_starts ? m.p_a : m.p_b;
  const double p_second = m.a_starts ? m.p_b : m.p_a;
  const double win = detail::match_sum(K, p_first, p_second);
  // B wins the K+1 legs of the first group with 1 - p_first each.
  const double lose = detail::match_sum(K, 1.0 - p_first, 1.0 - p_second);
  return std::clamp(win / (win + lose), 0.0, 1.0);
}

// Match-level gain from switching A's strategy, each described by its two
// leg probabilities (A starts, B starts).
inline double gain(double pa_star, double pb_star, double pa_ns, double pb_ns, int legs) {
  return match_win_prob({legs, pa_star, pb_star}) - match_win_prob({legs, pa_ns, pb_ns});
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct LegOutcome {
  bool a_wins = false;
  int turns_a = 0;
  int turns_b = 0;
};

// Plays one leg dart by dart. Player A throws first when a_first is set.
template <class Rng>
LegOutcome simulate_leg(const Policy& pol_a, const Policy& pol_b, const HitTable& hit_a, const HitTable& hit_b,
                        int s_a, int s_b, bool a_first, Rng& rng, int max_turns = 100000) {
  LegOutcome out;
  bool a_turn = a_first;
  TurnState st{a_turn ? s_a : s_b, 3, 0};
  while (out.turns_a + out.turns_b < max_turns) {
    const Policy& pol = a_turn ? pol_a : pol_b;
    const HitTable& hit = a_turn ? hit_a : hit_b;
    const int opp = a_turn ? s_b : s_a;
    if (st.i == 3) ++(a_turn ? out.turns_a : out.turns_b);
    const std::uint32_t target = pol.at(st.s, opp, st.i, st.u);
    const DartResult r = apply_dart(st, sample_label(hit.row(target), rng));
    if (std::holds_alternative<Checkout>(r)) {
      out.a_wins = a_turn;
      return out;
    }
    if (const auto* next = std::get_if<TurnState>(&r)) {
      st = *next;
      continue;
    }
    (a_turn ? s_a : s_b) = std::get<TurnOver>(r).next_score;
    a_turn = !a_turn;
    st = TurnState{a_turn ? s_a : s_b, 3, 0};
  }
  throw std::runtime_error("simulated leg exceeded the turn cap");
}

}  // namespace darts
