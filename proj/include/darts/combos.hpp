#pragma once

// Strategy combinations X-Y for a solved game: A plays X, B plays Y, where
// E is the equilibrium policy, N the single-player policy and B the best
// response to the other player's single-player policy.

#include <array>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "darts/store.hpp"

namespace darts {

inline constexpr std::array<std::string_view, 6> kCombos = {"E-E", "N-N", "N-E", "E-N", "N-B", "B-N"};

// Accepts "NE" or "N-E".
inline std::string normalize_combo(std::string_view c) {
  std::string s;
  for (char ch : c)
    if (ch != '-') s += ch;
  if (s.size() != 2) throw std::invalid_argument("bad strategy combination " + std::string(c));
  for (char ch : s) {
    if (ch != 'E' && ch != 'N' && ch != 'B') throw std::invalid_argument("bad strategy combination " + std::string(c));
  }
  if (s == "BB") throw std::invalid_argument("B-B has no fixed opponent to respond to");
  if (s == "BE" || s == "EB") throw std::invalid_argument("best responses are only defined against N");
  return {s[0], '-', s[1]};
}

// Game values with both players' tables for combination c.
inline GameSolution combo_game(const SolutionBundle& b, std::string_view combo) {
  const std::string c = normalize_combo(combo);
  if (c == "E-E") return b.eq;
  auto pick = [&](char x, const Policy& eq, const Policy& ns) -> const Policy* {
    if (x == 'E') return &eq;
    if (x == 'N') return &ns;
    return nullptr;
  };
  GameRoles roles;
  roles.fixed_a = pick(c[0], b.eq.policy_a, b.ns_a);
  roles.fixed_b = pick(c[2], b.eq.policy_b, b.ns_b);
  return solve_game(b.hits_a, b.hits_b, roles, b.config);
}

// Leg win probabilities of A from (S, S): A starting, and B starting.
struct LegProbs {
  double a_starts = 0.0;
  double b_starts = 0.0;
};

inline LegProbs leg_probs(const GameSolution& g, int s_a, int s_b) {
  return {g.a.start(s_a, s_b), 1.0 - g.b.start(s_b, s_a)};
}

// One row per combination: combo,p_a_starts,p_b_starts.
inline void write_leg_table(std::ostream& os, const std::vector<std::pair<std::string, LegProbs>>& rows) {
  os << "combo,p_a_starts,p_b_starts\n";
  os.precision(17);
  for (const auto& [c, p] : rows) os << c << ',' << p.a_starts << ',' << p.b_starts << '\n';
}

}  // namespace darts
