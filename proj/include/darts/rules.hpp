#pragma once

// Rules of a 501 leg: within-turn state, bust and double-out checkout, and the
// fixed per-score slot layout used by the solvers.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "darts/board.hpp"

namespace darts {

inline constexpr int kMaxStart = 501;

// Within-turn state of the player to throw: start-of-turn score s, throws
// remaining i, points scored so far this turn u.
struct TurnState {
  int s = 0;
  int i = 3;
  int u = 0;
  friend bool operator==(const TurnState&, const TurnState&) = default;
};

struct Checkout {
  friend bool operator==(const Checkout&, const Checkout&) = default;
};

// Outcome of one dart: the leg is won, or the next within-turn state, or the
// turn is over with the given start-of-next-turn score (bust keeps s).
struct TurnOver {
  int next_score = 0;
  bool bust = false;
  friend bool operator==(const TurnOver&, const TurnOver&) = default;
};

using DartResult = std::variant<Checkout, TurnState, TurnOver>;

inline DartResult apply_dart(const TurnState& st, Label z) {
  const int t = st.u + z.score();
  const int rem = st.s - t;
  if (rem == 0 && z.is_double()) return Checkout{};
  if (rem <= 1) return TurnOver{st.s, true};
  if (st.i > 1) return TurnState{st.s, st.i - 1, t};
  return TurnOver{rem, false};
}

// Single-player transition: a finished turn resets to (s', 3, 0).
inline std::variant<Checkout, TurnState> ns_transition(const TurnState& st, Label z) {
  const DartResult r = apply_dart(st, z);
  if (std::holds_alternative<Checkout>(r)) return Checkout{};
  if (const auto* next = std::get_if<TurnState>(&r)) return *next;
  return TurnState{std::get<TurnOver>(r).next_score, 3, 0};
}

// Two-player state from the point of view of the player to throw.
struct GameState {
  int s_self = 0;
  int s_opp = 0;
  int i = 3;
  int u = 0;
  friend bool operator==(const GameState&, const GameState&) = default;
};

struct SelfWins {
  friend bool operator==(const SelfWins&, const SelfWins&) = default;
};
struct OppWins {
  friend bool operator==(const OppWins&, const OppWins&) = default;
};

// Best-response transition: when the thrower's turn ends, the opponent's turn
// has moved their score to s_opp_next (0 means the opponent checked out).
inline std::variant<SelfWins, OppWins, GameState> br_transition(const GameState& st, Label z, int s_opp_next) {
  const DartResult r = apply_dart({st.s_self, st.i, st.u}, z);
  if (std::holds_alternative<Checkout>(r)) return SelfWins{};
  if (const auto* next = std::get_if<TurnState>(&r)) return GameState{st.s_self, st.s_opp, next->i, next->u};
  if (s_opp_next == 0) return OppWins{};
  return GameState{std::get<TurnOver>(r).next_score, s_opp_next, 3, 0};
}

// ---------------------------------------------------------------------------
// Slot layout
//
// Within-turn states of a score are stored in a fixed layout shared by all
// scores: slot 0 is (3, 0); then one slot per realizable one-dart total u for
// i = 2; then one per realizable two-dart total for i = 1. For score s only
// slots with u <= s - 2 are reachable; they form a prefix of each group.

namespace detail {

inline std::vector<int> one_dart_totals() {
  std::vector<int> v;
  for (int k = 0; k < kNumLabels; ++k) v.push_back(Label::from_index(k).score());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline std::vector<int> two_dart_totals() {
  const auto one = one_dart_totals();
  std::vector<int> v;
  for (int a : one)
    for (int b : one) v.push_back(a + b);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace detail

class SlotLayout {
 public:
  static const SlotLayout& get() {
    static const SlotLayout layout;
    return layout;
  }

  int total() const { return 1 + static_cast<int>(u1_.size() + u2_.size()); }
  int group_start(int i) const { return i == 3 ? 0 : (i == 2 ? 1 : 1 + static_cast<int>(u1_.size())); }
  const std::vector<int>& totals(int i) const {
    static const std::vector<int> zero{0};
    return i == 3 ? zero : (i == 2 ? u1_ : u2_);
  }

  // Number of reachable slots of group i for score s.
  int count(int s, int i) const {
    if (s < 2) return 0;
    if (i == 3) return 1;
    const auto& v = totals(i);
    return static_cast<int>(std::upper_bound(v.begin(), v.end(), s - 2) - v.begin());
  }

  // Slot index of (i, u), or -1 if u is not a realizable total for i.
  int slot(int i, int u) const {
    if (i == 3) return u == 0 ? 0 : -1;
    if (u < 0 || u > 120) return -1;
    const int k = (i == 2 ? idx1_ : idx2_)[u];
    return k < 0 ? -1 : group_start(i) + k;
  }

  bool reachable(int s, int i, int u) const {
    if (s < 2 || i < 1 || i > 3) return false;
    const int k = slot(i, u);
    return k >= 0 && (i == 3 || u <= s - 2);
  }

  std::pair<int, int> state_of(int slot_index) const {
    if (slot_index == 0) return {3, 0};
    if (slot_index < group_start(1)) return {2, u1_[slot_index - 1]};
    return {1, u2_[slot_index - group_start(1)]};
  }

 private:
  SlotLayout() : u1_(detail::one_dart_totals()), u2_(detail::two_dart_totals()) {
    idx1_.fill(-1);
    idx2_.fill(-1);
    for (std::size_t k = 0; k < u1_.size(); ++k) idx1_[u1_[k]] = static_cast<int>(k);
    for (std::size_t k = 0; k < u2_.size(); ++k) idx2_[u2_[k]] = static_cast<int>(k);
  }

  std::vector<int> u1_, u2_;
  std::array<int, 121> idx1_{}, idx2_{};
};

inline constexpr int kNumSlots = 157;

}  // namespace darts
