#pragma once

// Dynamic-programming core shared by every solver: one player's turn at a fixed
// start-of-turn score, with the values reached after the turn supplied by the
// caller.
//
// Inside a turn the states (i, u) form an acyclic graph. The only loop is the
// return to the start of the turn through a bust (or a turn of misses), whose
// value b the caller ties back to the block unknown x = V(s, 3, 0) through
// b = c0 + c1 * x. Under a fixed policy every slot value is affine in b, so a
// policy is evaluated exactly by one backward pass that tracks (alpha, beta).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "darts/board.hpp"
#include "darts/rules.hpp"
#include "darts/skill.hpp"

namespace darts {

struct SolveConfig {
  int start_score = kMaxStart;
  double cell_size = 5.0;
  double rel_tol = 1e-9;
  int max_policy_iters = 100;
  int max_alternations = 50;

  void validate() const {
    if (start_score < 2 || start_score > kMaxStart) throw std::invalid_argument("start_score must be in 2..501");
    if (!(rel_tol > 0.0)) throw std::invalid_argument("rel_tol must be positive");
    if (max_policy_iters < 1 || max_alternations < 1) throw std::invalid_argument("iteration caps must be positive");
  }
};

// Outcome classes that behave identically under the rules: (score, finishes).
struct ScoreClass {
  int h = 0;
  bool dbl = false;
};

namespace detail {

struct ClassTable {
  std::vector<ScoreClass> classes;
  std::array<std::uint8_t, kNumLabels> of_label{};

  ClassTable() {
    for (int k = 0; k < kNumLabels; ++k) {
      const Label z = Label::from_index(k);
      const ScoreClass c{z.score(), z.is_double()};
      auto it = std::find_if(classes.begin(), classes.end(), [&](const ScoreClass& e) { return e.h == c.h && e.dbl == c.dbl; });
      if (it == classes.end()) {
        classes.push_back(c);
        it = classes.end() - 1;
      }
      of_label[k] = static_cast<std::uint8_t>(it - classes.begin());
    }
  }
};

inline const ClassTable& class_table() {
  static const ClassTable t;
  return t;
}

}  // namespace detail

inline const std::vector<ScoreClass>& score_classes() { return detail::class_table().classes; }
inline int score_class_of(Label z) { return detail::class_table().of_label[z.index()]; }

// Hit table collapsed onto score classes, stored sparsely per target.
class ClassKernel {
 public:
  explicit ClassKernel(const HitTable& t) {
    const int nc = static_cast<int>(score_classes().size());
    row_ptr_.reserve(t.size() + 1);
    row_ptr_.push_back(0);
    std::vector<double> acc(nc);
    for (std::size_t a = 0; a < t.size(); ++a) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const double* r = t.row(a);
      for (int k = 0; k < kNumLabels; ++k) acc[detail::class_table().of_label[k]] += r[k];
      for (int c = 0; c < nc; ++c) {
        if (acc[c] > 0.0) {
          cls_.push_back(static_cast<std::uint8_t>(c));
          prob_.push_back(acc[c]);
        }
      }
      row_ptr_.push_back(static_cast<std::uint32_t>(cls_.size()));
    }
  }

  std::size_t size() const { return row_ptr_.size() - 1; }
  std::uint32_t begin(std::size_t a) const { return row_ptr_[a]; }
  std::uint32_t end(std::size_t a) const { return row_ptr_[a + 1]; }
  std::uint8_t cls(std::uint32_t k) const { return cls_[k]; }
  double prob(std::uint32_t k) const { return prob_[k]; }

 private:
  std::vector<std::uint32_t> row_ptr_;
  std::vector<std::uint8_t> cls_;
  std::vector<double> prob_;
};

struct Affine {
  double a = 0.0;
  double b = 0.0;
  double at(double x) const { return a + b * x; }
};

// One turn at start score s. end_value[r] is the value of the turn ending with
// score r (2 <= r < s); a checkout is worth checkout_value; turn_reward is
// collected once per turn.
struct TurnProblem {
  int s = 0;
  const double* end_value = nullptr;
  double checkout_value = 0.0;
  double turn_reward = 0.0;
};

using SlotPolicy = std::array<std::uint32_t, kNumSlots>;
using SlotValues = std::array<Affine, kNumSlots>;

class TurnSolver {
 public:
  explicit TurnSolver(const ClassKernel& k) : k_(k) {
    const std::size_t nc = score_classes().size();
    wn_.resize(nc * kLd);
    wa_.resize(nc * kLd);
    wb_.resize(nc * kLd);
  }

  const ClassKernel& kernel() const { return k_; }

  // Maximising policy for a numeric bust value, with the affine value of that
  // policy at every reachable slot. Ties go to the lowest target index.
  void greedy(const TurnProblem& pb, double bust, SlotPolicy& policy, SlotValues& coef) {
    const auto& layout = SlotLayout::get();
    for (int i = 1; i <= 3; ++i) {
      const int n = layout.count(pb.s, i);
      if (n == 0) continue;
      const int g0 = layout.group_start(i);
      fill_w(pb, i, n, coef, bust);
      alignas(64) std::array<double, kLd> best;
      alignas(64) std::array<std::uint32_t, kLd> arg{};
      scan(n, best.data(), arg.data());
      for (int j = 0; j < n; ++j) {
        policy[g0 + j] = arg[j];
        coef[g0 + j] = affine_of(arg[j], j);
      }
      if (i == 3) coef[0].a += pb.turn_reward;
    }
  }

  // Affine values of a fixed policy.
  void evaluate(const TurnProblem& pb, const SlotPolicy& policy, SlotValues& coef) {
    const auto& layout = SlotLayout::get();
    for (int i = 1; i <= 3; ++i) {
      const int n = layout.count(pb.s, i);
      if (n == 0) continue;
      const int g0 = layout.group_start(i);
      fill_w(pb, i, n, coef, 0.0, false);
      for (int j = 0; j < n; ++j) {
        if (policy[g0 + j] >= k_.size()) throw std::out_of_range("policy target index out of range");
        coef[g0 + j] = affine_of(policy[g0 + j], j);
      }
      if (i == 3) coef[0].a += pb.turn_reward;
    }
  }

  // Value of one aim at a slot given the affine values of the later slots.
  Affine action_value(const TurnProblem& pb, int slot, std::uint32_t target, const SlotValues& coef) {
    const auto [i, u] = SlotLayout::get().state_of(slot);
    Affine r{};
    for (std::uint32_t k = k_.begin(target); k < k_.end(target); ++k) {
      const Affine w = outcome(pb, i, u, score_classes()[k_.cls(k)], coef);
      r.a += k_.prob(k) * w.a;
      r.b += k_.prob(k) * w.b;
    }
    if (i == 3) r.a += pb.turn_reward;
    return r;
  }

 private:
  static constexpr int kLd = 120;  // >= largest group (112), multiple of 8

  // GCC/Clang vector extension; 8 doubles fill one AVX-512 register and
  // split into two AVX2 operations elsewhere.
  static constexpr int kLanes = 8;
  using vd = double __attribute__((vector_size(8 * kLanes)));
  using vd_u = double __attribute__((vector_size(8 * kLanes), aligned(8)));

  // Column-wise argmax over targets of Q = P * W for the first kLanes * NV
  // columns. Target indices ride along as doubles so one mask serves both.
  template <int NV>
  void scan_fixed(double* best, std::uint32_t* arg) const {
    vd b[NV], g[NV];
    for (int v = 0; v < NV; ++v) {
      b[v] = vd{} - std::numeric_limits<double>::infinity();
      g[v] = vd{};
    }
    const std::size_t T = k_.size();
    for (std::size_t a = 0; a < T; ++a) {
      vd q[NV];
      for (int v = 0; v < NV; ++v) q[v] = vd{};
      for (std::uint32_t k = k_.begin(a); k < k_.end(a); ++k) {
        const double p = k_.prob(k);
        const vd_u* w = reinterpret_cast<const vd_u*>(wn_.data() + static_cast<std::size_t>(k_.cls(k)) * kLd);
        for (int v = 0; v < NV; ++v) q[v] += p * w[v];
      }
      const vd av = vd{} + static_cast<double>(a);
      for (int v = 0; v < NV; ++v) {
        const auto better = q[v] > b[v];
        b[v] = better ? q[v] : b[v];
        g[v] = better ? av : g[v];
      }
    }
    for (int v = 0; v < NV; ++v) {
      for (int l = 0; l < kLanes; ++l) {
        best[kLanes * v + l] = b[v][l];
        arg[kLanes * v + l] = static_cast<std::uint32_t>(g[v][l]);
      }
    }
  }

  void scan(int n, double* best, std::uint32_t* arg) const {
    static_assert(kLd % kLanes == 0 && kLd / kLanes == 15);
    switch ((n + kLanes - 1) / kLanes) {
      case 1: return scan_fixed<1>(best, arg);
      case 2: return scan_fixed<2>(best, arg);
      case 3: return scan_fixed<3>(best, arg);
      case 4: return scan_fixed<4>(best, arg);
      case 5: return scan_fixed<5>(best, arg);
      case 6: return scan_fixed<6>(best, arg);
      case 7: return scan_fixed<7>(best, arg);
      case 8: return scan_fixed<8>(best, arg);
      case 9: return scan_fixed<9>(best, arg);
      case 10: return scan_fixed<10>(best, arg);
      case 11: return scan_fixed<11>(best, arg);
      case 12: return scan_fixed<12>(best, arg);
      case 13: return scan_fixed<13>(best, arg);
      case 14: return scan_fixed<14>(best, arg);
      case 15: return scan_fixed<15>(best, arg);
      default: throw std::logic_error("too many slots in one group");
    }
  }

  static Affine outcome(const TurnProblem& pb, int i, int u, const ScoreClass& c, const SlotValues& coef) {
    const int t = u + c.h;
    const int rem = pb.s - t;
    if (rem == 0 && c.dbl) return {pb.checkout_value, 0.0};
    if (rem <= 1) return {0.0, 1.0};
    if (i > 1) return coef[SlotLayout::get().slot(i - 1, t)];
    if (rem == pb.s) return {0.0, 1.0};
    return {pb.end_value[rem], 0.0};
  }

  void fill_w(const TurnProblem& pb, int i, int n, const SlotValues& coef, double bust, bool numeric = true) {
    const auto& totals = SlotLayout::get().totals(i);
    const auto& cls = score_classes();
    for (std::size_t c = 0; c < cls.size(); ++c) {
      for (int j = 0; j < n; ++j) {
        const Affine w = outcome(pb, i, totals[j], cls[c], coef);
        wa_[c * kLd + j] = w.a;
        wb_[c * kLd + j] = w.b;
        if (numeric) wn_[c * kLd + j] = w.at(bust);
      }
    }
  }

  Affine affine_of(std::uint32_t a, int j) const {
    Affine r{};
    for (std::uint32_t k = k_.begin(a); k < k_.end(a); ++k) {
      const std::size_t off = static_cast<std::size_t>(k_.cls(k)) * kLd + j;
      r.a += k_.prob(k) * wa_[off];
      r.b += k_.prob(k) * wb_[off];
    }
    return r;
  }

  const ClassKernel& k_;
  std::vector<double> wn_, wa_, wb_;
};

// Block unknown x from the affine start value x = a + b * (c0 + c1 * x).
// Returns false when the policy never leaves the block.
inline bool close_block(const Affine& start, double c0, double c1, double& x) {
  const double denom = 1.0 - start.b * c1;
  if (!(denom > 1e-13)) return false;
  x = (start.a + start.b * c0) / denom;
  return true;
}

struct TurnBrResult {
  double x = 0.0;   // V(s, 3, 0)
  double bust = 0.0;
  int sweeps = 0;
};

// Policy iteration for one turn with bust value c0 + c1 * x. With
// cost_mode set, policies that never leave the block are worth -infinity and
// the bust guess is made more pessimistic until a proper policy is found.
inline TurnBrResult solve_turn_br(TurnSolver& solver, const TurnProblem& pb, double c0, double c1, double bust_guess,
                                  SlotPolicy& policy, SlotValues& coef, double rel_tol, int max_iters,
                                  bool cost_mode) {
  TurnBrResult res;
  double b = bust_guess;
  // Last proper policy. A greedy step at its bust value that lands on a
  // policy which never leaves the block is a tie, so the proper one is kept.
  bool have_prev = false;
  SlotPolicy prev_policy{};
  SlotValues prev_coef{};
  double prev_x = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    solver.greedy(pb, b, policy, coef);
    ++res.sweeps;
    double x = 0.0;
    const bool proper = close_block(coef[0], c0, c1, x);
    if (!proper) {
      if (cost_mode) {
        b -= std::max(1.0, std::abs(b));
        continue;
      }
      if (have_prev) {
        policy = prev_policy;
        coef = prev_coef;
        res.x = prev_x;
        res.bust = c0 + c1 * prev_x;
        return res;
      }
      x = 0.0;
    }
    const double b_new = c0 + c1 * x;
    const double tol = 0.01 * rel_tol * std::max(std::abs(b_new), 1e-12);
    if (std::abs(b_new - b) <= tol || c1 == 0.0) {
      res.x = x;
      res.bust = b_new;
      return res;
    }
    have_prev = proper;
    if (proper) {
      prev_policy = policy;
      prev_coef = coef;
      prev_x = x;
    }
    b = b_new;
  }
  throw std::runtime_error("policy iteration did not converge at score " + std::to_string(pb.s));
}

}  // namespace darts
