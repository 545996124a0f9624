#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "darts/zsg_solver.hpp"

using namespace darts;

namespace {

const BoardGeometry kBoard;

// Desk-scale equilibrium shared by the tests below.
struct Desk {
  ActionGrid grid = make_grid(kBoard, 5.0);
  HitTable hit = build_hit_table(SkillModel::pro_level(), kBoard, grid, 1.0);
  SolveConfig cfg = [] {
    SolveConfig c;
    c.start_score = 171;
    return c;
  }();
  NsSolution ns = solve_ns(hit, cfg);
  Policy ns_policy = Policy::from_ns(ns);
  ZsgSolution eq = solve_equilibrium(hit, hit, cfg, true);
  GameSolution ne = [this] {
    GameRoles r;
    r.fixed_a = &ns_policy;
    r.fixed_b = &eq.policy_b;
    return solve_game(hit, hit, r, cfg);
  }();

  static const Desk& get() {
    static const Desk d;
    return d;
  }
};

std::vector<Vec2> label_centres() {
  std::vector<Vec2> v;
  for (int k = 0; k < kNumLabels - 1; ++k) v.push_back(region_center(kBoard, Label::from_index(k)));
  return v;
}

template <class F>
void for_each_state(int S, F f) {
  const auto& L = SlotLayout::get();
  for (int s = 2; s <= S; ++s)
    for (int o = 2; o <= S; ++o)
      for (int k = 0; k < kNumSlots; ++k) {
        const auto [i, u] = L.state_of(k);
        if (L.reachable(s, i, u)) f(s, o, k);
      }
}

}  // namespace

// A perfect thrower needs 9 darts from 501; the opponent gets two turns and
// cannot score 501 in six darts.
TEST(Zsg, PerfectPlayerWinsWhenThrowingFirst) {
  const ActionGrid centres(label_centres());
  const HitTable perfect = perfect_hit_table(kBoard, centres);
  const HitTable other = build_hit_table(SkillModel::pro_level(), kBoard, centres, 1.0);
  SolveConfig cfg;
  const Policy pol_b = Policy::from_ns(solve_ns(other, cfg));
  const auto kernel = OpponentTurnKernel::from_policy(pol_b, other, 501);
  const BestResponse br = best_response(perfect, kernel, cfg);
  EXPECT_NEAR(br.value.start(501, 501), 1.0, 1e-12);

  // Deterministic rollout of A's policy: three turns.
  TurnState st{501, 3, 0};
  int turns = 0, s_b = 501;
  for (int dart = 0; dart < 30; ++dart) {
    if (st.i == 3) ++turns;
    const std::uint32_t a = br.policy.at(st.s, s_b, st.i, st.u);
    const DartResult r = apply_dart(st, classify(kBoard, centres[a]));
    if (std::holds_alternative<Checkout>(r)) break;
    st = std::holds_alternative<TurnState>(r) ? std::get<TurnState>(r)
                                              : TurnState{std::get<TurnOver>(r).next_score, 3, 0};
  }
  EXPECT_EQ(turns, 3);
}

TEST(Zsg, CertainDoubleOneChecksOutAtTwo) {
  const HitTable toy = explicit_hit_table({region_center(kBoard, Label::dbl(1))}, {{{Label::dbl(1), 1.0}}});
  SolveConfig cfg;
  cfg.start_score = 12;
  const BestResponse br = best_response(toy, OpponentTurnKernel::identity(12), cfg);
  for (int sB = 2; sB <= 12; ++sB) EXPECT_EQ(br.value.start(2, sB), 1.0);
}

TEST(Zsg, BestResponseDominatesSinglePlayerPolicy) {
  const ActionGrid grid = make_grid(kBoard, 10.0);
  const HitTable hit = build_hit_table(SkillModel::pro_level(), kBoard, grid, 1.0);
  SolveConfig cfg;
  cfg.start_score = 70;
  const Policy ns = Policy::from_ns(solve_ns(hit, cfg));
  const BestResponse br = best_response(hit, OpponentTurnKernel::from_policy(ns, hit, 70), cfg);
  const GameSolution h2h = head_to_head(ns, ns, hit, hit, cfg);
  GameRoles roles;
  roles.fixed_a = &br.policy;
  roles.fixed_b = &ns;
  const GameSolution back = solve_game(hit, hit, roles, cfg);
  GameRoles opt;
  opt.fixed_b = &ns;
  const GameSolution direct = solve_game(hit, hit, opt, cfg);
  for_each_state(70, [&](int s, int o, int k) {
    const double v = br.value.at_slot(s, o, k);
    EXPECT_GE(v, h2h.a.at_slot(s, o, k) - 1e-12) << s << " " << o << " " << k;
    EXPECT_NEAR(back.a.at_slot(s, o, k), v, 1e-9 * std::max(v, 1e-12));
    EXPECT_NEAR(direct.a.at_slot(s, o, k), v, 1e-9 * std::max(v, 1e-12));
  });
}

TEST(Zsg, OpponentWhoAlwaysMissesNeverWins) {
  const ActionGrid grid = make_grid(kBoard, 10.0);
  const HitTable hit = build_hit_table(SkillModel::pro_level(), kBoard, grid, 1.0);
  const HitTable miss = explicit_hit_table(grid.targets(), std::vector<std::vector<std::pair<Label, double>>>(
                                                              grid.size(), {{Label::miss(), 1.0}}));
  SolveConfig cfg;
  cfg.start_score = 40;
  const Policy start(40, false);
  const ZsgSolution eq = solve_equilibrium(hit, miss, cfg, false, &start);
  const BestResponse br = best_response(hit, OpponentTurnKernel::identity(40), cfg);
  for (int s = 2; s <= 40; ++s)
    for (int o = 2; o <= 40; ++o) {
      EXPECT_NEAR(eq.p_a(s, o), 1.0, 1e-9);
      EXPECT_NEAR(br.value.start(s, o), eq.p_a(s, o), 1e-9);
    }
}

TEST(Zsg, BoundsBracketAndConverge) {
  const Desk& d = Desk::get();
  const int S = d.cfg.start_score;
  int within5 = 0, total = 0;
  for (int a = 2; a <= S; ++a)
    for (int b = 2; b <= S; ++b) {
      const BlockStats& st = d.eq.block(a, b);
      const double j = d.eq.p_a(a, b);
      ++total;
      within5 += st.alternations <= 5;
      EXPECT_LT((st.upper - st.lower) / std::max(st.lower, 1e-12), d.cfg.rel_tol);
      const std::size_t idx = d.eq.block_index(a, b);
      const std::uint32_t h0 = d.eq.history_offset[idx], h1 = d.eq.history_offset[idx + 1];
      ASSERT_EQ(h1 - h0, st.alternations);
      for (std::uint32_t h = h0; h < h1; ++h) {
        EXPECT_LE(d.eq.bound_history[h].first, j + 1e-12);
        EXPECT_GE(d.eq.bound_history[h].second, j - 1e-12);
      }
      const auto gap = [&](std::uint32_t h) { return d.eq.bound_history[h].second - d.eq.bound_history[h].first; };
      EXPECT_LE(gap(h1 - 1), gap(h0) + 1e-15);
    }
  EXPECT_GE(within5, 0.95 * total);
}

TEST(Zsg, FirstMoverAdvantageWithIdenticalPlayers) {
  const Desk& d = Desk::get();
  for (int s = 2; s <= d.cfg.start_score; ++s) EXPECT_GE(d.eq.p_a(s, s), 0.5) << s;
}

TEST(Zsg, EquilibriumIsABestResponseToItsOpponentKernel) {
  const Desk& d = Desk::get();
  const auto kernel = OpponentTurnKernel::from_policy(d.eq.policy_b, d.hit, d.cfg.start_score);
  const BestResponse br = best_response(d.hit, kernel, d.cfg);
  double worst = 0.0;
  for_each_state(d.cfg.start_score, [&](int s, int o, int k) {
    const double j = d.eq.a.at_slot(s, o, k);
    worst = std::max(worst, std::abs(br.value.at_slot(s, o, k) - j) / std::max(j, 1e-12));
  });
  EXPECT_LT(worst, d.cfg.rel_tol);
}

TEST(Zsg, QValueEnvelope) {
  const Desk& d = Desk::get();
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> score(2, 171);
  std::uniform_int_distribution<std::size_t> target(0, d.grid.size() - 1);
  const auto& L = SlotLayout::get();
  for (int n = 0; n < 40; ++n) {
    const int s = score(rng), o = score(rng);
    std::uniform_int_distribution<int> slot(0, kNumSlots - 1);
    int k;
    do k = slot(rng);
    while (!L.reachable(s, L.state_of(k).first, L.state_of(k).second));
    const auto [i, u] = L.state_of(k);
    const GameState st{s, o, i, u};
    const double j = d.eq.a.value(s, o, i, u);
    EXPECT_NEAR(q_value(d.eq, d.hit, Side::A, st, d.eq.policy_a.at(s, o, i, u)), j, 1e-9 * std::max(j, 1e-12));
    const double jb = d.eq.b.value(s, o, i, u);
    EXPECT_NEAR(q_value(d.eq, d.hit, Side::B, st, d.eq.policy_b.at(s, o, i, u)), jb, 1e-9 * std::max(jb, 1e-12));
    for (int t = 0; t < 100; ++t) EXPECT_LE(q_value(d.eq, d.hit, Side::A, st, target(rng)), j + 1e-9 * j);
  }
}

TEST(Zsg, TrebleTwentyOnOneSeventyBusts) {
  const Desk& d = Desk::get();
  const std::size_t t20 = d.grid.nearest(region_center(kBoard, Label::treble(20)));
  ASSERT_EQ(classify(kBoard, d.grid[t20]), Label::treble(20));
  for (int sB : {50, 150}) {
    const GameState st{170, sB, 1, 120};
    const double q = q_value(d.eq, d.hit, Side::A, st, t20);
    const double j = d.eq.a.value(170, sB, 1, 120);
    const double bust = 1.0 - d.eq.b.start(sB, 170);
    EXPECT_LT(q, j);
    // Only the T20 outcome busts from (170, 1, 120); the rest of the mass ends
    // the turn on a score between 10 and 50.
    const double p_bust = d.hit.p(t20, Label::treble(20));
    EXPECT_GT(p_bust, 0.5);
    EXPECT_NEAR(q, bust, (1.0 - p_bust) + 1e-12);
    double rest = 0.0;
    for (int k = 0; k < kNumLabels; ++k) {
      const Label z = Label::from_index(k);
      if (z == Label::treble(20)) continue;
      rest += d.hit.p(t20, z) * (1.0 - d.eq.b.start(sB, 50 - z.score()));
    }
    EXPECT_NEAR(q, p_bust * bust + rest, 1e-12);
  }
}

TEST(Zsg, PointTargetsMatchGridRowsAndRejectOffBoard) {
  const Desk& d = Desk::get();
  const SkillModel m = SkillModel::pro_level();
  const GameState st{100, 80, 2, 20};
  for (std::size_t a : {std::size_t{0}, d.grid.size() / 2, d.grid.size() - 7}) {
    EXPECT_NEAR(q_value(d.eq, m, kBoard, 1.0, Side::A, st, d.grid[a]), q_value(d.eq, d.hit, Side::A, st, a), 1e-12);
  }
  EXPECT_THROW(q_value(d.eq, m, kBoard, 1.0, Side::A, st, Vec2{0, 175}), std::out_of_range);
  EXPECT_THROW(q_value(d.eq, d.hit, Side::A, st, d.grid.size()), std::out_of_range);
}

TEST(Zsg, HeatMapMaximumIsNonnegative) {
  const Desk& d = Desk::get();
  for (const GameState st : {GameState{171, 171, 3, 0}, GameState{40, 60, 3, 0}, GameState{100, 32, 2, 57},
                             GameState{170, 50, 1, 120}}) {
    const auto hm = heatmap(d.eq, d.ne, d.hit, Side::A, st);
    ASSERT_EQ(hm.size(), d.grid.size());
    EXPECT_GE(*std::max_element(hm.begin(), hm.end()), -1e-12);
  }
  EXPECT_THROW(heatmap(d.eq, GameSolution{}, d.hit, Side::A, GameState{50, 50, 3, 0}), std::invalid_argument);
}

// Ahead against an opponent on 150 the equilibrium lays up on a single while
// the single-player policy goes for the bull; against 50 both go for the bull.
TEST(Zsg, OpponentScoreChangesTheFinishAttempt) {
  const Desk& d = Desk::get();
  const std::uint32_t ns_aim = d.ns.action(170, 1, 120);
  EXPECT_EQ(classify(kBoard, d.grid[ns_aim]), Label::double_bull());

  EXPECT_EQ(classify(kBoard, d.grid[d.eq.policy_a.at(170, 50, 1, 120)]), Label::double_bull());

  const GameState ahead{170, 150, 1, 120};
  const std::uint32_t eq_aim = d.eq.policy_a.at(170, 150, 1, 120);
  const Label z = classify(kBoard, d.grid[eq_aim]);
  EXPECT_EQ(z.ring(), Ring::Single) << z.name();
  const auto hm = heatmap(d.eq, d.ne, d.hit, Side::A, ahead);
  EXPECT_GT(hm[eq_aim], 0.0);
  EXPECT_GT(hm[eq_aim], hm[ns_aim]);
}

TEST(Zsg, SurfaceCsv) {
  const Desk& d = Desk::get();
  std::ostringstream os;
  write_surface_csv(os, d.eq, d.grid, kBoard);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "sA,sB,J,aimA_x,aimA_y,labelA");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 170 * 170);
}
