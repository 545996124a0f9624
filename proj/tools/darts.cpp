// darts: fit skill models, build hit tables, solve, evaluate, export and serve.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "darts/combos.hpp"
#include "darts/em.hpp"
#include "darts/service.hpp"

using namespace darts;

namespace {

constexpr std::uint64_t kDefaultSeed = 20240501;

// Failure with a category for the one-line error report.
struct CliError : std::runtime_error {
  std::string category;
  CliError(std::string cat, const std::string& m) : std::runtime_error(m), category(std::move(cat)) {}
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

BoardGeometry geometry_or_default(const std::string& path) {
  return path.empty() ? BoardGeometry{} : load_geometry(path);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Output stream: the file at path, or stdout when path is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw CliError("io", "cannot write " + path);
    }
  }
  std::ostream& get() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

HitTable hits_for(const SkillModel& m, const BoardGeometry& g, const ActionGrid& grid, double integ) {
  if (auto cache = ArtifactCache::from_env()) return cache->hits(m, g, grid, integ);
  return build_hit_table(m, g, grid, integ);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Darts strategy solver: skill fitting, single-player and two-player solutions, evaluation."};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a skill model to aim/outcome counts by EM");
  std::string fit_data, fit_out, fit_init, fit_geom;
  EmConfig em;
  em.rng_seed = kDefaultSeed;
  fit->add_option("--data", fit_data, "CSV with target_region,outcome,count")->required();
  fit->add_option("--out", fit_out, "Output .dartskill.json")->required();
  fit->add_option("--init", fit_init, "Skill model giving the partition (default: six-part pro model)");
  fit->add_option("--geometry", fit_geom, "Board geometry JSON");
  fit->add_option("--m-samples", em.m_samples, "Importance samples per observation")->capture_default_str();
  fit->add_option("--max-iter", em.max_iter, "EM iteration cap")->capture_default_str();
  fit->add_option("--tol", em.rel_tol, "Relative change to stop at")->capture_default_str();
  fit->add_option("--seed", em.rng_seed, "Random seed")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "Simulate aim/outcome counts for a Gaussian thrower");
  std::vector<double> synth_sigma{9.0, 2.0, 16.0};
  std::string synth_targets = "D1-D20", synth_out;
  long long synth_n = 500;
  std::uint64_t synth_seed = kDefaultSeed;
  synth->add_option("--sigma", synth_sigma, "Covariance xx,xy,yy in mm^2")->delimiter(',')->expected(3);
  synth->add_option("--targets", synth_targets, "Labels, comma separated, or D1-D20 / T1-T20")->capture_default_str();
  synth->add_option("--darts", synth_n, "Darts per target")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output CSV (default stdout)");

  // hits
  auto* hits = app.add_subcommand("hits", "Build the outcome table over an action grid");
  std::string hits_skill, hits_out, hits_geom;
  double hits_cell = 1.0, hits_integ = 0.0;
  bool hits_perfect = false;
  hits->add_option("--skill", hits_skill, "Skill model .dartskill.json");
  hits->add_flag("--perfect", hits_perfect, "Every dart lands where aimed");
  hits->add_option("--cell", hits_cell, "Action grid spacing in mm")->capture_default_str();
  hits->add_option("--integration-cell", hits_integ, "Integration cell in mm (default min(cell, 1))");
  hits->add_option("--geometry", hits_geom, "Board geometry JSON");
  hits->add_option("--out", hits_out, "Output .hits.bin")->required();

  // solve
  auto* solve = app.add_subcommand("solve", "Solve the single-player (ns) or two-player (zsg) problem");
  std::string solve_mode, solve_hits, solve_opp, solve_out, solve_geom;
  SolveConfig scfg;
  double solve_cell = 0.0;
  bool solve_history = false;
  solve->add_option("mode", solve_mode, "ns or zsg")->required()->check(CLI::IsMember({"ns", "zsg"}));
  solve->add_option("--hits", solve_hits, "Hit table of player A")->required();
  solve->add_option("--opp-hits", solve_opp, "Hit table of player B (zsg; default: same as A)");
  solve->add_option("--start", scfg.start_score, "Start score")->capture_default_str();
  solve->add_option("--cell", solve_cell, "Expected action grid spacing in mm (checked against the table)");
  solve->add_option("--tol", scfg.rel_tol, "Relative tolerance")->capture_default_str();
  solve->add_option("--geometry", solve_geom, "Board geometry JSON");
  solve->add_flag("--history", solve_history, "Keep per-block bound histories (zsg)");
  solve->add_option("--out", solve_out, "Output .nssol.bin or .zsgsol.bin");

  // eval
  auto* eval = app.add_subcommand("eval", "Leg win probabilities and match gains");
  eval->require_subcommand(1);
  auto* legs = eval->add_subcommand("legs", "Leg win probability for strategy combinations");
  std::string legs_solution, legs_combos = "EE,NN,NE,EN,NB,BN", legs_out;
  legs->add_option("--solution", legs_solution, "Solved game .zsgsol.bin")->required();
  legs->add_option("--combos", legs_combos, "Combinations")->capture_default_str();
  legs->add_option("--out", legs_out, "Output CSV (default stdout)");
  auto* gainc = eval->add_subcommand("gain", "Match-level gain of equilibrium over single-player play");
  std::string gain_solution, gain_legs = "1,21,31,35", gain_out;
  gainc->add_option("--solution", gain_solution, "Solved game .zsgsol.bin")->required();
  gainc->add_option("--legs", gain_legs, "Match lengths")->capture_default_str();
  gainc->add_option("--out", gain_out, "Output CSV (default stdout)");

  // heatmap
  auto* heat = app.add_subcommand("heatmap", "Delta-P of every target at one state");
  std::string heat_solution, heat_state, heat_out, heat_player = "A";
  heat->add_option("--solution", heat_solution, "Solved game .zsgsol.bin")->required();
  heat->add_option("--state", heat_state, "Thrower's score, opponent's score, darts left, points scored: s,o,i,u")
      ->required();
  heat->add_option("--player", heat_player, "Thrower")->check(CLI::IsMember({"A", "B"}))->capture_default_str();
  heat->add_option("--out", heat_out, "Output CSV (default stdout)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte-Carlo matches for a strategy combination");
  std::string sim_solution, sim_combo = "E-E";
  int sim_legs = 1, sim_matches = 10000;
  std::uint64_t sim_seed = kDefaultSeed;
  sim->add_option("--solution", sim_solution, "Solved game .zsgsol.bin")->required();
  sim->add_option("--combo", sim_combo, "Strategy combination")->capture_default_str();
  sim->add_option("--legs", sim_legs, "Legs per match (odd)")->capture_default_str();
  sim->add_option("--matches", sim_matches, "Number of matches")->capture_default_str();
  sim->add_option("--seed", sim_seed, "Random seed")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the advisor HTTP service");
  std::string serve_dir, serve_host = "127.0.0.1", serve_origin = "*";
  int serve_port = 8080;
  serve->add_option("--port", serve_port, "Port")->capture_default_str();
  serve->add_option("--host", serve_host, "Bind address")->capture_default_str();
  serve->add_option("--solutions", serve_dir, "Directory of .zsgsol.bin files")->required();
  serve->add_option("--cors-origin", serve_origin, "Allowed CORS origin")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }
  set_num_threads(threads);

  try {
    if (*fit) {
      std::cout << "seed=" << em.rng_seed << "\n";
      const BoardGeometry g = geometry_or_default(fit_geom);
      const AimDataset d = load_aim_csv(fit_data);
      const SkillModel start = fit_init.empty() ? SkillModel::pro_level() : load_skill(fit_init);
      const SkillModel m = fit_skill_model(d, start, g, em);
      save_skill(m, fit_out);
      for (const auto& p : m.parts()) {
        std::cout << p.name << " sigma=[[" << p.sigma.xx << "," << p.sigma.xy << "],[" << p.sigma.xy << ","
                  << p.sigma.yy << "]]\n";
      }
    } else if (*synth) {
      std::cout << "seed=" << synth_seed << "\n";
      std::vector<Label> targets;
      if (synth_targets == "D1-D20" || synth_targets == "T1-T20") {
        for (int b = 1; b <= 20; ++b) targets.push_back(synth_targets[0] == 'D' ? Label::dbl(b) : Label::treble(b));
      } else {
        for (const auto& t : split(synth_targets, ',')) targets.push_back(parse_label_or_throw(t));
      }
      std::mt19937_64 rng(synth_seed);
      const AimDataset d =
          simulate_aim_data(Mat2{synth_sigma[0], synth_sigma[1], synth_sigma[2]}, targets, synth_n, BoardGeometry{}, rng);
      if (synth_out.empty()) {
        write_aim_csv(d, std::cout);
      } else {
        std::ofstream out(synth_out);
        if (!out) throw CliError("io", "cannot write " + synth_out);
        write_aim_csv(d, out);
      }
    } else if (*hits) {
      const auto t0 = std::chrono::steady_clock::now();
      const BoardGeometry g = geometry_or_default(hits_geom);
      const ActionGrid grid = make_grid(g, hits_cell);
      HitTable t;
      if (hits_perfect) {
        t = perfect_hit_table(g, grid);
      } else {
        if (hits_skill.empty()) throw CliError("usage", "hits needs --skill or --perfect");
        const double integ = hits_integ > 0.0 ? hits_integ : default_integration_cell(hits_cell);
        t = hits_for(load_skill(hits_skill), g, grid, integ);
      }
      save_hits(t, hits_out);
      std::cout << "targets=" << t.size() << " hash=" << hex64(content_hash(t)) << " seconds=" << seconds_since(t0)
                << "\n";
    } else if (*solve) {
      const auto t0 = std::chrono::steady_clock::now();
      const HitTable ha = load_hits(solve_hits);
      if (solve_cell > 0.0 && std::abs(ha.grid.cell_size() - solve_cell) > 1e-12) {
        throw CliError("input", "hit table grid is " + std::to_string(ha.grid.cell_size()) + " mm, not " +
                                    std::to_string(solve_cell));
      }
      if (solve_mode == "ns") {
        const NsSolution s = solve_ns(ha, scfg);
        if (!solve_out.empty()) save_ns(s, content_hash(ha), scfg, solve_out);
        std::printf("V(%d)=%.12g turns\n", scfg.start_score, s.start_value(scfg.start_score));
        const auto darts = solve_ns_dartcount(ha, scfg);
        std::printf("darts(%d)=%.12g\n", scfg.start_score, darts[scfg.start_score]);
      } else {
        const HitTable hb = solve_opp.empty() ? ha : load_hits(solve_opp);
        const BoardGeometry g = geometry_or_default(solve_geom);
        if (ha.geometry_hash != geometry_hash(g) || hb.geometry_hash != geometry_hash(g)) {
          throw CliError("input", "hit tables were built for a different board geometry");
        }
        if (ha.grid.targets() != hb.grid.targets()) throw CliError("input", "hit tables use different action grids");
        const SolutionBundle b = build_bundle(ha, hb, g, scfg, solve_history);
        if (!solve_out.empty()) save_bundle(b, solve_out);
        const int S = scfg.start_score;
        std::map<int, long> alt;
        long blocks = 0;
        for (int sA = 2; sA <= S; ++sA)
          for (int sB = 2; sB <= S; ++sB, ++blocks) ++alt[b.eq.block(sA, sB).alternations];
        std::printf("J(%d,%d)=%.12g\n", S, S, b.eq.p_a(S, S));
        for (const auto& [k, n] : alt) std::printf("alternations=%d blocks=%ld\n", k, n);
      }
      std::printf("seconds=%.3f\n", seconds_since(t0));
    } else if (*legs) {
      const SolutionBundle b = load_bundle(legs_solution);
      std::vector<std::pair<std::string, LegProbs>> rows;
      for (const auto& c : split(legs_combos, ',')) {
        const std::string name = normalize_combo(c);
        const int S = b.max_score();
        rows.push_back({name, leg_probs(combo_game(b, name), S, S)});
      }
      Output out(legs_out);
      write_leg_table(out.get(), rows);
    } else if (*gainc) {
      const SolutionBundle b = load_bundle(gain_solution);
      const int S = b.max_score();
      const LegProbs e = leg_probs(b.eq, S, S);
      const LegProbs n = leg_probs(combo_game(b, "N-E"), S, S);
      Output out(gain_out);
      out.get() << "legs,p_match_e,p_match_n,gain\n";
      out.get().precision(17);
      for (const auto& l : split(gain_legs, ',')) {
        const int N = std::stoi(l);
        const double pe = match_win_prob({N, e.a_starts, e.b_starts});
        const double pn = match_win_prob({N, n.a_starts, n.b_starts});
        out.get() << N << ',' << pe << ',' << pn << ',' << gain(e.a_starts, e.b_starts, n.a_starts, n.b_starts, N)
                  << '\n';
      }
    } else if (*heat) {
      const SolutionBundle b = load_bundle(heat_solution);
      const auto f = split(heat_state, ',');
      if (f.size() != 4) throw CliError("usage", "--state needs s,o,i,u");
      const int s = std::stoi(f[0]), o = std::stoi(f[1]);
      const bool is_a = heat_player == "A";
      Position p{is_a ? s : o, is_a ? o : s, is_a ? Player::A : Player::B, std::stoi(f[2]), std::stoi(f[3])};
      try {
        p = position_from_json(to_json(p), b.max_score());
      } catch (const ApiError& e) {
        throw CliError("input", e.what());
      }
      const HitTable& hit = is_a ? b.hits_a : b.hits_b;
      const auto dp = heatmap(b.eq, b.ref, hit, is_a ? Side::A : Side::B, p.game_state());
      Output out(heat_out);
      out.get() << "x,y,label,delta_p\n";
      out.get().precision(17);
      std::size_t best = 0;
      for (std::size_t a = 0; a < dp.size(); ++a) {
        if (dp[a] > dp[best]) best = a;
        out.get() << hit.grid[a].x << ',' << hit.grid[a].y << ',' << classify(b.geometry, hit.grid[a]).name() << ','
                  << dp[a] << '\n';
      }
      std::cerr << "max_delta_p=" << dp[best] << " at " << classify(b.geometry, hit.grid[best]).name() << " ("
                << hit.grid[best].x << "," << hit.grid[best].y << ")\n";
    } else if (*sim) {
      std::cout << "seed=" << sim_seed << "\n";
      const SolutionBundle b = load_bundle(sim_solution);
      const GameSolution g = combo_game(b, sim_combo);
      const int S = b.max_score();
      const MatchSpec spec{sim_legs, 0.5, 0.5};
      spec.validate();
      std::mt19937_64 rng(sim_seed);
      long won = 0;
      for (int m = 0; m < sim_matches; ++m) {
        int wa = 0, wb = 0;
        for (int leg = 0; 2 * std::max(wa, wb) <= sim_legs; ++leg) {
          const bool a_first = leg % 2 == 0;
          (simulate_leg(g.policy_a, g.policy_b, b.hits_a, b.hits_b, S, S, a_first, rng).a_wins ? wa : wb)++;
        }
        won += wa > wb;
      }
      const LegProbs lp = leg_probs(g, S, S);
      const double p = static_cast<double>(won) / sim_matches;
      std::printf("combo=%s simulated=%.6f se=%.6f exact=%.6f\n", normalize_combo(sim_combo).c_str(), p,
                  std::sqrt(p * (1 - p) / sim_matches), match_win_prob({sim_legs, lp.a_starts, lp.b_starts}));
    } else if (*serve) {
      AdvisorService svc;
      svc.load_directory(serve_dir);
      httplib::Server srv;
      svc.mount(srv, serve_origin);
      std::cout << "serving " << svc.solutions().size() << " solutions on http://" << serve_host << ":" << serve_port
                << std::endl;
      if (!srv.listen(serve_host, serve_port)) throw CliError("io", "cannot listen on port " + std::to_string(serve_port));
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.category << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const VersionMismatch& e) {
    std::cerr << "error: version: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const StoreError& e) {
    std::cerr << "error: store: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: input: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
