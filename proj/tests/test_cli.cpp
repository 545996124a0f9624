#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "darts/store.hpp"

using namespace darts;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int code = -1;
  std::string out;  // stdout and stderr together
};

CmdResult run(const std::string& args) {
  const std::string cmd = std::string(DARTS_CLI_PATH) + " " + args + " 2>&1";
  CmdResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("darts_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& name) const { return (dir_ / name).string(); }

  // One-target table: D1 with probability q, otherwise a miss.
  std::string d1_table(double q) const {
    const BoardGeometry g;
    HitTable t = explicit_hit_table({region_center(g, Label::dbl(1))}, {{{Label::dbl(1), q}, {Label::miss(), 1 - q}}});
    t.geometry_hash = geometry_hash(g);
    save_hits(t, at("d1.hits.bin"));
    return at("d1.hits.bin");
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, PerfectThrowerNeedsThreeTurns) {
  ASSERT_EQ(run("hits --perfect --cell 5 --out " + at("p.hits.bin")).code, 0);
  const CmdResult r = run("solve ns --hits " + at("p.hits.bin") + " --start 501 --cell 5 --out " + at("p.nssol.bin"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("V(501)=3 turns"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("darts(501)=9"), std::string::npos) << r.out;
  EXPECT_EQ(load_ns(at("p.nssol.bin")).start_value(501), 3.0);
}

// With one target every policy is the same, so there is nothing to gain.
TEST_F(Cli, EqualStrategiesGainNothing) {
  const std::string h = d1_table(0.4);
  ASSERT_EQ(run("solve zsg --hits " + h + " --start 2 --out " + at("t.zsgsol.bin")).code, 0);
  const CmdResult r = run("eval gain --solution " + at("t.zsgsol.bin") + " --legs 1,3,21 --out " + at("gain.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream csv(slurp(at("gain.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "legs,p_match_e,p_match_n,gain");
  int rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "0") << line;
    ++rows;
  }
  EXPECT_EQ(rows, 3);
}

TEST_F(Cli, HeatMapIsZeroWhereThePoliciesAgree) {
  const std::string h = d1_table(0.4);
  ASSERT_EQ(run("solve zsg --hits " + h + " --start 2 --out " + at("t.zsgsol.bin")).code, 0);
  const CmdResult r = run("heatmap --solution " + at("t.zsgsol.bin") + " --state 2,2,3,0 --out " + at("h.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("max_delta_p=0 "), std::string::npos) << r.out;
  EXPECT_NE(slurp(at("h.csv")).find(",D1,0\n"), std::string::npos);
}

TEST_F(Cli, LegTableHasEveryCombination) {
  const std::string h = d1_table(0.4);
  ASSERT_EQ(run("solve zsg --hits " + h + " --start 2 --out " + at("t.zsgsol.bin")).code, 0);
  const CmdResult r = run("eval legs --solution " + at("t.zsgsol.bin"));
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* c : {"E-E,", "N-N,", "N-E,", "E-N,", "N-B,", "B-N,"}) EXPECT_NE(r.out.find(c), std::string::npos) << c;
  // A wins a symmetric race it starts with t / (1 - (1 - t)^2), t = 1 - 0.6^3.
  const double t = 1 - 0.6 * 0.6 * 0.6;
  std::ostringstream want;
  want.precision(17);
  want << "E-E," << t / (1 - (1 - t) * (1 - t));
  EXPECT_NE(r.out.find(want.str().substr(0, 14)), std::string::npos) << r.out;
}

TEST_F(Cli, IdenticalFlagsGiveIdenticalFiles) {
  const std::string skill = at("m.dartskill.json");
  save_skill(SkillModel::pro_level(), skill);
  for (const char* n : {"1", "2"}) {
    ASSERT_EQ(run("hits --skill " + skill + " --cell 20 --integration-cell 2 --out " + at(std::string(n) + ".hits.bin"))
                  .code,
              0);
    ASSERT_EQ(run("solve zsg --hits " + at(std::string(n) + ".hits.bin") + " --start 30 --out " +
                  at(std::string(n) + ".zsgsol.bin"))
                  .code,
              0);
    ASSERT_EQ(run("synth --darts 50 --seed 4 --out " + at(std::string(n) + ".csv")).code, 0);
    ASSERT_EQ(run("fit --data " + at(std::string(n) + ".csv") + " --m-samples 200 --max-iter 5 --out " +
                  at(std::string(n) + ".dartskill.json"))
                  .code,
              0);
  }
  for (const char* ext : {".hits.bin", ".zsgsol.bin", ".csv", ".dartskill.json"}) {
    EXPECT_EQ(slurp(at(std::string("1") + ext)), slurp(at(std::string("2") + ext))) << ext;
  }
  const CmdResult a = run("fit --data " + at("1.csv") + " --m-samples 200 --max-iter 5 --out " + at("x.json"));
  EXPECT_NE(a.out.find("seed=20240501"), std::string::npos);
}

TEST_F(Cli, CacheAvoidsRebuildingHitTables) {
  const std::string skill = at("m.dartskill.json");
  save_skill(SkillModel::isotropic(9.0), skill);
  const std::string env = "DARTS_CACHE_DIR=" + at("cache") + " ";
  const std::string cmd = "hits --skill " + skill + " --cell 20 --out " + at("c.hits.bin");
  ASSERT_EQ(std::system((env + DARTS_CLI_PATH + " " + cmd + " > /dev/null").c_str()), 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(at("cache"))) files += e.path().string().ends_with(".hits.bin");
  EXPECT_EQ(files, 1);
  ASSERT_EQ(std::system((env + DARTS_CLI_PATH + " " + cmd + " > /dev/null").c_str()), 0);
  EXPECT_EQ(load_hits(at("c.hits.bin")).probs, build_hit_table(SkillModel::isotropic(9.0), BoardGeometry{},
                                                                 make_grid(BoardGeometry{}, 20.0), 1.0)
                                                    .probs);
}

TEST_F(Cli, ErrorsAreOneLineAndNonzero) {
  const CmdResult missing = run("solve ns --hits " + at("none.hits.bin"));
  EXPECT_NE(missing.code, 0);
  EXPECT_EQ(missing.out.rfind("error: store: ", 0), 0u) << missing.out;
  EXPECT_EQ(std::count(missing.out.begin(), missing.out.end(), '\n'), 1);

  const CmdResult usage = run("eval legs");
  EXPECT_NE(usage.code, 0);
  EXPECT_EQ(usage.out.rfind("error: usage: ", 0), 0u) << usage.out;

  ASSERT_EQ(run("hits --perfect --cell 20 --out " + at("p.hits.bin")).code, 0);
  std::string bytes = slurp(at("p.hits.bin"));
  bytes[8] = 9;
  std::ofstream(at("v.hits.bin"), std::ios::binary) << bytes;
  const CmdResult version = run("solve ns --hits " + at("v.hits.bin") + " --start 40");
  EXPECT_EQ(version.out.rfind("error: version: ", 0), 0u) << version.out;
  const CmdResult cell = run("solve ns --hits " + at("p.hits.bin") + " --cell 5");
  EXPECT_EQ(cell.out.rfind("error: input: ", 0), 0u) << cell.out;
}

TEST_F(Cli, EverySubcommandHasHelp) {
  for (const char* sub : {"", "fit", "synth", "hits", "solve", "eval", "eval legs", "eval gain", "heatmap", "simulate",
                          "serve"}) {
    const CmdResult r = run(std::string(sub) + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub << r.out;
  }
}
