#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <thread>

#include "darts/service.hpp"

using namespace darts;

namespace {

const BoardGeometry kBoard;

std::shared_ptr<const SolutionBundle> make_bundle() {
  const ActionGrid grid = make_grid(kBoard, 5.0);
  const HitTable a = build_hit_table(SkillModel::pro_level(), kBoard, grid, 1.0);
  const HitTable b = build_hit_table(SkillModel::isotropic(6.0), kBoard, grid, 1.0);
  SolveConfig cfg;
  cfg.start_score = 60;
  return std::make_shared<SolutionBundle>(build_bundle(a, b, kBoard, cfg));
}

// One service behind a real HTTP server on a free local port.
class Api : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    bundle_ = make_bundle();
    svc_ = new AdvisorService;
    svc_->add_solution("pro-vs-6mm", bundle_);
    srv_ = new httplib::Server;
    svc_->mount(*srv_);
    port_ = srv_->bind_to_any_port("127.0.0.1");
    thread_ = new std::thread([] { srv_->listen_after_bind(); });
    srv_->wait_until_ready();
  }
  static void TearDownTestSuite() {
    srv_->stop();
    thread_->join();
    delete thread_;
    delete srv_;
    delete svc_;
  }

  struct Reply {
    int status = 0;
    json body;
    httplib::Headers headers;
  };

  static Reply call(const std::string& method, const std::string& path, const json& body = nullptr) {
    httplib::Client cli("127.0.0.1", port_);
    httplib::Result r = method == "GET" ? cli.Get(path)
                                        : cli.Post(path, body.is_null() ? std::string() : body.dump(), "application/json");
    if (!r) throw std::runtime_error("no response for " + path);
    return {r->status, r->body.empty() ? json() : json::parse(r->body), r->headers};
  }

  static std::string new_session(int legs = 1) {
    const Reply r = call("POST", "/sessions", {{"solutionA", "pro-vs-6mm"}, {"solutionB", "pro-vs-6mm"}, {"legs", legs}});
    EXPECT_EQ(r.status, 200) << r.body.dump();
    return r.body.at("id");
  }

  static std::shared_ptr<const SolutionBundle> bundle_;
  static AdvisorService* svc_;
  static httplib::Server* srv_;
  static std::thread* thread_;
  static int port_;
};

std::shared_ptr<const SolutionBundle> Api::bundle_;
AdvisorService* Api::svc_ = nullptr;
httplib::Server* Api::srv_ = nullptr;
std::thread* Api::thread_ = nullptr;
int Api::port_ = 0;

}  // namespace

TEST_F(Api, CatalogueAndGeometry) {
  const Reply s = call("GET", "/solutions");
  ASSERT_EQ(s.status, 200);
  ASSERT_EQ(s.body.size(), 1u);
  EXPECT_EQ(s.body[0]["name"], "pro-vs-6mm");
  EXPECT_EQ(s.body[0]["start_score"], 60);
  const Reply g = call("GET", "/geometry");
  EXPECT_EQ(geometry_from_json(g.body).segment_order, kBoard.segment_order);
}

TEST_F(Api, NewSessionStartsAtTheStartScore) {
  const Reply r = call("POST", "/sessions", {{"solution", "pro-vs-6mm"}, {"legs", 3}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["state"], json({{"sA", 60}, {"sB", 60}, {"turn", "A"}, {"i", 3}, {"u", 0}}));
  EXPECT_EQ(r.body["status"], "in_play");
  EXPECT_EQ(call("POST", "/sessions", {{"solution", "nope"}}).status, 404);
  EXPECT_EQ(call("POST", "/sessions", {{"solution", "pro-vs-6mm"}, {"legs", 2}}).status, 422);
  EXPECT_EQ(call("POST", "/sessions", {{"solutionA", "pro-vs-6mm"}, {"solutionB", "x"}}).status, 422);
}

// Random live states through the what-if endpoint against the stored tables.
TEST_F(Api, RecommendationsEqualThePolicyTables) {
  const std::string id = new_session();
  const auto& b = *bundle_;
  const auto& layout = SlotLayout::get();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> sd(2, 60), slot(0, kNumSlots - 1);
  int checked = 0;
  while (checked < 1000) {
    const int sA = sd(rng), sB = sd(rng);
    const bool a_turn = rng() % 2 == 0;
    const auto [i, u] = layout.state_of(slot(rng));
    if (!layout.reachable(a_turn ? sA : sB, i, u)) continue;
    const json st = {{"sA", sA}, {"sB", sB}, {"turn", a_turn ? "A" : "B"}, {"i", i}, {"u", u}};
    const Reply r = call("POST", "/sessions/" + id + "/whatif", st);
    ASSERT_EQ(r.status, 200) << r.body.dump();
    const int own = a_turn ? sA : sB, opp = a_turn ? sB : sA;
    const Policy& eq = a_turn ? b.eq.policy_a : b.eq.policy_b;
    const Policy& ns = a_turn ? b.ns_a : b.ns_b;
    const ValueTable& vt = a_turn ? b.eq.a : b.eq.b;
    const std::uint32_t ae = eq.at(own, opp, i, u);
    EXPECT_EQ(r.body["equilibrium"]["index"], ae);
    EXPECT_EQ(r.body["equilibrium"]["x"].get<double>(), b.hits_a.grid[ae].x);
    EXPECT_EQ(r.body["equilibrium"]["label"], classify(kBoard, b.hits_a.grid[ae]).name());
    EXPECT_EQ(r.body["ns"]["index"], ns.at(own, 0, i, u));
    EXPECT_EQ(r.body["j"].get<double>(), vt.value(own, opp, i, u));
    // The equilibrium aim attains the value.
    EXPECT_NEAR(r.body["equilibrium"]["q"].get<double>(), vt.value(own, opp, i, u), 1e-9);
    EXPECT_LE(r.body["ns"]["q"].get<double>(), vt.value(own, opp, i, u) + 1e-9);
    ++checked;
  }
}

TEST_F(Api, WhatIfAtTheLiveStateMatchesTheRecommendation) {
  const std::string id = new_session();
  call("POST", "/sessions/" + id + "/dart", {{"label", "S19"}});
  const Reply s = call("GET", "/sessions/" + id);
  const Reply rec = call("GET", "/sessions/" + id + "/recommendation");
  const Reply w = call("POST", "/sessions/" + id + "/whatif", {{"state", s.body["state"]}});
  ASSERT_EQ(rec.status, 200);
  EXPECT_EQ(rec.body, w.body);
  // What-if leaves the session alone.
  call("POST", "/sessions/" + id + "/whatif", {{"sA", 40}, {"sB", 2}, {"turn", "B"}});
  EXPECT_EQ(call("GET", "/sessions/" + id).body, s.body);
}

TEST_F(Api, DoubleBullAtFiftyAll) {
  const std::string id = new_session();
  const Reply r = call("POST", "/sessions/" + id + "/whatif", {{"sA", 50}, {"sB", 50}, {"turn", "A"}, {"i", 1}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["equilibrium"]["label"], "DB");
}

TEST_F(Api, ThreeMissesPassTheTurn) {
  const std::string id = new_session();
  json last;
  for (int k = 0; k < 3; ++k) last = call("POST", "/sessions/" + id + "/dart", {{"label", "MISS"}}).body;
  EXPECT_EQ(last["state"], json({{"sA", 60}, {"sB", 60}, {"turn", "B"}, {"i", 3}, {"u", 0}}));
  EXPECT_EQ(last["events"][0]["type"], "turn_over");
  EXPECT_EQ(last["history"].size(), 3u);
}

TEST_F(Api, BustRestoresTheScore) {
  const std::string id = new_session();
  call("POST", "/sessions/" + id + "/dart", {{"label", "S20"}});
  // 20 scored so far; T20 would go below zero.
  const Reply r = call("POST", "/sessions/" + id + "/dart", {{"label", "T20"}, {"player", "A"}});
  EXPECT_EQ(r.body["state"]["sA"], 60);
  EXPECT_EQ(r.body["state"]["turn"], "B");
  EXPECT_EQ(r.body["events"][0]["type"], "bust");
  // Exactly zero on a treble is a bust as well.
  const Reply t = call("POST", "/sessions/" + id + "/dart", {{"label", "T20"}});
  EXPECT_EQ(t.body["state"]["sB"], 60);
  EXPECT_EQ(t.body["state"]["turn"], "A");
}

TEST_F(Api, LandingPointsAreClassified) {
  const std::string id = new_session();
  const Vec2 s20 = region_center(kBoard, Label::single(20));
  const Reply r = call("POST", "/sessions/" + id + "/dart", {{"x", s20.x}, {"y", s20.y}});
  EXPECT_EQ(r.body["label"], "S20");
  EXPECT_EQ(r.body["state"]["u"], 20);
  EXPECT_EQ(r.body["history"][0]["point"][0].get<double>(), s20.x);
  const Reply off = call("POST", "/sessions/" + id + "/dart", {{"x", 400.0}, {"y", 0.0}});
  EXPECT_EQ(off.body["label"], "MISS");
}

TEST_F(Api, ErrorCodes) {
  EXPECT_EQ(call("GET", "/sessions/nope/recommendation").status, 404);
  EXPECT_EQ(call("POST", "/sessions/nope/dart", {{"label", "T20"}}).status, 404);
  const std::string id = new_session();
  EXPECT_EQ(call("POST", "/sessions/" + id + "/dart", {{"label", "T21"}}).status, 422);
  EXPECT_EQ(call("POST", "/sessions/" + id + "/dart", json::object()).status, 422);
  EXPECT_EQ(call("POST", "/sessions/" + id + "/dart", {{"label", "T20"}, {"player", "B"}}).status, 422);
  EXPECT_EQ(call("POST", "/sessions/" + id + "/whatif", {{"sA", 61}, {"sB", 40}, {"turn", "A"}}).status, 422);
  EXPECT_EQ(call("POST", "/sessions/" + id + "/whatif", {{"sA", 40}, {"sB", 40}, {"turn", "A"}, {"i", 2}, {"u", 39}})
                .status,
            422);
  EXPECT_EQ(call("GET", "/sessions/" + id + "/heatmap?downsample=0").status, 422);
  EXPECT_EQ(call("POST", "/sessions/" + id + "/next_leg").status, 409);
  for (const char* z : {"S20", "S20", "D10"}) call("POST", "/sessions/" + id + "/dart", {{"label", z}});
  const Reply s = call("GET", "/sessions/" + id);
  EXPECT_EQ(s.body["status"], "match_complete");
  EXPECT_EQ(s.body["legs_won"]["A"], 1);
  EXPECT_EQ(call("POST", "/sessions/" + id + "/dart", {{"label", "T20"}}).status, 409);
  EXPECT_EQ(call("GET", "/sessions/" + id + "/recommendation").status, 409);
}

TEST_F(Api, LegsAlternateStarters) {
  const std::string id = new_session(3);
  for (const char* z : {"S20", "S20", "D10"}) call("POST", "/sessions/" + id + "/dart", {{"label", z}});
  EXPECT_EQ(call("GET", "/sessions/" + id).body["status"], "leg_complete");
  EXPECT_EQ(call("POST", "/sessions/" + id + "/dart", {{"label", "T20"}}).status, 409);
  const Reply n = call("POST", "/sessions/" + id + "/next_leg");
  EXPECT_EQ(n.body["state"], json({{"sA", 60}, {"sB", 60}, {"turn", "B"}, {"i", 3}, {"u", 0}}));
  EXPECT_EQ(n.body["leg"], 2);
}

// Plays a match with darts drawn from the hit tables at the recommended aims,
// then rebuilds it from its history.
TEST_F(Api, ReplayReproducesTheSession) {
  const auto& b = *bundle_;
  std::mt19937_64 rng(9);
  const std::string id = new_session(5);
  json s = call("GET", "/sessions/" + id).body;
  int darts = 0;
  while (s["status"] != "match_complete") {
    if (s["status"] == "leg_complete") {
      s = call("POST", "/sessions/" + id + "/next_leg").body;
      continue;
    }
    const json rec = call("GET", "/sessions/" + id + "/recommendation").body;
    const HitTable& hit = rec["player"] == "A" ? b.hits_a : b.hits_b;
    const Label z = sample_label(hit.row(rec["equilibrium"]["index"].get<std::size_t>()), rng);
    s = call("POST", "/sessions/" + id + "/dart", {{"label", z.name()}}).body;
    ASSERT_LT(++darts, 5000);
  }
  EXPECT_EQ(std::max(s["legs_won"]["A"].get<int>(), s["legs_won"]["B"].get<int>()), 3);
  const Reply copy = call("POST", "/sessions", {{"solution", "pro-vs-6mm"}, {"legs", 5}, {"history", s["history"]}});
  ASSERT_EQ(copy.status, 200);
  json a = s, c = copy.body;
  a.erase("id");
  c.erase("id");
  a.erase("label");
  a.erase("events");
  EXPECT_EQ(a, c);
}

TEST_F(Api, HeatMapDownsamplingAndArgmax) {
  const std::string id = new_session();
  const Reply d = call("GET", "/sessions/" + id + "/heatmap");
  ASSERT_EQ(d.status, 200);
  EXPECT_LE(d.body["nx"].get<int>(), kMaxHeatmapSide);
  EXPECT_EQ(d.body["values"].size(), d.body["ny"].get<std::size_t>());
  const Reply f = call("GET", "/sessions/" + id + "/heatmap?full=1");
  EXPECT_EQ(f.body["nx"], 69);
  EXPECT_EQ(f.body["downsample"], 1);
  const Reply k4 = call("GET", "/sessions/" + id + "/heatmap?downsample=4");
  EXPECT_EQ(k4.body["nx"], 18);
  EXPECT_EQ(k4.body["cell_mm"], 20.0);

  // The best cell survives downsampling and is where the equilibrium aims.
  double best = -1.0;
  for (const auto& row : k4.body["values"])
    for (const auto& v : row)
      if (!v.is_null()) best = std::max(best, v.get<double>());
  EXPECT_EQ(best, f.body["argmax"]["delta_p"].get<double>());
  const json rec = call("GET", "/sessions/" + id + "/recommendation").body;
  EXPECT_GE(best, 0.0);
  EXPECT_NEAR(best, rec["equilibrium"]["q"].get<double>() - bundle_->ref.a.start(60, 60), 1e-12);
  // Off-board corners are null.
  EXPECT_TRUE(f.body["values"][0][0].is_null());

  const Reply w = call("POST", "/sessions/" + id + "/whatif",
                       {{"state", {{"sA", 50}, {"sB", 50}, {"turn", "B"}}}, {"heatmap", {{"downsample", 3}}}});
  EXPECT_EQ(w.body["heatmap"]["downsample"], 3);
  EXPECT_EQ(w.body["heatmap"]["argmax"]["label"], w.body["equilibrium"]["label"]);
}

TEST_F(Api, CorsHeaders) {
  const Reply r = call("GET", "/solutions");
  EXPECT_EQ(r.headers.find("Access-Control-Allow-Origin")->second, "*");
  httplib::Client cli("127.0.0.1", port_);
  const auto o = cli.Options("/sessions");
  ASSERT_TRUE(o);
  EXPECT_EQ(o->status, 204);
  EXPECT_EQ(o->get_header_value("Access-Control-Allow-Methods"), "GET, POST, OPTIONS");
}

TEST(Session, ReplayRejectsForeignHistory) {
  MatchSession s("x", "g", 1, 40);
  EXPECT_THROW(s.replay(json::array({{{"type", "dart"}, {"player", "B"}, {"label", "T20"}}})), ApiError);
  EXPECT_THROW(s.replay(json::array({{{"type", "jump"}}})), ApiError);
  EXPECT_THROW(MatchSession("x", "g", 0, 40), ApiError);
}

// The shipped schema documents every route the service mounts.
TEST(Schema, DocumentsEveryRoute) {
  std::ifstream in(std::string(DARTS_DATA_DIR) + "/../docs/api.json");
  ASSERT_TRUE(in.good());
  const json doc = json::parse(in);
  const std::map<std::string, std::string> routes = {{"/solutions", "get"},
                                                      {"/geometry", "get"},
                                                      {"/sessions", "post"},
                                                      {"/sessions/{id}", "get"},
                                                      {"/sessions/{id}/recommendation", "get"},
                                                      {"/sessions/{id}/heatmap", "get"},
                                                      {"/sessions/{id}/dart", "post"},
                                                      {"/sessions/{id}/next_leg", "post"},
                                                      {"/sessions/{id}/whatif", "post"}};
  EXPECT_EQ(doc["paths"].size(), routes.size());
  for (const auto& [path, method] : routes) EXPECT_TRUE(doc["paths"][path].contains(method)) << path;
}
