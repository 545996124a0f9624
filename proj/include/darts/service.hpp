#pragma once

// HTTP/JSON advisor over solved games: live match sessions, recommended
// targets, Delta-P heat maps and what-if queries. All game logic goes through
// the rules in rules.hpp; solution tables are shared read-only.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "darts/store.hpp"

namespace darts {

using json = nlohmann::json;

struct ApiError : std::runtime_error {
  int status;
  ApiError(int s, const std::string& m) : std::runtime_error(m), status(s) {}
};

enum class Player { A, B };

inline const char* player_name(Player p) { return p == Player::A ? "A" : "B"; }
inline Player other(Player p) { return p == Player::A ? Player::B : Player::A; }

inline Player parse_player(const json& j) {
  if (j == "A") return Player::A;
  if (j == "B") return Player::B;
  throw ApiError(422, "player must be \"A\" or \"B\"");
}

// Live position: both start-of-turn scores, the thrower and its turn progress.
struct Position {
  int sA = 0;
  int sB = 0;
  Player turn = Player::A;
  int i = 3;
  int u = 0;

  int own() const { return turn == Player::A ? sA : sB; }
  int opp() const { return turn == Player::A ? sB : sA; }
  GameState game_state() const { return {own(), opp(), i, u}; }
  friend bool operator==(const Position&, const Position&) = default;
};

inline json to_json(const Position& p) {
  return {{"sA", p.sA}, {"sB", p.sB}, {"turn", player_name(p.turn)}, {"i", p.i}, {"u", p.u}};
}

// A live position that the solution covers.
inline Position position_from_json(const json& j, int max_score) {
  Position p;
  try {
    p.sA = j.at("sA").get<int>();
    p.sB = j.at("sB").get<int>();
    p.turn = parse_player(j.at("turn"));
    p.i = j.value("i", 3);
    p.u = j.value("u", 0);
  } catch (const json::exception& e) {
    throw ApiError(422, std::string("bad state: ") + e.what());
  }
  for (int s : {p.sA, p.sB}) {
    if (s < 2 || s > max_score) throw ApiError(422, "scores must be in 2.." + std::to_string(max_score));
  }
  if (p.i < 1 || p.i > 3 || !SlotLayout::get().reachable(p.own(), p.i, p.u)) {
    throw ApiError(422, "darts left and points scored do not form a reachable turn state");
  }
  return p;
}

enum class LegStatus { InPlay, LegComplete, MatchComplete };

inline const char* status_name(LegStatus s) {
  switch (s) {
    case LegStatus::InPlay:
      return "in_play";
    case LegStatus::LegComplete:
      return "leg_complete";
    case LegStatus::MatchComplete:
      return "match_complete";
  }
  return "";
}

struct DartRecord {
  Player player = Player::A;
  Label label = Label::miss();
  std::optional<Vec2> point;
};

// One match of best-of-N legs. Leg 1 starts with A and starters alternate.
// history holds every dart and every leg change; replaying it from the
// initial state reproduces the session.
class MatchSession {
 public:
  MatchSession(std::string id, std::string solution, int legs, int start_score)
      : id_(std::move(id)), solution_(std::move(solution)), legs_(legs), start_(start_score) {
    if (legs < 1 || legs % 2 == 0) throw ApiError(422, "legs must be a positive odd number");
    pos_ = {start_, start_, Player::A, 3, 0};
  }

  const std::string& id() const { return id_; }
  const std::string& solution() const { return solution_; }
  const Position& position() const { return pos_; }
  LegStatus status() const { return status_; }
  const json& history() const { return history_; }

  // Applies one dart of the player to throw and returns the events it caused.
  json throw_dart(Label z, std::optional<Vec2> point = std::nullopt) {
    if (status_ != LegStatus::InPlay) throw ApiError(409, std::string("leg is over (") + status_name(status_) + ")");
    json rec = {{"type", "dart"}, {"player", player_name(pos_.turn)}, {"label", z.name()}};
    if (point) rec["point"] = {point->x, point->y};
    history_.push_back(rec);

    json events = json::array();
    const DartResult r = apply_dart({pos_.own(), pos_.i, pos_.u}, z);
    int& own = pos_.turn == Player::A ? pos_.sA : pos_.sB;
    if (std::holds_alternative<Checkout>(r)) {
      own = 0;
      const Player w = pos_.turn;
      ++won_[static_cast<int>(w)];
      events.push_back({{"type", "checkout"}, {"player", player_name(w)}});
      events.push_back({{"type", "leg_won"}, {"player", player_name(w)}, {"leg", leg_}});
      if (2 * won_[static_cast<int>(w)] > legs_) {
        status_ = LegStatus::MatchComplete;
        events.push_back({{"type", "match_won"}, {"player", player_name(w)}});
      } else {
        status_ = LegStatus::LegComplete;
      }
    } else if (const auto* n = std::get_if<TurnState>(&r)) {
      pos_.i = n->i;
      pos_.u = n->u;
    } else {
      const auto& t = std::get<TurnOver>(r);
      if (t.bust) events.push_back({{"type", "bust"}, {"player", player_name(pos_.turn)}});
      own = t.next_score;
      events.push_back({{"type", "turn_over"}, {"player", player_name(pos_.turn)}, {"score", own}});
      pos_.turn = other(pos_.turn);
      pos_.i = 3;
      pos_.u = 0;
    }
    return events;
  }

  void next_leg() {
    if (status_ != LegStatus::LegComplete) throw ApiError(409, "the current leg is not complete");
    history_.push_back({{"type", "next_leg"}});
    ++leg_;
    status_ = LegStatus::InPlay;
    const Player starter = leg_ % 2 == 1 ? Player::A : Player::B;
    pos_ = {start_, start_, starter, 3, 0};
  }

  // Applies recorded history entries in order.
  void replay(const json& history) {
    if (!history.is_array()) throw ApiError(422, "history must be an array");
    for (const auto& e : history) {
      const std::string type = e.value("type", "");
      if (type == "next_leg") {
        next_leg();
      } else if (type == "dart") {
        if (e.contains("player") && parse_player(e.at("player")) != pos_.turn) {
          throw ApiError(422, "history dart by the wrong player");
        }
        const auto z = Label::parse(e.value("label", ""));
        if (!z) throw ApiError(422, "history dart has an unknown label");
        std::optional<Vec2> p;
        if (e.contains("point")) p = Vec2{e["point"].at(0).get<double>(), e["point"].at(1).get<double>()};
        throw_dart(*z, p);
      } else {
        throw ApiError(422, "unknown history entry");
      }
    }
  }

  json to_json() const {
    return {{"id", id_},
            {"solution", solution_},
            {"legs", legs_},
            {"leg", leg_},
            {"legs_won", {{"A", won_[0]}, {"B", won_[1]}}},
            {"status", status_name(status_)},
            {"state", darts::to_json(pos_)},
            {"history", history_}};
  }

 private:
  std::string id_;
  std::string solution_;
  int legs_;
  int start_;
  int leg_ = 1;
  int won_[2] = {0, 0};
  LegStatus status_ = LegStatus::InPlay;
  Position pos_;
  json history_ = json::array();
};

// ---------------------------------------------------------------------------
// Queries against one solved game

inline json target_json(const SolutionBundle& b, std::size_t a) {
  const Vec2 p = b.hits_a.grid[a];
  return {{"index", a}, {"x", p.x}, {"y", p.y}, {"label", classify(b.geometry, p).name()}};
}

inline json recommendation(const SolutionBundle& b, const Position& p) {
  const bool is_a = p.turn == Player::A;
  const GameState st = p.game_state();
  const Policy& eq = is_a ? b.eq.policy_a : b.eq.policy_b;
  const Policy& ns = is_a ? b.ns_a : b.ns_b;
  const HitTable& hit = is_a ? b.hits_a : b.hits_b;
  const ValueTable& vt = is_a ? b.eq.a : b.eq.b;
  const Side side = is_a ? Side::A : Side::B;
  const std::uint32_t ae = eq.at(st.s_self, st.s_opp, st.i, st.u);
  const std::uint32_t an = ns.at(st.s_self, st.s_opp, st.i, st.u);
  json e = target_json(b, ae);
  e["q"] = q_value(b.eq, hit, side, st, ae);
  json n = target_json(b, an);
  n["q"] = q_value(b.eq, hit, side, st, an);
  return {{"state", to_json(p)},
          {"player", player_name(p.turn)},
          {"j", vt.value(st.s_self, st.s_opp, st.i, st.u)},
          {"equilibrium", e},
          {"ns", n}};
}

inline constexpr int kMaxHeatmapSide = 64;

// Delta-P on the lattice, reduced to k x k blocks by their maximum so the best
// cell survives downsampling. Off-board cells are null.
inline json heatmap_json(const SolutionBundle& b, const Position& p, int downsample, bool full) {
  const HitTable& hit = p.turn == Player::A ? b.hits_a : b.hits_b;
  if (!hit.grid.is_lattice()) throw ApiError(422, "heat maps need a lattice action grid");
  const std::vector<double> dp = heatmap(b.eq, b.ref, hit, p.turn == Player::A ? Side::A : Side::B, p.game_state());
  const auto& lat = hit.grid.lattice();
  int n = 0;
  for (const auto& g : lat) n = std::max({n, std::abs(g.ix), std::abs(g.iy)});
  const int side = 2 * n + 1;
  int k = full ? 1 : std::max(1, downsample);
  if (!full) k = std::max(k, (side + kMaxHeatmapSide - 1) / kMaxHeatmapSide);
  const int m = (side + k - 1) / k;
  std::vector<std::optional<double>> cells(static_cast<std::size_t>(m) * m);
  std::size_t best = 0;
  for (std::size_t a = 0; a < dp.size(); ++a) {
    if (dp[a] > dp[best]) best = a;
    const int bx = (lat[a].ix + n) / k, by = (lat[a].iy + n) / k;
    auto& c = cells[static_cast<std::size_t>(by) * m + bx];
    if (!c || dp[a] > *c) c = dp[a];
  }
  json rows = json::array();
  for (int by = 0; by < m; ++by) {
    json row = json::array();
    for (int bx = 0; bx < m; ++bx) {
      const auto& c = cells[static_cast<std::size_t>(by) * m + bx];
      row.push_back(c ? json(*c) : json(nullptr));
    }
    rows.push_back(std::move(row));
  }
  const double cell = hit.grid.cell_size();
  json arg = target_json(b, best);
  arg["delta_p"] = dp[best];
  // Rows run from the lowest y upward; (x0, y0) is the centre of cell [0][0].
  return {{"state", to_json(p)},
          {"downsample", k},
          {"nx", m},
          {"ny", m},
          {"cell_mm", cell * k},
          {"x0", (-n + 0.5 * (k - 1)) * cell},
          {"y0", (-n + 0.5 * (k - 1)) * cell},
          {"values", rows},
          {"argmax", arg}};
}

// ---------------------------------------------------------------------------
// Service

class AdvisorService {
 public:
  AdvisorService() = default;

  void add_solution(const std::string& name, std::shared_ptr<const SolutionBundle> b) {
    std::lock_guard lock(mu_);
    solutions_[name] = std::move(b);
  }

  // Loads every .zsgsol.bin in dir; the name is the file name without extension.
  void load_directory(const std::filesystem::path& dir) {
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      const std::string f = e.path().filename().string();
      const std::string ext = ".zsgsol.bin";
      if (f.size() > ext.size() && f.compare(f.size() - ext.size(), ext.size(), ext) == 0) {
        add_solution(f.substr(0, f.size() - ext.size()), std::make_shared<SolutionBundle>(load_bundle(e.path())));
      }
    }
  }

  json solutions() const {
    std::lock_guard lock(mu_);
    json out = json::array();
    for (const auto& [name, b] : solutions_) {
      out.push_back({{"name", name},
                     {"start_score", b->max_score()},
                     {"targets", b->hits_a.size()},
                     {"cell_mm", b->hits_a.grid.cell_size()},
                     {"content_hash", hex64(content_hash(*b))}});
    }
    return out;
  }

  std::shared_ptr<const SolutionBundle> solution(const std::string& name) const {
    std::lock_guard lock(mu_);
    const auto it = solutions_.find(name);
    if (it == solutions_.end()) throw ApiError(404, "unknown solution " + name);
    return it->second;
  }

  json geometry() const {
    std::lock_guard lock(mu_);
    return geometry_to_json(solutions_.empty() ? BoardGeometry{} : solutions_.begin()->second->geometry);
  }

  // Body: {"solutionA", "solutionB"} naming one solved game (or "solution"),
  // "legs", and optionally a "history" to replay.
  json create_session(const json& body) {
    std::string name;
    if (body.contains("solution")) {
      name = body["solution"].get<std::string>();
    } else if (body.contains("solutionA")) {
      name = body["solutionA"].get<std::string>();
      if (body.value("solutionB", name) != name) {
        throw ApiError(422, "solutionA and solutionB must name the same solved game");
      }
    } else {
      std::lock_guard lock(mu_);
      if (solutions_.size() != 1) throw ApiError(422, "name the solution to play");
      name = solutions_.begin()->first;
    }
    const auto b = solution(name);
    auto slot = std::make_shared<Slot>();
    std::string id;
    {
      std::lock_guard lock(mu_);
      id = "s" + std::to_string(++next_id_);
    }
    slot->session.emplace(id, name, body.value("legs", 1), b->max_score());
    if (body.contains("history")) slot->session->replay(body["history"]);
    json out = slot->session->to_json();
    std::lock_guard lock(mu_);
    sessions_[id] = std::move(slot);
    return out;
  }

  json session(const std::string& id) const {
    auto slot = find(id);
    std::lock_guard lock(slot->mu);
    return slot->session->to_json();
  }

  json recommend(const std::string& id) const {
    auto slot = find(id);
    std::lock_guard lock(slot->mu);
    require_live(*slot->session);
    return recommendation(*solution(slot->session->solution()), slot->session->position());
  }

  json heatmap(const std::string& id, int downsample, bool full) const {
    auto slot = find(id);
    std::lock_guard lock(slot->mu);
    require_live(*slot->session);
    return heatmap_json(*solution(slot->session->solution()), slot->session->position(), downsample, full);
  }

  // Body: {"label": "T20"} or {"x": .., "y": ..}; optional "player" must be the thrower.
  json dart(const std::string& id, const json& body) {
    auto slot = find(id);
    std::lock_guard lock(slot->mu);
    MatchSession& s = *slot->session;
    Label z = Label::miss();
    std::optional<Vec2> point;
    if (body.contains("label")) {
      const auto l = body["label"].is_string() ? Label::parse(body["label"].get<std::string>()) : std::nullopt;
      if (!l) throw ApiError(422, "unknown outcome label");
      z = *l;
    } else if (body.contains("x") && body.contains("y") && body["x"].is_number() && body["y"].is_number()) {
      point = Vec2{body["x"].get<double>(), body["y"].get<double>()};
      z = classify(solution(s.solution())->geometry, *point);
    } else {
      throw ApiError(422, "a dart needs a label or an x, y landing point");
    }
    if (body.contains("player") && s.status() == LegStatus::InPlay &&
        parse_player(body["player"]) != s.position().turn) {
      throw ApiError(422, std::string("it is ") + player_name(s.position().turn) + "'s throw");
    }
    json events = s.throw_dart(z, point);
    json out = s.to_json();
    out["label"] = z.name();
    out["events"] = std::move(events);
    return out;
  }

  json next_leg(const std::string& id) {
    auto slot = find(id);
    std::lock_guard lock(slot->mu);
    slot->session->next_leg();
    return slot->session->to_json();
  }

  // Body: a state {"sA","sB","turn","i","u"}, optionally "solution" and
  // "heatmap": {"downsample": k, "full": bool}. Never touches the session.
  json whatif(const std::string& id, const json& body) const {
    auto slot = find(id);
    std::string name;
    {
      std::lock_guard lock(slot->mu);
      name = slot->session->solution();
    }
    const auto b = solution(name);
    const Position p = position_from_json(body.contains("state") ? body["state"] : body, b->max_score());
    json out = recommendation(*b, p);
    if (body.contains("heatmap")) {
      const json& h = body["heatmap"];
      out["heatmap"] = heatmap_json(*b, p, h.value("downsample", 0), h.value("full", false));
    }
    return out;
  }

  // Routes under the given CORS origin.
  void mount(httplib::Server& srv, const std::string& cors_origin = "*") {
    srv.set_post_routing_handler([cors_origin](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", cors_origin);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
    srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    auto route = [this](auto&& fn) {
      return [this, fn](const httplib::Request& req, httplib::Response& res) {
        try {
          reply(res, 200, fn(req));
        } catch (const ApiError& e) {
          reply(res, e.status, {{"error", e.what()}});
        } catch (const json::exception& e) {
          reply(res, 400, {{"error", std::string("bad request: ") + e.what()}});
        } catch (const std::exception& e) {
          reply(res, 500, {{"error", e.what()}});
        }
      };
    };
    auto body = [](const httplib::Request& req) { return req.body.empty() ? json::object() : json::parse(req.body); };
    auto id = [](const httplib::Request& req) { return req.path_params.at("id"); };
    srv.Get("/solutions", route([this](const httplib::Request&) { return solutions(); }));
    srv.Get("/geometry", route([this](const httplib::Request&) { return geometry(); }));
    srv.Post("/sessions", route([this, body](const httplib::Request& r) { return create_session(body(r)); }));
    srv.Get("/sessions/:id", route([this, id](const httplib::Request& r) { return session(id(r)); }));
    srv.Get("/sessions/:id/recommendation", route([this, id](const httplib::Request& r) { return recommend(id(r)); }));
    srv.Get("/sessions/:id/heatmap", route([this, id](const httplib::Request& r) {
              int k = 0;
              if (r.has_param("downsample")) {
                try {
                  k = std::stoi(r.get_param_value("downsample"));
                } catch (const std::exception&) {
                  throw ApiError(422, "downsample must be an integer");
                }
                if (k < 1) throw ApiError(422, "downsample must be at least 1");
              }
              const bool full = r.has_param("full") && r.get_param_value("full") != "0";
              return heatmap(id(r), k, full);
            }));
    srv.Post("/sessions/:id/dart", route([this, id, body](const httplib::Request& r) { return dart(id(r), body(r)); }));
    srv.Post("/sessions/:id/next_leg", route([this, id](const httplib::Request& r) { return next_leg(id(r)); }));
    srv.Post("/sessions/:id/whatif",
             route([this, id, body](const httplib::Request& r) { return whatif(id(r), body(r)); }));
  }

 private:
  struct Slot {
    std::mutex mu;
    std::optional<MatchSession> session;
  };

  static void reply(httplib::Response& res, int status, const json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  static void require_live(const MatchSession& s) {
    if (s.status() != LegStatus::InPlay) throw ApiError(409, std::string("leg is over (") + status_name(s.status()) + ")");
  }

  std::shared_ptr<Slot> find(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ApiError(404, "unknown session " + id);
    return it->second;
  }

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const SolutionBundle>> solutions_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  long next_id_ = 0;
};

}  // namespace darts
