#pragma once

// Dartboard geometry, outcome labels, the scoring map (x, y) -> label, region
// centres and action grids.
//
// Coordinates are millimetres with the origin at the centre of the double bull.
// Angles are measured counterclockwise from the +x axis; the 20 wedge is
// centred on +y.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "darts/linalg.hpp"

namespace darts {

inline constexpr double kPi = std::numbers::pi;
inline constexpr int kNumWedges = 20;
inline constexpr double kWedgeAngle = 2.0 * kPi / kNumWedges;

struct BoardGeometry {
  double r_db = 6.35;
  double r_sb = 15.9;
  double r_treble_in = 99.0;
  double r_treble_out = 107.0;
  double r_double_in = 162.0;
  double r_double_out = 170.0;
  // Clockwise from the top wedge.
  std::array<int, kNumWedges> segment_order{20, 1, 18, 4, 13, 6, 10, 15, 2, 17, 3, 19, 7, 16, 8, 11, 14, 9, 12, 5};

  void validate() const {
    if (!(0.0 < r_db && r_db < r_sb && r_sb < r_treble_in && r_treble_in < r_treble_out &&
          r_treble_out < r_double_in && r_double_in < r_double_out)) {
      throw std::invalid_argument("board radii must be strictly increasing and positive");
    }
    std::array<bool, kNumWedges + 1> seen{};
    for (int b : segment_order) {
      if (b < 1 || b > kNumWedges || seen[b]) {
        throw std::invalid_argument("segment_order must be a permutation of 1..20");
      }
      seen[b] = true;
    }
  }

  // Position (0 = top, clockwise) of base number b.
  int wedge_of(int base) const {
    for (int k = 0; k < kNumWedges; ++k) {
      if (segment_order[k] == base) return k;
    }
    throw std::invalid_argument("base number not on board");
  }

  // Counterclockwise edge of wedge 0 (the 20 on a standard board).
  static constexpr double reference_angle() { return kPi / 2.0 + kWedgeAngle / 2.0; }

  // Angle of the bisector of wedge k.
  static double wedge_center_angle(int k) { return reference_angle() - (k + 0.5) * kWedgeAngle; }

  friend bool operator==(const BoardGeometry&, const BoardGeometry&) = default;
};

// ---------------------------------------------------------------------------
// Outcome labels

enum class Ring : std::uint8_t { Single, Double, Treble, SingleBull, DoubleBull, Miss };

inline constexpr int kNumLabels = 63;  // 62 scoring regions + miss
inline constexpr int kNumScoringLabels = 62;

// Dense index: S1..S20 = 0..19, D1..D20 = 20..39, T1..T20 = 40..59, SB = 60, DB = 61, MISS = 62.
class Label {
 public:
  constexpr Label() = default;
  static constexpr Label from_index(int idx) { return Label(static_cast<std::uint8_t>(idx)); }
  static constexpr Label single(int b) { return Label(static_cast<std::uint8_t>(b - 1)); }
  static constexpr Label dbl(int b) { return Label(static_cast<std::uint8_t>(19 + b)); }
  static constexpr Label treble(int b) { return Label(static_cast<std::uint8_t>(39 + b)); }
  static constexpr Label single_bull() { return Label(60); }
  static constexpr Label double_bull() { return Label(61); }
  static constexpr Label miss() { return Label(62); }

  constexpr int index() const { return idx_; }

  constexpr Ring ring() const {
    if (idx_ < 20) return Ring::Single;
    if (idx_ < 40) return Ring::Double;
    if (idx_ < 60) return Ring::Treble;
    if (idx_ == 60) return Ring::SingleBull;
    if (idx_ == 61) return Ring::DoubleBull;
    return Ring::Miss;
  }

  // Wedge number 1..20, or 0 for bulls and miss.
  constexpr int base() const { return idx_ < 60 ? idx_ % 20 + 1 : 0; }

  constexpr int score() const {
    switch (ring()) {
      case Ring::Single: return base();
      case Ring::Double: return 2 * base();
      case Ring::Treble: return 3 * base();
      case Ring::SingleBull: return 25;
      case Ring::DoubleBull: return 50;
      case Ring::Miss: return 0;
    }
    return 0;
  }

  // Doubles and the double bull finish a leg.
  constexpr bool is_double() const { return ring() == Ring::Double || ring() == Ring::DoubleBull; }
  constexpr bool is_miss() const { return idx_ == 62; }

  std::string name() const {
    switch (ring()) {
      case Ring::Single: return "S" + std::to_string(base());
      case Ring::Double: return "D" + std::to_string(base());
      case Ring::Treble: return "T" + std::to_string(base());
      case Ring::SingleBull: return "SB";
      case Ring::DoubleBull: return "DB";
      case Ring::Miss: return "MISS";
    }
    return "?";
  }

  static std::optional<Label> parse(std::string_view s) {
    std::string up(s);
    for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (up == "SB") return single_bull();
    if (up == "DB") return double_bull();
    if (up == "MISS" || up == "M") return miss();
    if (up.size() < 2 || up.size() > 3) return std::nullopt;
    int b = 0;
    for (std::size_t i = 1; i < up.size(); ++i) {
      if (up[i] < '0' || up[i] > '9') return std::nullopt;
      b = b * 10 + (up[i] - '0');
    }
    if (b < 1 || b > 20 || (up.size() == 3 && up[1] == '0')) return std::nullopt;
    switch (up[0]) {
      case 'S': return single(b);
      case 'D': return dbl(b);
      case 'T': return treble(b);
      default: return std::nullopt;
    }
  }

  friend constexpr bool operator==(Label, Label) = default;
  friend constexpr auto operator<=>(Label, Label) = default;

 private:
  constexpr explicit Label(std::uint8_t i) : idx_(i) {}
  std::uint8_t idx_ = 62;
};

inline int score(Label z) { return z.score(); }

inline Label parse_label_or_throw(std::string_view s) {
  auto z = Label::parse(s);
  if (!z) throw std::invalid_argument("unknown outcome label '" + std::string(s) + "'");
  return *z;
}

// ---------------------------------------------------------------------------
// Scoring map

namespace detail {

// Wedge position 0..19 containing angle theta; ties go to the wedge at the smaller angle.
inline int wedge_index(double theta) {
  double d = std::fmod(BoardGeometry::reference_angle() - theta, 2.0 * kPi);
  if (d < 0.0) d += 2.0 * kPi;
  int k = static_cast<int>(std::floor(d / kWedgeAngle));
  return std::clamp(k, 0, kNumWedges - 1);
}

inline Ring ring_at_radius(const BoardGeometry& g, double r) {
  if (r > g.r_double_out) return Ring::Miss;
  if (r <= g.r_db) return Ring::DoubleBull;
  if (r <= g.r_sb) return Ring::SingleBull;
  if (r <= g.r_treble_in) return Ring::Single;
  if (r <= g.r_treble_out) return Ring::Treble;
  if (r <= g.r_double_in) return Ring::Single;
  return Ring::Double;
}

inline Label make_label(Ring ring, int base) {
  switch (ring) {
    case Ring::Single: return Label::single(base);
    case Ring::Double: return Label::dbl(base);
    case Ring::Treble: return Label::treble(base);
    case Ring::SingleBull: return Label::single_bull();
    case Ring::DoubleBull: return Label::double_bull();
    case Ring::Miss: return Label::miss();
  }
  return Label::miss();
}

}  // namespace detail

inline Label classify(const BoardGeometry& g, Vec2 p) {
  const double r = std::hypot(p.x, p.y);
  const Ring ring = detail::ring_at_radius(g, r);
  if (ring == Ring::Miss || ring == Ring::DoubleBull || ring == Ring::SingleBull) {
    return detail::make_label(ring, 0);
  }
  const int k = detail::wedge_index(std::atan2(p.y, p.x));
  return detail::make_label(ring, g.segment_order[k]);
}

// Polar rectangle [r0, r1] x [theta0, theta1]; full_circle ignores the angles.
struct PolarPiece {
  double r0 = 0.0;
  double r1 = 0.0;
  double theta0 = 0.0;
  double theta1 = 0.0;
  bool full_circle = false;

  double area() const {
    const double span = full_circle ? 2.0 * kPi : theta1 - theta0;
    return 0.5 * span * (r1 * r1 - r0 * r0);
  }
};

// Polar pieces making up region z. Single regions have two pieces; the miss
// region extends to infinity.
inline std::vector<PolarPiece> region_pieces(const BoardGeometry& g, Label z) {
  auto wedge = [&](double r0, double r1) {
    const int k = g.wedge_of(z.base());
    const double hi = BoardGeometry::reference_angle() - k * kWedgeAngle;
    return PolarPiece{r0, r1, hi - kWedgeAngle, hi, false};
  };
  switch (z.ring()) {
    case Ring::Single: return {wedge(g.r_sb, g.r_treble_in), wedge(g.r_treble_out, g.r_double_in)};
    case Ring::Treble: return {wedge(g.r_treble_in, g.r_treble_out)};
    case Ring::Double: return {wedge(g.r_double_in, g.r_double_out)};
    case Ring::SingleBull: return {PolarPiece{g.r_db, g.r_sb, 0.0, 0.0, true}};
    case Ring::DoubleBull: return {PolarPiece{0.0, g.r_db, 0.0, 0.0, true}};
    case Ring::Miss:
      return {PolarPiece{g.r_double_out, std::numeric_limits<double>::infinity(), 0.0, 0.0, true}};
  }
  return {};
}

// Aim point for a target region: the polar midpoint of the region. Singles use
// the inner (larger) piece, DB the origin, SB the top of its annulus.
inline Vec2 region_center(const BoardGeometry& g, Label z) {
  auto polar = [](double r, double theta) { return Vec2{r * std::cos(theta), r * std::sin(theta)}; };
  switch (z.ring()) {
    case Ring::DoubleBull: return {0.0, 0.0};
    case Ring::SingleBull: return {0.0, 0.5 * (g.r_db + g.r_sb)};
    case Ring::Miss: throw std::invalid_argument("MISS has no region centre");
    default: break;
  }
  const double theta = BoardGeometry::wedge_center_angle(g.wedge_of(z.base()));
  switch (z.ring()) {
    case Ring::Single: return polar(0.5 * (g.r_sb + g.r_treble_in), theta);
    case Ring::Treble: return polar(0.5 * (g.r_treble_in + g.r_treble_out), theta);
    default: return polar(0.5 * (g.r_double_in + g.r_double_out), theta);
  }
}

// ---------------------------------------------------------------------------
// Action grids

struct GridPoint {
  int ix = 0;
  int iy = 0;
};

class ActionGrid {
 public:
  ActionGrid() = default;

  // Explicit target list (no lattice structure); used for toy models.
  explicit ActionGrid(std::vector<Vec2> targets) : targets_(std::move(targets)) {}

  ActionGrid(double cell, std::vector<Vec2> targets, std::vector<GridPoint> lattice)
      : cell_(cell), targets_(std::move(targets)), lattice_(std::move(lattice)) {}

  double cell_size() const { return cell_; }
  bool is_lattice() const { return cell_ > 0.0; }
  std::size_t size() const { return targets_.size(); }
  const Vec2& operator[](std::size_t i) const { return targets_[i]; }
  const std::vector<Vec2>& targets() const { return targets_; }
  const std::vector<GridPoint>& lattice() const { return lattice_; }

  // Index of the grid target nearest to p (lattice grids only use rounding).
  std::optional<std::size_t> find(Vec2 p, double tol = 1e-9) const {
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      if (std::abs(targets_[i].x - p.x) <= tol && std::abs(targets_[i].y - p.y) <= tol) return i;
    }
    return std::nullopt;
  }

  std::size_t nearest(Vec2 p) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      const double d = (targets_[i] - p).norm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

 private:
  double cell_ = 0.0;
  std::vector<Vec2> targets_;
  std::vector<GridPoint> lattice_;
};

// Square lattice with spacing cell_size centred on the origin, clipped to the
// board disc, ordered row-major by (y, x).
inline ActionGrid make_grid(const BoardGeometry& g, double cell_size) {
  if (!(cell_size > 0.0)) throw std::invalid_argument("cell size must be positive");
  const double rmax2 = g.r_double_out * g.r_double_out;
  const int n = static_cast<int>(std::floor(g.r_double_out / cell_size));
  std::vector<Vec2> targets;
  std::vector<GridPoint> lattice;
  for (int iy = -n; iy <= n; ++iy) {
    for (int ix = -n; ix <= n; ++ix) {
      const Vec2 p{ix * cell_size, iy * cell_size};
      if (p.x * p.x + p.y * p.y <= rmax2) {
        targets.push_back(p);
        lattice.push_back({ix, iy});
      }
    }
  }
  return ActionGrid(cell_size, std::move(targets), std::move(lattice));
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json geometry_to_json(const BoardGeometry& g) {
  return {{"format", "dartboard"},
          {"version", 1},
          {"radii_mm",
           {{"double_bull", g.r_db},
            {"single_bull", g.r_sb},
            {"treble_inner", g.r_treble_in},
            {"treble_outer", g.r_treble_out},
            {"double_inner", g.r_double_in},
            {"double_outer", g.r_double_out}}},
          {"segment_order", g.segment_order}};
}

inline BoardGeometry geometry_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "dartboard") throw std::runtime_error("not a dartboard document");
  if (j.value("version", 0) != 1) throw std::runtime_error("unsupported dartboard document version");
  BoardGeometry g;
  const auto& r = j.at("radii_mm");
  g.r_db = r.at("double_bull").get<double>();
  g.r_sb = r.at("single_bull").get<double>();
  g.r_treble_in = r.at("treble_inner").get<double>();
  g.r_treble_out = r.at("treble_outer").get<double>();
  g.r_double_in = r.at("double_inner").get<double>();
  g.r_double_out = r.at("double_outer").get<double>();
  const auto order = j.at("segment_order").get<std::vector<int>>();
  if (order.size() != kNumWedges) throw std::runtime_error("segment_order must have 20 entries");
  std::copy(order.begin(), order.end(), g.segment_order.begin());
  g.validate();
  return g;
}

inline BoardGeometry load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return geometry_from_json(nlohmann::json::parse(in));
}

}  // namespace darts
