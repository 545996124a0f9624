#pragma once

// Region-conditional Gaussian skill models, hit tables and throw simulation.

#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "darts/board.hpp"
#include "darts/hash.hpp"
#include "darts/linalg.hpp"
#include "darts/parallel.hpp"
#include "darts/quadrature.hpp"

namespace darts {

struct SkillPart {
  std::string name;
  std::vector<Label> regions;
  Mat2 sigma;
};

// Partition of target regions with one covariance per part. Aim points whose
// region belongs to no part use the default part.
class SkillModel {
 public:
  SkillModel() = default;
  SkillModel(std::vector<SkillPart> parts, int default_part) : parts_(std::move(parts)), default_(default_part) {
    validate();
  }

  const std::vector<SkillPart>& parts() const { return parts_; }
  int default_part() const { return default_; }

  int part_of(Label z) const { return lookup_[z.index()]; }
  int selector(const BoardGeometry& g, Vec2 a) const { return part_of(classify(g, a)); }
  const Mat2& sigma_at(const BoardGeometry& g, Vec2 a) const { return parts_[selector(g, a)].sigma; }

  double max_window() const {
    double w = 0.0;
    for (const auto& p : parts_) w = std::max(w, kWindowSigmas * std::sqrt(p.sigma.max_eigenvalue()));
    return w;
  }

  void set_sigma(std::size_t part, const Mat2& s) {
    if (!s.is_spd()) throw std::invalid_argument("covariance is not symmetric positive definite");
    parts_.at(part).sigma = s;
  }

  void validate() {
    if (parts_.empty()) throw std::invalid_argument("skill model needs at least one part");
    if (default_ < 0 || default_ >= static_cast<int>(parts_.size())) {
      throw std::invalid_argument("default part out of range");
    }
    lookup_.fill(default_);
    std::array<bool, kNumLabels> seen{};
    for (std::size_t p = 0; p < parts_.size(); ++p) {
      if (!parts_[p].sigma.is_spd()) {
        throw std::invalid_argument("part '" + parts_[p].name + "' has a non-SPD covariance");
      }
      for (Label z : parts_[p].regions) {
        if (z.is_miss()) throw std::invalid_argument("MISS cannot be a target region");
        if (seen[z.index()]) throw std::invalid_argument("region " + z.name() + " appears in two parts");
        seen[z.index()] = true;
        lookup_[z.index()] = static_cast<int>(p);
      }
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& p : parts_) {
      nlohmann::json regions = nlohmann::json::array();
      for (Label z : p.regions) regions.push_back(z.name());
      parts.push_back({{"name", p.name},
                       {"regions", regions},
                       {"sigma", {{p.sigma.xx, p.sigma.xy}, {p.sigma.xy, p.sigma.yy}}}});
    }
    return {{"format", "dartskill"}, {"version", 1}, {"default_part", default_}, {"parts", parts}};
  }

  static SkillModel from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "dartskill") throw std::runtime_error("not a skill model document");
    if (j.value("version", 0) != 1) throw std::runtime_error("unsupported skill model version");
    std::vector<SkillPart> parts;
    for (const auto& jp : j.at("parts")) {
      SkillPart p;
      p.name = jp.value("name", "");
      for (const auto& r : jp.at("regions")) p.regions.push_back(parse_label_or_throw(r.get<std::string>()));
      const auto& s = jp.at("sigma");
      const double a = s.at(0).at(0), b = s.at(0).at(1), b2 = s.at(1).at(0), c = s.at(1).at(1);
      if (std::abs(b - b2) > 1e-12 * (1.0 + std::abs(b))) throw std::invalid_argument("sigma must be symmetric");
      p.sigma = {a, b, c};
      parts.push_back(std::move(p));
    }
    return SkillModel(std::move(parts), j.value("default_part", 0));
  }

  std::uint64_t hash() const { return fnv1a(to_json().dump()); }

  // One covariance for every aim point.
  static SkillModel uniform(const Mat2& sigma) { return SkillModel({{"all", {}, sigma}}, 0); }
  static SkillModel isotropic(double sd) { return uniform(Mat2::identity(sd * sd)); }

  // Six parts: T20, T19, T18, T17, DB and all doubles; doubles is the default.
  static SkillModel six_part(const std::array<Mat2, 6>& s) {
    std::vector<Label> doubles;
    for (int b = 1; b <= 20; ++b) doubles.push_back(Label::dbl(b));
    return SkillModel({{"T20", {Label::treble(20)}, s[0]},
                       {"T19", {Label::treble(19)}, s[1]},
                       {"T18", {Label::treble(18)}, s[2]},
                       {"T17", {Label::treble(17)}, s[3]},
                       {"DB", {Label::double_bull()}, s[4]},
                       {"doubles", doubles, s[5]}},
                      5);
  }

  // Synthetic professional-level thrower: about 4 mm on the trebles, 4.5 to 5 mm
  // on the doubles and 11 to 12 mm when aiming anywhere in the bull, with more
  // vertical than horizontal spread. The bull part covers SB as well as DB so
  // that aiming just off the bull centre does not borrow the doubles spread.
  static SkillModel pro_level() {
    std::vector<Label> doubles;
    for (int b = 1; b <= 20; ++b) doubles.push_back(Label::dbl(b));
    return SkillModel({{"T20", {Label::treble(20)}, Mat2{14.0, 1.0, 19.0}},
                       {"T19", {Label::treble(19)}, Mat2{15.0, 1.5, 20.0}},
                       {"T18", {Label::treble(18)}, Mat2{14.5, -1.0, 19.5}},
                       {"T17", {Label::treble(17)}, Mat2{15.5, -1.5, 20.5}},
                       {"bull", {Label::double_bull(), Label::single_bull()}, Mat2{125.0, 2.0, 150.0}},
                       {"doubles", doubles, Mat2{20.0, 1.0, 26.0}}},
                      5);
  }

 private:
  std::vector<SkillPart> parts_;
  int default_ = 0;
  std::array<int, kNumLabels> lookup_{};
};

inline SkillModel load_skill(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return SkillModel::from_json(nlohmann::json::parse(in));
}

inline void save_skill(const SkillModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << m.to_json().dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Hit distributions

inline std::shared_ptr<const PolarQuadrature> quadrature_for(const SkillModel& m, const BoardGeometry& g,
                                                             double cell) {
  return shared_quadrature(g, cell, g.r_double_out + m.max_window() + 2.0 * cell);
}

// p(z; a) for every label, using polar cells of size about cell_size.
inline LabelMasses hit_distribution(const SkillModel& m, Vec2 a, const BoardGeometry& g, double cell_size) {
  if (a.norm() > g.r_double_out + 1e-9) throw std::out_of_range("aim point outside the board");
  LabelMasses p = quadrature_for(m, g, cell_size)->masses(a, m.sigma_at(g, a));
  double scoring = 0.0;
  for (int k = 0; k < kNumScoringLabels; ++k) scoring += p[k];
  if (scoring > 1.0) {
    for (int k = 0; k < kNumScoringLabels; ++k) p[k] /= scoring;
    scoring = 1.0;
  }
  p[Label::miss().index()] = 1.0 - scoring;
  return p;
}

// Per-target outcome distributions over an action grid.
struct HitTable {
  ActionGrid grid;
  std::vector<double> probs;  // row-major, kNumLabels per target
  std::uint64_t skill_hash = 0;
  std::uint64_t geometry_hash = 0;
  double integration_cell = 0.0;

  std::size_t size() const { return grid.size(); }
  const double* row(std::size_t a) const { return probs.data() + a * kNumLabels; }
  double p(std::size_t a, Label z) const { return probs[a * kNumLabels + z.index()]; }

  // Throws unless every row is nonnegative and sums to one within tol.
  void validate(double tol = 1e-9) const {
    if (probs.size() != grid.size() * kNumLabels) throw std::invalid_argument("hit table has wrong shape");
    for (std::size_t a = 0; a < size(); ++a) {
      double s = 0.0;
      for (int k = 0; k < kNumLabels; ++k) {
        const double v = row(a)[k];
        if (!(v >= 0.0)) throw std::invalid_argument("hit table has a negative entry at target " + std::to_string(a));
        s += v;
      }
      if (std::abs(s - 1.0) > tol) {
        throw std::invalid_argument("hit table row " + std::to_string(a) + " is not normalised");
      }
    }
  }
};

inline std::uint64_t geometry_hash(const BoardGeometry& g) { return fnv1a(geometry_to_json(g).dump()); }

inline HitTable build_hit_table(const SkillModel& m, const BoardGeometry& g, const ActionGrid& grid,
                                double integration_cell) {
  HitTable t;
  t.grid = grid;
  t.probs.assign(grid.size() * kNumLabels, 0.0);
  t.skill_hash = m.hash();
  t.geometry_hash = geometry_hash(g);
  t.integration_cell = integration_cell;
  auto quad = quadrature_for(m, g, integration_cell);
  parallel_for(grid.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t a = b; a < e; ++a) {
      const LabelMasses p = hit_distribution(m, grid[a], g, integration_cell);
      std::copy(p.begin(), p.end(), t.probs.begin() + a * kNumLabels);
    }
  });
  return t;
}

// Default integration cell: the action cell, capped at 1 mm.
inline double default_integration_cell(double action_cell) { return std::min(action_cell, 1.0); }

// Every aim lands exactly where aimed.
inline HitTable perfect_hit_table(const BoardGeometry& g, const ActionGrid& grid) {
  HitTable t;
  t.grid = grid;
  t.probs.assign(grid.size() * kNumLabels, 0.0);
  t.geometry_hash = geometry_hash(g);
  for (std::size_t a = 0; a < grid.size(); ++a) t.probs[a * kNumLabels + classify(g, grid[a]).index()] = 1.0;
  return t;
}

// Hit table from explicit rows; each row maps labels to probabilities.
inline HitTable explicit_hit_table(std::vector<Vec2> targets, const std::vector<std::vector<std::pair<Label, double>>>& rows) {
  if (targets.size() != rows.size()) throw std::invalid_argument("one row per target required");
  HitTable t;
  t.grid = ActionGrid(std::move(targets));
  t.probs.assign(rows.size() * kNumLabels, 0.0);
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (auto [z, p] : rows[a]) t.probs[a * kNumLabels + z.index()] += p;
  }
  t.validate();
  return t;
}

// ---------------------------------------------------------------------------
// Simulation

struct Throw {
  Vec2 point;
  Label label;
};

template <class Rng>
Throw simulate_throw(const SkillModel& m, Vec2 a, const BoardGeometry& g, Rng& rng) {
  const Cholesky2 chol(m.sigma_at(g, a));
  std::normal_distribution<double> n01;
  const double z1 = n01(rng);
  const double z2 = n01(rng);
  const Vec2 p = a + chol.apply({z1, z2});
  return {p, classify(g, p)};
}

// Draws an outcome label from a categorical row.
template <class Rng>
Label sample_label(const double* row, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double u = u01(rng);
  for (int k = 0; k < kNumLabels; ++k) {
    u -= row[k];
    if (u < 0.0) return Label::from_index(k);
  }
  for (int k = kNumLabels - 1; k >= 0; --k) {
    if (row[k] > 0.0) return Label::from_index(k);
  }
  return Label::miss();
}

}  // namespace darts
