#pragma once

// Fitting a covariance to censored aim data: each observation says only that a
// dart aimed at a region centre landed somewhere in an outcome region. EM with
// importance sampling, the proposal uniform on the outcome region.

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "darts/board.hpp"
#include "darts/linalg.hpp"
#include "darts/quadrature.hpp"
#include "darts/skill.hpp"

namespace darts {

struct AimRow {
  Label target;
  Label outcome;
  long long count = 0;
};

struct AimDataset {
  std::vector<AimRow> rows;

  long long total() const {
    long long n = 0;
    for (const auto& r : rows) n += r.count;
    return n;
  }

  // Rows whose target lies in the given region set, zero counts dropped.
  AimDataset restricted_to(const std::vector<Label>& regions) const {
    const std::set<Label> keep(regions.begin(), regions.end());
    AimDataset out;
    for (const auto& r : rows) {
      if (r.count > 0 && keep.count(r.target)) out.rows.push_back(r);
    }
    return out;
  }
};

inline AimDataset parse_aim_csv(std::istream& in) {
  AimDataset d;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty aim dataset");
  auto strip = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    while (!s.empty() && s.front() == ' ') s.erase(s.begin());
    return s;
  };
  if (strip(line) != "target_region,outcome,count") {
    throw std::runtime_error("expected header 'target_region,outcome,count'");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (strip(line).empty()) continue;
    std::stringstream ss(line);
    std::string t, z, c;
    if (!std::getline(ss, t, ',') || !std::getline(ss, z, ',') || !std::getline(ss, c)) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected three fields");
    }
    AimRow row;
    row.target = parse_label_or_throw(strip(t));
    row.outcome = parse_label_or_throw(strip(z));
    if (row.target.is_miss()) throw std::runtime_error("line " + std::to_string(lineno) + ": MISS is not a target");
    std::size_t used = 0;
    const std::string cs = strip(c);
    row.count = std::stoll(cs, &used);
    if (used != cs.size() || row.count < 0) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": count must be a nonnegative integer");
    }
    d.rows.push_back(row);
  }
  return d;
}

inline AimDataset load_aim_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_aim_csv(in);
}

inline void write_aim_csv(const AimDataset& d, std::ostream& out) {
  out << "target_region,outcome,count\n";
  for (const auto& r : d.rows) out << r.target.name() << "," << r.outcome.name() << "," << r.count << "\n";
}

// Censors simulated throws at region centres into (target, outcome, count) rows.
template <class Rng>
AimDataset simulate_aim_data(const Mat2& sigma, const std::vector<Label>& targets, long long darts_per_target,
                             const BoardGeometry& g, Rng& rng) {
  const SkillModel m = SkillModel::uniform(sigma);
  AimDataset d;
  for (Label t : targets) {
    std::map<Label, long long> counts;
    const Vec2 a = region_center(g, t);
    for (long long k = 0; k < darts_per_target; ++k) ++counts[simulate_throw(m, a, g, rng).label];
    for (auto [z, n] : counts) d.rows.push_back({t, z, n});
  }
  return d;
}

// ---------------------------------------------------------------------------
// Regions for the E-step

// Union of polar rectangles about an origin.
struct PolarRegion {
  std::vector<PolarPiece> pieces;
  Vec2 origin{0.0, 0.0};

  double area() const {
    double s = 0.0;
    for (const auto& p : pieces) s += p.area();
    return s;
  }

  double distance_to(Vec2 a) const {
    const Vec2 l = a - origin;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : pieces) best = std::min(best, piece_distance(p, l));
    return best;
  }

  // Uniform draw from the region intersected with the disc (c, rho); nullopt if
  // the intersection is (numerically) empty.
  template <class Rng>
  std::optional<Vec2> sample_in_disc(Vec2 c, double rho, Rng& rng) const {
    const Vec2 l = c - origin;
    struct Box {
      double r0, r1, t0, t1, w;
    };
    std::array<Box, 4> boxes{};
    std::size_t nb = 0;
    double total = 0.0;
    const double dist = l.norm();
    for (const auto& p : pieces) {
      const double r0 = std::max(p.r0, dist - rho);
      const double r1 = std::min(p.r1, dist + rho);
      if (!(r1 > r0)) continue;
      double t0, t1;
      if (rho >= dist) {
        t0 = p.full_circle ? 0.0 : p.theta0;
        t1 = p.full_circle ? 2.0 * kPi : p.theta1;
      } else {
        const double half = std::asin(rho / dist);
        const double phi = std::atan2(l.y, l.x);
        if (p.full_circle) {
          t0 = phi - half;
          t1 = phi + half;
        } else {
          const double mid = 0.5 * (p.theta0 + p.theta1);
          const double off = std::remainder(phi - mid, 2.0 * kPi);
          t0 = std::max(p.theta0, mid + off - half);
          t1 = std::min(p.theta1, mid + off + half);
          if (!(t1 > t0)) continue;
        }
      }
      const double w = 0.5 * (t1 - t0) * (r1 * r1 - r0 * r0);
      if (nb < boxes.size() && w > 0.0) {
        boxes[nb++] = {r0, r1, t0, t1, w};
        total += w;
      }
    }
    if (nb == 0 || !(total > 0.0)) return std::nullopt;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int attempt = 0; attempt < 10000; ++attempt) {
      double pick = u01(rng) * total;
      std::size_t k = 0;
      while (k + 1 < nb && pick >= boxes[k].w) pick -= boxes[k++].w;
      const Box& b = boxes[k];
      const double r = std::sqrt(b.r0 * b.r0 + u01(rng) * (b.r1 * b.r1 - b.r0 * b.r0));
      const double t = b.t0 + u01(rng) * (b.t1 - b.t0);
      const Vec2 x{r * std::cos(t), r * std::sin(t)};
      if ((x - l).norm() <= rho) return x + origin;
    }
    return std::nullopt;
  }

 private:
  static double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    double t = len2 > 0.0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
  }

  static double piece_distance(const PolarPiece& p, Vec2 l) {
    const double r = l.norm();
    if (p.full_circle) return std::max({0.0, p.r0 - r, std::isinf(p.r1) ? 0.0 : r - p.r1});
    const double phi = std::atan2(l.y, l.x);
    const double mid = 0.5 * (p.theta0 + p.theta1);
    const double off = std::remainder(phi - mid, 2.0 * kPi);
    const bool inside_angle = std::abs(off) <= 0.5 * (p.theta1 - p.theta0);
    if (inside_angle) return std::max({0.0, p.r0 - r, r - p.r1});
    double best = std::numeric_limits<double>::infinity();
    for (double t : {p.theta0, p.theta1}) {
      const Vec2 u{std::cos(t), std::sin(t)};
      best = std::min(best, segment_distance(l, p.r0 * u, p.r1 * u));
    }
    return best;
  }
};

inline PolarRegion board_region(const BoardGeometry& g, Label z) { return {region_pieces(g, z), {0.0, 0.0}}; }

// ---------------------------------------------------------------------------
// EM

struct EmConfig {
  int m_samples = 5000;
  int max_iter = 100;
  double rel_tol = 1e-6;
  std::uint64_t rng_seed = 20240501;
  bool track_loglik = true;
  double loglik_cell = 0.5;
};

struct EmResult {
  Mat2 sigma;
  int iterations = 0;
  bool converged = false;
  std::vector<Mat2> path;       // covariance after each iteration, path[0] = sigma0
  std::vector<double> loglik;   // observed-data log-likelihood along path (if tracked)
};

template <class Region>
struct EmObservation {
  Vec2 aim;
  Region region;
  double count = 0.0;
};

// EM over arbitrary region types providing distance_to and sample_in_disc.
template <class Region>
EmResult fit_em_observations(const std::vector<EmObservation<Region>>& obs, const EmConfig& cfg, const Mat2& sigma0,
                             const std::function<double(const Mat2&)>& loglik = {}) {
  if (cfg.m_samples < 1) throw std::invalid_argument("m_samples must be at least 1");
  if (!sigma0.is_spd()) throw std::invalid_argument("initial covariance is not SPD");
  double n = 0.0;
  for (const auto& o : obs) n += o.count;
  if (obs.empty() || !(n > 0.0)) throw std::invalid_argument("no observations to fit");

  std::mt19937_64 rng(cfg.rng_seed);
  EmResult res;
  res.sigma = sigma0;
  res.path.push_back(sigma0);
  if (loglik) res.loglik.push_back(loglik(sigma0));

  std::vector<Vec2> xs(cfg.m_samples);
  std::vector<double> logw(cfg.m_samples);
  for (int it = 0; it < cfg.max_iter; ++it) {
    const Mat2 old = res.sigma;
    const Mat2 inv = old.inverse();
    const double reach = kWindowSigmas * std::sqrt(old.max_eigenvalue());
    Mat2 acc{};
    for (const auto& o : obs) {
      if (!(o.count > 0.0)) continue;
      double rho = o.region.distance_to(o.aim) + reach;
      int drawn = 0;
      for (int grow = 0; grow < 8 && drawn == 0; ++grow, rho *= 2.0) {
        drawn = 0;
        for (int j = 0; j < cfg.m_samples; ++j) {
          auto x = o.region.sample_in_disc(o.aim, rho, rng);
          if (!x) break;
          xs[drawn++] = *x;
        }
      }
      if (drawn == 0) throw std::domain_error("outcome region has no area near its aim point");
      double lmax = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < drawn; ++j) {
        logw[j] = -0.5 * inv.quad(xs[j] - o.aim);
        lmax = std::max(lmax, logw[j]);
      }
      double wsum = 0.0;
      Mat2 e{};
      for (int j = 0; j < drawn; ++j) {
        const double w = std::exp(logw[j] - lmax);
        wsum += w;
        e = e + w * Mat2::outer(xs[j] - o.aim);
      }
      acc = acc + (o.count / wsum) * e;
    }
    Mat2 next = (1.0 / n) * acc;
    if (!next.is_spd()) {
      // Every sample on a line; keep a floor so the covariance stays SPD.
      const double floor = 1e-9 * std::max(1.0, next.trace());
      next = next + Mat2::identity(floor);
    }
    res.sigma = next;
    res.iterations = it + 1;
    res.path.push_back(next);
    if (loglik) res.loglik.push_back(loglik(next));
    if ((next - old).frobenius() / old.frobenius() < cfg.rel_tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// Sum of n_i log P(dart aimed at the centre of target_i lands in outcome_i).
// Zero-probability observations give -infinity.
inline double log_likelihood(const AimDataset& data, const Mat2& sigma, const BoardGeometry& g, double cell = 0.5) {
  if (!sigma.is_spd()) throw std::invalid_argument("covariance is not SPD");
  auto quad = shared_quadrature(g, cell, g.r_double_out + kWindowSigmas * std::sqrt(sigma.max_eigenvalue()) + 2.0 * cell);
  std::map<Label, LabelMasses> by_target;
  double ll = 0.0;
  for (const auto& r : data.rows) {
    if (r.count == 0) continue;
    auto it = by_target.find(r.target);
    if (it == by_target.end()) it = by_target.emplace(r.target, quad->masses(region_center(g, r.target), sigma)).first;
    const double p = it->second[r.outcome.index()];
    if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
    ll += static_cast<double>(r.count) * std::log(p);
  }
  return ll;
}

// Fits one part's covariance from the rows whose targets belong to the part.
inline EmResult fit_em(const AimDataset& data, const std::vector<Label>& part, const BoardGeometry& g,
                       const EmConfig& cfg, const Mat2& sigma0 = Mat2::identity(100.0)) {
  const AimDataset d = part.empty() ? data : data.restricted_to(part);
  if (d.total() < 1) throw std::invalid_argument("no data for this part");
  std::vector<EmObservation<PolarRegion>> obs;
  for (const auto& r : d.rows) {
    PolarRegion reg = board_region(g, r.outcome);
    if (!(reg.area() > 0.0)) throw std::invalid_argument("outcome region " + r.outcome.name() + " has zero area");
    obs.push_back({region_center(g, r.target), std::move(reg), static_cast<double>(r.count)});
  }
  std::function<double(const Mat2&)> ll;
  if (cfg.track_loglik) ll = [&](const Mat2& s) { return log_likelihood(d, s, g, cfg.loglik_cell); };
  return fit_em_observations(obs, cfg, sigma0, ll);
}

// Fits every part of a partition; parts without data keep their current covariance.
inline SkillModel fit_skill_model(const AimDataset& data, SkillModel partition, const BoardGeometry& g,
                                  const EmConfig& cfg, const Mat2& sigma0 = Mat2::identity(100.0)) {
  const auto& parts = partition.parts();
  std::vector<std::optional<Mat2>> fitted(parts.size());
  parallel_for(
      parts.size(),
      [&](std::size_t b, std::size_t e) {
        for (std::size_t p = b; p < e; ++p) {
          if (data.restricted_to(parts[p].regions).total() < 1) continue;
          EmConfig c = cfg;
          c.rng_seed = cfg.rng_seed + 7919 * p;
          c.track_loglik = false;
          fitted[p] = fit_em(data, parts[p].regions, g, c, sigma0).sigma;
        }
      },
      1);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (fitted[p]) partition.set_sigma(p, *fitted[p]);
  }
  return partition;
}

}  // namespace darts
