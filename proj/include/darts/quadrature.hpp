#pragma once

// Gaussian mass of every board region for an aim point.
//
// The board (plus an off-board ring labelled MISS) is cut into polar cells
// whose edges follow the wires, so every cell lies inside exactly one region.
// Each cell carries a 2x2 Gauss-Legendre rule in (r, theta). Masses are
// accumulated over the nodes within a Mahalanobis window around the aim point
// and normalised by the window total, which makes every row sum to one and
// keeps vanishing covariances well defined.

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include "darts/board.hpp"
#include "darts/hash.hpp"
#include "darts/linalg.hpp"

namespace darts {

using LabelMasses = std::array<double, kNumLabels>;

// Nodes beyond this many standard deviations (in the Mahalanobis sense) are ignored.
inline constexpr double kWindowSigmas = 8.5;

class PolarQuadrature {
 public:
  PolarQuadrature(const BoardGeometry& g, double cell, double outer_radius)
      : cell_(cell), outer_(std::max(outer_radius, g.r_double_out + 2.0 * cell)) {
    if (!(cell > 0.0)) throw std::invalid_argument("integration cell must be positive");
    build(g);
  }

  double cell() const { return cell_; }
  double outer_radius() const { return outer_; }
  std::size_t node_count() const { return xs_.size(); }

  // Window half-width (mm) used for covariance sigma.
  double window(const Mat2& sigma) const {
    return std::max(kWindowSigmas * std::sqrt(sigma.max_eigenvalue()), 2.0 * cell_);
  }

  // Probability of each label for a throw ~ N(a, sigma). Rows sum to one.
  LabelMasses masses(Vec2 a, const Mat2& sigma) const {
    if (!sigma.is_spd()) throw std::domain_error("covariance is not symmetric positive definite");
    const Mat2 inv = sigma.inverse();
    const double w = window(sigma);
    if (a.norm() + w > outer_) throw std::out_of_range("aim point too far outside the integration domain");

    thread_local std::vector<double> qs;
    thread_local std::vector<std::uint32_t> ids;
    qs.clear();
    ids.clear();
    double qmin = std::numeric_limits<double>::infinity();

    const int bx0 = bucket_coord(a.x - w), bx1 = bucket_coord(a.x + w);
    const int by0 = bucket_coord(a.y - w), by1 = bucket_coord(a.y + w);
    for (int by = by0; by <= by1; ++by) {
      for (int bx = bx0; bx <= bx1; ++bx) {
        const std::size_t b = static_cast<std::size_t>(by) * nb_ + bx;
        for (std::uint32_t k = start_[b]; k < start_[b + 1]; ++k) {
          const double dx = xs_[k] - a.x, dy = ys_[k] - a.y;
          const double q = inv.xx * dx * dx + 2.0 * inv.xy * dx * dy + inv.yy * dy * dy;
          qs.push_back(q);
          ids.push_back(k);
          qmin = std::min(qmin, q);
        }
      }
    }

    LabelMasses out{};
    double total = 0.0;
    const double cutoff = qmin + kWindowSigmas * kWindowSigmas;
    for (std::size_t n = 0; n < qs.size(); ++n) {
      if (qs[n] > cutoff) continue;
      const std::uint32_t k = ids[n];
      const double m = ws_[k] * std::exp(-0.5 * (qs[n] - qmin));
      out[labels_[k]] += m;
      total += m;
    }
    if (!(total > 0.0)) {
      out[Label::miss().index()] = 1.0;
      return out;
    }
    for (double& v : out) v /= total;
    return out;
  }

 private:
  int bucket_coord(double v) const {
    const int b = static_cast<int>(std::floor((v + outer_) / bucket_));
    return std::clamp(b, 0, static_cast<int>(nb_) - 1);
  }

  void build(const BoardGeometry& g) {
    const std::array<double, 7> edges{0.0, g.r_db, g.r_sb, g.r_treble_in, g.r_treble_out, g.r_double_in,
                                      g.r_double_out};
    const double gl = 0.5 / std::sqrt(3.0);
    struct Node {
      double x, y, w;
      std::uint8_t label;
    };
    std::vector<Node> nodes;
    auto add_ring = [&](double r0, double r1, bool off_board) {
      const double circumference = 2.0 * kPi * r1;
      const int per_wedge = std::max(1, static_cast<int>(std::ceil(circumference / (kNumWedges * cell_))));
      const int nth = kNumWedges * per_wedge;
      const double dth = 2.0 * kPi / nth;
      const double dr = r1 - r0;
      const double rm = 0.5 * (r0 + r1);
      const std::array<double, 2> rn{rm - gl * dr, rm + gl * dr};
      for (int j = 0; j < nth; ++j) {
        const double hi = BoardGeometry::reference_angle() - j * dth;
        const double tm = hi - 0.5 * dth;
        const Label z = off_board ? Label::miss() : classify(g, {rm * std::cos(tm), rm * std::sin(tm)});
        const std::array<double, 2> tn{tm - gl * dth, tm + gl * dth};
        for (double r : rn) {
          for (double t : tn) {
            nodes.push_back({r * std::cos(t), r * std::sin(t), 0.25 * r * dr * dth,
                             static_cast<std::uint8_t>(z.index())});
          }
        }
      }
    };
    auto add_band = [&](double r0, double r1, bool off_board) {
      const int nr = std::max(1, static_cast<int>(std::ceil((r1 - r0) / cell_ - 1e-9)));
      const double dr = (r1 - r0) / nr;
      for (int k = 0; k < nr; ++k) add_ring(r0 + k * dr, r0 + (k + 1) * dr, off_board);
    };
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) add_band(edges[b], edges[b + 1], false);
    add_band(g.r_double_out, outer_, true);

    bucket_ = std::max(4.0 * cell_, 2.0);
    nb_ = static_cast<std::size_t>(std::ceil(2.0 * outer_ / bucket_)) + 1;
    std::vector<std::uint32_t> count(nb_ * nb_ + 1, 0);
    std::vector<std::size_t> bucket_of(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      bucket_of[k] = static_cast<std::size_t>(bucket_coord(nodes[k].y)) * nb_ + bucket_coord(nodes[k].x);
      ++count[bucket_of[k] + 1];
    }
    start_.assign(nb_ * nb_ + 1, 0);
    for (std::size_t b = 0; b < nb_ * nb_; ++b) start_[b + 1] = start_[b] + count[b + 1];
    std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
    xs_.resize(nodes.size());
    ys_.resize(nodes.size());
    ws_.resize(nodes.size());
    labels_.resize(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const std::uint32_t at = fill[bucket_of[k]]++;
      xs_[at] = nodes[k].x;
      ys_[at] = nodes[k].y;
      ws_[at] = nodes[k].w;
      labels_[at] = nodes[k].label;
    }
  }

  double cell_;
  double outer_;
  double bucket_ = 4.0;
  std::size_t nb_ = 0;
  std::vector<std::uint32_t> start_;
  std::vector<double> xs_, ys_, ws_;
  std::vector<std::uint8_t> labels_;
};

// Shared quadratures keyed by geometry, cell and a rounded-up outer radius.
inline std::shared_ptr<const PolarQuadrature> shared_quadrature(const BoardGeometry& g, double cell,
                                                                double outer_radius) {
  static std::mutex mu;
  static std::map<std::tuple<std::uint64_t, double, double>, std::shared_ptr<const PolarQuadrature>> cache;
  const double outer = std::ceil(outer_radius / 25.0) * 25.0;
  const auto key = std::make_tuple(fnv1a(geometry_to_json(g).dump()), cell, outer);
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto q = std::make_shared<const PolarQuadrature>(g, cell, outer);
  if (cache.size() > 8) cache.clear();
  cache.emplace(key, q);
  return q;
}

}  // namespace darts
