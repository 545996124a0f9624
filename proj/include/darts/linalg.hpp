#pragma once

#include <cmath>
#include <stdexcept>

namespace darts {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;

  double norm() const { return std::hypot(x, y); }
};

// Symmetric 2x2 matrix [[xx, xy], [xy, yy]], used for covariances in mm^2.
struct Mat2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  static Mat2 identity(double scale = 1.0) { return {scale, 0.0, scale}; }

  double det() const { return xx * yy - xy * xy; }
  double trace() const { return xx + yy; }

  bool is_spd() const {
    return std::isfinite(xx) && std::isfinite(xy) && std::isfinite(yy) && xx > 0.0 && det() > 0.0;
  }

  Mat2 inverse() const {
    const double d = det();
    if (!(d > 0.0) && !(d < 0.0)) throw std::domain_error("singular 2x2 matrix");
    return {yy / d, -xy / d, xx / d};
  }

  double max_eigenvalue() const {
    const double half_tr = 0.5 * (xx + yy);
    const double disc = std::sqrt(0.25 * (xx - yy) * (xx - yy) + xy * xy);
    return half_tr + disc;
  }

  // v^T M v
  double quad(Vec2 v) const { return xx * v.x * v.x + 2.0 * xy * v.x * v.y + yy * v.y * v.y; }

  friend Mat2 operator+(const Mat2& a, const Mat2& b) { return {a.xx + b.xx, a.xy + b.xy, a.yy + b.yy}; }
  friend Mat2 operator-(const Mat2& a, const Mat2& b) { return {a.xx - b.xx, a.xy - b.xy, a.yy - b.yy}; }
  friend Mat2 operator*(double k, const Mat2& a) { return {k * a.xx, k * a.xy, k * a.yy}; }
  friend bool operator==(const Mat2&, const Mat2&) = default;

  double frobenius() const { return std::sqrt(xx * xx + 2.0 * xy * xy + yy * yy); }

  static Mat2 outer(Vec2 v) { return {v.x * v.x, v.x * v.y, v.y * v.y}; }
};

// Lower Cholesky factor L with L L^T = M.
struct Cholesky2 {
  double l11 = 0.0;
  double l21 = 0.0;
  double l22 = 0.0;

  explicit Cholesky2(const Mat2& m) {
    if (!m.is_spd()) throw std::domain_error("covariance is not symmetric positive definite");
    l11 = std::sqrt(m.xx);
    l21 = m.xy / l11;
    l22 = std::sqrt(m.yy - l21 * l21);
  }

  Vec2 apply(Vec2 z) const { return {l11 * z.x, l21 * z.x + l22 * z.y}; }
};

}  // namespace darts
