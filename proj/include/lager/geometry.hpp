#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace lager {

// Page coordinates: x grows right, y grows down (image convention).
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }

inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }

inline bool is_finite(Point p) { return std::isfinite(p.x) && std::isfinite(p.y); }

struct AABB {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool contains(Point p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }

  friend bool operator==(const AABB&, const AABB&) = default;
};

// Four corners in the order top-left, top-right, bottom-right, bottom-left of
// the unrotated box. Transforms keep the order, so corners[3] stays the
// "bottom-left" corner after rotation.
struct Quad {
  std::array<Point, 4> corners{};

  static Quad from_aabb(const AABB& b) {
    return Quad{{Point{b.x0, b.y0}, Point{b.x1, b.y0}, Point{b.x1, b.y1}, Point{b.x0, b.y1}}};
  }

  // Twice the signed area (shoelace).
  double signed_area2() const {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += cross(corners[i], corners[(i + 1) % 4]);
    return s;
  }
  bool is_degenerate() const { return signed_area2() == 0.0; }

  template <class F>
  Quad map(F&& f) const {
    Quad q;
    for (std::size_t i = 0; i < 4; ++i) q.corners[i] = f(corners[i]);
    return q;
  }

  friend bool operator==(const Quad&, const Quad&) = default;
};

inline Point centroid(const Quad& q) {
  double sx = 0.0, sy = 0.0;
  for (const auto& c : q.corners) {
    sx += c.x;
    sy += c.y;
  }
  return {sx / 4.0, sy / 4.0};
}

inline AABB aabb(const Quad& q) {
  AABB b{q.corners[0].x, q.corners[0].y, q.corners[0].x, q.corners[0].y};
  for (const auto& c : q.corners) {
    b.x0 = std::min(b.x0, c.x);
    b.y0 = std::min(b.y0, c.y);
    b.x1 = std::max(b.x1, c.x);
    b.y1 = std::max(b.y1, c.y);
  }
  return b;
}

inline double euclidean(Point p, Point q) { return std::hypot(p.x - q.x, p.y - q.y); }

inline double squared_distance(Point p, Point q) {
  const double dx = p.x - q.x, dy = p.y - q.y;
  return dx * dx + dy * dy;
}

inline constexpr double kPi = 3.14159265358979323846;
inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

}  // namespace lager
