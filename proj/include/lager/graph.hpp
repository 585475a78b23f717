#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lager/document.hpp"
#include "lager/error.hpp"
#include "lager/geometry.hpp"

namespace lager {

// Dense boolean n x n topology.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(std::size_t n, bool symmetric = true)
      : n_(n), symmetric_(symmetric), edges_(n * n, 0) {}

  std::size_t size() const { return n_; }
  bool symmetric() const { return symmetric_; }

  bool operator()(std::size_t i, std::size_t j) const { return edges_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v = true) {
    edges_[i * n_ + j] = v ? 1 : 0;
    if (symmetric_) edges_[j * n_ + i] = v ? 1 : 0;
  }

  bool has_self_loops() const {
    for (std::size_t i = 0; i < n_; ++i)
      if ((*this)(i, i)) return true;
    return false;
  }
  bool is_symmetric() const {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j)
        if ((*this)(i, j) != (*this)(j, i)) return false;
    return true;
  }
  std::size_t row_sum(std::size_t i) const {
    std::size_t s = 0;
    for (std::size_t j = 0; j < n_; ++j) s += (*this)(i, j);
    return s;
  }

  std::vector<std::size_t> neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n_; ++j)
      if ((*this)(i, j)) out.push_back(j);
    return out;
  }

  // Undirected edge list with i <= j, lexicographic.
  std::vector<std::pair<int, int>> edge_list() const {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i; j < n_; ++j)
        if ((*this)(i, j) || (*this)(j, i))
          out.emplace_back(static_cast<int>(i), static_cast<int>(j));
    return out;
  }

  friend bool operator==(const AdjacencyMatrix&, const AdjacencyMatrix&) = default;

 private:
  std::size_t n_ = 0;
  bool symmetric_ = true;
  std::vector<std::uint8_t> edges_;
};

enum class GraphMode { Nearest, Angles };
// Ray tests against the exact quadrilateral or its axis-aligned hull.
enum class RayMode { Exact, Aabb };
// First angle of a bundle: 0 gives {0, t, ..., (M-1)t}; Theta gives {t, ..., Mt}.
enum class AngleStart { Zero, Theta };

struct GraphBundle {
  GraphMode mode = GraphMode::Nearest;
  int k = 4;
  double theta = 0.0;
  std::vector<double> angles;
  std::vector<AdjacencyMatrix> matrices;

  std::size_t count() const { return matrices.size(); }
};

inline void check_k(int k) {
  if (k < 1) throw ParameterError("k must be >= 1, got " + std::to_string(k));
}

inline std::vector<Point> centroids(const Document& doc) {
  std::vector<Point> c;
  c.reserve(doc.size());
  for (const auto& t : doc.tokens) c.push_back(centroid(t.box));
  return c;
}

// Each token links to its k nearest tokens by centroid distance (ties by lower
// index); the result is the symmetric union.
inline AdjacencyMatrix knn_space_graph(const Document& doc, int k) {
  check_k(k);
  const std::size_t n = doc.size();
  AdjacencyMatrix adj(n);
  const auto pts = centroids(doc);
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) cand.emplace_back(squared_distance(pts[i], pts[j]), j);
    const std::size_t keep = std::min(static_cast<std::size_t>(k), cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end());
    for (std::size_t r = 0; r < keep; ++r) adj.set(i, cand[r].second);
  }
  return adj;
}

// Unit direction for angle alpha (degrees, counterclockwise on screen). The y
// component is negated because y grows downward. Multiples of 90 are exact.
inline Point ray_direction(double alpha_deg) {
  double a = std::fmod(alpha_deg, 360.0);
  if (a < 0) a += 360.0;
  if (a == 0.0) return {1.0, 0.0};
  if (a == 90.0) return {0.0, -1.0};
  if (a == 180.0) return {-1.0, 0.0};
  if (a == 270.0) return {0.0, 1.0};
  const double r = deg_to_rad(a);
  return {std::cos(r), -std::sin(r)};
}

namespace detail {

inline bool on_segment(Point p, Point a, Point b) {
  if (cross(b - a, p - a) != 0.0) return false;
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

// Closed containment for a convex quad of either orientation.
inline bool convex_contains(const Quad& q, Point p) {
  if (q.is_degenerate()) {
    for (std::size_t i = 0; i < 4; ++i)
      if (on_segment(p, q.corners[i], q.corners[(i + 1) % 4])) return true;
    return false;
  }
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < 4; ++i) {
    const double c = cross(q.corners[(i + 1) % 4] - q.corners[i], p - q.corners[i]);
    pos |= c > 0;
    neg |= c < 0;
  }
  return !(pos && neg);
}

// Smallest t >= 0 with origin + t*dir on segment [a, b].
inline std::optional<double> ray_segment(Point origin, Point dir, Point a, Point b) {
  const Point e = b - a;
  const Point w = a - origin;
  const double denom = cross(dir, e);
  if (denom != 0.0) {
    const double t = cross(w, e) / denom;
    const double u = cross(w, dir) / denom;
    if (t >= 0.0 && u >= 0.0 && u <= 1.0) return t;
    return std::nullopt;
  }
  if (cross(w, dir) != 0.0) return std::nullopt;  // parallel, not collinear
  const double ta = dot(a - origin, dir), tb = dot(b - origin, dir);
  if (ta < 0 && tb < 0) return std::nullopt;
  if (ta <= 0 || tb <= 0) return 0.0;
  return std::min(ta, tb);
}

}  // namespace detail

// Distance along the ray from origin at alpha to the first point of box, or
// nullopt when the ray misses. Origins inside the box hit at 0.
inline std::optional<double> ray_hit(Point origin, double alpha_deg, const Quad& box) {
  if (detail::convex_contains(box, origin)) return 0.0;
  const Point dir = ray_direction(alpha_deg);
  std::optional<double> best;
  for (std::size_t i = 0; i < 4; ++i) {
    auto t = detail::ray_segment(origin, dir, box.corners[i], box.corners[(i + 1) % 4]);
    if (t && (!best || *t < *best)) best = t;
  }
  return best;
}

// Rays are cast from each token's centroid at alpha; the k nearest boxes it
// hits (excluding its own) become neighbors, then the matrix is symmetrized.
inline AdjacencyMatrix knn_angle_graph(const Document& doc, int k, double alpha_deg,
                                       RayMode mode = RayMode::Exact) {
  check_k(k);
  const std::size_t n = doc.size();
  AdjacencyMatrix adj(n);
  const auto pts = centroids(doc);
  std::vector<Quad> boxes;
  boxes.reserve(n);
  for (const auto& t : doc.tokens)
    boxes.push_back(mode == RayMode::Exact ? t.box : Quad::from_aabb(aabb(t.box)));
  std::vector<std::pair<double, std::size_t>> hits;
  for (std::size_t i = 0; i < n; ++i) {
    hits.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (auto t = ray_hit(pts[i], alpha_deg, boxes[j])) hits.emplace_back(*t, j);
    }
    const std::size_t keep = std::min(static_cast<std::size_t>(k), hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end());
    for (std::size_t r = 0; r < keep; ++r) adj.set(i, hits[r].second);
  }
  return adj;
}

inline int bundle_size(double theta_deg) {
  if (!(theta_deg > 0.0) || theta_deg > 360.0)
    throw ParameterError("theta must be in (0, 360], got " + std::to_string(theta_deg));
  return static_cast<int>(std::floor(360.0 / theta_deg));
}

inline std::vector<double> bundle_angles(double theta_deg, AngleStart start = AngleStart::Zero) {
  const int m = bundle_size(theta_deg);
  std::vector<double> out;
  for (int i = 0; i < m; ++i) out.push_back((start == AngleStart::Zero ? i : i + 1) * theta_deg);
  return out;
}

inline GraphBundle angle_bundle(const Document& doc, int k, double theta_deg,
                                AngleStart start = AngleStart::Zero,
                                RayMode mode = RayMode::Exact) {
  check_k(k);
  GraphBundle b;
  b.mode = GraphMode::Angles;
  b.k = k;
  b.theta = theta_deg;
  b.angles = bundle_angles(theta_deg, start);
  for (double a : b.angles) b.matrices.push_back(knn_angle_graph(doc, k, a, mode));
  return b;
}

inline GraphBundle nearest_bundle(const Document& doc, int k) {
  GraphBundle b;
  b.mode = GraphMode::Nearest;
  b.k = k;
  b.matrices.push_back(knn_space_graph(doc, k));
  return b;
}

inline AdjacencyMatrix add_self_loops(AdjacencyMatrix a) {
  for (std::size_t i = 0; i < a.size(); ++i) a.set(i, i);
  return a;
}

inline std::string to_dot(const AdjacencyMatrix& a, const std::string& name = "G") {
  std::ostringstream out;
  out << "graph " << name << " {\n";
  for (std::size_t i = 0; i < a.size(); ++i) out << "  " << i << ";\n";
  for (auto [i, j] : a.edge_list()) out << "  " << i << " -- " << j << ";\n";
  out << "}\n";
  return out.str();
}

inline std::string to_edge_json(const AdjacencyMatrix& a, GraphMode mode, int k,
                                std::optional<double> alpha = std::nullopt) {
  nlohmann::ordered_json j;
  j["n"] = a.size();
  j["mode"] = mode == GraphMode::Nearest ? "nearest" : "angles";
  j["k"] = k;
  if (alpha) j["alpha"] = *alpha;
  auto edges = nlohmann::ordered_json::array();
  for (auto [u, v] : a.edge_list()) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  return j.dump() + "\n";
}

}  // namespace lager
