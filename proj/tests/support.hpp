#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// They are written from the definitions, deliberately not by calling into the
// library code they check.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lager/document.hpp"
#include "lager/graph.hpp"
#include "lager/model.hpp"
#include "lager/random.hpp"
#include "lager/tagging.hpp"

namespace lager::testing {

inline Token make_token(int index, const std::string& text, double x0, double y0, double x1, double y1) {
  Token t;
  t.index = index;
  t.text = text;
  t.box = Quad::from_aabb({x0, y0, x1, y1});
  return t;
}

// Random page with n boxes of random size; with `rotated` set each box is a
// rectangle turned by its own random angle (still convex, corners in order).
inline Document random_document(Rng& rng, int n, bool rotated = false, double page = 1000.0) {
  Document d;
  d.id = "rand";
  d.page_width = page;
  d.page_height = page;
  for (int i = 0; i < n; ++i) {
    const double w = rng.uniform(5.0, 80.0), h = rng.uniform(5.0, 30.0);
    const double x = rng.uniform(0.0, page - w), y = rng.uniform(0.0, page - h);
    Token t = make_token(i, "w" + std::to_string(rng.below(20)), x, y, x + w, y + h);
    if (rotated) {
      const double a = rng.uniform(-kPi, kPi);
      const double c = std::cos(a), s = std::sin(a);
      const Point m{x + w / 2, y + h / 2};
      t.box = t.box.map([&](Point p) {
        const double dx = p.x - m.x, dy = p.y - m.y;
        return Point{m.x + c * dx - s * dy, m.y + s * dx + c * dy};
      });
    }
    d.tokens.push_back(t);
  }
  return d;
}

// ---- graph oracles -------------------------------------------------------

// Full sort of every candidate by (squared distance, index), then the union of
// each token's first k.
inline std::set<std::pair<int, int>> brute_knn_edges(const Document& doc, int k) {
  const int n = static_cast<int>(doc.size());
  std::vector<Point> c;
  for (const auto& t : doc.tokens) {
    Point p{0, 0};
    for (const auto& q : t.box.corners) p = p + 0.25 * q;
    c.push_back(p);
  }
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    std::vector<std::tuple<double, int>> all;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = c[i].x - c[j].x, dy = c[i].y - c[j].y;
      all.emplace_back(dx * dx + dy * dy, j);
    }
    std::sort(all.begin(), all.end());
    for (int r = 0; r < std::min<int>(k, static_cast<int>(all.size())); ++r) {
      const int j = std::get<1>(all[static_cast<std::size_t>(r)]);
      edges.emplace(std::min(i, j), std::max(i, j));
    }
  }
  return edges;
}

// Point-in-convex-quad by splitting into two triangles and using barycentric
// sign tests.
inline bool oracle_inside(const Quad& q, Point p) {
  auto in_tri = [&](Point a, Point b, Point c) {
    auto side = [](Point u, Point v, Point w) { return (v.x - u.x) * (w.y - u.y) - (v.y - u.y) * (w.x - u.x); };
    const double d1 = side(a, b, p), d2 = side(b, c, p), d3 = side(c, a, p);
    const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0, has_pos = d1 > 0 || d2 > 0 || d3 > 0;
    return !(has_neg && has_pos);
  };
  const auto& k = q.corners;
  return in_tri(k[0], k[1], k[2]) || in_tri(k[0], k[2], k[3]);
}

// Ray against each quad edge on its own: solve o + t*d = a + u*(b - a) by
// Cramer's rule and keep the smallest admissible t.
inline std::optional<double> oracle_ray(Point o, double alpha_deg, const Quad& q) {
  if (oracle_inside(q, o)) return 0.0;
  const double r = alpha_deg * std::acos(-1.0) / 180.0;
  const double dx = std::cos(r), dy = -std::sin(r);
  std::optional<double> best;
  for (int e = 0; e < 4; ++e) {
    const Point a = q.corners[static_cast<std::size_t>(e)], b = q.corners[static_cast<std::size_t>((e + 1) % 4)];
    // [dx  -(bx-ax)] [t]   [ax-ox]
    // [dy  -(by-ay)] [u] = [ay-oy]
    const double m00 = dx, m01 = -(b.x - a.x), m10 = dy, m11 = -(b.y - a.y);
    const double det = m00 * m11 - m01 * m10;
    if (std::abs(det) < 1e-14) continue;  // parallel edges never give the first hit of a convex box
    const double rx = a.x - o.x, ry = a.y - o.y;
    const double t = (rx * m11 - m01 * ry) / det;
    const double u = (m00 * ry - rx * m10) / det;
    if (t >= 0 && u >= 0 && u <= 1 && (!best || t < *best)) best = t;
  }
  return best;
}

inline std::set<std::pair<int, int>> brute_angle_edges(const Document& doc, int k, double alpha) {
  const int n = static_cast<int>(doc.size());
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    Point c{0, 0};
    for (const auto& p : doc.tokens[static_cast<std::size_t>(i)].box.corners) c = c + 0.25 * p;
    std::vector<std::tuple<double, int>> hits;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (auto t = oracle_ray(c, alpha, doc.tokens[static_cast<std::size_t>(j)].box)) hits.emplace_back(*t, j);
    }
    std::sort(hits.begin(), hits.end());
    for (int r = 0; r < std::min<int>(k, static_cast<int>(hits.size())); ++r) {
      const int j = std::get<1>(hits[static_cast<std::size_t>(r)]);
      edges.emplace(std::min(i, j), std::max(i, j));
    }
  }
  return edges;
}

inline std::set<std::pair<int, int>> edge_set(const AdjacencyMatrix& a) {
  std::set<std::pair<int, int>> s;
  for (auto e : a.edge_list()) s.insert(e);
  return s;
}

// ---- conlleval oracle ------------------------------------------------------
// The chunk boundary tables of conlleval extended to IOBES (as seqeval does),
// with the streaming correct-chunk counter of the original script.

struct Tag {
  std::string prefix;  // "B", "I", "E", "S" or "O"
  std::string type;
};

inline Tag split(const std::string& t) {
  if (t.size() > 2 && t[1] == '-' && std::string("BIES").find(t[0]) != std::string::npos)
    return {std::string(1, t[0]), t.substr(2)};
  return {"O", ""};
}

inline bool end_of_chunk(const Tag& prev, const Tag& cur) {
  const std::string& p = prev.prefix;
  const std::string& c = cur.prefix;
  bool end = false;
  if (p == "E") end = true;
  if (p == "S") end = true;
  if (p == "B" && c == "B") end = true;
  if (p == "B" && c == "S") end = true;
  if (p == "B" && c == "O") end = true;
  if (p == "I" && c == "B") end = true;
  if (p == "I" && c == "S") end = true;
  if (p == "I" && c == "O") end = true;
  if (p != "O" && prev.type != cur.type) end = true;
  return end;
}

inline bool start_of_chunk(const Tag& prev, const Tag& cur) {
  const std::string& p = prev.prefix;
  const std::string& c = cur.prefix;
  bool start = false;
  if (c == "B") start = true;
  if (c == "S") start = true;
  if (p == "E" && c == "E") start = true;
  if (p == "E" && c == "I") start = true;
  if (p == "S" && c == "E") start = true;
  if (p == "S" && c == "I") start = true;
  if (p == "O" && c == "E") start = true;
  if (p == "O" && c == "I") start = true;
  if (c != "O" && prev.type != cur.type) start = true;
  return start;
}

struct OracleCounts {
  long correct = 0, found_guessed = 0, found_correct = 0;
};

inline OracleCounts conlleval_counts(const std::vector<TagSequence>& pred, const std::vector<TagSequence>& gold) {
  OracleCounts c;
  for (std::size_t d = 0; d < pred.size(); ++d) {
    Tag last_g{"O", ""}, last_c{"O", ""};
    bool in_correct = false;
    const std::size_t n = pred[d].size();
    for (std::size_t i = 0; i <= n; ++i) {
      const Tag g = i < n ? split(pred[d][i]) : Tag{"O", ""};
      const Tag k = i < n ? split(gold[d][i]) : Tag{"O", ""};
      if (in_correct) {
        const bool ec = end_of_chunk(last_c, k), eg = end_of_chunk(last_g, g);
        if (ec && eg && last_g.type == last_c.type) {
          in_correct = false;
          ++c.correct;
        } else if (ec != eg || g.type != k.type) {
          in_correct = false;
        }
      }
      if (i == n) break;
      const bool sc = start_of_chunk(last_c, k), sg = start_of_chunk(last_g, g);
      if (sc && sg && g.type == k.type) in_correct = true;
      if (sc) ++c.found_correct;
      if (sg) ++c.found_guessed;
      last_g = g;
      last_c = k;
    }
  }
  return c;
}

// Random tag sequence; with probability `corrupt` per token the tag is drawn
// uniformly from the full inventory, otherwise it comes from valid spans.
inline TagSequence random_tags(Rng& rng, std::size_t n, const std::vector<std::string>& labels, double corrupt) {
  std::vector<EntitySpan> spans;
  std::size_t i = 0;
  while (i < n) {
    if (rng.bernoulli(0.4)) {
      const std::size_t len = 1 + rng.below(4);
      const std::size_t e = std::min(n - 1, i + len - 1);
      spans.push_back({labels[rng.below(labels.size())], static_cast<int>(i), static_cast<int>(e)});
      i = e + 1;
    } else {
      ++i;
    }
  }
  TagSequence t = spans_to_iobes(spans, n);
  static const char* prefixes[] = {"B-", "I-", "E-", "S-"};
  for (auto& tag : t)
    if (rng.bernoulli(corrupt)) {
      const auto r = rng.below(4 * labels.size() + 1);
      tag = r == 0 ? "O" : prefixes[(r - 1) % 4] + labels[(r - 1) / 4];
    }
  return t;
}

// ---- finite differences ------------------------------------------------------

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient is
// zero from being judged on rounding noise alone.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Largest relative error between loss_and_grad's gradient and central
// differences of the loss over every parameter entry.
inline double max_gradient_error(const ModelConfig& mc, ModelParams p, const DocInput& in, double step = 1e-5) {
  ModelParams g = p.zeros_like();
  loss_and_grad(mc, p, in, g);
  std::vector<const Eigen::MatrixXd*> grads;
  g.for_each([&](const std::string&, const Eigen::MatrixXd& m) { grads.push_back(&m); });
  auto loss = [&] {
    const Eigen::MatrixXd logits = model_forward(mc, p, in);
    // Mean token cross-entropy evaluated directly.
    double l = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double mx = logits.row(i).maxCoeff();
      const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
      l += lse - logits(i, in.gold[static_cast<std::size_t>(i)]);
    }
    return l / static_cast<double>(logits.rows());
  };
  double worst = 0.0;
  std::size_t t = 0;
  p.for_each([&](const std::string&, Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + step;
      const double lp = loss();
      m.data()[i] = orig - step;
      const double lm = loss();
      m.data()[i] = orig;
      worst = std::max(worst, relative_error(grads[t]->data()[i], (lp - lm) / (2 * step)));
    }
    ++t;
  });
  return worst;
}

inline NeighborList random_neighbors(Rng& rng, int n, double p_edge) {
  AdjacencyMatrix a(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.bernoulli(p_edge)) a.set(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  return NeighborList::from(add_self_loops(a));
}

// Random model instance with every parameter (attention vectors included)
// drawn from U(-1, 1).
struct GradInstance {
  ModelConfig mc;
  ModelParams params;
  DocInput input;
};

inline GradInstance random_grad_instance(Rng& rng, int n, int d, int heads, int graphs, int num_tags = 5,
                                         int layers = 1) {
  GradInstance g;
  g.mc.variant = graphs > 1 ? Variant::LagerAngles : Variant::LagerNearest;
  g.mc.d_in = d;
  g.mc.num_tags = num_tags;
  g.mc.heads = heads;
  g.mc.graphs = graphs;
  g.mc.layers = layers;
  g.params = init_params(g.mc, rng.next());
  g.params.for_each([&](const std::string&, Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  });
  g.input.features.resize(n, d);
  for (Eigen::Index i = 0; i < g.input.features.size(); ++i) g.input.features.data()[i] = rng.uniform(-1.0, 1.0);
  for (int m = 0; m < graphs; ++m) g.input.graphs.push_back(random_neighbors(rng, n, 0.5));
  for (int i = 0; i < n; ++i) g.input.gold.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(num_tags))));
  return g;
}

}  // namespace lager::testing

namespace lager::testing {

// True when no neighbor choice of the spatial k-NN graph hinges on a near tie:
// for every token the k-th and (k+1)-th squared distances differ by more than
// `rel` relative.
inline bool spatial_tie_free(const Document& doc, int k, double rel = 1e-9) {
  const auto pts = centroids(doc);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i) d.push_back(squared_distance(pts[i], pts[j]));
    std::sort(d.begin(), d.end());
    if (d.size() > static_cast<std::size_t>(k)) {
      const double a = d[static_cast<std::size_t>(k) - 1], b = d[static_cast<std::size_t>(k)];
      if (b - a <= rel * std::max(1.0, b)) return false;
    }
  }
  return true;
}

// True when the angular graph at alpha neither changes under a tiny turn of
// the rays nor has near-equal hit distances around the k-th hit.
inline bool angular_tie_free(const Document& doc, int k, double alpha, double eps_deg = 1e-6) {
  const auto base = brute_angle_edges(doc, k, alpha);
  if (brute_angle_edges(doc, k, alpha + eps_deg) != base || brute_angle_edges(doc, k, alpha - eps_deg) != base)
    return false;
  const auto pts = centroids(doc);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<double> hits;
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i)
        if (auto t = oracle_ray(pts[i], alpha, doc.tokens[j].box)) hits.push_back(*t);
    std::sort(hits.begin(), hits.end());
    for (std::size_t r = 1; r < hits.size() && r <= static_cast<std::size_t>(k); ++r)
      if (hits[r] - hits[r - 1] <= 1e-7 * std::max(1.0, hits[r])) return false;
  }
  return true;
}

}  // namespace lager::testing
