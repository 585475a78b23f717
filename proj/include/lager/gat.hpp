#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lager/error.hpp"
#include "lager/features.hpp"
#include "lager/graph.hpp"

namespace lager {

// Compressed neighbor lists (row i's neighbors are idx[off[i] .. off[i+1])).
struct NeighborList {
  std::vector<int> off{0};
  std::vector<int> idx;

  std::size_t size() const { return off.size() - 1; }

  static NeighborList from(const AdjacencyMatrix& a) {
    NeighborList nl;
    nl.off.reserve(a.size() + 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < a.size(); ++j)
        if (a(i, j)) nl.idx.push_back(static_cast<int>(j));
      nl.off.push_back(static_cast<int>(nl.idx.size()));
    }
    return nl;
  }
};

// One multi-head attention layer. Column block h of W (width d_head) is head
// h's projection; column h of att holds [a_src; a_dst] for head h.
struct GatLayerParams {
  Eigen::MatrixXd W;    // d_in x (heads * d_head)
  Eigen::MatrixXd att;  // (2 * d_head) x heads
  int heads = 1;
  double leaky_slope = 0.2;

  int d_head() const { return static_cast<int>(W.cols()) / heads; }
  int d_in() const { return static_cast<int>(W.rows()); }
  int d_out() const { return static_cast<int>(W.cols()); }

  static GatLayerParams zeros(int d_in, int d_out, int heads, double slope) {
    if (heads < 1) throw ParameterError("heads must be >= 1");
    if (d_out % heads != 0)
      throw ParameterError("heads (" + std::to_string(heads) + ") must divide the output dimension (" +
                           std::to_string(d_out) + ")");
    return {Eigen::MatrixXd::Zero(d_in, d_out), Eigen::MatrixXd::Zero(2 * (d_out / heads), heads),
            heads, slope};
  }
};

// A stack of attention layers with ELU between consecutive layers and no
// nonlinearity on the final output.
struct GatParams {
  std::vector<GatLayerParams> layers;

  int d_in() const { return layers.front().d_in(); }
  int d_out() const { return layers.back().d_out(); }
};

struct GatLayerCache {
  Eigen::MatrixXd input;             // n x d_in
  Eigen::MatrixXd zt;                // d_out x n, one column per node
  std::vector<Eigen::VectorXd> s, t; // per head: source and destination scores
  std::vector<std::vector<double>> alpha;  // per head, aligned with NeighborList::idx
  Eigen::MatrixXd pre_activation;    // layer output before ELU (unused on last layer)
};

struct GatCache {
  std::vector<GatLayerCache> layers;
};

namespace detail {

inline double leaky(double u, double slope) { return u > 0 ? u : slope * u; }

inline Eigen::MatrixXd elu(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return v > 0 ? v : std::expm1(v); });
}

inline void check_neighbors(const NeighborList& nl, Eigen::Index n) {
  if (static_cast<Eigen::Index>(nl.size()) != n)
    throw ContractError("adjacency has " + std::to_string(nl.size()) + " nodes, features have " +
                        std::to_string(n) + " rows");
  for (std::size_t i = 0; i < nl.size(); ++i)
    if (nl.off[i] == nl.off[i + 1])
      throw ContractError("node " + std::to_string(i) +
                          " has an empty neighborhood (add self-loops first)");
}

// Per-head edge loops. D is the head width when known at compile time (the
// default configurations use 16), otherwise Eigen::Dynamic.
template <int D>
void attend_head(const double* zd, Eigen::Index ld, int dh, const Eigen::VectorXd& s,
                 const Eigen::VectorXd& t, const NeighborList& nl, double slope, double* outd,
                 double* alpha) {
  using Vec = Eigen::Matrix<double, D, 1>;
  const auto n = static_cast<Eigen::Index>(nl.size());
  const auto m = static_cast<Eigen::Index>(nl.idx.size());
  Eigen::Map<Eigen::ArrayXd> e(alpha, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int b = nl.off[static_cast<std::size_t>(i)], end = nl.off[static_cast<std::size_t>(i) + 1];
    double mx = -INFINITY;
    for (int q = b; q < end; ++q) {
      const double v = leaky(s[i] + t[nl.idx[static_cast<std::size_t>(q)]], slope);
      e[q] = v;
      mx = std::max(mx, v);
    }
    e.segment(b, end - b) -= mx;
  }
  e = e.exp();
  for (Eigen::Index i = 0; i < n; ++i) {
    const int b = nl.off[static_cast<std::size_t>(i)], end = nl.off[static_cast<std::size_t>(i) + 1];
    e.segment(b, end - b) /= e.segment(b, end - b).sum();
    Eigen::Map<Vec> oi(outd + i * ld, dh);
    for (int q = b; q < end; ++q)
      oi += e[q] * Eigen::Map<const Vec>(zd + nl.idx[static_cast<std::size_t>(q)] * ld, dh);
  }
}

template <int D>
void attend_head_backward(const double* zd, const double* gd, double* dzd, Eigen::Index ld, int dh,
                          const Eigen::VectorXd& s, const Eigen::VectorXd& t, const NeighborList& nl,
                          double slope, const double* alpha, Eigen::VectorXd& ds, Eigen::VectorXd& dt,
                          std::vector<double>& dalpha) {
  using Vec = Eigen::Matrix<double, D, 1>;
  const auto n = static_cast<Eigen::Index>(nl.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int b = nl.off[static_cast<std::size_t>(i)], end = nl.off[static_cast<std::size_t>(i) + 1];
    dalpha.resize(static_cast<std::size_t>(end - b));
    const Eigen::Map<const Vec> gi(gd + i * ld, dh);
    double weighted = 0.0;
    for (int q = b; q < end; ++q) {
      const int j = nl.idx[static_cast<std::size_t>(q)];
      const double da = gi.dot(Eigen::Map<const Vec>(zd + j * ld, dh));
      Eigen::Map<Vec>(dzd + j * ld, dh) += alpha[q] * gi;
      dalpha[static_cast<std::size_t>(q - b)] = da;
      weighted += alpha[q] * da;
    }
    for (int q = b; q < end; ++q) {
      const int j = nl.idx[static_cast<std::size_t>(q)];
      const double de = alpha[q] * (dalpha[static_cast<std::size_t>(q - b)] - weighted);
      const double du = s[i] + t[j] > 0 ? de : slope * de;
      ds[i] += du;
      dt[j] += du;
    }
  }
}

// Node features are kept as columns inside the layer so that the per-edge
// loops touch contiguous memory.
inline Eigen::MatrixXd gat_layer_forward(const Eigen::MatrixXd& x, const NeighborList& nl,
                                         const GatLayerParams& p, GatLayerCache* cache) {
  const Eigen::Index n = x.rows();
  const int dh = p.d_head();
  Eigen::MatrixXd zt = p.W.transpose() * x.transpose();
  Eigen::MatrixXd outt = Eigen::MatrixXd::Zero(p.d_out(), n);
  const Eigen::Index ld = zt.rows();
  std::vector<std::vector<double>> alpha(static_cast<std::size_t>(p.heads), std::vector<double>(nl.idx.size()));
  std::vector<Eigen::VectorXd> ss(static_cast<std::size_t>(p.heads)), ts(static_cast<std::size_t>(p.heads));
  for (int h = 0; h < p.heads; ++h) {
    const auto hs = static_cast<std::size_t>(h);
    const auto zh = zt.middleRows(h * dh, dh);
    ss[hs] = zh.transpose() * p.att.col(h).head(dh);
    ts[hs] = zh.transpose() * p.att.col(h).tail(dh);
    const double* zd = zt.data() + h * dh;
    double* od = outt.data() + h * dh;
    if (dh == 16)
      attend_head<16>(zd, ld, dh, ss[hs], ts[hs], nl, p.leaky_slope, od, alpha[hs].data());
    else
      attend_head<Eigen::Dynamic>(zd, ld, dh, ss[hs], ts[hs], nl, p.leaky_slope, od, alpha[hs].data());
  }
  if (cache) {
    cache->input = x;
    cache->s = std::move(ss);
    cache->t = std::move(ts);
    cache->alpha = std::move(alpha);
    cache->zt = std::move(zt);
  }
  return outt.transpose();
}

// Accumulates parameter gradients into g and returns dL/d(input), or an empty
// matrix when input_grad is false.
inline Eigen::MatrixXd gat_layer_backward(const Eigen::MatrixXd& dout, const NeighborList& nl,
                                          const GatLayerParams& p, const GatLayerCache& c,
                                          GatLayerParams& g, bool input_grad = true) {
  const Eigen::Index n = dout.rows();
  const int dh = p.d_head();
  const Eigen::MatrixXd gt = dout.transpose();
  Eigen::MatrixXd dzt = Eigen::MatrixXd::Zero(p.d_out(), n);
  const Eigen::Index ld = c.zt.rows();
  std::vector<double> dalpha;
  for (int h = 0; h < p.heads; ++h) {
    const auto hs = static_cast<std::size_t>(h);
    const auto zh = c.zt.middleRows(h * dh, dh);
    Eigen::VectorXd ds = Eigen::VectorXd::Zero(n), dt = Eigen::VectorXd::Zero(n);
    const double* zd = c.zt.data() + h * dh;
    const double* gd = gt.data() + h * dh;
    double* dzd = dzt.data() + h * dh;
    if (dh == 16)
      attend_head_backward<16>(zd, gd, dzd, ld, dh, c.s[hs], c.t[hs], nl, p.leaky_slope, c.alpha[hs].data(),
                               ds, dt, dalpha);
    else
      attend_head_backward<Eigen::Dynamic>(zd, gd, dzd, ld, dh, c.s[hs], c.t[hs], nl, p.leaky_slope,
                                           c.alpha[hs].data(), ds, dt, dalpha);
    g.att.col(h).head(dh) += zh * ds;
    g.att.col(h).tail(dh) += zh * dt;
    dzt.middleRows(h * dh, dh) += p.att.col(h).head(dh) * ds.transpose() + p.att.col(h).tail(dh) * dt.transpose();
  }
  g.W.noalias() += c.input.transpose() * dzt.transpose();
  if (!input_grad) return {};
  return dzt.transpose() * p.W.transpose();
}

}  // namespace detail

inline Eigen::MatrixXd gat_forward(const Eigen::MatrixXd& h, const NeighborList& nl,
                                   const GatParams& p, GatCache* cache = nullptr) {
  detail::check_neighbors(nl, h.rows());
  if (cache) cache->layers.assign(p.layers.size(), {});
  Eigen::MatrixXd x = h;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Eigen::MatrixXd y =
        detail::gat_layer_forward(x, nl, p.layers[l], cache ? &cache->layers[l] : nullptr);
    if (l + 1 < p.layers.size()) {
      if (cache) cache->layers[l].pre_activation = y;
      x = detail::elu(y);
    } else {
      x = std::move(y);
    }
  }
  return x;
}

inline Eigen::MatrixXd gat_forward(const Eigen::MatrixXd& h, const AdjacencyMatrix& a,
                                   const GatParams& p) {
  return gat_forward(h, NeighborList::from(a), p);
}

// Returns dL/dH (empty when input_grad is false) and accumulates parameter
// gradients into g.
inline Eigen::MatrixXd gat_backward(const Eigen::MatrixXd& dout, const NeighborList& nl,
                                    const GatParams& p, const GatCache& cache, GatParams& g,
                                    bool input_grad = true) {
  Eigen::MatrixXd d = dout;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    if (l + 1 < p.layers.size()) {
      const auto& pre = cache.layers[l].pre_activation;
      d = d.cwiseProduct(pre.unaryExpr([](double v) { return v > 0 ? 1.0 : std::exp(v); }));
    }
    d = detail::gat_layer_backward(d, nl, p.layers[l], cache.layers[l], g.layers[l], l > 0 || input_grad);
  }
  return d;
}

// Attention coefficients of one head of one layer, as a dense n x n matrix.
// Intended for inspection and tests.
inline Eigen::MatrixXd attention_matrix(const Eigen::MatrixXd& h, const NeighborList& nl,
                                        const GatParams& p, std::size_t layer, int head) {
  GatCache cache;
  gat_forward(h, nl, p, &cache);
  const auto n = static_cast<Eigen::Index>(nl.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  const auto& alpha = cache.layers.at(layer).alpha.at(static_cast<std::size_t>(head));
  for (Eigen::Index i = 0; i < n; ++i)
    for (int q = nl.off[static_cast<std::size_t>(i)]; q < nl.off[static_cast<std::size_t>(i) + 1]; ++q)
      a(i, nl.idx[static_cast<std::size_t>(q)]) = alpha[static_cast<std::size_t>(q)];
  return a;
}

// Elementwise mean of M independent GATs, one per graph.
inline Eigen::MatrixXd multi_gat_forward(const Eigen::MatrixXd& h,
                                         const std::vector<NeighborList>& graphs,
                                         const std::vector<GatParams>& gats,
                                         std::vector<GatCache>* caches = nullptr) {
  if (graphs.size() != gats.size())
    throw ParameterError("graph bundle has " + std::to_string(graphs.size()) + " matrices but " +
                         std::to_string(gats.size()) + " GATs are configured");
  if (gats.empty()) throw ParameterError("at least one GAT is required");
  if (caches) caches->assign(gats.size(), {});
  Eigen::MatrixXd sum;
  for (std::size_t m = 0; m < gats.size(); ++m) {
    Eigen::MatrixXd out = gat_forward(h, graphs[m], gats[m], caches ? &(*caches)[m] : nullptr);
    if (m == 0)
      sum = std::move(out);
    else
      sum += out;
  }
  return sum / static_cast<double>(gats.size());
}

inline Eigen::MatrixXd multi_gat_forward(const Eigen::MatrixXd& h, const GraphBundle& bundle,
                                         const std::vector<GatParams>& gats) {
  std::vector<NeighborList> graphs;
  for (const auto& a : bundle.matrices) graphs.push_back(NeighborList::from(a));
  return multi_gat_forward(h, graphs, gats);
}

struct ClassifierParams {
  Eigen::MatrixXd weight;  // d x num_tags
  Eigen::MatrixXd bias;    // 1 x num_tags
};

inline Eigen::MatrixXd classify(const Eigen::MatrixXd& x, const ClassifierParams& c) {
  return (x * c.weight).rowwise() + c.bias.row(0);
}

struct LossResult {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // dL/dlogits
};

// Mean token-level cross-entropy; the gradient is (softmax - onehot) / n.
inline LossResult cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& gold) {
  const Eigen::Index n = logits.rows();
  if (static_cast<Eigen::Index>(gold.size()) != n)
    throw ContractError("gold has " + std::to_string(gold.size()) + " tags for " +
                        std::to_string(n) + " rows");
  LossResult r;
  r.grad = Eigen::MatrixXd::Zero(n, logits.cols());
  if (n == 0) return r;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int g = gold[static_cast<std::size_t>(i)];
    if (g < 0 || g >= logits.cols()) throw ContractError("gold tag index out of range");
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd ex = (logits.row(i).array() - mx).exp().matrix();
    const double z = ex.sum();
    r.loss += -(logits(i, g) - mx - std::log(z));
    r.grad.row(i) = ex / z;
    r.grad(i, g) -= 1.0;
  }
  r.loss /= static_cast<double>(n);
  r.grad /= static_cast<double>(n);
  return r;
}

}  // namespace lager
