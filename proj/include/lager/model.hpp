#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lager/document.hpp"
#include "lager/error.hpp"
#include "lager/features.hpp"
#include "lager/gat.hpp"
#include "lager/graph.hpp"
#include "lager/random.hpp"
#include "lager/tagging.hpp"

namespace lager {

enum class Variant { Vanilla, LagerNearest, LagerAngles };

inline Variant parse_variant(std::string_view s) {
  if (s == "vanilla") return Variant::Vanilla;
  if (s == "lager_nearest") return Variant::LagerNearest;
  if (s == "lager_angles") return Variant::LagerAngles;
  throw ParameterError("unknown variant '" + std::string(s) + "'");
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::LagerNearest: return "lager_nearest";
    case Variant::LagerAngles: return "lager_angles";
  }
  return {};
}

// What the classifier reads: the GAT output alone, or [H || H'].
enum class ClassifierInput { GatOutput, Concat };

struct ModelConfig {
  Variant variant = Variant::LagerNearest;
  int d_in = 64;
  int num_tags = 1;
  int heads = 4;
  int layers = 1;
  int graphs = 1;  // M; forced to 0 for vanilla
  double leaky_slope = 0.2;
  double input_dropout = 0.0;
  ClassifierInput classifier_input = ClassifierInput::GatOutput;

  int classifier_dim() const {
    if (variant == Variant::Vanilla) return d_in;
    return classifier_input == ClassifierInput::Concat ? 2 * d_in : d_in;
  }
  void validate() const {
    if (d_in < 1) throw ParameterError("feature dimension must be >= 1");
    if (num_tags < 1) throw ParameterError("num_tags must be >= 1");
    if (layers < 1) throw ParameterError("layers must be >= 1");
    if (heads < 1) throw ParameterError("heads must be >= 1");
    if (variant != Variant::Vanilla && d_in % heads != 0)
      throw ParameterError("heads (" + std::to_string(heads) + ") must divide d (" +
                           std::to_string(d_in) + ")");
    if (variant != Variant::Vanilla && graphs < 1) throw ParameterError("graphs must be >= 1");
  }
};

struct ModelParams {
  std::vector<GatParams> gats;
  ClassifierParams classifier;

  // Visits every tensor in a fixed order with a stable name.
  template <class F>
  void for_each(F&& f) {
    for (std::size_t m = 0; m < gats.size(); ++m)
      for (std::size_t l = 0; l < gats[m].layers.size(); ++l) {
        const std::string p = "gat" + std::to_string(m) + ".layer" + std::to_string(l) + ".";
        f(p + "W", gats[m].layers[l].W);
        f(p + "att", gats[m].layers[l].att);
      }
    f(std::string("classifier.weight"), classifier.weight);
    f(std::string("classifier.bias"), classifier.bias);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each(
        [&](const std::string& name, Eigen::MatrixXd& m) { f(name, static_cast<const Eigen::MatrixXd&>(m)); });
  }

  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.for_each([](const std::string&, Eigen::MatrixXd& m) { m.setZero(); });
    return z;
  }
  std::size_t parameter_count() const {
    std::size_t c = 0;
    for_each([&](const std::string&, const Eigen::MatrixXd& m) { c += static_cast<std::size_t>(m.size()); });
    return c;
  }
};

// Pairs tensors of two structurally identical parameter sets.
template <class F>
void for_each_pair(ModelParams& a, ModelParams& b, F&& f) {
  std::vector<Eigen::MatrixXd*> bs;
  b.for_each([&](const std::string&, Eigen::MatrixXd& m) { bs.push_back(&m); });
  std::size_t i = 0;
  a.for_each([&](const std::string& name, Eigen::MatrixXd& m) { f(name, m, *bs.at(i++)); });
}

inline void xavier_uniform(Eigen::MatrixXd& m, double fan_in, double fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
}

// Xavier-uniform projections and classifier weight; zero attention vectors and bias.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParams p;
  if (cfg.variant != Variant::Vanilla) {
    for (int m = 0; m < cfg.graphs; ++m) {
      GatParams g;
      for (int l = 0; l < cfg.layers; ++l) {
        auto layer = GatLayerParams::zeros(cfg.d_in, cfg.d_in, cfg.heads, cfg.leaky_slope);
        xavier_uniform(layer.W, cfg.d_in, cfg.d_in, rng);
        g.layers.push_back(std::move(layer));
      }
      p.gats.push_back(std::move(g));
    }
  }
  const int cd = cfg.classifier_dim();
  p.classifier.weight = Eigen::MatrixXd::Zero(cd, cfg.num_tags);
  xavier_uniform(p.classifier.weight, cd, cfg.num_tags, rng);
  p.classifier.bias = Eigen::MatrixXd::Zero(1, cfg.num_tags);
  return p;
}

// Everything the model needs about one document, computed once.
struct DocInput {
  std::string id;
  Eigen::MatrixXd features;
  std::vector<NeighborList> graphs;  // self-loops included
  std::vector<int> gold;             // tag indices; empty when unlabeled
};

struct GraphSettings {
  int k = 4;
  double theta = 60.0;
  AngleStart angle_start = AngleStart::Zero;
  RayMode ray_mode = RayMode::Exact;
};

inline std::vector<AdjacencyMatrix> build_graphs(const Document& doc, Variant v,
                                                 const GraphSettings& g) {
  switch (v) {
    case Variant::Vanilla: return {};
    case Variant::LagerNearest: return {knn_space_graph(doc, g.k)};
    case Variant::LagerAngles: return angle_bundle(doc, g.k, g.theta, g.angle_start, g.ray_mode).matrices;
  }
  return {};
}

inline DocInput prepare(const Document& doc, Variant v, const GraphSettings& g,
                        const EncoderConfig& enc, const TagSet* tags) {
  DocInput in;
  in.id = doc.id;
  in.features = encode_document(doc, enc);
  for (const auto& a : build_graphs(doc, v, g)) in.graphs.push_back(NeighborList::from(add_self_loops(a)));
  if (tags) {
    for (const auto& t : spans_to_iobes(doc.entities, doc.size())) in.gold.push_back(tags->index(t));
  }
  return in;
}

struct ForwardCache {
  Eigen::MatrixXd input;  // features after dropout
  std::vector<GatCache> gats;
  Eigen::MatrixXd classifier_input;
};

inline Eigen::MatrixXd model_forward(const ModelConfig& cfg, const ModelParams& p,
                                     const DocInput& in, ForwardCache* cache = nullptr,
                                     Rng* dropout_rng = nullptr) {
  Eigen::MatrixXd x = in.features;
  if (dropout_rng && cfg.input_dropout > 0) {
    const double keep = 1.0 - cfg.input_dropout;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      for (Eigen::Index r = 0; r < x.rows(); ++r)
        x(r, c) = dropout_rng->bernoulli(keep) ? x(r, c) / keep : 0.0;
  }
  Eigen::MatrixXd ci;
  if (cfg.variant == Variant::Vanilla) {
    ci = x;
  } else {
    Eigen::MatrixXd hp = multi_gat_forward(x, in.graphs, p.gats, cache ? &cache->gats : nullptr);
    if (cfg.classifier_input == ClassifierInput::Concat) {
      ci.resize(x.rows(), x.cols() + hp.cols());
      ci << x, hp;
    } else {
      ci = std::move(hp);
    }
  }
  Eigen::MatrixXd logits = classify(ci, p.classifier);
  if (cache) {
    cache->input = std::move(x);
    cache->classifier_input = std::move(ci);
  }
  return logits;
}

// Backpropagates dL/dlogits; accumulates into g.
inline void model_backward(const ModelConfig& cfg, const ModelParams& p, const DocInput& in,
                           const ForwardCache& cache, const Eigen::MatrixXd& dlogits,
                           ModelParams& g) {
  g.classifier.weight += cache.classifier_input.transpose() * dlogits;
  g.classifier.bias += dlogits.colwise().sum();
  if (cfg.variant == Variant::Vanilla) return;
  Eigen::MatrixXd dci = dlogits * p.classifier.weight.transpose();
  const Eigen::Index d = cache.input.cols();
  Eigen::MatrixXd dhp = cfg.classifier_input == ClassifierInput::Concat ? Eigen::MatrixXd(dci.rightCols(dci.cols() - d))
                                                                        : dci;
  dhp /= static_cast<double>(p.gats.size());
  for (std::size_t m = 0; m < p.gats.size(); ++m)
    gat_backward(dhp, in.graphs[m], p.gats[m], cache.gats[m], g.gats[m], false);
}

// Loss of one document and its gradient, accumulated into g with weight w.
inline double loss_and_grad(const ModelConfig& cfg, const ModelParams& p, const DocInput& in,
                            ModelParams& g, double w = 1.0, Rng* dropout_rng = nullptr) {
  ForwardCache cache;
  const Eigen::MatrixXd logits = model_forward(cfg, p, in, &cache, dropout_rng);
  LossResult lr = cross_entropy(logits, in.gold);
  if (w != 1.0) lr.grad *= w;
  model_backward(cfg, p, in, cache, lr.grad, g);
  return lr.loss;
}

inline std::vector<int> predict(const ModelConfig& cfg, const ModelParams& p, const DocInput& in) {
  const Eigen::MatrixXd logits = model_forward(cfg, p, in);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace lager
