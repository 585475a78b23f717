#pragma once

#include <cmath>
#include <cstdint>

#include "lager/model.hpp"

namespace lager {

struct AdamWConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::uint64_t step = 0;
  ModelParams m;
  ModelParams v;

  static AdamWState for_params(const ModelParams& p) { return {0, p.zeros_like(), p.zeros_like()}; }
};

// Decoupled weight decay followed by the bias-corrected Adam update.
inline void adamw_step(ModelParams& params, ModelParams& grads, AdamWState& state,
                       const AdamWConfig& cfg) {
  state.step++;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::vector<Eigen::MatrixXd*> ms, vs;
  state.m.for_each([&](const std::string&, Eigen::MatrixXd& x) { ms.push_back(&x); });
  state.v.for_each([&](const std::string&, Eigen::MatrixXd& x) { vs.push_back(&x); });
  std::size_t i = 0;
  for_each_pair(params, grads, [&](const std::string&, Eigen::MatrixXd& p, Eigen::MatrixXd& g) {
    Eigen::MatrixXd& m = *ms.at(i);
    Eigen::MatrixXd& v = *vs.at(i);
    ++i;
    p *= 1.0 - cfg.lr * cfg.weight_decay;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  });
}

}  // namespace lager
