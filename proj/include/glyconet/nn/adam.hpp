#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "glyconet/error.hpp"
#include "glyconet/nn/tensor.hpp"

namespace glyconet::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// A parameter tensor seen as a flat array.
struct ParamView {
  std::string name;
  double* data = nullptr;
  Eigen::Index size = 0;

  Eigen::Map<Vec> map() const { return Eigen::Map<Vec>(data, size); }
};

struct AdamState {
  std::vector<Vec> m, v;
  long long step = 0;
};

inline void check_finite(const std::vector<ParamView>& params, const std::vector<Vec>& grads) {
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!grads[i].allFinite())
      throw TrainingError("non-finite gradient in " + params[i].name + " (max |g| = " +
                          std::to_string(grads[i].cwiseAbs().maxCoeff()) + ")");
}

// One bias-corrected update of every parameter.
inline void adam_step(const std::vector<ParamView>& params, const std::vector<Vec>& grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw ShapeError("adam: gradient count mismatch");
  check_finite(params, grads);
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Vec::Zero(p.size));
      state.v.push_back(Vec::Zero(p.size));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size)
      throw ShapeError("adam: gradient of " + params[i].name + " has the wrong size");
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads[i];
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads[i].cwiseAbs2();
    auto theta = params[i].map();
    theta.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
}

}  // namespace glyconet::nn
