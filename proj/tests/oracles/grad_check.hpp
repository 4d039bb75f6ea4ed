#pragma once

// Central finite differences against the analytic FCN gradients.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "glyconet/nn/fcn.hpp"
#include "glyconet/rng.hpp"

namespace oracle {

using glyconet::nn::FcnModel;
using glyconet::nn::Mat;

struct GradCheck {
  double worst = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // finite difference crossed a ReLU kink
  int redraws = 0;
};

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

using Masks = std::vector<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>>;

inline double loss_at(FcnModel& m, const Mat& x, std::size_t batch, const std::vector<int>& y,
                      const glyconet::nn::FocalLossConfig& cfg, Masks* masks = nullptr) {
  glyconet::nn::ForwardCache c;
  glyconet::nn::forward(m, x, batch, glyconet::nn::Mode::TRAIN, &c);
  if (masks) {
    masks->clear();
    for (const auto& b : c.blocks) masks->push_back(b.pre_relu.array() > 0.0);
  }
  return glyconet::nn::focal_loss_from_logits(c.logits, y, cfg).loss;
}

inline bool same_masks(const Masks& a, const Masks& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if ((a[i] != b[i]).any()) return false;
  return true;
}

// Smallest |pre-ReLU| activation; near zero a finite difference straddles the kink.
inline double min_abs_preact(FcnModel& m, const Mat& x, std::size_t batch) {
  glyconet::nn::ForwardCache c;
  glyconet::nn::forward(m, x, batch, glyconet::nn::Mode::TRAIN, &c);
  double lo = 1e300;
  for (const auto& b : c.blocks) lo = std::min(lo, b.pre_relu.cwiseAbs().minCoeff());
  return lo;
}

// Checks `per_tensor` entries of every parameter tensor (all of them when
// per_tensor is 0). With kink > 0 inputs are redrawn until no pre-activation
// sits within `kink` of zero. With kink = 0 differences whose perturbation
// flips a ReLU are skipped and counted instead.
inline GradCheck check_gradients(int length, int classes, std::size_t batch,
                                 const glyconet::nn::FcnArchitecture& arch, std::uint64_t seed,
                                 std::size_t per_tensor = 0, double h = 1e-5, double kink = 1e-3) {
  namespace nn = glyconet::nn;
  GradCheck r;
  FcnModel m = nn::make_fcn(length, classes, seed, arch);
  glyconet::Rng rng(seed, 99);
  Mat x(1, static_cast<Eigen::Index>(batch) * length);
  std::vector<int> y(batch);
  for (;;) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x(0, i) = rng.uniform(0.0, 1.0);
    for (auto& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    if (kink <= 0.0 || min_abs_preact(m, x, batch) >= kink) break;
    ++r.redraws;
  }
  nn::FocalLossConfig cfg;
  cfg.gamma = 2.0;
  for (int c = 0; c < classes; ++c) cfg.alpha.push_back(0.5 + 0.25 * c);

  nn::ForwardCache cache;
  nn::forward(m, x, batch, nn::Mode::TRAIN, &cache);
  const auto analytic = nn::backward(m, cache, y, cfg);
  Masks base, up_m, down_m;
  loss_at(m, x, batch, y, cfg, &base);
  auto params = nn::parameters(m);
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto n = static_cast<std::size_t>(params[p].size);
    std::vector<std::size_t> idx;
    if (per_tensor == 0 || per_tensor >= n) {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      for (std::size_t k = 0; k < per_tensor; ++k) idx.push_back(rng.below(n));
    }
    for (std::size_t i : idx) {
      double& w = params[p].data[i];
      const double w0 = w;
      w = w0 + h;
      const double up = loss_at(m, x, batch, y, cfg, &up_m);
      w = w0 - h;
      const double down = loss_at(m, x, batch, y, cfg, &down_m);
      w = w0;
      if (!same_masks(base, up_m) || !same_masks(base, down_m)) {
        ++r.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * h);
      const double e = rel_error(analytic.grads[p](static_cast<Eigen::Index>(i)), numeric);
      ++r.checked;
      if (e > r.worst) {
        r.worst = e;
        r.worst_param = params[p].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace oracle
