#pragma once

// Weighted focal loss, mean over the batch:
//   L = -1/B sum_i alpha_{y_i} (1 - p_i)^gamma log p_i,   p_i = softmax(z_i)_{y_i}
// and its gradient with respect to the logits z.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "glyconet/error.hpp"
#include "glyconet/log.hpp"
#include "glyconet/nn/layers.hpp"

namespace glyconet::nn {

struct FocalLossConfig {
  double gamma = 2.0;
  std::vector<double> alpha;  // per class; empty means 1 everywhere

  double alpha_of(int c) const {
    return alpha.empty() ? 1.0 : alpha.at(static_cast<std::size_t>(c));
  }
};

// alpha_c = N / (C * N_c). Classes absent from the counts get 1.
inline std::vector<double> balanced_alpha(const std::vector<std::uint64_t>& counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  std::vector<double> a(counts.size(), 1.0);
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0)
      a[c] = static_cast<double>(total) /
             (static_cast<double>(counts.size()) * static_cast<double>(counts[c]));
  return a;
}

struct LossResult {
  double loss = 0.0;
  Mat grad;  // d loss / d logits, (classes, B)
  bool clamped = false;
};

namespace detail {

inline constexpr double kMinProb = 1e-12;

// p, q = 1 - p (passed separately for accuracy near p = 1), log p.
// Returns (per-sample loss, dL/dz_y-coefficient) without alpha, where
// dL/dz_j = coef * (delta_jy - p_j).
inline std::pair<double, double> focal_terms(double p, double q, double logp, double gamma) {
  const double qg = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
  const double loss = -qg * logp;
  double inner = qg;
  if (gamma != 0.0 && q > 0.0) inner -= gamma * std::pow(q, gamma - 1.0) * p * logp;
  return {loss, -inner};
}

inline void check_labels(const std::vector<int>& labels, Eigen::Index classes, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(labels.size()) != cols)
    throw ShapeError("focal loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(cols) + " samples");
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw ShapeError("focal loss: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(classes) + ")");
}

}  // namespace detail

inline LossResult focal_loss_from_logits(const Mat& logits, const std::vector<int>& labels,
                                         const FocalLossConfig& cfg) {
  detail::check_labels(labels, logits.rows(), logits.cols());
  const Mat logp = log_softmax(logits);
  const Mat p = logp.array().exp().matrix();
  const double inv_b = 1.0 / static_cast<double>(logits.cols());
  LossResult r;
  r.grad.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    double q = 0.0;
    for (Eigen::Index j = 0; j < logits.rows(); ++j)
      if (j != y) q += p(j, i);
    const auto [li, coef] = detail::focal_terms(p(y, i), q, logp(y, i), cfg.gamma);
    const double a = cfg.alpha_of(y);
    r.loss += a * li * inv_b;
    r.grad.col(i) = -a * coef * inv_b * p.col(i);
    r.grad(y, i) += a * coef * inv_b;
  }
  return r;
}

// Same loss from probabilities (columns summing to 1); p_y = 0 is clamped.
inline LossResult focal_loss(const Mat& probs, const std::vector<int>& labels,
                             const FocalLossConfig& cfg) {
  detail::check_labels(labels, probs.rows(), probs.cols());
  const double inv_b = 1.0 / static_cast<double>(probs.cols());
  LossResult r;
  r.grad.resize(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.cols(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    double py = probs(y, i);
    if (py < detail::kMinProb) {
      py = detail::kMinProb;
      r.clamped = true;
    }
    double q = 0.0;
    for (Eigen::Index j = 0; j < probs.rows(); ++j)
      if (j != y) q += probs(j, i);
    const auto [li, coef] = detail::focal_terms(py, q, std::log(py), cfg.gamma);
    const double a = cfg.alpha_of(y);
    r.loss += a * li * inv_b;
    r.grad.col(i) = -a * coef * inv_b * probs.col(i);
    r.grad(y, i) += a * coef * inv_b;
  }
  if (r.clamped) warn("focal loss: p_y = 0 clamped to 1e-12");
  return r;
}

}  // namespace glyconet::nn
