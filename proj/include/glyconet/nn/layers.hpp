#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "glyconet/nn/tensor.hpp"

namespace glyconet::nn {

enum class Mode { TRAIN, EVAL };

inline std::string shape_of(const Mat& m) {
  return "(" + std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + ")";
}

// ---------------------------------------------------------------------------
// Conv1d, SAME padding, stride 1. Weights are (out, in*k) with column
// ci*k + j; for even k the extra pad element goes on the left.

inline int pad_left(int k) { return k / 2; }

inline Mat im2col(const Mat& x, std::size_t batch, std::size_t length, int k) {
  const Eigen::Index cin = x.rows();
  const int pl = pad_left(k);
  Mat cols = Mat::Zero(cin * k, x.cols());
  const SampleTiles tiles(batch, length);
  const auto L = static_cast<Eigen::Index>(length);
  parallel_for(tiles.count(), [&](std::size_t tile) {
    const auto c0 = tiles.first_col(tile), n = tiles.cols(tile);
    for (Eigen::Index col = c0; col < c0 + n; ++col) {
      const Eigen::Index base = col - col % L, t = col % L;
      for (int j = 0; j < k; ++j) {
        const Eigen::Index s = t + j - pl;
        if (s < 0 || s >= L) continue;
        for (Eigen::Index ci = 0; ci < cin; ++ci) cols(ci * k + j, col) = x(ci, base + s);
      }
    }
  });
  return cols;
}

inline Mat col2im(const Mat& dcols, Eigen::Index cin, std::size_t batch, std::size_t length,
                  int k) {
  const int pl = pad_left(k);
  Mat dx = Mat::Zero(cin, dcols.cols());
  const SampleTiles tiles(batch, length);
  const auto L = static_cast<Eigen::Index>(length);
  parallel_for(tiles.count(), [&](std::size_t tile) {
    const auto c0 = tiles.first_col(tile), n = tiles.cols(tile);
    for (Eigen::Index col = c0; col < c0 + n; ++col) {
      const Eigen::Index base = col - col % L, t = col % L;
      for (int j = 0; j < k; ++j) {
        const Eigen::Index s = t + j - pl;
        if (s < 0 || s >= L) continue;
        for (Eigen::Index ci = 0; ci < cin; ++ci) dx(ci, base + s) += dcols(ci * k + j, col);
      }
    }
  });
  return dx;
}

struct ConvCache {
  Mat cols;
};

inline Mat conv1d_forward(const Mat& x, std::size_t batch, std::size_t length, const Mat& w,
                          const Vec& bias, int k, ConvCache* cache = nullptr) {
  if (x.rows() * k != w.cols() || bias.size() != w.rows() ||
      x.cols() != static_cast<Eigen::Index>(batch * length))
    throw ShapeError("conv1d: input " + shape_of(x) + " vs weights " + shape_of(w) +
                     " with kernel " + std::to_string(k));
  if (length < 1) throw ShapeError("conv1d: empty input");
  Mat cols = im2col(x, batch, length, k);
  Mat y;
  const SampleTiles tiles(batch, length);
  gemm_tiled(w, cols, y, tiles);
  y.colwise() += bias;
  if (cache) cache->cols = std::move(cols);
  return y;
}

struct ConvGrads {
  Mat dw;
  Vec db;
  Mat dx;  // empty unless requested
};

inline ConvGrads conv1d_backward(const Mat& dy, const ConvCache& cache, const Mat& w,
                                 std::size_t batch, std::size_t length, int k, bool want_dx) {
  const SampleTiles tiles(batch, length);
  ConvGrads g;
  g.dw = gemm_nt_reduce(dy, cache.cols, tiles);
  g.db = dy.rowwise().sum();
  if (want_dx) {
    Mat dcols;
    gemm_tn_tiled(w, dy, dcols, tiles);
    g.dx = col2im(dcols, w.cols() / k, batch, length, k);
  }
  return g;
}

inline Tensor3 conv1d_forward(const Tensor3& x, const Mat& w, const Vec& bias, int k) {
  return from_matrix(conv1d_forward(to_matrix(x), x.batch, x.length, w, bias, k), x.batch,
                     x.length);
}

// ---------------------------------------------------------------------------
// Batch normalisation over (batch, length) per channel.

struct BatchNormConfig {
  double eps = 1e-5;
  double momentum = 0.1;
};

struct BatchNormParams {
  Vec gamma, beta, running_mean, running_var;

  explicit BatchNormParams(Eigen::Index c = 0)
      : gamma(Vec::Ones(c)), beta(Vec::Zero(c)), running_mean(Vec::Zero(c)),
        running_var(Vec::Ones(c)) {}
};

struct BatchNormCache {
  Mat xhat;
  Vec invstd;
};

// TRAIN updates the running statistics (unbiased variance).
inline Mat batchnorm_forward(const Mat& x, std::size_t batch, BatchNormParams& p, Mode mode,
                             const BatchNormConfig& cfg = {}, BatchNormCache* cache = nullptr) {
  if (x.rows() != p.gamma.size())
    throw ShapeError("batchnorm: input " + shape_of(x) + " vs " + std::to_string(p.gamma.size()) +
                     " channels");
  Vec mean, var;
  if (mode == Mode::TRAIN) {
    if (batch < 2 || x.cols() < 2)
      throw ShapeError("batchnorm: TRAIN mode needs a batch of at least 2 samples");
    const double n = static_cast<double>(x.cols());
    mean = x.rowwise().sum() / n;
    var = (x.colwise() - mean).array().square().rowwise().sum() / n;
    p.running_mean = (1.0 - cfg.momentum) * p.running_mean + cfg.momentum * mean;
    p.running_var = (1.0 - cfg.momentum) * p.running_var + cfg.momentum * var * (n / (n - 1.0));
  } else {
    mean = p.running_mean;
    var = p.running_var;
  }
  const Vec invstd = (var.array() + cfg.eps).rsqrt();
  Mat xhat = (x.colwise() - mean);
  xhat = invstd.asDiagonal() * xhat;
  Mat y = p.gamma.asDiagonal() * xhat;
  y.colwise() += p.beta;
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->invstd = invstd;
  }
  return y;
}

struct BatchNormGrads {
  Vec dgamma, dbeta;
  Mat dx;
};

// Backward of TRAIN-mode normalisation.
inline BatchNormGrads batchnorm_backward(const Mat& dy, const BatchNormCache& c, const Vec& gamma) {
  BatchNormGrads g;
  const double n = static_cast<double>(dy.cols());
  g.dbeta = dy.rowwise().sum();
  g.dgamma = dy.cwiseProduct(c.xhat).rowwise().sum();
  // dx = gamma * invstd / n * (n dy - sum(dy) - xhat * sum(dy xhat))
  Mat t = n * dy;
  t.colwise() -= g.dbeta;
  t -= g.dgamma.asDiagonal() * c.xhat;
  const Vec scale = gamma.cwiseProduct(c.invstd) / n;
  g.dx = scale.asDiagonal() * t;
  return g;
}

// ---------------------------------------------------------------------------

inline Mat relu(const Mat& x) { return x.cwiseMax(0.0); }
inline Mat relu_backward(const Mat& dy, const Mat& x) {
  return (x.array() > 0.0).select(dy, 0.0);
}

// (C, B*L) -> (C, B)
inline Mat global_avg_pool(const Mat& x, std::size_t batch, std::size_t length) {
  if (length < 1) throw ShapeError("global_avg_pool: empty length");
  Mat out(x.rows(), static_cast<Eigen::Index>(batch));
  const auto L = static_cast<Eigen::Index>(length);
  for (Eigen::Index b = 0; b < out.cols(); ++b)
    out.col(b) = x.middleCols(b * L, L).rowwise().sum() / static_cast<double>(length);
  return out;
}

inline Mat global_avg_pool_backward(const Mat& dy, std::size_t length) {
  const auto L = static_cast<Eigen::Index>(length);
  Mat dx(dy.rows(), dy.cols() * L);
  for (Eigen::Index b = 0; b < dy.cols(); ++b)
    dx.middleCols(b * L, L).colwise() = dy.col(b) / static_cast<double>(length);
  return dx;
}

// logits (classes, B)
inline Mat dense_forward(const Mat& x, const Mat& w, const Vec& b) {
  if (x.rows() != w.cols() || b.size() != w.rows())
    throw ShapeError("dense: input " + shape_of(x) + " vs weights " + shape_of(w));
  Mat y = w * x;
  y.colwise() += b;
  return y;
}

// Column-wise softmax.
inline Mat softmax(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    p.col(j) = (logits.col(j).array() - m).exp();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

inline Mat log_softmax(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    const double lse = m + std::log((logits.col(j).array() - m).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

}  // namespace glyconet::nn
