#pragma once

// Activations are kept as (channels x batch*length) column-major matrices;
// column b*L + t holds sample b at time t. Work is cut into fixed tiles of
// whole samples so the arithmetic never depends on the worker count.

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "glyconet/error.hpp"
#include "glyconet/parallel.hpp"

namespace glyconet::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Tensor3 {
  std::size_t batch = 0, channels = 0, length = 0;
  std::vector<double> data;  // row-major (batch, channels, length)

  Tensor3() = default;
  Tensor3(std::size_t b, std::size_t c, std::size_t l) : batch(b), channels(c), length(l) {
    data.assign(b * c * l, 0.0);
  }
  double& operator()(std::size_t b, std::size_t c, std::size_t t) {
    return data[(b * channels + c) * length + t];
  }
  double operator()(std::size_t b, std::size_t c, std::size_t t) const {
    return data[(b * channels + c) * length + t];
  }
  std::string shape_string() const {
    return "(" + std::to_string(batch) + ", " + std::to_string(channels) + ", " +
           std::to_string(length) + ")";
  }
};

inline Mat to_matrix(const Tensor3& x) {
  Mat m(x.channels, x.batch * x.length);
  for (std::size_t b = 0; b < x.batch; ++b)
    for (std::size_t c = 0; c < x.channels; ++c)
      for (std::size_t t = 0; t < x.length; ++t)
        m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b * x.length + t)) = x(b, c, t);
  return m;
}

inline Tensor3 from_matrix(const Mat& m, std::size_t batch, std::size_t length) {
  Tensor3 x(batch, static_cast<std::size_t>(m.rows()), length);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < x.channels; ++c)
      for (std::size_t t = 0; t < length; ++t)
        x(b, c, t) = m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b * length + t));
  return x;
}

inline constexpr std::size_t kTileColumns = 512;

struct SampleTiles {
  std::size_t batch = 0, length = 1, per_tile = 1;

  SampleTiles(std::size_t b, std::size_t l)
      : batch(b), length(l), per_tile(std::max<std::size_t>(1, kTileColumns / std::max<std::size_t>(1, l))) {}
  std::size_t count() const { return (batch + per_tile - 1) / per_tile; }
  Eigen::Index first_col(std::size_t tile) const {
    return static_cast<Eigen::Index>(tile * per_tile * length);
  }
  Eigen::Index cols(std::size_t tile) const {
    const std::size_t lo = tile * per_tile;
    return static_cast<Eigen::Index>((std::min(batch, lo + per_tile) - lo) * length);
  }
};

// out = a * b, split over column tiles of b.
inline void gemm_tiled(const Mat& a, const Mat& b, Mat& out, const SampleTiles& tiles) {
  out.resize(a.rows(), b.cols());
  parallel_for(tiles.count(), [&](std::size_t t) {
    const auto c0 = tiles.first_col(t), n = tiles.cols(t);
    out.middleCols(c0, n).noalias() = a * b.middleCols(c0, n);
  });
}

// out = a^T * b, split over column tiles of b.
inline void gemm_tn_tiled(const Mat& a, const Mat& b, Mat& out, const SampleTiles& tiles) {
  out.resize(a.cols(), b.cols());
  parallel_for(tiles.count(), [&](std::size_t t) {
    const auto c0 = tiles.first_col(t), n = tiles.cols(t);
    out.middleCols(c0, n).noalias() = a.transpose() * b.middleCols(c0, n);
  });
}

// a * b^T summed over column tiles; partials are added in tile order.
inline Mat gemm_nt_reduce(const Mat& a, const Mat& b, const SampleTiles& tiles) {
  std::vector<Mat> partial(tiles.count());
  parallel_for(tiles.count(), [&](std::size_t t) {
    const auto c0 = tiles.first_col(t), n = tiles.cols(t);
    partial[t].noalias() = a.middleCols(c0, n) * b.middleCols(c0, n).transpose();
  });
  Mat out = Mat::Zero(a.rows(), b.rows());
  for (const auto& p : partial) out += p;
  return out;
}

}  // namespace glyconet::nn
