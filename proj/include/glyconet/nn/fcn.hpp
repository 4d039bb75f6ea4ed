#pragma once

// Fully convolutional classifier: 3 x (conv -> BN -> ReLU), global average
// pooling, dense head, softmax.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "glyconet/domain.hpp"
#include "glyconet/error.hpp"
#include "glyconet/nn/adam.hpp"
#include "glyconet/nn/layers.hpp"
#include "glyconet/nn/loss.hpp"
#include "glyconet/rng.hpp"

namespace glyconet::nn {

struct FcnArchitecture {
  std::vector<int> channels{128, 256, 128};
  std::vector<int> kernels{8, 5, 3};

  bool is_standard() const {
    return channels == std::vector<int>{128, 256, 128} && kernels == std::vector<int>{8, 5, 3};
  }
};

struct ConvBlock {
  int in_ch = 1, out_ch = 1, kernel = 1;
  Mat weight;  // (out, in*k), column ci*k + j
  Vec bias;
  BatchNormParams bn;
};

struct FcnModel {
  int length = 7;
  int classes = 4;
  std::uint64_t seed = 0;
  int epochs_trained = 0;
  std::vector<ConvBlock> blocks;
  Mat head_weight;  // (classes, last channels)
  Vec head_bias;
  BatchNormConfig bn_config;

  FcnArchitecture architecture() const {
    FcnArchitecture a;
    a.channels.clear();
    a.kernels.clear();
    for (const auto& b : blocks) {
      a.channels.push_back(b.out_ch);
      a.kernels.push_back(b.kernel);
    }
    return a;
  }
};

// Weights and biases uniform in +-1/sqrt(fan_in); BN gamma 1, beta 0.
inline FcnModel make_fcn(int length, int classes, std::uint64_t seed,
                         const FcnArchitecture& arch = {}) {
  if (length < 1 || classes < 2) throw ConfigError("FCN needs L >= 1 and at least 2 classes");
  if (arch.channels.size() != arch.kernels.size() || arch.channels.empty())
    throw ConfigError("FCN architecture: channels and kernels differ in length");
  FcnModel m;
  m.length = length;
  m.classes = classes;
  m.seed = seed;
  Rng rng(stream_key(seed, 0x6663'6e00ULL));
  auto fill = [&](auto& x, double bound) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-bound, bound);
  };
  int in = 1;
  for (std::size_t i = 0; i < arch.channels.size(); ++i) {
    ConvBlock b;
    b.in_ch = in;
    b.out_ch = arch.channels[i];
    b.kernel = arch.kernels[i];
    b.weight.resize(b.out_ch, b.in_ch * b.kernel);
    b.bias.resize(b.out_ch);
    const double bound = 1.0 / std::sqrt(static_cast<double>(b.in_ch * b.kernel));
    fill(b.weight, bound);
    fill(b.bias, bound);
    b.bn = BatchNormParams(b.out_ch);
    m.blocks.push_back(std::move(b));
    in = arch.channels[i];
  }
  m.head_weight.resize(classes, in);
  m.head_bias.resize(classes);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  fill(m.head_weight, bound);
  fill(m.head_bias, bound);
  return m;
}

// Trainable tensors in a fixed order: per block weight, bias, gamma, beta;
// then head weight and bias.
inline std::vector<ParamView> parameters(FcnModel& m) {
  std::vector<ParamView> out;
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    auto& b = m.blocks[i];
    const std::string p = "block" + std::to_string(i) + ".";
    out.push_back({p + "weight", b.weight.data(), b.weight.size()});
    out.push_back({p + "bias", b.bias.data(), b.bias.size()});
    out.push_back({p + "bn_gamma", b.bn.gamma.data(), b.bn.gamma.size()});
    out.push_back({p + "bn_beta", b.bn.beta.data(), b.bn.beta.size()});
  }
  out.push_back({"head.weight", m.head_weight.data(), m.head_weight.size()});
  out.push_back({"head.bias", m.head_bias.data(), m.head_bias.size()});
  return out;
}

inline std::size_t parameter_count(FcnModel& m) {
  std::size_t n = 0;
  for (const auto& p : parameters(m)) n += static_cast<std::size_t>(p.size);
  return n;
}

struct ForwardCache {
  std::size_t batch = 0;
  struct Block {
    ConvCache conv;
    BatchNormCache bn;
    Mat pre_relu;
  };
  std::vector<Block> blocks;
  Mat pooled, logits, probs;
};

// x is (1, B*L): sample b occupies columns b*L .. b*L + L-1.
inline Mat forward(FcnModel& m, const Mat& x, std::size_t batch, Mode mode,
                   ForwardCache* cache = nullptr) {
  const auto L = static_cast<std::size_t>(m.length);
  if (x.rows() != 1 || x.cols() != static_cast<Eigen::Index>(batch * L))
    throw ShapeError("fcn: input " + shape_of(x) + " does not hold " + std::to_string(batch) +
                     " samples of length " + std::to_string(L));
  if (cache) {
    cache->batch = batch;
    cache->blocks.assign(m.blocks.size(), {});
  }
  Mat h = x;
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    auto& b = m.blocks[i];
    auto* c = cache ? &cache->blocks[i] : nullptr;
    Mat u = conv1d_forward(h, batch, L, b.weight, b.bias, b.kernel, c ? &c->conv : nullptr);
    Mat z = batchnorm_forward(u, batch, b.bn, mode, m.bn_config, c ? &c->bn : nullptr);
    h = relu(z);
    if (c) c->pre_relu = std::move(z);
  }
  Mat pooled = global_avg_pool(h, batch, L);
  Mat logits = dense_forward(pooled, m.head_weight, m.head_bias);
  Mat probs = softmax(logits);
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->logits = std::move(logits);
    cache->probs = probs;
  }
  return probs;
}

struct BackwardResult {
  double loss = 0.0;
  std::vector<Vec> grads;  // same order as parameters()
};

// Gradients of the focal loss after a TRAIN-mode forward that filled `cache`.
inline BackwardResult backward(const FcnModel& m, const ForwardCache& cache,
                               const std::vector<int>& labels, const FocalLossConfig& loss) {
  const std::size_t batch = cache.batch;
  const auto L = static_cast<std::size_t>(m.length);
  LossResult lr = focal_loss_from_logits(cache.logits, labels, loss);
  BackwardResult r;
  r.loss = lr.loss;

  const Mat dhead_w = lr.grad * cache.pooled.transpose();
  const Vec dhead_b = lr.grad.rowwise().sum();
  Mat dh = global_avg_pool_backward(m.head_weight.transpose() * lr.grad, L);

  std::vector<std::array<Vec, 4>> block_grads(m.blocks.size());
  for (std::size_t i = m.blocks.size(); i-- > 0;) {
    const auto& b = m.blocks[i];
    const auto& c = cache.blocks[i];
    const Mat dz = relu_backward(dh, c.pre_relu);
    BatchNormGrads bg = batchnorm_backward(dz, c.bn, b.bn.gamma);
    ConvGrads cg = conv1d_backward(bg.dx, c.conv, b.weight, batch, L, b.kernel, i > 0);
    block_grads[i] = {Eigen::Map<const Vec>(cg.dw.data(), cg.dw.size()), cg.db, bg.dgamma,
                      bg.dbeta};
    dh = std::move(cg.dx);
  }
  for (auto& g : block_grads)
    for (auto& v : g) r.grads.push_back(std::move(v));
  r.grads.push_back(Eigen::Map<const Vec>(dhead_w.data(), dhead_w.size()));
  r.grads.push_back(dhead_b);
  return r;
}

// Packs windows' features into the (1, B*L) layout.
inline Mat pack_batch(const std::vector<const std::vector<double>*>& rows, int length) {
  const auto L = static_cast<Eigen::Index>(length);
  Mat x(1, static_cast<Eigen::Index>(rows.size()) * L);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (static_cast<Eigen::Index>(rows[b]->size()) != L)
      throw ShapeError("fcn: window of length " + std::to_string(rows[b]->size()) +
                       ", model expects " + std::to_string(length));
    for (Eigen::Index t = 0; t < L; ++t)
      x(0, static_cast<Eigen::Index>(b) * L + t) = (*rows[b])[static_cast<std::size_t>(t)];
  }
  return x;
}

inline constexpr std::size_t kEvalBatch = 256;

// EVAL-mode class probabilities, one row per input, in fixed-size batches.
inline std::vector<std::vector<double>> predict_proba(
    FcnModel& m, const std::vector<const std::vector<double>*>& rows) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (std::size_t lo = 0; lo < rows.size(); lo += kEvalBatch) {
    const std::size_t hi = std::min(rows.size(), lo + kEvalBatch);
    std::vector<const std::vector<double>*> chunk(rows.begin() + static_cast<std::ptrdiff_t>(lo),
                                                  rows.begin() + static_cast<std::ptrdiff_t>(hi));
    const Mat p = forward(m, pack_batch(chunk, m.length), chunk.size(), Mode::EVAL);
    for (Eigen::Index b = 0; b < p.cols(); ++b)
      out.emplace_back(p.col(b).data(), p.col(b).data() + p.rows());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model file: {"fcn_v1": {...}} with weights as flat decimal arrays,
// conv weights in (out, in, k) order and the head in (classes, channels).

inline constexpr const char* kModelMagic = "fcn_v1";

namespace detail {

inline std::vector<double> to_vector(const Vec& v) { return {v.data(), v.data() + v.size()}; }

inline std::vector<double> row_major(const Mat& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

inline Vec read_vec(const nlohmann::json& j, const char* key, Eigen::Index n) {
  const auto v = j.at(key).get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != n)
    throw DataError(std::string("model file: '") + key + "' has " + std::to_string(v.size()) +
                    " values, expected " + std::to_string(n));
  return Eigen::Map<const Vec>(v.data(), n);
}

inline Mat read_mat(const nlohmann::json& j, const char* key, Eigen::Index rows,
                    Eigen::Index cols) {
  const Vec flat = read_vec(j, key, rows * cols);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat(r * cols + c);
  return m;
}

}  // namespace detail

inline nlohmann::json model_to_json(const FcnModel& m) {
  using nlohmann::json;
  json body;
  body["pipeline_version"] = kPipelineVersion;
  body["length"] = m.length;
  body["classes"] = m.classes;
  body["seed"] = m.seed;
  body["epochs_trained"] = m.epochs_trained;
  body["bn_eps"] = m.bn_config.eps;
  body["bn_momentum"] = m.bn_config.momentum;
  json blocks = json::array();
  for (const auto& b : m.blocks) {
    json e;
    e["in_channels"] = b.in_ch;
    e["out_channels"] = b.out_ch;
    e["kernel"] = b.kernel;
    e["weight"] = detail::row_major(b.weight);
    e["bias"] = detail::to_vector(b.bias);
    e["bn_gamma"] = detail::to_vector(b.bn.gamma);
    e["bn_beta"] = detail::to_vector(b.bn.beta);
    e["bn_running_mean"] = detail::to_vector(b.bn.running_mean);
    e["bn_running_var"] = detail::to_vector(b.bn.running_var);
    blocks.push_back(std::move(e));
  }
  body["blocks"] = std::move(blocks);
  body["head"] = {{"weight", detail::row_major(m.head_weight)},
                  {"bias", detail::to_vector(m.head_bias)}};
  json j;
  j[kModelMagic] = std::move(body);
  return j;
}

inline FcnModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains(kModelMagic))
    throw DataError(std::string("not a ") + kModelMagic + " model file");
  try {
    const auto& body = j.at(kModelMagic);
    FcnModel m;
    m.length = body.at("length").get<int>();
    m.classes = body.at("classes").get<int>();
    m.seed = body.at("seed").get<std::uint64_t>();
    m.epochs_trained = body.at("epochs_trained").get<int>();
    m.bn_config.eps = body.at("bn_eps").get<double>();
    m.bn_config.momentum = body.at("bn_momentum").get<double>();
    int in = 1;
    for (const auto& e : body.at("blocks")) {
      ConvBlock b;
      b.in_ch = e.at("in_channels").get<int>();
      b.out_ch = e.at("out_channels").get<int>();
      b.kernel = e.at("kernel").get<int>();
      if (b.in_ch != in || b.out_ch < 1 || b.kernel < 1)
        throw DataError("model file: inconsistent block shapes");
      b.weight = detail::read_mat(e, "weight", b.out_ch, b.in_ch * b.kernel);
      b.bias = detail::read_vec(e, "bias", b.out_ch);
      b.bn.gamma = detail::read_vec(e, "bn_gamma", b.out_ch);
      b.bn.beta = detail::read_vec(e, "bn_beta", b.out_ch);
      b.bn.running_mean = detail::read_vec(e, "bn_running_mean", b.out_ch);
      b.bn.running_var = detail::read_vec(e, "bn_running_var", b.out_ch);
      if ((b.bn.running_var.array() < 0.0).any())
        throw DataError("model file: negative running variance");
      in = b.out_ch;
      m.blocks.push_back(std::move(b));
    }
    if (m.blocks.empty()) throw DataError("model file: no conv blocks");
    const auto& head = body.at("head");
    m.head_weight = detail::read_mat(head, "weight", m.classes, in);
    m.head_bias = detail::read_vec(head, "bias", m.classes);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

inline void save_model(const FcnModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << model_to_json(m).dump() << '\n';
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline FcnModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("model file '" + path + "' not found");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace glyconet::nn
