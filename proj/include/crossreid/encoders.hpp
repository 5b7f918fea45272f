#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "crossreid/ops.hpp"

namespace crossreid {

/// Shape of the per-branch backbone: two valid conv layers with one average
/// pooling stage, then a linear projection to the shared embedding dimension.
/// The paper-scale 299x299 input remains expressible; tests run at 32x32 and
/// below.
struct EncoderConfig {
  std::int64_t channels = 3;
  std::int64_t resolution = 32;
  std::int64_t conv1_channels = 8;
  std::int64_t conv2_channels = 16;
  std::int64_t kernel = 3;
  std::int64_t pool = 2;
  std::int64_t feature_dim = 32;  // d, shared by both modalities
};

struct ConvStackDims {
  std::int64_t after_conv1;  // spatial side after conv1
  std::int64_t after_pool;
  std::int64_t after_conv2;
  std::int64_t flat;  // conv2_channels * after_conv2^2
};

inline ConvStackDims conv_stack_dims(const EncoderConfig& cfg) {
  ConvStackDims d{};
  d.after_conv1 = cfg.resolution - cfg.kernel + 1;
  if (d.after_conv1 < cfg.pool) {
    throw ShapeError("encoder: resolution " + std::to_string(cfg.resolution) +
                     " too small for kernel " + std::to_string(cfg.kernel) + " and pool " +
                     std::to_string(cfg.pool));
  }
  d.after_pool = (d.after_conv1 - cfg.pool) / cfg.pool + 1;
  d.after_conv2 = d.after_pool - cfg.kernel + 1;
  if (d.after_conv2 < 1) {
    throw ShapeError("encoder: conv stack collapses below 1x1 at resolution " +
                     std::to_string(cfg.resolution));
  }
  d.flat = cfg.conv2_channels * d.after_conv2 * d.after_conv2;
  return d;
}

template <typename T>
struct ConvStackParams {
  TensorPtr<T> conv1_weight, conv1_bias;
  TensorPtr<T> conv2_weight, conv2_bias;
  TensorPtr<T> fc_weight, fc_bias;
};

template <typename T>
struct ImageEncoderParams {
  ConvStackParams<T> stack;
};

template <typename T>
struct VideoEncoderParams {
  ConvStackParams<T> frame_stack;  // shared across frames
  LstmParams<T> lstm;              // hidden size = feature_dim
  TensorPtr<T> proj_weight, proj_bias;  // [d,d], [d]
};

namespace detail {

inline double init_bound(std::int64_t fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in)); }

template <typename T>
ConvStackParams<T> init_conv_stack(const EncoderConfig& cfg, std::mt19937_64& rng,
                                   bool requires_grad) {
  const auto dims = conv_stack_dims(cfg);
  ConvStackParams<T> p;
  const double b1 = init_bound(cfg.channels * cfg.kernel * cfg.kernel);
  p.conv1_weight = Tensor<T>::uniform({cfg.conv1_channels, cfg.channels, cfg.kernel, cfg.kernel},
                                      b1, rng, requires_grad);
  p.conv1_bias = Tensor<T>::uniform({cfg.conv1_channels}, b1, rng, requires_grad);
  const double b2 = init_bound(cfg.conv1_channels * cfg.kernel * cfg.kernel);
  p.conv2_weight = Tensor<T>::uniform(
      {cfg.conv2_channels, cfg.conv1_channels, cfg.kernel, cfg.kernel}, b2, rng, requires_grad);
  p.conv2_bias = Tensor<T>::uniform({cfg.conv2_channels}, b2, rng, requires_grad);
  const double bf = init_bound(dims.flat);
  p.fc_weight = Tensor<T>::uniform({cfg.feature_dim, dims.flat}, bf, rng, requires_grad);
  p.fc_bias = Tensor<T>::uniform({cfg.feature_dim}, bf, rng, requires_grad);
  return p;
}

}  // namespace detail

template <typename T>
ImageEncoderParams<T> init_image_encoder(const EncoderConfig& cfg, std::mt19937_64& rng,
                                         bool requires_grad = true) {
  return ImageEncoderParams<T>{detail::init_conv_stack<T>(cfg, rng, requires_grad)};
}

template <typename T>
VideoEncoderParams<T> init_video_encoder(const EncoderConfig& cfg, std::mt19937_64& rng,
                                         bool requires_grad = true) {
  VideoEncoderParams<T> p;
  p.frame_stack = detail::init_conv_stack<T>(cfg, rng, requires_grad);
  const std::int64_t d = cfg.feature_dim;
  const double bx = detail::init_bound(d);
  p.lstm.w_input = Tensor<T>::uniform({4 * d, d}, bx, rng, requires_grad);
  p.lstm.w_hidden = Tensor<T>::uniform({4 * d, d}, bx, rng, requires_grad);
  p.lstm.bias = Tensor<T>::uniform({4 * d}, bx, rng, requires_grad);
  p.proj_weight = Tensor<T>::uniform({d, d}, bx, rng, requires_grad);
  p.proj_bias = Tensor<T>::uniform({d}, bx, rng, requires_grad);
  return p;
}

/// conv -> tanh -> avgpool -> conv -> tanh -> flatten -> linear.
template <typename T>
TensorPtr<T> run_conv_stack(Tape<T>* tape, const TensorPtr<T>& pixels,
                            const ConvStackParams<T>& params, const EncoderConfig& cfg) {
  const std::vector<std::int64_t> expected{cfg.channels, cfg.resolution, cfg.resolution};
  if (pixels->shape != expected) {
    throw ShapeError("encoder: expected input " + shape_str(expected) + ", got " +
                     shape_str(pixels->shape));
  }
  auto a1 = tanh_activation(tape, conv2d(tape, pixels, params.conv1_weight, params.conv1_bias, 1));
  auto p1 = avgpool2d(tape, a1, cfg.pool, cfg.pool);
  auto a2 = tanh_activation(tape, conv2d(tape, p1, params.conv2_weight, params.conv2_bias, 1));
  return linear(tape, flatten(tape, a2), params.fc_weight, params.fc_bias);
}

/// Image branch: conv stack to a d-dim feature.
template <typename T>
TensorPtr<T> encode_image(Tape<T>* tape, const TensorPtr<T>& pixels,
                          const ImageEncoderParams<T>& params, const EncoderConfig& cfg) {
  return run_conv_stack(tape, pixels, params.stack, cfg);
}

/// Video branch: the shared conv stack per frame, an LSTM over timesteps from
/// a zero initial state, the temporal mean of the per-step outputs, and a
/// final projection. Handles any T >= 1 without reconfiguration.
template <typename T>
TensorPtr<T> encode_video(Tape<T>* tape, const std::vector<TensorPtr<T>>& frames,
                          const VideoEncoderParams<T>& params, const EncoderConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("encode_video: empty tracklet");
  const std::int64_t d = cfg.feature_dim;
  auto h = Tensor<T>::zeros({d});
  auto c = Tensor<T>::zeros({d});
  std::vector<TensorPtr<T>> outputs;
  outputs.reserve(frames.size());
  for (const auto& frame : frames) {
    auto x = run_conv_stack(tape, frame, params.frame_stack, cfg);
    auto [h_next, c_next] = lstm_step(tape, x, h, c, params.lstm);
    h = h_next;
    c = c_next;
    outputs.push_back(h);
  }
  auto pooled = mean_stack(tape, outputs);
  return linear(tape, pooled, params.proj_weight, params.proj_bias);
}

}  // namespace crossreid
