#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "crossreid/fmr.hpp"
#include "crossreid/gradcheck.hpp"

namespace crossreid {

struct NetworkConfig {
  EncoderConfig encoder;
  std::int64_t num_classes = 2;  // training identities k
  bool fmr_enabled = true;
  std::uint64_t fixed_seed = 101;

  std::int64_t fixed_dim() const { return encoder.feature_dim; }
};

/// Every trainable piece of the verification-identification framework plus
/// the frozen reused branches. One identification classifier is shared by the
/// image and video features, which forces a single coordinated space.
template <typename T>
struct Network {
  NetworkConfig config;
  ImageEncoderParams<T> image_encoder;
  VideoEncoderParams<T> video_encoder;
  FusionLayer<T> image_fusion;  // used only when fmr_enabled
  FusionLayer<T> video_fusion;
  std::shared_ptr<const FixedEmbedder<T>> fixed;  // null when fmr disabled
  TensorPtr<T> id_weight, id_bias;        // shared k-way classifier
  TensorPtr<T> verif_weight, verif_bias;  // 2-way verification head
};

template <typename T>
Network<T> make_network(const NetworkConfig& cfg, std::uint64_t seed) {
  Network<T> net;
  net.config = cfg;
  std::mt19937_64 rng(seed);
  net.image_encoder = init_image_encoder<T>(cfg.encoder, rng);
  net.video_encoder = init_video_encoder<T>(cfg.encoder, rng);
  const std::int64_t d = cfg.encoder.feature_dim;
  if (cfg.fmr_enabled) {
    net.image_fusion = init_fusion_layer<T>(d, cfg.fixed_dim(), rng);
    net.video_fusion = init_fusion_layer<T>(d, cfg.fixed_dim(), rng);
    net.fixed = std::make_shared<FixedEmbedder<T>>(
        make_fixed_embedder<T>(cfg.encoder, cfg.fixed_seed));
  }
  const double bh = detail::init_bound(d);
  net.id_weight = Tensor<T>::uniform({cfg.num_classes, d}, bh, rng, true);
  net.id_bias = Tensor<T>::uniform({cfg.num_classes}, bh, rng, true);
  net.verif_weight = Tensor<T>::uniform({2, d}, bh, rng, true);
  net.verif_bias = Tensor<T>::uniform({2}, bh, rng, true);
  return net;
}

namespace detail {

template <typename T>
void append_stack(NamedTensors<T>& out, const std::string& prefix,
                  const ConvStackParams<T>& s) {
  out.emplace_back(prefix + ".conv1.weight", s.conv1_weight);
  out.emplace_back(prefix + ".conv1.bias", s.conv1_bias);
  out.emplace_back(prefix + ".conv2.weight", s.conv2_weight);
  out.emplace_back(prefix + ".conv2.bias", s.conv2_bias);
  out.emplace_back(prefix + ".fc.weight", s.fc_weight);
  out.emplace_back(prefix + ".fc.bias", s.fc_bias);
}

template <typename T>
void append_video(NamedTensors<T>& out, const std::string& prefix,
                  const VideoEncoderParams<T>& v) {
  append_stack(out, prefix + ".frame", v.frame_stack);
  out.emplace_back(prefix + ".lstm.w_input", v.lstm.w_input);
  out.emplace_back(prefix + ".lstm.w_hidden", v.lstm.w_hidden);
  out.emplace_back(prefix + ".lstm.bias", v.lstm.bias);
  out.emplace_back(prefix + ".proj.weight", v.proj_weight);
  out.emplace_back(prefix + ".proj.bias", v.proj_bias);
}

}  // namespace detail

/// All trainable parameters in a fixed, documented order (the checkpoint and
/// SGD iteration order).
template <typename T>
NamedTensors<T> named_parameters(const Network<T>& net) {
  NamedTensors<T> out;
  detail::append_stack(out, "image", net.image_encoder.stack);
  detail::append_video(out, "video", net.video_encoder);
  if (net.config.fmr_enabled) {
    out.emplace_back("fusion_image.learned_weight", net.image_fusion.learned_weight);
    out.emplace_back("fusion_image.fixed_weight", net.image_fusion.fixed_weight);
    out.emplace_back("fusion_image.bias", net.image_fusion.bias);
    out.emplace_back("fusion_video.learned_weight", net.video_fusion.learned_weight);
    out.emplace_back("fusion_video.fixed_weight", net.video_fusion.fixed_weight);
    out.emplace_back("fusion_video.bias", net.video_fusion.bias);
  }
  out.emplace_back("id_head.weight", net.id_weight);
  out.emplace_back("id_head.bias", net.id_bias);
  out.emplace_back("verif_head.weight", net.verif_weight);
  out.emplace_back("verif_head.bias", net.verif_bias);
  return out;
}

/// Parameters of the frozen reused branches (never updated, never on tape).
template <typename T>
NamedTensors<T> fixed_parameters(const Network<T>& net) {
  NamedTensors<T> out;
  if (!net.fixed) return out;
  detail::append_stack(out, "fixed.image", net.fixed->image.stack);
  detail::append_video(out, "fixed.video", net.fixed->video);
  return out;
}

template <typename T>
void zero_gradients(const NamedTensors<T>& params) {
  for (const auto& [name, p] : params) p->zero_grad();
}

}  // namespace crossreid
