#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "crossreid/encoders.hpp"

namespace crossreid {

/// The three training steps of fixed model reuse. The fixed branch is fully
/// active during weight propagation, ramps out linearly during knockdown, and
/// is detached after knockdown.
enum class FmrStageKind { WeightPropagation, Knockdown, PostKnockdown };

struct FmrStage {
  FmrStageKind kind = FmrStageKind::WeightPropagation;
  double kd_progress = 0.0;  // in [0,1]; meaningful during knockdown

  double beta() const {
    switch (kind) {
      case FmrStageKind::WeightPropagation:
        return 1.0;
      case FmrStageKind::Knockdown:
        return 1.0 - kd_progress;
      case FmrStageKind::PostKnockdown:
        return 0.0;
    }
    return 0.0;
  }

  const char* name() const {
    switch (kind) {
      case FmrStageKind::WeightPropagation:
        return "WP";
      case FmrStageKind::Knockdown:
        return "KD";
      case FmrStageKind::PostKnockdown:
        return "WPK";
    }
    return "?";
  }
};

struct FmrSchedule {
  bool enabled = true;
  std::int64_t wp_end = 0;  // first knockdown epoch
  std::int64_t kd_end = 0;  // first post-knockdown epoch
};

inline void validate_schedule(const FmrSchedule& s, std::int64_t total_epochs) {
  if (!s.enabled) return;
  if (s.wp_end <= 0 || s.kd_end <= s.wp_end || s.kd_end > total_epochs) {
    throw ConfigError("fmr schedule requires 0 < wp_end < kd_end <= epochs, got wp_end=" +
                      std::to_string(s.wp_end) + " kd_end=" + std::to_string(s.kd_end) +
                      " epochs=" + std::to_string(total_epochs));
  }
}

/// Maps an epoch to its stage: WP before wp_end, KD with linear progress up to
/// kd_end, WP/K afterward (boundary inclusive).
inline FmrStage advance_stage(const FmrSchedule& s, std::int64_t epoch) {
  if (s.wp_end <= 0 || s.kd_end <= s.wp_end) {
    throw ConfigError("fmr schedule requires 0 < wp_end < kd_end, got wp_end=" +
                      std::to_string(s.wp_end) + " kd_end=" + std::to_string(s.kd_end));
  }
  FmrStage stage;
  if (epoch < s.wp_end) {
    stage.kind = FmrStageKind::WeightPropagation;
  } else if (epoch < s.kd_end) {
    stage.kind = FmrStageKind::Knockdown;
    stage.kd_progress = static_cast<double>(epoch - s.wp_end) /
                        static_cast<double>(s.kd_end - s.wp_end);
  } else {
    stage.kind = FmrStageKind::PostKnockdown;
  }
  return stage;
}

/// Frozen surrogate for a reused cross-modal model: a seed-initialized copy of
/// the encoder architecture whose parameters never require gradients and are
/// evaluated off-tape. Any other frozen function with the same output
/// dimension can stand in behind this interface.
template <typename T>
struct FixedEmbedder {
  std::string id;
  std::uint64_t seed = 0;
  EncoderConfig cfg;
  ImageEncoderParams<T> image;
  VideoEncoderParams<T> video;

  TensorPtr<T> embed_image(const TensorPtr<T>& pixels) const {
    return encode_image<T>(nullptr, pixels, image, cfg);
  }

  TensorPtr<T> embed_tracklet(const std::vector<TensorPtr<T>>& frames) const {
    return encode_video<T>(nullptr, frames, video, cfg);
  }
};

template <typename T>
FixedEmbedder<T> make_fixed_embedder(const EncoderConfig& cfg, std::uint64_t seed) {
  FixedEmbedder<T> e;
  e.id = "frozen-encoder-" + std::to_string(seed);
  e.seed = seed;
  e.cfg = cfg;
  std::mt19937_64 rng(seed);
  e.image = init_image_encoder<T>(cfg, rng, /*requires_grad=*/false);
  e.video = init_video_encoder<T>(cfg, rng, /*requires_grad=*/false);
  return e;
}

/// Trainable mixer of [learned feature, fixed embedding] -> d dims. The
/// knockdown factor beta masks the fixed-branch block of weights.
template <typename T>
struct FusionLayer {
  TensorPtr<T> learned_weight;  // [d, d]
  TensorPtr<T> fixed_weight;    // [d, d_f]
  TensorPtr<T> bias;            // [d]
};

template <typename T>
FusionLayer<T> init_fusion_layer(std::int64_t d, std::int64_t fixed_dim, std::mt19937_64& rng) {
  FusionLayer<T> f;
  const double bound = detail::init_bound(d + fixed_dim);
  f.learned_weight = Tensor<T>::uniform({d, d}, bound, rng, true);
  f.fixed_weight = Tensor<T>::uniform({d, fixed_dim}, bound, rng, true);
  f.bias = Tensor<T>::uniform({d}, bound, rng, true);
  return f;
}

/// output = W_l.learned + beta * W_f.fixed + b. Gradients reach W_l, W_f, b
/// and flow through `learned`; the fixed input is a constant. After knockdown
/// the fixed term is dropped entirely, so arbitrary fixed-branch values cannot
/// influence the output even through rounding.
template <typename T>
TensorPtr<T> fuse(Tape<T>* tape, const TensorPtr<T>& learned, const TensorPtr<T>& fixed,
                  const FusionLayer<T>& layer, const FmrStage& stage) {
  const double beta = stage.beta();
  if (beta < 0.0 || beta > 1.0) {
    throw std::invalid_argument("fuse: beta must lie in [0,1], got " + std::to_string(beta));
  }
  auto mixed = add(tape, matvec(tape, layer.learned_weight, learned), layer.bias);
  if (stage.kind == FmrStageKind::PostKnockdown || beta == 0.0) {
    return mixed;
  }
  auto fixed_term = scale(tape, matvec(tape, layer.fixed_weight, fixed), static_cast<T>(beta));
  return add(tape, mixed, fixed_term);
}

}  // namespace crossreid
