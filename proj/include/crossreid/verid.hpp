#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "crossreid/network.hpp"

namespace crossreid {

/// The four loss values of one training pair:
///   total = verification + 0.5 * id_image + 0.5 * id_video.
template <typename T>
struct LossBreakdown {
  T verification = T(0);
  T id_image = T(0);
  T id_video = T(0);
  T total = T(0);
};

/// Validates and assembles the combined loss from its three components.
template <typename T>
LossBreakdown<T> make_loss_breakdown(T verification, T id_image, T id_video) {
  for (T v : {verification, id_image, id_video}) {
    if (!std::isfinite(static_cast<double>(v)) || v < T(0)) {
      throw std::invalid_argument("combined loss components must be finite and non-negative");
    }
  }
  LossBreakdown<T> b;
  b.verification = verification;
  b.id_image = id_image;
  b.id_video = id_video;
  b.total = verification + T(0.5) * id_image + T(0.5) * id_video;
  return b;
}

/// Cross-entropy against a one-hot identity target: -ln(p_hat[target]).
template <typename T>
TensorPtr<T> identification_loss(Tape<T>* tape, const TensorPtr<T>& identity_probs,
                                 std::int64_t target) {
  if (identity_probs->shape.size() != 1 || target < 0 || target >= identity_probs->shape[0]) {
    throw std::out_of_range("identification_loss: target " + std::to_string(target) +
                            " out of range for " + shape_str(identity_probs->shape));
  }
  return neg_log_at(tape, identity_probs, target);
}

/// Non-parametric comparison layer: elementwise (f_i - f_v)^2.
template <typename T>
TensorPtr<T> square_layer(Tape<T>* tape, const TensorPtr<T>& image_feature,
                          const TensorPtr<T>& video_feature) {
  return squared_diff(tape, image_feature, video_feature);
}

/// Binary cross-entropy on the 2-way verification distribution; component 0
/// is the probability that the pair shares one identity.
template <typename T>
TensorPtr<T> verification_loss(Tape<T>* tape, const TensorPtr<T>& verification_probs, bool same) {
  if (verification_probs->shape != std::vector<std::int64_t>{2}) {
    throw ShapeError("verification_loss: expects a 2-dim distribution, got " +
                     shape_str(verification_probs->shape));
  }
  return neg_log_at(tape, verification_probs, same ? 0 : 1);
}

/// Tape-level combined loss, accumulated in the same order as the breakdown
/// formula so logged values match the optimized scalar bit for bit.
template <typename T>
TensorPtr<T> combined_loss(Tape<T>* tape, const TensorPtr<T>& l_verif, const TensorPtr<T>& l_ii,
                           const TensorPtr<T>& l_iv) {
  auto half_ii = scale(tape, l_ii, T(0.5));
  auto half_iv = scale(tape, l_iv, T(0.5));
  return add(tape, add(tape, l_verif, half_ii), half_iv);
}

struct PairTargets {
  std::int64_t image_class = 0;
  std::int64_t video_class = 0;
  bool same = false;
};

/// Diagnostics hooks: when set, the corresponding fixed-branch embedding is
/// replaced by the given tensor before fusion. Used by the severance check.
template <typename T>
struct ForwardOptions {
  FmrStage stage;
  TensorPtr<T> fixed_image_override;
  TensorPtr<T> fixed_video_override;
};

template <typename T>
struct ForwardPairResult {
  TensorPtr<T> image_feature;            // f_i
  TensorPtr<T> video_feature;            // f_v
  TensorPtr<T> image_identity_probs;     // k-dim
  TensorPtr<T> video_identity_probs;     // k-dim
  TensorPtr<T> verification_probs;       // 2-dim, [0] = same
  TensorPtr<T> loss;                     // scalar; set iff targets were given
  LossBreakdown<T> breakdown;            // valid iff targets were given
};

/// Runs both encoder branches (with fixed-model fusion when enabled), the
/// shared identification classifier on each feature, and the square layer plus
/// verification classifier on the pair. With targets, also assembles the
/// combined loss.
template <typename T>
ForwardPairResult<T> forward_pair(Tape<T>* tape, const Network<T>& net,
                                  const TensorPtr<T>& image_pixels,
                                  const std::vector<TensorPtr<T>>& frames,
                                  const std::optional<PairTargets>& targets,
                                  const ForwardOptions<T>& opts) {
  ForwardPairResult<T> r;
  auto learned_image = encode_image(tape, image_pixels, net.image_encoder, net.config.encoder);
  auto learned_video = encode_video(tape, frames, net.video_encoder, net.config.encoder);

  if (net.config.fmr_enabled) {
    if (!net.fixed) throw std::logic_error("forward_pair: fmr enabled but no fixed embedder");
    auto fixed_image =
        opts.fixed_image_override ? opts.fixed_image_override : net.fixed->embed_image(image_pixels);
    auto fixed_video =
        opts.fixed_video_override ? opts.fixed_video_override : net.fixed->embed_tracklet(frames);
    r.image_feature = fuse(tape, learned_image, fixed_image, net.image_fusion, opts.stage);
    r.video_feature = fuse(tape, learned_video, fixed_video, net.video_fusion, opts.stage);
  } else {
    r.image_feature = learned_image;
    r.video_feature = learned_video;
  }

  r.image_identity_probs =
      softmax(tape, linear(tape, r.image_feature, net.id_weight, net.id_bias));
  r.video_identity_probs =
      softmax(tape, linear(tape, r.video_feature, net.id_weight, net.id_bias));
  auto contrast = square_layer(tape, r.image_feature, r.video_feature);
  r.verification_probs =
      softmax(tape, linear(tape, contrast, net.verif_weight, net.verif_bias));

  if (targets) {
    auto l_ii = identification_loss(tape, r.image_identity_probs, targets->image_class);
    auto l_iv = identification_loss(tape, r.video_identity_probs, targets->video_class);
    auto l_v = verification_loss(tape, r.verification_probs, targets->same);
    r.loss = combined_loss(tape, l_v, l_ii, l_iv);
    r.breakdown = make_loss_breakdown<T>(l_v->item(), l_ii->item(), l_iv->item());
  }
  return r;
}

/// Largest absolute change across every network output when the fixed-branch
/// embeddings are replaced by the given override tensors. Exposed for
/// diagnostics in any stage; the severance check requires it to be exactly
/// zero after knockdown.
template <typename T>
T fixed_branch_influence(const Network<T>& net, const TensorPtr<T>& image_pixels,
                         const std::vector<TensorPtr<T>>& frames, const FmrStage& stage,
                         const TensorPtr<T>& image_override, const TensorPtr<T>& video_override) {
  if (!net.config.fmr_enabled) {
    throw std::logic_error("fixed_branch_influence: fmr is disabled for this network");
  }
  ForwardOptions<T> base{stage, nullptr, nullptr};
  ForwardOptions<T> probed{stage, image_override, video_override};
  auto a = forward_pair<T>(nullptr, net, image_pixels, frames, std::nullopt, base);
  auto b = forward_pair<T>(nullptr, net, image_pixels, frames, std::nullopt, probed);

  T delta = T(0);
  auto track = [&delta](const TensorPtr<T>& x, const TensorPtr<T>& y) {
    for (std::size_t i = 0; i < x->values.size(); ++i) {
      delta = std::max(delta, std::abs(x->values[i] - y->values[i]));
    }
  };
  track(a.image_feature, b.image_feature);
  track(a.video_feature, b.video_feature);
  track(a.image_identity_probs, b.image_identity_probs);
  track(a.video_identity_probs, b.video_identity_probs);
  track(a.verification_probs, b.verification_probs);
  return delta;
}

/// True iff replacing the fixed embedder's output with arbitrary values leaves
/// every network output exactly unchanged. Only meaningful once knockdown has
/// completed; earlier stages are rejected.
template <typename T>
bool severance_check(const Network<T>& net, const TensorPtr<T>& image_pixels,
                     const std::vector<TensorPtr<T>>& frames, const FmrStage& stage,
                     std::uint64_t probe_seed = 2024) {
  if (stage.kind != FmrStageKind::PostKnockdown) {
    throw std::logic_error("severance_check: network must be in the WP/K stage");
  }
  const std::int64_t fixed_dim = net.config.fixed_dim();
  std::mt19937_64 rng(probe_seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int probe = 0; probe < 3; ++probe) {
    auto image_override = Tensor<T>::zeros({fixed_dim});
    auto video_override = Tensor<T>::zeros({fixed_dim});
    for (auto& v : image_override->values) {
      v = static_cast<T>(probe == 0 ? 1000.0 : 1000.0 * dist(rng));
    }
    for (auto& v : video_override->values) {
      v = static_cast<T>(probe == 0 ? 1000.0 : 1000.0 * dist(rng));
    }
    if (fixed_branch_influence(net, image_pixels, frames, stage, image_override,
                               video_override) != T(0)) {
      return false;
    }
  }
  return true;
}

}  // namespace crossreid
