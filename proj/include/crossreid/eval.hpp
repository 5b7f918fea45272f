#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "crossreid/data.hpp"
#include "crossreid/verid.hpp"

namespace crossreid {

/// Probe-by-gallery similarity scores (higher = more similar) with each
/// probe's ground-truth gallery column.
struct ScoreMatrix {
  std::int64_t probes = 0;
  std::int64_t gallery = 0;
  std::vector<double> scores;       // row-major
  std::vector<std::int64_t> truth;  // ground-truth column per probe

  double at(std::int64_t row, std::int64_t col) const {
    return scores[static_cast<std::size_t>(row * gallery + col)];
  }
};

struct CmcCurve {
  std::vector<double> values;  // index m-1 holds rank-m matching probability
  std::int64_t trials = 1;
};

/// Rank-m matching probabilities. The rank of a probe is the position of its
/// ground-truth column in the descending score order, ties broken by
/// ascending column index.
CmcCurve cmc(const ScoreMatrix& matrix);

/// Pointwise mean of equally sized curves (the repeated-trials protocol).
CmcCurve average_curves(const std::vector<CmcCurve>& curves);

enum class ScoreMode {
  VerificationProbability,  // q_hat_1 from the verification head
  NegativeSquaredDistance,  // minus the summed square-layer output
};

/// Similarity of one probe image against one gallery tracklet under a frozen
/// network.
template <typename T>
double score_pair(const Network<T>& net, const TensorPtr<T>& probe,
                  const std::vector<TensorPtr<T>>& frames, ScoreMode mode,
                  const FmrStage& stage) {
  ForwardOptions<T> opts;
  opts.stage = stage;
  auto r = forward_pair<T>(nullptr, net, probe, frames, std::nullopt, opts);
  if (mode == ScoreMode::VerificationProbability) {
    return static_cast<double>(r.verification_probs->values[0]);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < r.image_feature->values.size(); ++i) {
    const double d = static_cast<double>(r.image_feature->values[i]) -
                     static_cast<double>(r.video_feature->values[i]);
    acc += d * d;
  }
  return -acc;
}

template <typename T>
struct EvalResult {
  ScoreMatrix matrix;
  CmcCurve curve;
};

/// Scores the full probe x gallery cross-product over the test identities (in
/// deterministic index order) and computes the CMC curve.
template <typename T>
EvalResult<T> evaluate_split(const Network<T>& net,
                             const std::map<std::int64_t, LoadedIdentity<T>>& samples,
                             const std::vector<std::int64_t>& test_identities, ScoreMode mode,
                             const FmrStage& stage) {
  if (test_identities.empty()) throw ConfigError("evaluate: empty test set");
  const auto n = static_cast<std::int64_t>(test_identities.size());
  EvalResult<T> result;
  result.matrix.probes = n;
  result.matrix.gallery = n;
  result.matrix.scores.resize(static_cast<std::size_t>(n * n));
  result.matrix.truth.resize(static_cast<std::size_t>(n));
  for (std::int64_t p = 0; p < n; ++p) {
    const auto& probe = samples.at(test_identities[static_cast<std::size_t>(p)]).probe;
    for (std::int64_t g = 0; g < n; ++g) {
      const auto& tracklet = samples.at(test_identities[static_cast<std::size_t>(g)]).tracklet;
      result.matrix.scores[static_cast<std::size_t>(p * n + g)] =
          score_pair(net, probe, tracklet, mode, stage);
    }
    result.matrix.truth[static_cast<std::size_t>(p)] = p;
  }
  result.curve = cmc(result.matrix);
  return result;
}

}  // namespace crossreid
