#include "crossreid/eval.hpp"

#include <cmath>

#include "crossreid/error.hpp"

namespace crossreid {

CmcCurve cmc(const ScoreMatrix& matrix) {
  if (matrix.probes <= 0 || matrix.gallery <= 0) {
    throw std::invalid_argument("cmc: empty score matrix");
  }
  if (matrix.scores.size() != static_cast<std::size_t>(matrix.probes * matrix.gallery) ||
      matrix.truth.size() != static_cast<std::size_t>(matrix.probes)) {
    throw ShapeError("cmc: score matrix buffers disagree with declared dimensions");
  }

  std::vector<std::int64_t> rank_counts(static_cast<std::size_t>(matrix.gallery), 0);
  for (std::int64_t p = 0; p < matrix.probes; ++p) {
    const std::int64_t t = matrix.truth[static_cast<std::size_t>(p)];
    if (t < 0 || t >= matrix.gallery) {
      throw std::invalid_argument("cmc: ground-truth column out of range for probe " +
                                  std::to_string(p));
    }
    const double truth_score = matrix.at(p, t);
    if (!std::isfinite(truth_score)) {
      throw std::invalid_argument("cmc: non-finite score for probe " + std::to_string(p));
    }
    // Rank = 1 + number of columns ordered ahead of the ground truth under
    // (score descending, column index ascending).
    std::int64_t ahead = 0;
    for (std::int64_t g = 0; g < matrix.gallery; ++g) {
      if (g == t) continue;
      const double s = matrix.at(p, g);
      if (!std::isfinite(s)) {
        throw std::invalid_argument("cmc: non-finite score for probe " + std::to_string(p));
      }
      if (s > truth_score || (s == truth_score && g < t)) ++ahead;
    }
    ++rank_counts[static_cast<std::size_t>(ahead)];
  }

  CmcCurve curve;
  curve.values.resize(static_cast<std::size_t>(matrix.gallery));
  std::int64_t cumulative = 0;
  for (std::int64_t m = 0; m < matrix.gallery; ++m) {
    cumulative += rank_counts[static_cast<std::size_t>(m)];
    curve.values[static_cast<std::size_t>(m)] =
        static_cast<double>(cumulative) / static_cast<double>(matrix.probes);
  }
  return curve;
}

CmcCurve average_curves(const std::vector<CmcCurve>& curves) {
  if (curves.empty()) throw std::invalid_argument("average_curves: no curves");
  CmcCurve mean;
  mean.values.assign(curves.front().values.size(), 0.0);
  mean.trials = static_cast<std::int64_t>(curves.size());
  for (const auto& c : curves) {
    if (c.values.size() != mean.values.size()) {
      throw ShapeError("average_curves: curve lengths disagree");
    }
    for (std::size_t i = 0; i < c.values.size(); ++i) mean.values[i] += c.values[i];
  }
  for (auto& v : mean.values) v /= static_cast<double>(curves.size());
  return mean;
}

}  // namespace crossreid
