#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "crossreid/image_io.hpp"
#include "crossreid/tensor.hpp"

namespace crossreid {

/// On-disk layout: root/cam_a/<identity>/<frame>.png, root/cam_b/...,
/// optional root/single_shot/<identity>.png. Identities are matched by
/// directory name; frames are sorted lexicographically.
struct DatasetLayout {
  std::string camera_a = "cam_a";
  std::string camera_b = "cam_b";
  std::string single_shot = "single_shot";
};

struct IdentityEntry {
  std::string name;
  std::vector<std::string> camera_a_frames;  // absolute paths, sorted
  std::vector<std::string> camera_b_frames;
  std::string probe;  // single-shot file if present, else first camera-A frame
};

struct DatasetIndex {
  std::string root;
  std::vector<IdentityEntry> identities;  // sorted by name
  std::vector<std::string> warnings;      // identities skipped and why
};

/// Scans a dataset tree. Identities missing either camera view are skipped
/// with a warning; an empty or unreadable root is a hard error. With
/// max_identities > 0 only the first N surviving identities (by name) are
/// kept, matching the first-N-persons protocol.
DatasetIndex ingest(const std::string& root, const DatasetLayout& layout = {},
                    std::int64_t max_identities = 0);

struct SynthConfig {
  std::int64_t identities = 8;
  std::int64_t frames = 6;
  std::int64_t resolution = 32;
  double noise = 0.05;
  std::uint64_t seed = 7;
};

/// Materializes a synthetic dataset tree under root. Each identity gets a
/// distinct smooth blob pattern; camera A holds one clean-view probe frame and
/// camera B a tracklet of the same pattern under a fixed circular shift, both
/// with i.i.d. Gaussian pixel noise of the configured sigma.
void synth_generate(const std::string& root, const SynthConfig& cfg);

struct SplitPlan {
  std::int64_t trial = 0;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> train_identities;  // indices into DatasetIndex, sorted
  std::vector<std::int64_t> test_identities;
};

/// Deterministic 50/50 identity partitions, one per trial, each drawn from an
/// independently derived seed.
std::vector<SplitPlan> make_splits(const DatasetIndex& index, std::int64_t trials,
                                   std::uint64_t seed);

struct PairSample {
  std::int64_t image_identity = 0;  // index into DatasetIndex
  std::int64_t video_identity = 0;
  bool same = false;
};

/// One epoch of training pairs: exactly one positive pair per training
/// identity plus an equal number of negatives whose image and video
/// identities differ (uniform over ordered mismatched pairs), shuffled.
std::vector<PairSample> sample_epoch(const SplitPlan& split, std::mt19937_64& rng);

struct ChannelStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};
};

/// Per-channel mean/std over every probe and camera-B frame of the given
/// identities, computed after resize and [0,1] scaling. Call with the training
/// identities only; test preprocessing reuses the result.
ChannelStats compute_stats(const DatasetIndex& index, const std::vector<std::int64_t>& identities,
                           std::int64_t resolution);

namespace detail {

/// Bilinear sample positions use the half-pixel convention
/// src = (dst + 0.5) * size_ratio - 0.5, clamped to the image.
inline void bilinear_axis(std::int64_t src_size, std::int64_t dst_size, std::int64_t dst,
                          std::int64_t& lo, std::int64_t& hi, double& w_hi) {
  const double ratio = static_cast<double>(src_size) / static_cast<double>(dst_size);
  double src = (static_cast<double>(dst) + 0.5) * ratio - 0.5;
  if (src < 0.0) src = 0.0;
  const double max_src = static_cast<double>(src_size - 1);
  if (src > max_src) src = max_src;
  lo = static_cast<std::int64_t>(src);
  hi = std::min(lo + 1, src_size - 1);
  w_hi = src - static_cast<double>(lo);
}

}  // namespace detail

/// Decoded image -> [3,H,W] tensor scaled to [0,1], bilinearly resized to the
/// requested square resolution, then standardized per channel when stats are
/// given.
template <typename T>
TensorPtr<T> preprocess(const ImageU8& image, std::int64_t resolution,
                        const ChannelStats* stats) {
  if (image.width <= 0 || image.height <= 0) {
    throw ShapeError("preprocess: empty image");
  }
  if (resolution <= 0) throw std::invalid_argument("preprocess: resolution must be positive");
  auto out = Tensor<T>::zeros({3, resolution, resolution});
  for (std::int64_t y = 0; y < resolution; ++y) {
    std::int64_t y0, y1;
    double wy;
    detail::bilinear_axis(image.height, resolution, y, y0, y1, wy);
    for (std::int64_t x = 0; x < resolution; ++x) {
      std::int64_t x0, x1;
      double wx;
      detail::bilinear_axis(image.width, resolution, x, x0, x1, wx);
      for (int c = 0; c < 3; ++c) {
        const double v00 = image.at(static_cast<int>(y0), static_cast<int>(x0), c) / 255.0;
        const double v01 = image.at(static_cast<int>(y0), static_cast<int>(x1), c) / 255.0;
        const double v10 = image.at(static_cast<int>(y1), static_cast<int>(x0), c) / 255.0;
        const double v11 = image.at(static_cast<int>(y1), static_cast<int>(x1), c) / 255.0;
        double v = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                   wy * ((1.0 - wx) * v10 + wx * v11);
        if (stats) v = (v - stats->mean[static_cast<std::size_t>(c)]) /
                       stats->stddev[static_cast<std::size_t>(c)];
        out->values[static_cast<std::size_t>((c * resolution + y) * resolution + x)] =
            static_cast<T>(v);
      }
    }
  }
  return out;
}

template <typename T>
struct LoadedIdentity {
  TensorPtr<T> probe;                  // preprocessed probe image
  std::vector<TensorPtr<T>> tracklet;  // preprocessed camera-B frames
};

/// Decodes and preprocesses every sample the given identities need, keyed by
/// identity index. Training and evaluation both read from this cache.
template <typename T>
std::map<std::int64_t, LoadedIdentity<T>> load_identities(
    const DatasetIndex& index, const std::vector<std::int64_t>& identities,
    std::int64_t resolution, const ChannelStats& stats) {
  std::map<std::int64_t, LoadedIdentity<T>> out;
  for (auto id : identities) {
    const auto& entry = index.identities.at(static_cast<std::size_t>(id));
    LoadedIdentity<T> loaded;
    loaded.probe = preprocess<T>(read_png(entry.probe), resolution, &stats);
    loaded.tracklet.reserve(entry.camera_b_frames.size());
    for (const auto& path : entry.camera_b_frames) {
      loaded.tracklet.push_back(preprocess<T>(read_png(path), resolution, &stats));
    }
    out.emplace(id, std::move(loaded));
  }
  return out;
}

}  // namespace crossreid
