#include "crossreid/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "crossreid/error.hpp"
#include "crossreid/util.hpp"

namespace fs = std::filesystem;

namespace crossreid {

namespace {

std::vector<std::string> sorted_png_files(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") {
      files.push_back(e.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) return names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

DatasetIndex ingest(const std::string& root, const DatasetLayout& layout,
                    std::int64_t max_identities) {
  if (!fs::is_directory(root)) {
    throw IoError("dataset root does not exist: " + root);
  }
  const fs::path cam_a = fs::path(root) / layout.camera_a;
  const fs::path cam_b = fs::path(root) / layout.camera_b;
  const fs::path single_shot = fs::path(root) / layout.single_shot;

  std::set<std::string> names;
  for (const auto& n : sorted_subdirs(cam_a)) names.insert(n);
  for (const auto& n : sorted_subdirs(cam_b)) names.insert(n);
  if (names.empty()) {
    throw IoError("no identities found under dataset root: " + root);
  }

  DatasetIndex index;
  index.root = root;
  for (const auto& name : names) {
    if (max_identities > 0 &&
        static_cast<std::int64_t>(index.identities.size()) >= max_identities) {
      break;
    }
    IdentityEntry entry;
    entry.name = name;
    const fs::path a_dir = cam_a / name;
    const fs::path b_dir = cam_b / name;
    if (fs::is_directory(a_dir)) entry.camera_a_frames = sorted_png_files(a_dir);
    if (fs::is_directory(b_dir)) entry.camera_b_frames = sorted_png_files(b_dir);
    if (entry.camera_a_frames.empty() || entry.camera_b_frames.empty()) {
      index.warnings.push_back("identity '" + name +
                               "' skipped: missing frames in one camera view");
      continue;
    }
    const fs::path shot = single_shot / (name + ".png");
    entry.probe = fs::is_regular_file(shot) ? shot.string() : entry.camera_a_frames.front();
    index.identities.push_back(std::move(entry));
  }
  if (index.identities.empty()) {
    throw IoError("no identity has frames in both camera views under: " + root);
  }
  return index;
}

namespace {

struct Pattern {
  std::int64_t resolution;
  std::vector<double> values;  // [3, res, res] in [0,1]

  double at(int c, std::int64_t y, std::int64_t x) const {
    return values[static_cast<std::size_t>((c * resolution + y) * resolution + x)];
  }
};

/// Smooth per-identity signature: a tinted background plus a handful of
/// Gaussian color bumps, clipped to [0,1]. Smoothness keeps the pattern
/// recognizable under the camera shift and pixel noise.
Pattern make_pattern(std::int64_t resolution, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Pattern p{resolution, std::vector<double>(static_cast<std::size_t>(3 * resolution * resolution))};

  std::array<double, 3> tint;
  for (auto& t : tint) t = 0.1 + 0.2 * unit(rng);

  constexpr int kBumps = 4;
  struct Bump {
    double cy, cx, radius;
    std::array<double, 3> amp;
  };
  std::vector<Bump> bumps(kBumps);
  for (auto& b : bumps) {
    b.cy = unit(rng) * static_cast<double>(resolution);
    b.cx = unit(rng) * static_cast<double>(resolution);
    b.radius = (0.12 + 0.2 * unit(rng)) * static_cast<double>(resolution);
    for (auto& a : b.amp) a = 0.2 + 0.7 * unit(rng);
  }

  for (std::int64_t y = 0; y < resolution; ++y) {
    for (std::int64_t x = 0; x < resolution; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = tint[static_cast<std::size_t>(c)];
        for (const auto& b : bumps) {
          const double dy = static_cast<double>(y) - b.cy;
          const double dx = static_cast<double>(x) - b.cx;
          v += b.amp[static_cast<std::size_t>(c)] *
               std::exp(-(dy * dy + dx * dx) / (2.0 * b.radius * b.radius));
        }
        p.values[static_cast<std::size_t>((c * resolution + y) * resolution + x)] =
            std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return p;
}

// Camera B views the same pattern under this fixed circular shift.
constexpr std::int64_t kCameraShiftY = 1;
constexpr std::int64_t kCameraShiftX = 2;

ImageU8 render(const Pattern& p, std::int64_t shift_y, std::int64_t shift_x, double noise,
               std::mt19937_64& rng) {
  const std::int64_t res = p.resolution;
  ImageU8 image;
  image.width = static_cast<int>(res);
  image.height = static_cast<int>(res);
  image.pixels.resize(static_cast<std::size_t>(res * res * 3));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::int64_t y = 0; y < res; ++y) {
    for (std::int64_t x = 0; x < res; ++x) {
      const std::int64_t sy = ((y - shift_y) % res + res) % res;
      const std::int64_t sx = ((x - shift_x) % res + res) % res;
      for (int c = 0; c < 3; ++c) {
        double v = p.at(c, sy, sx);
        if (noise > 0.0) v += noise * gauss(rng);
        const int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        image.pixels[static_cast<std::size_t>((y * res + x) * 3 + c)] =
            static_cast<std::uint8_t>(q);
      }
    }
  }
  return image;
}

std::string frame_name(std::int64_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.png", static_cast<int>(i));
  return buf;
}

}  // namespace

void synth_generate(const std::string& root, const SynthConfig& cfg) {
  if (cfg.identities < 2 || cfg.frames < 1 || cfg.resolution < 4) {
    throw ConfigError("synth requires identities >= 2, frames >= 1, resolution >= 4");
  }
  if (cfg.noise < 0.0) throw ConfigError("synth noise must be non-negative");

  const fs::path base(root);
  fs::create_directories(base / "cam_a");
  fs::create_directories(base / "cam_b");

  for (std::int64_t id = 0; id < cfg.identities; ++id) {
    char name[16];
    std::snprintf(name, sizeof(name), "id_%03d", static_cast<int>(id));
    const fs::path a_dir = base / "cam_a" / name;
    const fs::path b_dir = base / "cam_b" / name;
    fs::create_directories(a_dir);
    fs::create_directories(b_dir);

    const Pattern pattern =
        make_pattern(cfg.resolution, mix_seed(cfg.seed, 1, static_cast<std::uint64_t>(id)));

    std::mt19937_64 probe_rng(mix_seed(cfg.seed, 2, static_cast<std::uint64_t>(id), 0));
    write_png((a_dir / frame_name(0)).string(), render(pattern, 0, 0, cfg.noise, probe_rng));

    for (std::int64_t t = 0; t < cfg.frames; ++t) {
      std::mt19937_64 frame_rng(
          mix_seed(cfg.seed, 3, static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(t)));
      write_png((b_dir / frame_name(t)).string(),
                render(pattern, kCameraShiftY, kCameraShiftX, cfg.noise, frame_rng));
    }
  }
}

std::vector<SplitPlan> make_splits(const DatasetIndex& index, std::int64_t trials,
                                   std::uint64_t seed) {
  const auto k = static_cast<std::int64_t>(index.identities.size());
  if (k < 2) throw ConfigError("make_splits requires at least 2 identities");
  if (trials < 1) throw ConfigError("make_splits requires trials >= 1");

  std::vector<SplitPlan> plans;
  plans.reserve(static_cast<std::size_t>(trials));
  for (std::int64_t trial = 0; trial < trials; ++trial) {
    SplitPlan plan;
    plan.trial = trial;
    plan.seed = mix_seed(seed, 0x5157u, static_cast<std::uint64_t>(trial));
    std::vector<std::int64_t> ids(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < k; ++i) ids[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 rng(plan.seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::int64_t n_train = k / 2;
    plan.train_identities.assign(ids.begin(), ids.begin() + n_train);
    plan.test_identities.assign(ids.begin() + n_train, ids.end());
    std::sort(plan.train_identities.begin(), plan.train_identities.end());
    std::sort(plan.test_identities.begin(), plan.test_identities.end());
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::vector<PairSample> sample_epoch(const SplitPlan& split, std::mt19937_64& rng) {
  const auto& train = split.train_identities;
  if (train.empty()) throw ConfigError("sample_epoch: empty training set");
  const auto n = static_cast<std::int64_t>(train.size());

  std::vector<PairSample> pairs;
  pairs.reserve(static_cast<std::size_t>(2 * n));
  for (auto id : train) pairs.push_back(PairSample{id, id, true});

  if (n >= 2) {
    std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
    std::uniform_int_distribution<std::int64_t> pick_other(0, n - 2);
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t a = pick(rng);
      std::int64_t b = pick_other(rng);
      if (b >= a) ++b;  // uniform over ordered pairs with a != b
      pairs.push_back(PairSample{train[static_cast<std::size_t>(a)],
                                 train[static_cast<std::size_t>(b)], false});
    }
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  return pairs;
}

ChannelStats compute_stats(const DatasetIndex& index,
                           const std::vector<std::int64_t>& identities,
                           std::int64_t resolution) {
  std::array<double, 3> sum{0, 0, 0};
  std::array<double, 3> sum_sq{0, 0, 0};
  std::int64_t count = 0;

  auto accumulate = [&](const std::string& path) {
    auto t = preprocess<double>(read_png(path), resolution, nullptr);
    const std::int64_t plane = resolution * resolution;
    for (int c = 0; c < 3; ++c) {
      for (std::int64_t i = 0; i < plane; ++i) {
        const double v = t->values[static_cast<std::size_t>(c * plane + i)];
        sum[static_cast<std::size_t>(c)] += v;
        sum_sq[static_cast<std::size_t>(c)] += v * v;
      }
    }
    count += plane;
  };

  for (auto id : identities) {
    const auto& entry = index.identities.at(static_cast<std::size_t>(id));
    accumulate(entry.probe);
    for (const auto& path : entry.camera_b_frames) accumulate(path);
  }
  if (count == 0) throw ConfigError("compute_stats: no pixels accumulated");

  ChannelStats stats;
  for (int c = 0; c < 3; ++c) {
    const auto sc = static_cast<std::size_t>(c);
    stats.mean[sc] = sum[sc] / static_cast<double>(count);
    const double var = std::max(0.0, sum_sq[sc] / static_cast<double>(count) -
                                         stats.mean[sc] * stats.mean[sc]);
    stats.stddev[sc] = std::max(1e-6, std::sqrt(var));
  }
  return stats;
}

}  // namespace crossreid
