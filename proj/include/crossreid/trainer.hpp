#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "crossreid/checkpoint.hpp"
#include "crossreid/util.hpp"
#include "crossreid/verid.hpp"

namespace crossreid {

struct TrainConfig {
  std::int64_t epochs = 200;
  double learning_rate = 1e-3;
  std::uint64_t seed = 7;
  FmrSchedule fmr;  // wp_end/kd_end in epochs
  std::uint64_t fixed_seed = 101;
  std::int64_t checkpoint_every = 50;
  EncoderConfig encoder;
};

template <typename T>
struct TrainState {
  Network<T> net;
  std::mt19937_64 rng;
  std::int64_t epoch = 0;
  ChannelStats stats;
  double first_epoch_loss = 0.0;
  double last_epoch_loss = 0.0;
};

/// Plain SGD update p <- p - lr * g, no momentum or weight decay. A non-finite
/// gradient aborts the step, naming the offending parameter.
template <typename T>
void sgd_step(const NamedTensors<T>& params, T learning_rate) {
  for (const auto& [name, p] : params) {
    if (!p->requires_grad) continue;
    for (std::size_t i = 0; i < p->values.size(); ++i) {
      const T g = p->grad[i];
      if (!std::isfinite(static_cast<double>(g))) {
        throw std::runtime_error("sgd_step: non-finite gradient in '" + name + "' at index " +
                                 std::to_string(i));
      }
      p->values[i] -= learning_rate * g;
    }
  }
}

namespace train_detail {

inline std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw IoError("corrupt RNG state in checkpoint");
  return rng;
}

}  // namespace train_detail

template <typename T>
CheckpointHeader make_header(const TrainConfig& cfg, const TrainState<T>& state,
                             std::int64_t num_classes) {
  CheckpointHeader h;
  h.scalar_bytes = sizeof(T);
  h.network = state.net.config;
  h.network.num_classes = num_classes;
  h.seed = cfg.seed;
  h.epoch = state.epoch;
  h.stats = state.stats;
  h.rng_state = train_detail::rng_to_string(state.rng);
  return h;
}

/// The per-pair training loop: sample an epoch, run the joint forward, back-
/// propagate, apply one SGD step per pair, advance the reuse schedule, log the
/// loss breakdown, checkpoint on cadence. Fully deterministic given the seed
/// within one precision mode. Pass an empty out_dir to skip all file output;
/// pass a loaded checkpoint to resume mid-run.
template <typename T>
TrainState<T> train(const TrainConfig& cfg, const DatasetIndex& index, const SplitPlan& split,
                    const std::string& out_dir,
                    const LoadedCheckpoint<T>* resume = nullptr) {
  if (cfg.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (!(cfg.learning_rate > 0.0) && cfg.learning_rate != 0.0) {
    throw ConfigError("train.lr must be non-negative");
  }
  validate_schedule(cfg.fmr, cfg.epochs);
  if (split.train_identities.size() < 2) {
    throw ConfigError("train: split must contain at least 2 training identities");
  }

  // Dataset identity index -> classifier class, by sorted train position.
  std::map<std::int64_t, std::int64_t> class_of;
  for (std::size_t i = 0; i < split.train_identities.size(); ++i) {
    class_of[split.train_identities[i]] = static_cast<std::int64_t>(i);
  }

  TrainState<T> state;
  if (resume) {
    state.net = restore_network<T>(*resume);
    state.rng = train_detail::rng_from_string(resume->header.rng_state);
    state.epoch = resume->header.epoch;
    state.stats = resume->header.stats;
  } else {
    NetworkConfig net_cfg;
    net_cfg.encoder = cfg.encoder;
    net_cfg.num_classes = static_cast<std::int64_t>(split.train_identities.size());
    net_cfg.fmr_enabled = cfg.fmr.enabled;
    net_cfg.fixed_seed = cfg.fixed_seed;
    state.net = make_network<T>(net_cfg, mix_seed(cfg.seed, 0x1217u,
                                                  static_cast<std::uint64_t>(split.trial)));
    state.rng.seed(mix_seed(cfg.seed, 0xE90Cu, static_cast<std::uint64_t>(split.trial)));
    state.epoch = 0;
    state.stats = compute_stats(index, split.train_identities, cfg.encoder.resolution);
  }

  auto samples =
      load_identities<T>(index, split.train_identities, cfg.encoder.resolution, state.stats);
  auto params = named_parameters(state.net);

  const bool io = !out_dir.empty();
  std::ofstream loss_csv;
  if (io) {
    std::filesystem::create_directories(out_dir);
    const auto csv_path = std::filesystem::path(out_dir) / "loss.csv";
    const bool append = resume != nullptr && std::filesystem::exists(csv_path);
    loss_csv.open(csv_path, append ? std::ios::app : std::ios::trunc);
    if (!loss_csv) throw IoError("cannot write: " + csv_path.string());
    if (!append) loss_csv << "epoch,L,L_v,L_ii,L_iv,stage,beta\n";
  }

  for (std::int64_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    FmrStage stage;
    if (cfg.fmr.enabled) stage = advance_stage(cfg.fmr, epoch);

    const auto pairs = sample_epoch(split, state.rng);
    double sum_total = 0.0, sum_v = 0.0, sum_ii = 0.0, sum_iv = 0.0;
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
      const auto& pair = pairs[pi];
      Tape<T> tape;
      zero_gradients(params);

      PairTargets targets;
      targets.image_class = class_of.at(pair.image_identity);
      targets.video_class = class_of.at(pair.video_identity);
      targets.same = pair.same;
      ForwardOptions<T> opts;
      opts.stage = stage;

      auto result = forward_pair(&tape, state.net, samples.at(pair.image_identity).probe,
                                 samples.at(pair.video_identity).tracklet,
                                 std::make_optional(targets), opts);
      if (!std::isfinite(static_cast<double>(result.breakdown.total))) {
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", pair " + std::to_string(pi));
      }
      tape.backward(result.loss);
      sgd_step(params, static_cast<T>(cfg.learning_rate));

      sum_total += static_cast<double>(result.breakdown.total);
      sum_v += static_cast<double>(result.breakdown.verification);
      sum_ii += static_cast<double>(result.breakdown.id_image);
      sum_iv += static_cast<double>(result.breakdown.id_video);
    }

    const double n = static_cast<double>(pairs.size());
    const double mean_total = sum_total / n;
    if (epoch == 0) state.first_epoch_loss = mean_total;
    state.last_epoch_loss = mean_total;
    state.epoch = epoch + 1;

    if (io) {
      loss_csv << epoch << ',' << fmt_real(mean_total) << ',' << fmt_real(sum_v / n) << ','
               << fmt_real(sum_ii / n) << ',' << fmt_real(sum_iv / n) << ','
               << (cfg.fmr.enabled ? stage.name() : "off") << ','
               << fmt_real(cfg.fmr.enabled ? stage.beta() : 0.0) << '\n';
    }

    if (io && cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0 &&
        state.epoch < cfg.epochs) {
      const auto path =
          std::filesystem::path(out_dir) / ("ckpt_" + std::to_string(state.epoch));
      save_checkpoint<T>(path.string(),
                         make_header(cfg, state, state.net.config.num_classes), params);
    }
  }

  if (io) {
    loss_csv.flush();
    const auto final_path = std::filesystem::path(out_dir) / "ckpt_final";
    save_checkpoint<T>(final_path.string(),
                       make_header(cfg, state, state.net.config.num_classes), params);

    std::ofstream report(std::filesystem::path(out_dir) / "train_report.txt");
    report << "seed: " << cfg.seed << "\n"
           << "trial: " << split.trial << "\n"
           << "precision: " << (sizeof(T) == 4 ? "f32" : "f64") << "\n"
           << "epochs: " << cfg.epochs << "\n"
           << "learning_rate: " << fmt_real(cfg.learning_rate) << "\n"
           << "train_identities: " << split.train_identities.size() << "\n"
           << "fmr: " << (cfg.fmr.enabled ? "enabled" : "disabled") << "\n";
    if (cfg.fmr.enabled) {
      report << "fmr_wp_end: " << cfg.fmr.wp_end << "\n"
             << "fmr_kd_end: " << cfg.fmr.kd_end << "\n"
             << "final_stage: " << advance_stage(cfg.fmr, cfg.epochs - 1).name() << "\n";
    }
    report << "first_epoch_loss: " << fmt_real(state.first_epoch_loss) << "\n"
           << "final_epoch_loss: " << fmt_real(state.last_epoch_loss) << "\n";
  }
  return state;
}

}  // namespace crossreid
