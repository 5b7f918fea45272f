#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crossreid/checkpoint.hpp"
#include "crossreid/config.hpp"
#include "crossreid/eval.hpp"
#include "crossreid/gradcheck_suite.hpp"
#include "crossreid/trainer.hpp"
#include "crossreid/util.hpp"

namespace fs = std::filesystem;
using namespace crossreid;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_out) {
  cmd->add_option("--config", args.config_path, "flat key = value config file");
  cmd->add_option("--set", args.sets, "override a config key, e.g. --set train.epochs=50");
  if (with_out) cmd->add_option("--out", args.out_dir, "output directory")->required();
  cmd->footer(Config::help_text());
}

Config load_config(const CommonArgs& args) {
  Config cfg = args.config_path.empty() ? Config() : Config::from_file(args.config_path);
  cfg.apply_environment();
  for (const auto& s : args.sets) cfg.set_pair(s);
  return cfg;
}

TrainConfig make_train_config(const Config& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.get_int("train.epochs");
  tc.learning_rate = cfg.get_double("train.lr");
  tc.seed = static_cast<std::uint64_t>(cfg.get_int("data.seed"));
  tc.checkpoint_every = cfg.get_int("train.checkpoint_every");
  tc.fixed_seed = static_cast<std::uint64_t>(cfg.get_int("fmr.fixed_seed"));
  tc.fmr.enabled = cfg.get_bool("fmr.enabled");
  tc.fmr.wp_end = cfg.is_set("fmr.wp_end") ? cfg.get_int("fmr.wp_end")
                                           : std::max<std::int64_t>(1, tc.epochs * 2 / 5);
  tc.fmr.kd_end = cfg.is_set("fmr.kd_end") ? cfg.get_int("fmr.kd_end")
                                           : std::max<std::int64_t>(tc.fmr.wp_end + 1,
                                                                    tc.epochs * 4 / 5);
  tc.encoder.resolution = cfg.get_int("data.resolution");
  tc.encoder.conv1_channels = cfg.get_int("model.conv1");
  tc.encoder.conv2_channels = cfg.get_int("model.conv2");
  tc.encoder.kernel = cfg.get_int("model.kernel");
  tc.encoder.pool = cfg.get_int("model.pool");
  tc.encoder.feature_dim = cfg.get_int("model.d");
  return tc;
}

ScoreMode score_mode(const Config& cfg) {
  const auto mode = cfg.get_string("eval.score");
  if (mode == "verification") return ScoreMode::VerificationProbability;
  if (mode == "distance") return ScoreMode::NegativeSquaredDistance;
  throw ConfigError("eval.score must be 'verification' or 'distance', got '" + mode + "'");
}

template <typename Fn>
int with_precision(const Config& cfg, Fn&& fn) {
  const auto p = cfg.get_string("train.precision");
  if (p == "f32") return fn(float{});
  if (p == "f64") return fn(double{});
  throw ConfigError("train.precision must be f32 or f64, got '" + p + "'");
}

DatasetIndex ingest_from_config(const Config& cfg) {
  return ingest(cfg.require("data.root"), DatasetLayout{}, cfg.get_int("data.max_identities"));
}

int cmd_synth(const Config& cfg) {
  SynthConfig sc;
  sc.identities = cfg.get_int("synth.k");
  sc.frames = cfg.get_int("synth.frames");
  sc.noise = cfg.get_double("synth.noise");
  sc.resolution = cfg.get_int("data.resolution");
  sc.seed = static_cast<std::uint64_t>(cfg.get_int("data.seed"));
  const auto root = cfg.require("data.root");
  synth_generate(root, sc);
  std::cout << "synthetic dataset: " << sc.identities << " identities, " << sc.frames
            << " frames, " << sc.resolution << "x" << sc.resolution << ", noise "
            << fmt_real(sc.noise) << ", seed " << sc.seed << " -> " << root << "\n";
  return 0;
}

int cmd_ingest_check(const Config& cfg) {
  const auto index = ingest_from_config(cfg);
  std::cout << "root: " << index.root << "\n"
            << "identities: " << index.identities.size() << "\n";
  for (const auto& w : index.warnings) std::cout << "warning: " << w << "\n";
  for (std::size_t i = 0; i < index.identities.size() && i < 5; ++i) {
    const auto& e = index.identities[i];
    std::cout << "  " << e.name << ": cam_a " << e.camera_a_frames.size() << " frames, cam_b "
              << e.camera_b_frames.size() << " frames\n";
  }
  if (index.identities.size() > 5) {
    std::cout << "  ... (" << index.identities.size() - 5 << " more)\n";
  }
  return 0;
}

int cmd_train(const Config& cfg, const std::string& out_dir, const std::string& resume_path) {
  const auto tc = make_train_config(cfg);
  const auto index = ingest_from_config(cfg);
  const auto trials = cfg.get_int("data.trials");
  const auto splits = make_splits(index, trials, tc.seed);
  if (!resume_path.empty() && trials != 1) {
    throw ConfigError("--resume requires data.trials = 1");
  }

  return with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    for (const auto& split : splits) {
      const auto trial_dir = (fs::path(out_dir) / ("trial_" + std::to_string(split.trial))).string();
      TrainState<T> state;
      if (!resume_path.empty()) {
        const auto loaded = load_checkpoint<T>(resume_path);
        state = train<T>(tc, index, split, trial_dir, &loaded);
      } else {
        state = train<T>(tc, index, split, trial_dir);
      }
      std::cout << "trial " << split.trial << ": epochs " << state.epoch << ", first-epoch loss "
                << fmt_real(state.first_epoch_loss) << ", final-epoch loss "
                << fmt_real(state.last_epoch_loss) << " -> " << trial_dir << "\n";
    }
    return 0;
  });
}

void print_rank_table(std::ostream& os, const CmcCurve& mean) {
  const auto g = static_cast<std::int64_t>(mean.values.size());
  os << "CMC Rank";
  for (std::int64_t m : {1, 5, 10, 20}) {
    if (m <= g) os << "\t" << m;
  }
  os << "\n mean  ";
  for (std::int64_t m : {1, 5, 10, 20}) {
    if (m <= g) os << "\t" << fmt_real(mean.values[static_cast<std::size_t>(m - 1)]);
  }
  os << "\n";
}

int cmd_evaluate(const Config& cfg, const std::string& out_dir) {
  const auto tc = make_train_config(cfg);
  const auto index = ingest_from_config(cfg);
  const auto trials = cfg.get_int("data.trials");
  const auto splits = make_splits(index, trials, tc.seed);
  const auto mode = score_mode(cfg);

  return with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    std::vector<CmcCurve> curves;
    for (const auto& split : splits) {
      const auto ckpt_path =
          fs::path(out_dir) / ("trial_" + std::to_string(split.trial)) / "ckpt_final";
      if (!fs::exists(ckpt_path)) {
        throw IoError("missing checkpoint: " + ckpt_path.string());
      }
      const auto loaded = load_checkpoint<T>(ckpt_path.string());
      auto net = restore_network<T>(loaded);
      FmrStage stage;
      if (net.config.fmr_enabled) stage = advance_stage(tc.fmr, loaded.header.epoch);
      auto samples = load_identities<T>(index, split.test_identities, tc.encoder.resolution,
                                        loaded.header.stats);
      curves.push_back(
          evaluate_split<T>(net, samples, split.test_identities, mode, stage).curve);
    }
    const auto mean = average_curves(curves);

    const auto csv_path = fs::path(out_dir) / "cmc.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot write: " + csv_path.string());
    csv << "m,mean";
    for (std::size_t t = 0; t < curves.size(); ++t) csv << ",trial_" << t;
    csv << "\n";
    for (std::size_t m = 0; m < mean.values.size(); ++m) {
      csv << (m + 1) << ',' << fmt_real(mean.values[m]);
      for (const auto& c : curves) csv << ',' << fmt_real(c.values[m]);
      csv << "\n";
    }
    csv.flush();

    std::ofstream report(fs::path(out_dir) / "eval_report.txt");
    report << "trials: " << curves.size() << "\n";
    print_rank_table(report, mean);
    print_rank_table(std::cout, mean);
    std::cout << "cmc curve -> " << csv_path.string() << "\n";
    return 0;
  });
}

int cmd_gradcheck() {
  const auto suite = run_gradcheck_suite();
  for (const auto& op : suite.ops) {
    std::printf("op %-26s max rel err %.3e (tol %.0e) %s\n", op.op.c_str(), op.max_rel_error,
                op.tolerance, op.passed ? "PASS" : "FAIL");
  }
  std::printf("gradcheck %s in %.1fs\n", suite.all_passed ? "PASSED" : "FAILED", suite.seconds);
  return suite.all_passed ? 0 : 1;
}

int cmd_severance(const Config& cfg, const std::string& out_dir, const std::string& ckpt_arg) {
  const auto tc = make_train_config(cfg);
  const auto ckpt_path = ckpt_arg.empty()
                             ? (fs::path(out_dir) / "trial_0" / "ckpt_final").string()
                             : ckpt_arg;
  if (!fs::exists(ckpt_path)) throw IoError("missing checkpoint: " + ckpt_path);

  return with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    const auto loaded = load_checkpoint<T>(ckpt_path);
    auto net = restore_network<T>(loaded);
    if (!net.config.fmr_enabled) {
      throw ConfigError("severance: checkpoint was trained without fmr");
    }
    const auto stage = advance_stage(tc.fmr, loaded.header.epoch);
    std::mt19937_64 rng(loaded.header.seed);
    auto probe = Tensor<T>::uniform({3, tc.encoder.resolution, tc.encoder.resolution}, 1.0, rng,
                                    false);
    std::vector<TensorPtr<T>> frames{
        Tensor<T>::uniform({3, tc.encoder.resolution, tc.encoder.resolution}, 1.0, rng, false),
        Tensor<T>::uniform({3, tc.encoder.resolution, tc.encoder.resolution}, 1.0, rng, false)};
    const bool severed = severance_check<T>(net, probe, frames, stage);
    std::cout << "stage: " << stage.name() << "\n"
              << "severed: " << (severed ? "yes" : "no") << "\n";
    return severed ? 0 : 1;
  });
}

int cmd_report(const std::string& out_dir) {
  const auto csv_path = fs::path(out_dir) / "cmc.csv";
  std::ifstream csv(csv_path);
  if (!csv) throw IoError("missing curve file: " + csv_path.string());
  std::string line;
  if (!std::getline(csv, line)) throw IoError("empty curve file: " + csv_path.string());
  CmcCurve mean;
  while (std::getline(csv, line)) {
    const auto first = line.find(',');
    if (first == std::string::npos) continue;
    const auto second = line.find(',', first + 1);
    const auto field = line.substr(first + 1, second - first - 1);
    mean.values.push_back(std::strtod(field.c_str(), nullptr));
  }
  if (mean.values.empty()) throw IoError("no curve rows in: " + csv_path.string());
  print_rank_table(std::cout, mean);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crossreid: image-to-video person re-identification toolkit"};
  app.require_subcommand(1);

  CommonArgs synth_args, ingest_args, train_args, eval_args, grad_args, sever_args, report_args;
  std::int64_t synth_k = -1, synth_frames = -1, synth_seed = -1, synth_res = -1;
  double synth_noise = -1.0;
  std::string resume_path, sever_ckpt;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset tree");
  add_common(synth, synth_args, false);
  synth->add_option("--root", synth_args.out_dir, "output root (overrides data.root)");
  synth->add_option("--k", synth_k, "identities (overrides synth.k)");
  synth->add_option("--frames", synth_frames, "frames per tracklet (overrides synth.frames)");
  synth->add_option("--noise", synth_noise, "pixel noise sigma (overrides synth.noise)");
  synth->add_option("--seed", synth_seed, "seed (overrides data.seed)");
  synth->add_option("--res", synth_res, "resolution (overrides data.resolution)");

  auto* ingest_check = app.add_subcommand("ingest-check", "scan a dataset tree and report");
  add_common(ingest_check, ingest_args, false);

  auto* train_cmd = app.add_subcommand("train", "train one network per split trial");
  add_common(train_cmd, train_args, true);
  train_cmd->add_option("--resume", resume_path, "checkpoint to resume from (trials = 1)");

  auto* eval_cmd = app.add_subcommand("evaluate", "compute CMC curves from trained checkpoints");
  add_common(eval_cmd, eval_args, true);

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every op");
  add_common(grad_cmd, grad_args, false);

  auto* sever_cmd = app.add_subcommand("severance", "verify fixed-branch independence");
  add_common(sever_cmd, sever_args, true);
  sever_cmd->add_option("--ckpt", sever_ckpt, "checkpoint path (default <out>/trial_0/ckpt_final)");

  auto* report_cmd = app.add_subcommand("report", "print the rank table from cmc.csv");
  add_common(report_cmd, report_args, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(synth)) {
      auto cfg = load_config(synth_args);
      if (!synth_args.out_dir.empty()) cfg.set("data.root", synth_args.out_dir);
      if (synth_k >= 0) cfg.set("synth.k", std::to_string(synth_k));
      if (synth_frames >= 0) cfg.set("synth.frames", std::to_string(synth_frames));
      if (synth_noise >= 0.0) cfg.set("synth.noise", fmt_real(synth_noise));
      if (synth_seed >= 0) cfg.set("data.seed", std::to_string(synth_seed));
      if (synth_res >= 0) cfg.set("data.resolution", std::to_string(synth_res));
      return cmd_synth(cfg);
    }
    if (app.got_subcommand(ingest_check)) return cmd_ingest_check(load_config(ingest_args));
    if (app.got_subcommand(train_cmd)) {
      return cmd_train(load_config(train_args), train_args.out_dir, resume_path);
    }
    if (app.got_subcommand(eval_cmd)) {
      return cmd_evaluate(load_config(eval_args), eval_args.out_dir);
    }
    if (app.got_subcommand(grad_cmd)) return cmd_gradcheck();
    if (app.got_subcommand(sever_cmd)) {
      return cmd_severance(load_config(sever_args), sever_args.out_dir, sever_ckpt);
    }
    if (app.got_subcommand(report_cmd)) return cmd_report(report_args.out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
