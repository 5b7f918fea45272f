#pragma once

#include <chrono>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "crossreid/verid.hpp"

namespace crossreid {

struct OpCheckResult {
  std::string op;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckSuiteResult {
  std::vector<OpCheckResult> ops;
  bool all_passed = true;
  double seconds = 0.0;
};

namespace suite_detail {

inline TensorPtr<double> rand_tensor(std::vector<std::int64_t> shape, std::mt19937_64& rng,
                                     bool requires_grad = true, double span = 1.0) {
  return Tensor<double>::uniform(std::move(shape), span, rng, requires_grad);
}

inline std::vector<double> rand_weights(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(n);
  for (auto& v : w) v = dist(rng);
  return w;
}

}  // namespace suite_detail

/// Central-finite-difference verification of every differentiable op, each
/// over `cases` random shapes and seeds, plus the full combined loss of a tiny
/// two-class network. 64-bit throughout.
inline GradCheckSuiteResult run_gradcheck_suite(int cases = 12, std::uint64_t seed = 99,
                                                double op_tolerance = 1e-5,
                                                double end_to_end_tolerance = 1e-4) {
  using suite_detail::rand_tensor;
  using suite_detail::rand_weights;
  const auto started = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  GradCheckSuiteResult suite;

  auto run_op = [&](const std::string& name, auto make_case) {
    OpCheckResult r;
    r.op = name;
    r.tolerance = op_tolerance;
    for (int i = 0; i < cases; ++i) {
      const auto report = make_case();
      r.max_rel_error = std::max(r.max_rel_error, report.max_rel_error);
    }
    r.passed = r.max_rel_error < r.tolerance;
    suite.all_passed = suite.all_passed && r.passed;
    suite.ops.push_back(r);
  };

  std::uniform_int_distribution<std::int64_t> dim(1, 3);
  std::uniform_int_distribution<std::int64_t> spatial(3, 6);
  std::uniform_int_distribution<std::int64_t> len(2, 7);
  std::uniform_int_distribution<std::int64_t> stride_pick(1, 2);

  run_op("conv2d", [&]() {
    const auto c_in = dim(rng), c_out = dim(rng);
    const auto h = spatial(rng), w = spatial(rng);
    std::uniform_int_distribution<std::int64_t> ksize(1, std::min<std::int64_t>(3, std::min(h, w)));
    const auto k = ksize(rng);
    const auto stride = stride_pick(rng);
    auto input = rand_tensor({c_in, h, w}, rng);
    auto kernel = rand_tensor({c_out, c_in, k, k}, rng);
    auto bias = rand_tensor({c_out}, rng);
    const auto h_out = (h - k) / stride + 1, w_out = (w - k) / stride + 1;
    const auto weights = rand_weights(static_cast<std::size_t>(c_out * h_out * w_out), rng);
    return grad_check({{"input", input}, {"kernel", kernel}, {"bias", bias}},
                      [&](Tape<double>* tape) {
                        return weighted_sum(tape, conv2d(tape, input, kernel, bias, stride),
                                            weights);
                      },
                      op_tolerance);
  });

  run_op("avgpool2d", [&]() {
    const auto c = dim(rng);
    const auto h = spatial(rng), w = spatial(rng);
    std::uniform_int_distribution<std::int64_t> wsize(1, std::min(h, w));
    const auto window = wsize(rng);
    const auto stride = stride_pick(rng);
    auto input = rand_tensor({c, h, w}, rng);
    const auto h_out = (h - window) / stride + 1, w_out = (w - window) / stride + 1;
    const auto weights = rand_weights(static_cast<std::size_t>(c * h_out * w_out), rng);
    return grad_check({{"input", input}},
                      [&](Tape<double>* tape) {
                        return weighted_sum(tape, avgpool2d(tape, input, window, stride), weights);
                      },
                      op_tolerance);
  });

  run_op("linear", [&]() {
    const auto n = len(rng), m = len(rng);
    auto input = rand_tensor({n}, rng);
    auto weight = rand_tensor({m, n}, rng);
    auto bias = rand_tensor({m}, rng);
    const auto weights = rand_weights(static_cast<std::size_t>(m), rng);
    return grad_check({{"input", input}, {"weight", weight}, {"bias", bias}},
                      [&](Tape<double>* tape) {
                        return weighted_sum(tape, linear(tape, input, weight, bias), weights);
                      },
                      op_tolerance);
  });

  run_op("matvec", [&]() {
    const auto n = len(rng), m = len(rng);
    auto input = rand_tensor({n}, rng);
    auto weight = rand_tensor({m, n}, rng);
    const auto weights = rand_weights(static_cast<std::size_t>(m), rng);
    return grad_check({{"input", input}, {"weight", weight}},
                      [&](Tape<double>* tape) {
                        return weighted_sum(tape, matvec(tape, weight, input), weights);
                      },
                      op_tolerance);
  });

  run_op("lstm_step", [&]() {
    const auto n = len(rng), hidden = len(rng);
    auto x = rand_tensor({n}, rng);
    auto h_prev = rand_tensor({hidden}, rng);
    auto c_prev = rand_tensor({hidden}, rng);
    LstmParams<double> params{rand_tensor({4 * hidden, n}, rng),
                              rand_tensor({4 * hidden, hidden}, rng),
                              rand_tensor({4 * hidden}, rng)};
    const auto wh = rand_weights(static_cast<std::size_t>(hidden), rng);
    const auto wc = rand_weights(static_cast<std::size_t>(hidden), rng);
    return grad_check({{"x", x},
                       {"h_prev", h_prev},
                       {"c_prev", c_prev},
                       {"w_input", params.w_input},
                       {"w_hidden", params.w_hidden},
                       {"bias", params.bias}},
                      [&](Tape<double>* tape) {
                        auto [h, c] = lstm_step(tape, x, h_prev, c_prev, params);
                        return add(tape, weighted_sum(tape, h, wh), weighted_sum(tape, c, wc));
                      },
                      op_tolerance);
  });

  run_op("softmax", [&]() {
    const auto k = len(rng);
    auto logits = rand_tensor({k}, rng, true, 2.0);
    const auto weights = rand_weights(static_cast<std::size_t>(k), rng);
    return grad_check({{"logits", logits}},
                      [&](Tape<double>* tape) {
                        return weighted_sum(tape, softmax(tape, logits), weights);
                      },
                      op_tolerance);
  });

  run_op("tanh", [&]() {
    const auto n = len(rng);
    auto x = rand_tensor({n}, rng, true, 2.0);
    const auto weights = rand_weights(static_cast<std::size_t>(n), rng);
    return grad_check({{"x", x}},
                      [&](Tape<double>* tape) {
                        return weighted_sum(tape, tanh_activation(tape, x), weights);
                      },
                      op_tolerance);
  });

  run_op("add_scale_flatten", [&]() {
    const auto n = len(rng);
    auto a = rand_tensor({n, 2}, rng);
    auto b = rand_tensor({n, 2}, rng);
    const auto weights = rand_weights(static_cast<std::size_t>(2 * n), rng);
    return grad_check({{"a", a}, {"b", b}},
                      [&](Tape<double>* tape) {
                        auto sum = add(tape, flatten(tape, a), flatten(tape, b));
                        return weighted_sum(tape, scale(tape, sum, 0.75), weights);
                      },
                      op_tolerance);
  });

  run_op("mean_stack", [&]() {
    const auto n = len(rng);
    auto a = rand_tensor({n}, rng);
    auto b = rand_tensor({n}, rng);
    auto c = rand_tensor({n}, rng);
    const auto weights = rand_weights(static_cast<std::size_t>(n), rng);
    return grad_check({{"a", a}, {"b", b}, {"c", c}},
                      [&](Tape<double>* tape) {
                        return weighted_sum(tape, mean_stack(tape, {a, b, c}), weights);
                      },
                      op_tolerance);
  });

  run_op("squared_diff", [&]() {
    const auto n = len(rng);
    auto a = rand_tensor({n}, rng);
    auto b = rand_tensor({n}, rng);
    const auto weights = rand_weights(static_cast<std::size_t>(n), rng);
    return grad_check({{"a", a}, {"b", b}},
                      [&](Tape<double>* tape) {
                        return weighted_sum(tape, squared_diff(tape, a, b), weights);
                      },
                      op_tolerance);
  });

  run_op("neg_log_at", [&]() {
    const auto k = len(rng);
    auto logits = rand_tensor({k}, rng, true, 2.0);
    std::uniform_int_distribution<std::int64_t> pick(0, k - 1);
    const auto target = pick(rng);
    return grad_check({{"logits", logits}},
                      [&](Tape<double>* tape) {
                        return neg_log_at(tape, softmax(tape, logits), target);
                      },
                      op_tolerance);
  });

  // Full combined loss of a tiny network: d = 4, k = 2, 8x8 inputs, T = 2,
  // fixed-model fusion active so every trainable parameter is exercised.
  {
    OpCheckResult r;
    r.op = "combined_loss_end_to_end";
    r.tolerance = end_to_end_tolerance;

    NetworkConfig cfg;
    cfg.encoder.resolution = 8;
    cfg.encoder.conv1_channels = 4;
    cfg.encoder.conv2_channels = 4;
    cfg.encoder.feature_dim = 4;
    cfg.num_classes = 2;
    cfg.fmr_enabled = true;
    cfg.fixed_seed = seed + 1;
    auto net = make_network<double>(cfg, seed + 2);

    auto pixels = rand_tensor({3, 8, 8}, rng, false, 0.5);
    std::vector<TensorPtr<double>> frames{rand_tensor({3, 8, 8}, rng, false, 0.5),
                                          rand_tensor({3, 8, 8}, rng, false, 0.5)};
    PairTargets targets{0, 1, false};
    FmrStage stage = advance_stage(FmrSchedule{true, 2, 4}, 2);  // mid-knockdown, beta 0.5

    const auto report = grad_check(named_parameters(net),
                                   [&](Tape<double>* tape) {
                                     ForwardOptions<double> opts;
                                     opts.stage = stage;
                                     return forward_pair(tape, net, pixels, frames,
                                                         std::make_optional(targets), opts)
                                         .loss;
                                   },
                                   end_to_end_tolerance);
    r.max_rel_error = report.max_rel_error;
    r.passed = report.passed();
    suite.all_passed = suite.all_passed && r.passed;
    suite.ops.push_back(r);
  }

  suite.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return suite;
}

}  // namespace crossreid
