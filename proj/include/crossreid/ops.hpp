#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "crossreid/tensor.hpp"

namespace crossreid {

/// Floor applied inside every logarithm so saturated softmax outputs cannot
/// produce NaN; bounds every cross-entropy term by -ln(1e-12) ~ 27.6.
inline constexpr double kLogEpsilon = 1e-12;

namespace detail {

template <typename T>
bool rg(const TensorPtr<T>& t) {
  return t->requires_grad;
}

}  // namespace detail

/// Valid (no-padding) 2-D convolution of a [C_in,H,W] input with a
/// [C_out,C_in,kH,kW] kernel and [C_out] bias. Output is
/// [C_out, (H-kH)/stride+1, (W-kW)/stride+1].
template <typename T>
TensorPtr<T> conv2d(Tape<T>* tape, const TensorPtr<T>& input, const TensorPtr<T>& kernel,
                    const TensorPtr<T>& bias, std::int64_t stride) {
  if (input->shape.size() != 3) {
    throw ShapeError("conv2d: input must be [C,H,W], got " + shape_str(input->shape));
  }
  if (kernel->shape.size() != 4) {
    throw ShapeError("conv2d: kernel must be [C_out,C_in,kH,kW], got " + shape_str(kernel->shape));
  }
  const std::int64_t c_in = input->shape[0], h = input->shape[1], w = input->shape[2];
  const std::int64_t c_out = kernel->shape[0], kh = kernel->shape[2], kw = kernel->shape[3];
  if (kernel->shape[1] != c_in) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel->shape[1]) +
                     " input channels, input has " + std::to_string(c_in));
  }
  if (bias->shape != std::vector<std::int64_t>{c_out}) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(c_out) + "], got " +
                     shape_str(bias->shape));
  }
  if (kh > h || kw > w) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " exceeds input " + std::to_string(h) + "x" + std::to_string(w));
  }
  if (stride <= 0) throw std::invalid_argument("conv2d: stride must be positive");

  const std::int64_t h_out = (h - kh) / stride + 1;
  const std::int64_t w_out = (w - kw) / stride + 1;
  auto out = Tensor<T>::zeros({c_out, h_out, w_out},
                              detail::rg(input) || detail::rg(kernel) || detail::rg(bias));

  for (std::int64_t co = 0; co < c_out; ++co) {
    for (std::int64_t ho = 0; ho < h_out; ++ho) {
      for (std::int64_t wo = 0; wo < w_out; ++wo) {
        T acc = bias->values[static_cast<std::size_t>(co)];
        for (std::int64_t ci = 0; ci < c_in; ++ci) {
          for (std::int64_t ki = 0; ki < kh; ++ki) {
            const std::int64_t hi = ho * stride + ki;
            const std::size_t in_row = static_cast<std::size_t>((ci * h + hi) * w + wo * stride);
            const std::size_t k_row = static_cast<std::size_t>(((co * c_in + ci) * kh + ki) * kw);
            for (std::int64_t kj = 0; kj < kw; ++kj) {
              acc += input->values[in_row + static_cast<std::size_t>(kj)] *
                     kernel->values[k_row + static_cast<std::size_t>(kj)];
            }
          }
        }
        out->values[static_cast<std::size_t>((co * h_out + ho) * w_out + wo)] = acc;
      }
    }
  }

  if (tape && out->requires_grad) {
    tape->record("conv2d", [input, kernel, bias, out, stride, c_in, h, w, c_out, kh, kw, h_out,
                            w_out]() {
      for (std::int64_t co = 0; co < c_out; ++co) {
        for (std::int64_t ho = 0; ho < h_out; ++ho) {
          for (std::int64_t wo = 0; wo < w_out; ++wo) {
            const T go = out->grad[static_cast<std::size_t>((co * h_out + ho) * w_out + wo)];
            if (bias->requires_grad) bias->grad[static_cast<std::size_t>(co)] += go;
            if (go == T(0)) continue;
            for (std::int64_t ci = 0; ci < c_in; ++ci) {
              for (std::int64_t ki = 0; ki < kh; ++ki) {
                const std::int64_t hi = ho * stride + ki;
                const std::size_t in_row =
                    static_cast<std::size_t>((ci * h + hi) * w + wo * stride);
                const std::size_t k_row =
                    static_cast<std::size_t>(((co * c_in + ci) * kh + ki) * kw);
                for (std::int64_t kj = 0; kj < kw; ++kj) {
                  if (input->requires_grad) {
                    input->grad[in_row + static_cast<std::size_t>(kj)] +=
                        kernel->values[k_row + static_cast<std::size_t>(kj)] * go;
                  }
                  if (kernel->requires_grad) {
                    kernel->grad[k_row + static_cast<std::size_t>(kj)] +=
                        input->values[in_row + static_cast<std::size_t>(kj)] * go;
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

/// Valid average pooling over a [C,H,W] input with a square window.
template <typename T>
TensorPtr<T> avgpool2d(Tape<T>* tape, const TensorPtr<T>& input, std::int64_t window,
                       std::int64_t stride) {
  if (input->shape.size() != 3) {
    throw ShapeError("avgpool2d: input must be [C,H,W], got " + shape_str(input->shape));
  }
  if (window <= 0 || stride <= 0) {
    throw std::invalid_argument("avgpool2d: window and stride must be positive");
  }
  const std::int64_t c = input->shape[0], h = input->shape[1], w = input->shape[2];
  if (window > h || window > w) {
    throw ShapeError("avgpool2d: window " + std::to_string(window) + " exceeds input " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const std::int64_t h_out = (h - window) / stride + 1;
  const std::int64_t w_out = (w - window) / stride + 1;
  auto out = Tensor<T>::zeros({c, h_out, w_out}, detail::rg(input));
  const T inv = T(1) / static_cast<T>(window * window);

  for (std::int64_t ci = 0; ci < c; ++ci) {
    for (std::int64_t ho = 0; ho < h_out; ++ho) {
      for (std::int64_t wo = 0; wo < w_out; ++wo) {
        T acc = T(0);
        for (std::int64_t ki = 0; ki < window; ++ki) {
          const std::size_t row =
              static_cast<std::size_t>((ci * h + ho * stride + ki) * w + wo * stride);
          for (std::int64_t kj = 0; kj < window; ++kj) {
            acc += input->values[row + static_cast<std::size_t>(kj)];
          }
        }
        out->values[static_cast<std::size_t>((ci * h_out + ho) * w_out + wo)] = acc * inv;
      }
    }
  }

  if (tape && out->requires_grad) {
    tape->record("avgpool2d", [input, out, window, stride, c, h, w, h_out, w_out, inv]() {
      for (std::int64_t ci = 0; ci < c; ++ci) {
        for (std::int64_t ho = 0; ho < h_out; ++ho) {
          for (std::int64_t wo = 0; wo < w_out; ++wo) {
            const T go =
                out->grad[static_cast<std::size_t>((ci * h_out + ho) * w_out + wo)] * inv;
            for (std::int64_t ki = 0; ki < window; ++ki) {
              const std::size_t row =
                  static_cast<std::size_t>((ci * h + ho * stride + ki) * w + wo * stride);
              for (std::int64_t kj = 0; kj < window; ++kj) {
                input->grad[row + static_cast<std::size_t>(kj)] += go;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

/// Affine map weight[m,n] . input[n] + bias[m].
template <typename T>
TensorPtr<T> linear(Tape<T>* tape, const TensorPtr<T>& input, const TensorPtr<T>& weight,
                    const TensorPtr<T>& bias) {
  if (input->shape.size() != 1 || weight->shape.size() != 2 || bias->shape.size() != 1) {
    throw ShapeError("linear: expects input [n], weight [m,n], bias [m]; got " +
                     shape_str(input->shape) + ", " + shape_str(weight->shape) + ", " +
                     shape_str(bias->shape));
  }
  const std::int64_t n = input->shape[0], m = weight->shape[0];
  if (weight->shape[1] != n || bias->shape[0] != m) {
    throw ShapeError("linear: dimension mismatch, input " + shape_str(input->shape) +
                     " weight " + shape_str(weight->shape) + " bias " + shape_str(bias->shape));
  }
  auto out =
      Tensor<T>::zeros({m}, detail::rg(input) || detail::rg(weight) || detail::rg(bias));
  for (std::int64_t i = 0; i < m; ++i) {
    T acc = bias->values[static_cast<std::size_t>(i)];
    const std::size_t row = static_cast<std::size_t>(i * n);
    for (std::int64_t j = 0; j < n; ++j) {
      acc += weight->values[row + static_cast<std::size_t>(j)] *
             input->values[static_cast<std::size_t>(j)];
    }
    out->values[static_cast<std::size_t>(i)] = acc;
  }

  if (tape && out->requires_grad) {
    tape->record("linear", [input, weight, bias, out, m, n]() {
      for (std::int64_t i = 0; i < m; ++i) {
        const T go = out->grad[static_cast<std::size_t>(i)];
        if (bias->requires_grad) bias->grad[static_cast<std::size_t>(i)] += go;
        if (go == T(0)) continue;
        const std::size_t row = static_cast<std::size_t>(i * n);
        for (std::int64_t j = 0; j < n; ++j) {
          if (input->requires_grad) {
            input->grad[static_cast<std::size_t>(j)] +=
                weight->values[row + static_cast<std::size_t>(j)] * go;
          }
          if (weight->requires_grad) {
            weight->grad[row + static_cast<std::size_t>(j)] +=
                input->values[static_cast<std::size_t>(j)] * go;
          }
        }
      }
    });
  }
  return out;
}

/// weight[m,n] . input[n], no bias.
template <typename T>
TensorPtr<T> matvec(Tape<T>* tape, const TensorPtr<T>& weight, const TensorPtr<T>& input) {
  if (weight->shape.size() != 2 || input->shape.size() != 1 ||
      weight->shape[1] != input->shape[0]) {
    throw ShapeError("matvec: weight " + shape_str(weight->shape) + " incompatible with input " +
                     shape_str(input->shape));
  }
  const std::int64_t m = weight->shape[0], n = weight->shape[1];
  auto out = Tensor<T>::zeros({m}, detail::rg(weight) || detail::rg(input));
  for (std::int64_t i = 0; i < m; ++i) {
    T acc = T(0);
    const std::size_t row = static_cast<std::size_t>(i * n);
    for (std::int64_t j = 0; j < n; ++j) {
      acc += weight->values[row + static_cast<std::size_t>(j)] *
             input->values[static_cast<std::size_t>(j)];
    }
    out->values[static_cast<std::size_t>(i)] = acc;
  }

  if (tape && out->requires_grad) {
    tape->record("matvec", [weight, input, out, m, n]() {
      for (std::int64_t i = 0; i < m; ++i) {
        const T go = out->grad[static_cast<std::size_t>(i)];
        if (go == T(0)) continue;
        const std::size_t row = static_cast<std::size_t>(i * n);
        for (std::int64_t j = 0; j < n; ++j) {
          if (input->requires_grad) {
            input->grad[static_cast<std::size_t>(j)] +=
                weight->values[row + static_cast<std::size_t>(j)] * go;
          }
          if (weight->requires_grad) {
            weight->grad[row + static_cast<std::size_t>(j)] +=
                input->values[static_cast<std::size_t>(j)] * go;
          }
        }
      }
    });
  }
  return out;
}

/// Gate weights of one LSTM cell. Rows of the [4H, *] matrices are stacked in
/// gate order: input, forget, candidate, output.
template <typename T>
struct LstmParams {
  TensorPtr<T> w_input;   // [4H, n]
  TensorPtr<T> w_hidden;  // [4H, H]
  TensorPtr<T> bias;      // [4H]
};

/// One LSTM cell update:
///   i,f,o = sigmoid gates, g = tanh candidate,
///   c = f*c_prev + i*g, h = o*tanh(c).
template <typename T>
std::pair<TensorPtr<T>, TensorPtr<T>> lstm_step(Tape<T>* tape, const TensorPtr<T>& x,
                                                const TensorPtr<T>& h_prev,
                                                const TensorPtr<T>& c_prev,
                                                const LstmParams<T>& params) {
  if (x->shape.size() != 1 || h_prev->shape.size() != 1 || c_prev->shape.size() != 1) {
    throw ShapeError("lstm_step: x, h_prev, c_prev must be vectors");
  }
  const std::int64_t n = x->shape[0];
  const std::int64_t hidden = h_prev->shape[0];
  if (c_prev->shape[0] != hidden) {
    throw ShapeError("lstm_step: h_prev " + shape_str(h_prev->shape) + " and c_prev " +
                     shape_str(c_prev->shape) + " disagree");
  }
  const std::vector<std::int64_t> wi_shape{4 * hidden, n};
  const std::vector<std::int64_t> wh_shape{4 * hidden, hidden};
  const std::vector<std::int64_t> b_shape{4 * hidden};
  if (params.w_input->shape != wi_shape || params.w_hidden->shape != wh_shape ||
      params.bias->shape != b_shape) {
    throw ShapeError("lstm_step: parameter shapes must be " + shape_str(wi_shape) + ", " +
                     shape_str(wh_shape) + ", " + shape_str(b_shape) + "; got " +
                     shape_str(params.w_input->shape) + ", " + shape_str(params.w_hidden->shape) +
                     ", " + shape_str(params.bias->shape));
  }

  // Pre-activations a = w_input.x + w_hidden.h_prev + bias, gate-major layout.
  std::vector<T> pre(static_cast<std::size_t>(4 * hidden));
  for (std::int64_t r = 0; r < 4 * hidden; ++r) {
    T acc = params.bias->values[static_cast<std::size_t>(r)];
    const std::size_t wi_row = static_cast<std::size_t>(r * n);
    for (std::int64_t j = 0; j < n; ++j) {
      acc += params.w_input->values[wi_row + static_cast<std::size_t>(j)] *
             x->values[static_cast<std::size_t>(j)];
    }
    const std::size_t wh_row = static_cast<std::size_t>(r * hidden);
    for (std::int64_t j = 0; j < hidden; ++j) {
      acc += params.w_hidden->values[wh_row + static_cast<std::size_t>(j)] *
             h_prev->values[static_cast<std::size_t>(j)];
    }
    pre[static_cast<std::size_t>(r)] = acc;
  }

  auto sigmoid = [](T v) { return T(1) / (T(1) + std::exp(-v)); };
  std::vector<T> gate_i(static_cast<std::size_t>(hidden)), gate_f(gate_i), gate_g(gate_i),
      gate_o(gate_i), tanh_c(gate_i);

  const bool req = detail::rg(x) || detail::rg(h_prev) || detail::rg(c_prev) ||
                   detail::rg(params.w_input) || detail::rg(params.w_hidden) ||
                   detail::rg(params.bias);
  auto h = Tensor<T>::zeros({hidden}, req);
  auto c = Tensor<T>::zeros({hidden}, req);
  for (std::int64_t j = 0; j < hidden; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    gate_i[sj] = sigmoid(pre[sj]);
    gate_f[sj] = sigmoid(pre[static_cast<std::size_t>(hidden + j)]);
    gate_g[sj] = std::tanh(pre[static_cast<std::size_t>(2 * hidden + j)]);
    gate_o[sj] = sigmoid(pre[static_cast<std::size_t>(3 * hidden + j)]);
    c->values[sj] = gate_f[sj] * c_prev->values[sj] + gate_i[sj] * gate_g[sj];
    tanh_c[sj] = std::tanh(c->values[sj]);
    h->values[sj] = gate_o[sj] * tanh_c[sj];
  }

  if (tape && req) {
    tape->record("lstm_step", [x, h_prev, c_prev, params, h, c, n, hidden,
                               gate_i = std::move(gate_i), gate_f = std::move(gate_f),
                               gate_g = std::move(gate_g), gate_o = std::move(gate_o),
                               tanh_c = std::move(tanh_c)]() {
      std::vector<T> d_pre(static_cast<std::size_t>(4 * hidden), T(0));
      for (std::int64_t j = 0; j < hidden; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        const T dh = h->grad[sj];
        const T dc_total = c->grad[sj] + dh * gate_o[sj] * (T(1) - tanh_c[sj] * tanh_c[sj]);
        d_pre[sj] = dc_total * gate_g[sj] * gate_i[sj] * (T(1) - gate_i[sj]);
        d_pre[static_cast<std::size_t>(hidden + j)] =
            dc_total * c_prev->values[sj] * gate_f[sj] * (T(1) - gate_f[sj]);
        d_pre[static_cast<std::size_t>(2 * hidden + j)] =
            dc_total * gate_i[sj] * (T(1) - gate_g[sj] * gate_g[sj]);
        d_pre[static_cast<std::size_t>(3 * hidden + j)] =
            dh * tanh_c[sj] * gate_o[sj] * (T(1) - gate_o[sj]);
        if (c_prev->requires_grad) c_prev->grad[sj] += dc_total * gate_f[sj];
      }
      for (std::int64_t r = 0; r < 4 * hidden; ++r) {
        const T dp = d_pre[static_cast<std::size_t>(r)];
        if (params.bias->requires_grad) params.bias->grad[static_cast<std::size_t>(r)] += dp;
        if (dp == T(0)) continue;
        const std::size_t wi_row = static_cast<std::size_t>(r * n);
        for (std::int64_t j = 0; j < n; ++j) {
          if (x->requires_grad) {
            x->grad[static_cast<std::size_t>(j)] +=
                params.w_input->values[wi_row + static_cast<std::size_t>(j)] * dp;
          }
          if (params.w_input->requires_grad) {
            params.w_input->grad[wi_row + static_cast<std::size_t>(j)] +=
                x->values[static_cast<std::size_t>(j)] * dp;
          }
        }
        const std::size_t wh_row = static_cast<std::size_t>(r * hidden);
        for (std::int64_t j = 0; j < hidden; ++j) {
          if (h_prev->requires_grad) {
            h_prev->grad[static_cast<std::size_t>(j)] +=
                params.w_hidden->values[wh_row + static_cast<std::size_t>(j)] * dp;
          }
          if (params.w_hidden->requires_grad) {
            params.w_hidden->grad[wh_row + static_cast<std::size_t>(j)] +=
                h_prev->values[static_cast<std::size_t>(j)] * dp;
          }
        }
      }
    });
  }
  return {h, c};
}

/// Numerically stable softmax over a vector of logits.
template <typename T>
TensorPtr<T> softmax(Tape<T>* tape, const TensorPtr<T>& logits) {
  if (logits->shape.size() != 1) {
    throw ShapeError("softmax: expects a vector, got " + shape_str(logits->shape));
  }
  const std::int64_t k = logits->shape[0];
  for (std::int64_t i = 0; i < k; ++i) {
    if (!std::isfinite(static_cast<double>(logits->values[static_cast<std::size_t>(i)]))) {
      throw std::invalid_argument("softmax: non-finite logit at index " + std::to_string(i));
    }
  }
  T max_v = logits->values[0];
  for (std::int64_t i = 1; i < k; ++i) {
    max_v = std::max(max_v, logits->values[static_cast<std::size_t>(i)]);
  }
  auto out = Tensor<T>::zeros({k}, detail::rg(logits));
  T sum = T(0);
  for (std::int64_t i = 0; i < k; ++i) {
    const T e = std::exp(logits->values[static_cast<std::size_t>(i)] - max_v);
    out->values[static_cast<std::size_t>(i)] = e;
    sum += e;
  }
  const T inv = T(1) / sum;
  for (auto& v : out->values) v *= inv;

  if (tape && out->requires_grad) {
    tape->record("softmax", [logits, out, k]() {
      T dot = T(0);
      for (std::int64_t i = 0; i < k; ++i) {
        const auto si = static_cast<std::size_t>(i);
        dot += out->grad[si] * out->values[si];
      }
      for (std::int64_t i = 0; i < k; ++i) {
        const auto si = static_cast<std::size_t>(i);
        logits->grad[si] += out->values[si] * (out->grad[si] - dot);
      }
    });
  }
  return out;
}

/// Elementwise tanh.
template <typename T>
TensorPtr<T> tanh_activation(Tape<T>* tape, const TensorPtr<T>& x) {
  auto out = Tensor<T>::zeros(x->shape, detail::rg(x));
  for (std::size_t i = 0; i < x->values.size(); ++i) out->values[i] = std::tanh(x->values[i]);
  if (tape && out->requires_grad) {
    tape->record("tanh", [x, out]() {
      for (std::size_t i = 0; i < x->values.size(); ++i) {
        x->grad[i] += (T(1) - out->values[i] * out->values[i]) * out->grad[i];
      }
    });
  }
  return out;
}

/// View of any tensor as a flat vector.
template <typename T>
TensorPtr<T> flatten(Tape<T>* tape, const TensorPtr<T>& x) {
  auto out = Tensor<T>::from({x->size()}, x->values, detail::rg(x));
  if (tape && out->requires_grad) {
    tape->record("flatten", [x, out]() {
      for (std::size_t i = 0; i < x->values.size(); ++i) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

/// Elementwise sum of two same-shape tensors.
template <typename T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape != b->shape) {
    throw ShapeError("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  }
  auto out = Tensor<T>::zeros(a->shape, detail::rg(a) || detail::rg(b));
  for (std::size_t i = 0; i < a->values.size(); ++i) {
    out->values[i] = a->values[i] + b->values[i];
  }
  if (tape && out->requires_grad) {
    tape->record("add", [a, b, out]() {
      for (std::size_t i = 0; i < out->values.size(); ++i) {
        if (a->requires_grad) a->grad[i] += out->grad[i];
        if (b->requires_grad) b->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

/// Multiplication by a compile-time-constant scalar (not a tracked tensor).
template <typename T>
TensorPtr<T> scale(Tape<T>* tape, const TensorPtr<T>& a, T factor) {
  auto out = Tensor<T>::zeros(a->shape, detail::rg(a));
  for (std::size_t i = 0; i < a->values.size(); ++i) out->values[i] = a->values[i] * factor;
  if (tape && out->requires_grad) {
    tape->record("scale", [a, out, factor]() {
      for (std::size_t i = 0; i < a->values.size(); ++i) a->grad[i] += factor * out->grad[i];
    });
  }
  return out;
}

/// Mean of a non-empty list of same-shape tensors.
template <typename T>
TensorPtr<T> mean_stack(Tape<T>* tape, const std::vector<TensorPtr<T>>& items) {
  if (items.empty()) throw std::invalid_argument("mean_stack: empty input list");
  bool req = false;
  for (const auto& t : items) {
    if (t->shape != items[0]->shape) {
      throw ShapeError("mean_stack: shape mismatch " + shape_str(t->shape) + " vs " +
                       shape_str(items[0]->shape));
    }
    req = req || t->requires_grad;
  }
  auto out = Tensor<T>::zeros(items[0]->shape, req);
  const T inv = T(1) / static_cast<T>(items.size());
  for (const auto& t : items) {
    for (std::size_t i = 0; i < t->values.size(); ++i) out->values[i] += t->values[i];
  }
  for (auto& v : out->values) v *= inv;

  if (tape && req) {
    tape->record("mean_stack", [items, out, inv]() {
      for (const auto& t : items) {
        if (!t->requires_grad) continue;
        for (std::size_t i = 0; i < t->values.size(); ++i) t->grad[i] += inv * out->grad[i];
      }
    });
  }
  return out;
}

/// Elementwise (a - b)^2; gradient is 2(a-b) toward a and the negation toward b.
template <typename T>
TensorPtr<T> squared_diff(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape != b->shape) {
    throw ShapeError("squared_diff: shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  }
  auto out = Tensor<T>::zeros(a->shape, detail::rg(a) || detail::rg(b));
  for (std::size_t i = 0; i < a->values.size(); ++i) {
    const T d = a->values[i] - b->values[i];
    out->values[i] = d * d;
  }
  if (tape && out->requires_grad) {
    tape->record("squared_diff", [a, b, out]() {
      for (std::size_t i = 0; i < a->values.size(); ++i) {
        const T d = T(2) * (a->values[i] - b->values[i]) * out->grad[i];
        if (a->requires_grad) a->grad[i] += d;
        if (b->requires_grad) b->grad[i] -= d;
      }
    });
  }
  return out;
}

/// Scalar -ln(probs[index]) with the kLogEpsilon floor inside the logarithm.
template <typename T>
TensorPtr<T> neg_log_at(Tape<T>* tape, const TensorPtr<T>& probs, std::int64_t index) {
  if (probs->shape.size() != 1) {
    throw ShapeError("neg_log_at: expects a vector, got " + shape_str(probs->shape));
  }
  if (index < 0 || index >= probs->shape[0]) {
    throw std::out_of_range("neg_log_at: index " + std::to_string(index) +
                            " out of range for " + shape_str(probs->shape));
  }
  const T eps = static_cast<T>(kLogEpsilon);
  const T p = probs->values[static_cast<std::size_t>(index)];
  const T clamped = std::max(p, eps);
  auto out = Tensor<T>::from({1}, {-std::log(clamped)}, detail::rg(probs));
  if (tape && out->requires_grad) {
    tape->record("neg_log_at", [probs, out, index, eps]() {
      const T pv = probs->values[static_cast<std::size_t>(index)];
      if (pv > eps) {
        probs->grad[static_cast<std::size_t>(index)] += -out->grad[0] / pv;
      }
    });
  }
  return out;
}

/// Scalar dot product of a tensor with fixed (untracked) weights; used to
/// reduce arbitrary op outputs to a scalar objective.
template <typename T>
TensorPtr<T> weighted_sum(Tape<T>* tape, const TensorPtr<T>& x, const std::vector<T>& weights) {
  if (weights.size() != x->values.size()) {
    throw ShapeError("weighted_sum: weight count " + std::to_string(weights.size()) +
                     " does not match tensor " + shape_str(x->shape));
  }
  T acc = T(0);
  for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * x->values[i];
  auto out = Tensor<T>::from({1}, {acc}, detail::rg(x));
  if (tape && out->requires_grad) {
    tape->record("weighted_sum", [x, out, weights]() {
      for (std::size_t i = 0; i < weights.size(); ++i) x->grad[i] += weights[i] * out->grad[0];
    });
  }
  return out;
}

}  // namespace crossreid
