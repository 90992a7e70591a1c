#include "warpdetect/ops.hpp"

#include <cmath>
#include <string>

#include "warpdetect/errors.hpp"

namespace wd {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(a.shape()));
  }
}

template <class F>
Var unary(Tape& t, Var a, F f, std::function<double(double x, double y)> dydx) {
  const Tensor& x = t.value(a);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return t.record(std::move(y), {a}, [a, dydx](Tape& tp, Var out) {
    auto g = tp.grad_buffer(out);
    const Tensor& xv = tp.value(a);
    const Tensor& yv = tp.value(out);
    auto da = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * dydx(xv[i], yv[i]);
  });
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var add(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "add");
  Tensor y = t.value(a);
  const Tensor& bv = t.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, Var out) {
    auto g = tp.grad_buffer(out);
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "sub");
  Tensor y = t.value(a);
  const Tensor& bv = t.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, Var out) {
    auto g = tp.grad_buffer(out);
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) {
      auto db = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "mul");
  Tensor y = t.value(a);
  const Tensor& bv = t.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, Var out) {
    auto g = tp.grad_buffer(out);
    const Tensor& av = tp.value(a);
    const Tensor& bv2 = tp.value(b);
    if (tp.requires_grad(a)) {
      auto da = tp.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv2[i];
    }
    if (tp.requires_grad(b)) {
      auto db = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Var scale(Tape& t, Var a, double s) {
  Tensor y = t.value(a);
  for (auto& v : y.data()) v *= s;
  return t.record(std::move(y), {a}, [a, s](Tape& tp, Var out) {
    auto g = tp.grad_buffer(out);
    auto da = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += s * g[i];
  });
}

Var add_constant(Tape& t, Var a, const Tensor& c) {
  require_same(t.value(a), c, "add_constant");
  Tensor y = t.value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += c[i];
  return t.record(std::move(y), {a}, [a](Tape& tp, Var out) {
    tp.accumulate(a, tp.grad_buffer(out));
  });
}

Var sigmoid(Tape& t, Var a) {
  return unary(
      t, a, [](double x) { return sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Tape& t, Var a) {
  return unary(
      t, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Tape& t, Var a) {
  return unary(
      t, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var reshape(Tape& t, Var a, Shape shape) {
  Tensor y = t.value(a).reshaped(std::move(shape));
  return t.record(std::move(y), {a}, [a](Tape& tp, Var out) {
    tp.accumulate(a, tp.grad_buffer(out));
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.value(a).data()) s += v;
  return t.record(Tensor::scalar(s), {a}, [a](Tape& tp, Var out) {
    const double g = tp.grad_buffer(out)[0];
    auto da = tp.grad_buffer(a);
    for (auto& v : da) v += g;
  });
}

Var sum_squares(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.value(a).data()) s += v * v;
  return t.record(Tensor::scalar(s), {a}, [a](Tape& tp, Var out) {
    const double g = tp.grad_buffer(out)[0];
    const Tensor& x = tp.value(a);
    auto da = tp.grad_buffer(a);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += 2.0 * g * x[i];
  });
}

Var add_n(Tape& t, const std::vector<Var>& terms) {
  if (terms.empty()) return t.input(Tensor::scalar(0.0));
  Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(t, acc, terms[i]);
  return acc;
}

Var conv2d(Tape& t, Var input, Var kernel, Var bias, std::size_t stride, std::size_t padding) {
  const Tensor& x = t.value(input);
  const Tensor& k = t.value(kernel);
  const Tensor& b = t.value(bias);
  require_rank(x, 3, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  if (k.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(k.dim(1)) +
                         " input channels, input has " + std::to_string(x.dim(0)));
  }
  if (b.size() != k.dim(0)) throw DimensionError("conv2d: bias size does not match C_out");
  const auto g =
      kernels::conv_geometry(x.dim(0), x.dim(1), x.dim(2), k.dim(0), k.dim(2), k.dim(3), stride,
                             padding);
  Tensor y({g.c_out, g.out_h, g.out_w});
  kernels::omp::conv2d_forward(g, x.data(), k.data(), b.data(), y.data());
  return t.record(std::move(y), {input, kernel, bias},
                  [input, kernel, bias, g](Tape& tp, Var out) {
                    auto dy = tp.grad_buffer(out);
                    if (tp.requires_grad(input)) {
                      kernels::omp::conv2d_backward_input(g, tp.value(kernel).data(), dy,
                                                          tp.grad_buffer(input));
                    }
                    const bool dk = tp.requires_grad(kernel);
                    const bool db = tp.requires_grad(bias);
                    if (dk || db) {
                      kernels::omp::conv2d_backward_params(
                          g, tp.value(input).data(), dy,
                          dk ? tp.grad_buffer(kernel) : std::span<double>{},
                          db ? tp.grad_buffer(bias) : std::span<double>{});
                    }
                  });
}

Var avg_pool2(Tape& t, Var input) {
  const Tensor& x = t.value(input);
  require_rank(x, 3, "avg_pool2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2 || h == 0 || w == 0) {
    throw DimensionError("avg_pool2 needs even spatial size, got " + shape_string(x.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor y({c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const double* p = x.data().data() + (ch * h + 2 * i) * w + 2 * j;
        y[(ch * oh + i) * ow + j] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
    }
  }
  return t.record(std::move(y), {input}, [input, c, h, w, oh, ow](Tape& tp, Var out) {
    auto g = tp.grad_buffer(out);
    auto dx = tp.grad_buffer(input);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          const double v = 0.25 * g[(ch * oh + i) * ow + j];
          double* p = dx.data() + (ch * h + 2 * i) * w + 2 * j;
          p[0] += v;
          p[1] += v;
          p[w] += v;
          p[w + 1] += v;
        }
      }
    }
  });
}

namespace {

// Per-channel pooled value and, for max, the first argmax offset.
void pool_channels(const Tensor& x, PoolMode mode, Tensor& y, std::vector<std::size_t>& argmax) {
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  y = Tensor({c});
  argmax.assign(c, 0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* p = x.data().data() + ch * n;
    if (mode == PoolMode::average) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += p[i];
      y[ch] = s / static_cast<double>(n);
    } else {
      std::size_t best = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (p[i] > p[best]) best = i;
      }
      y[ch] = p[best];
      argmax[ch] = best;
    }
  }
}

}  // namespace

Var global_pool(Tape& t, Var input, PoolMode mode) {
  const Tensor& x = t.value(input);
  require_rank(x, 3, "global_pool");
  if (x.dim(1) == 0 || x.dim(2) == 0) throw DimensionError("global_pool: empty spatial extent");
  Tensor y;
  std::vector<std::size_t> argmax;
  pool_channels(x, mode, y, argmax);
  const std::size_t n = x.dim(1) * x.dim(2);
  return t.record(std::move(y), {input}, [input, mode, n, argmax](Tape& tp, Var out) {
    auto g = tp.grad_buffer(out);
    auto dx = tp.grad_buffer(input);
    for (std::size_t ch = 0; ch < g.size(); ++ch) {
      if (mode == PoolMode::average) {
        const double v = g[ch] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) dx[ch * n + i] += v;
      } else {
        dx[ch * n + argmax[ch]] += g[ch];
      }
    }
  });
}

Tensor global_pool(const Tensor& input, PoolMode mode) {
  Tape t(false);
  return t.value(global_pool(t, t.input(input), mode));
}

Var channel_pool(Tape& t, Var input, PoolMode mode) {
  const Tensor& x = t.value(input);
  require_rank(x, 3, "channel_pool");
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  if (c == 0) throw DimensionError("channel_pool: no channels");
  Tensor y({1, x.dim(1), x.dim(2)});
  std::vector<std::size_t> argmax(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (mode == PoolMode::average) {
      double s = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) s += x[ch * n + i];
      y[i] = s / static_cast<double>(c);
    } else {
      std::size_t best = 0;
      for (std::size_t ch = 1; ch < c; ++ch) {
        if (x[ch * n + i] > x[best * n + i]) best = ch;
      }
      y[i] = x[best * n + i];
      argmax[i] = best;
    }
  }
  return t.record(std::move(y), {input}, [input, mode, c, n, argmax](Tape& tp, Var out) {
    auto g = tp.grad_buffer(out);
    auto dx = tp.grad_buffer(input);
    for (std::size_t i = 0; i < n; ++i) {
      if (mode == PoolMode::average) {
        const double v = g[i] / static_cast<double>(c);
        for (std::size_t ch = 0; ch < c; ++ch) dx[ch * n + i] += v;
      } else {
        dx[argmax[i] * n + i] += g[i];
      }
    }
  });
}

Var concat_channels(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_rank(av, 3, "concat_channels");
  require_rank(bv, 3, "concat_channels");
  if (av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2)) {
    throw DimensionError("concat_channels: spatial sizes differ");
  }
  Tensor y({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  std::copy(av.data().begin(), av.data().end(), y.data().begin());
  std::copy(bv.data().begin(), bv.data().end(), y.data().begin() + av.size());
  const std::size_t na = av.size();
  return t.record(std::move(y), {a, b}, [a, b, na](Tape& tp, Var out) {
    auto g = tp.grad_buffer(out);
    tp.accumulate(a, g.first(na));
    tp.accumulate(b, g.subspan(na));
  });
}

Var linear(Tape& t, Var input, Var weight, Var bias) {
  const Tensor& x = t.value(input);
  const Tensor& w = t.value(weight);
  const Tensor& b = t.value(bias);
  require_rank(w, 2, "linear weight");
  if (w.dim(1) != x.size()) {
    throw DimensionError("linear: weight expects " + std::to_string(w.dim(1)) + " inputs, got " +
                         std::to_string(x.size()));
  }
  if (b.size() != w.dim(0)) throw DimensionError("linear: bias size mismatch");
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  Tensor y({rows});
  kernels::omp::matmul(rows, cols, 1, w.data(), x.data(), y.data());
  for (std::size_t r = 0; r < rows; ++r) y[r] += b[r];
  return t.record(std::move(y), {input, weight, bias},
                  [input, weight, bias, rows, cols](Tape& tp, Var out) {
                    auto g = tp.grad_buffer(out);
                    if (tp.requires_grad(input)) {
                      kernels::omp::matmul_backward(rows, cols, 1, tp.value(weight).data(), g,
                                                    tp.grad_buffer(input));
                    }
                    if (tp.requires_grad(weight)) {
                      const Tensor& xv = tp.value(input);
                      auto dw = tp.grad_buffer(weight);
                      for (std::size_t r = 0; r < rows; ++r) {
                        const double gr = g[r];
                        if (gr == 0.0) continue;
                        double* row = dw.data() + r * cols;
                        for (std::size_t k = 0; k < cols; ++k) row[k] += gr * xv[k];
                      }
                    }
                    tp.accumulate(bias, g);
                  });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  Tape t(false);
  return t.value(linear(t, t.input(input), t.input(weight), t.input(bias)));
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  Tape t(false);
  return t.value(conv2d(t, t.input(input), t.input(kernel), t.input(bias), stride, padding));
}

Var gate_channels(Tape& t, Var input, Var gate) {
  const Tensor& x = t.value(input);
  const Tensor& g = t.value(gate);
  require_rank(x, 3, "gate_channels");
  if (g.size() != x.dim(0)) throw DimensionError("gate_channels: gate size != channels");
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  Tensor y = x;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < n; ++i) y[ch * n + i] *= g[ch];
  }
  return t.record(std::move(y), {input, gate}, [input, gate, c, n](Tape& tp, Var out) {
    auto dy = tp.grad_buffer(out);
    if (tp.requires_grad(input)) {
      const Tensor& gv = tp.value(gate);
      auto dx = tp.grad_buffer(input);
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < n; ++i) dx[ch * n + i] += dy[ch * n + i] * gv[ch];
      }
    }
    if (tp.requires_grad(gate)) {
      const Tensor& xv = tp.value(input);
      auto dg = tp.grad_buffer(gate);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += dy[ch * n + i] * xv[ch * n + i];
        dg[ch] += s;
      }
    }
  });
}

Var gate_spatial(Tape& t, Var input, Var gate) {
  const Tensor& x = t.value(input);
  const Tensor& g = t.value(gate);
  require_rank(x, 3, "gate_spatial");
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  if (g.size() != n) throw DimensionError("gate_spatial: gate size != H*W");
  Tensor y = x;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < n; ++i) y[ch * n + i] *= g[i];
  }
  return t.record(std::move(y), {input, gate}, [input, gate, c, n](Tape& tp, Var out) {
    auto dy = tp.grad_buffer(out);
    if (tp.requires_grad(input)) {
      const Tensor& gv = tp.value(gate);
      auto dx = tp.grad_buffer(input);
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < n; ++i) dx[ch * n + i] += dy[ch * n + i] * gv[i];
      }
    }
    if (tp.requires_grad(gate)) {
      const Tensor& xv = tp.value(input);
      auto dg = tp.grad_buffer(gate);
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < n; ++i) dg[i] += dy[ch * n + i] * xv[ch * n + i];
      }
    }
  });
}

Var matmul_const(Tape& t, std::shared_ptr<const Tensor> m, Var x) {
  const Tensor& xv = t.value(x);
  require_rank(*m, 2, "matmul_const");
  require_rank(xv, 2, "matmul_const input");
  if (m->dim(1) != xv.dim(0)) throw DimensionError("matmul_const: inner sizes differ");
  const std::size_t rows = m->dim(0), inner = m->dim(1), cols = xv.dim(1);
  Tensor y({rows, cols});
  kernels::omp::matmul(rows, inner, cols, m->data(), xv.data(), y.data());
  return t.record(std::move(y), {x}, [x, m, rows, inner, cols](Tape& tp, Var out) {
    kernels::omp::matmul_backward(rows, inner, cols, m->data(), tp.grad_buffer(out),
                                  tp.grad_buffer(x));
  });
}

Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(std::move(shape), -bound, bound, rng);
}

}  // namespace wd
