#pragma once

// Brute-force reference implementations used as test oracles. None of them
// calls into the library's kernels; geometry is recomputed from scratch.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "chainnet/model/chainnet.hpp"
#include "chainnet/nn/graph.hpp"
#include "chainnet/nn/layers.hpp"
#include "chainnet/nn/tensor.hpp"

namespace oracle {

using chainnet::nn::Shape;
using chainnet::nn::Tensor;

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Output extent and leading pad for "same, ceil" padding.
inline std::pair<std::size_t, std::size_t> same_ceil(std::size_t in, std::size_t k, std::size_t s) {
  const std::size_t out = ceil_div(in, s);
  const long need = static_cast<long>((out - 1) * s + k) - static_cast<long>(in);
  const std::size_t total = need > 0 ? static_cast<std::size_t>(need) : 0;
  return {out, total / 2};
}

template <class T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

// x (n,h,w,cin), w (kh,kw,cin,cout), b (1,1,1,cout).
inline Tensor<double> direct_conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                                    std::size_t sh, std::size_t sw) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const auto [oh, ph] = same_ceil(xs.h, ws.n, sh);
  const auto [ow, pw] = same_ceil(xs.w, ws.h, sw);
  Tensor<double> y(Shape{xs.n, oh, ow, ws.c});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        for (std::size_t co = 0; co < ws.c; ++co) {
          double acc = b[co];
          for (std::size_t ki = 0; ki < ws.n; ++ki)
            for (std::size_t kj = 0; kj < ws.h; ++kj)
              for (std::size_t ci = 0; ci < xs.c; ++ci) {
                const long r = static_cast<long>(i * sh + ki) - static_cast<long>(ph);
                const long c = static_cast<long>(j * sw + kj) - static_cast<long>(pw);
                if (r < 0 || c < 0 || r >= static_cast<long>(xs.h) || c >= static_cast<long>(xs.w)) continue;
                acc += x.at(n, r, c, ci) * w.at(ki, kj, ci, co);
              }
          y.at(n, i, j, co) = acc;
        }
  return y;
}

// Max over the in-bounds part of each window.
inline Tensor<double> direct_maxpool(const Tensor<double>& x, std::size_t kh, std::size_t kw, std::size_t sh,
                                     std::size_t sw) {
  const Shape xs = x.shape();
  const auto [oh, ph] = same_ceil(xs.h, kh, sh);
  const auto [ow, pw] = same_ceil(xs.w, kw, sw);
  Tensor<double> y(Shape{xs.n, oh, ow, xs.c});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        for (std::size_t c = 0; c < xs.c; ++c) {
          double best = -INFINITY;
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t e = 0; e < kw; ++e) {
              const long r = static_cast<long>(i * sh + a) - static_cast<long>(ph);
              const long q = static_cast<long>(j * sw + e) - static_cast<long>(pw);
              if (r < 0 || q < 0 || r >= static_cast<long>(xs.h) || q >= static_cast<long>(xs.w)) continue;
              best = std::max(best, x.at(n, r, q, c));
            }
          y.at(n, i, j, c) = best;
        }
  return y;
}

inline Tensor<double> direct_avgpool(const Tensor<double>& x) {
  const Shape s = x.shape();
  Tensor<double> y(Shape{s.n, 1, 1, s.c});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      long double acc = 0;
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) acc += x.at(n, i, j, c);
      y.at(n, 0, 0, c) = static_cast<double>(acc / static_cast<long double>(s.h * s.w));
    }
  return y;
}

// x (n, in) flattened, w (in, out), b (out).
inline Tensor<double> direct_matmul(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t n = x.shape().n;
  const std::size_t in = x.size() / n;
  const std::size_t out = w.shape().c;
  Tensor<double> y(Shape{n, 1, 1, out});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += x[r * in + i] * w[i * out + o];
      y[r * out + o] = acc;
    }
  return y;
}

// Width of each flow after the stack and after every block.
inline std::vector<std::size_t> ceil_width_trace(std::size_t length, std::size_t blocks) {
  std::vector<std::size_t> w;
  std::size_t x = ceil_div(ceil_div(length, 2), 2);
  w.push_back(x);
  for (std::size_t b = 0; b < blocks; ++b) {
    x = ceil_div(x, 2);
    w.push_back(x);
  }
  return w;
}

// Layer-by-layer walk of the architecture table: every learnable layer
// contributes kh * kw * cin * cout weights plus cout biases.
inline std::size_t graph_walk_parameter_count(const chainnet::model::NetworkConfig& c) {
  struct Layer {
    std::size_t kh, kw, cin, cout;
  };
  const std::size_t k = c.kernel_count;
  std::vector<Layer> layers{{1, 5, 1, k}};
  for (std::size_t b = 0; b < c.block_count; ++b) {
    layers.push_back({1, 3, k, k});
    layers.push_back({3, 1, k, k});
    layers.push_back({1, 1, 2 * k, k});
  }
  layers.push_back({1, 1, 2 * k, c.fc_width});
  layers.push_back({1, 1, c.fc_width, c.fc_width});
  layers.push_back({1, 1, c.fc_width, c.class_count});
  std::size_t total = 0;
  for (const Layer& l : layers) total += l.kh * l.kw * l.cin * l.cout + l.cout;
  return total;
}

// Relative error ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// Central-difference check of the gradient of <upstream, f(inputs)> with
// respect to every input. `f` builds the graph from leaf variables.
struct GradCheck {
  std::vector<double> worst_per_input;
  double worst = 0.0;
};

using BuildFn = std::function<chainnet::nn::Var(chainnet::nn::Graph<double>&, const std::vector<chainnet::nn::Var>&)>;

inline double project(const Tensor<double>& y, const Tensor<double>& up) {
  long double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<long double>(y[i]) * up[i];
  return static_cast<double>(s);
}

inline GradCheck check_gradients(std::vector<Tensor<double>> inputs, const BuildFn& f, std::uint64_t seed,
                                 double h = 1e-5) {
  using chainnet::nn::Graph;
  using chainnet::nn::GradMode;
  using chainnet::nn::Var;
  std::mt19937_64 rng(seed);
  Graph<double> g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.input(t, true));
  const Var out = f(g, leaves);
  const Tensor<double> up = random_tensor<double>(g.value(out).shape(), rng);
  g.backward(out, up);

  GradCheck r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<double> analytic(g.grad(leaves[k]).data().begin(), g.grad(leaves[k]).data().end());
    std::vector<double> numeric(inputs[k].size());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k][i];
      auto eval = [&](double v) {
        inputs[k][i] = v;
        Graph<double> gg(GradMode::Disabled);
        std::vector<Var> ls;
        for (const auto& t : inputs) ls.push_back(gg.input(t));
        return project(gg.value(f(gg, ls)), up);
      };
      numeric[i] = (eval(keep + h) - eval(keep - h)) / (2 * h);
      inputs[k][i] = keep;
    }
    const double e = relative_error(analytic, numeric);
    r.worst_per_input.push_back(e);
    r.worst = std::max(r.worst, e);
  }
  return r;
}

// Two-sided Kolmogorov-Smirnov statistic of samples against a CDF.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// Rayleigh with E|h|^2 = 1, i.e. sigma = 1/sqrt(2).
inline double rayleigh_unit_power_cdf(double r) { return 1.0 - std::exp(-r * r); }

// Fraction of energy in the negative-frequency half of the DFT.
inline double negative_frequency_energy(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  double neg = 0, total = 0;
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t t = 0; t < n; ++t) acc += x[t] * std::polar(1.0, -2.0 * M_PI * double(k * t % n) / double(n));
    const double e = std::norm(acc);
    total += e;
    if (k > n / 2) neg += e;
  }
  return neg / total;
}

}  // namespace oracle
