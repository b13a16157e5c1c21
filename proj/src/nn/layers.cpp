#include "chainnet/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "chainnet/seed.hpp"
#include "chainnet/simd/kernels.hpp"

namespace chainnet::nn {
namespace {

// Output positions processed per im2col chunk; a multiple of the 6-row GEMM
// tile.
constexpr std::size_t kChunkRows = 240;

std::string axis_msg(const char* op, const char* axis, std::size_t got, std::size_t want) {
  return std::string(op) + ": " + axis + " extent " + std::to_string(got) + " does not match expected " +
         std::to_string(want);
}

struct ConvGeometry {
  Shape in;
  Shape out;
  std::size_t kh, kw, sh, sw;
  std::size_t pad_top, pad_left;
  std::size_t patch;  // kh * kw * in.c

  bool direct() const {
    return kh == 1 && kw == 1 && sh == 1 && sw == 1 && pad_top == 0 && pad_left == 0;
  }
};

ConvGeometry conv_geometry(const Shape& in, const ConvSpec& spec) {
  const AxisGeometry gh = axis_geometry(in.h, spec.kernel_h, spec.stride_h, spec.padding, "height");
  const AxisGeometry gw = axis_geometry(in.w, spec.kernel_w, spec.stride_w, spec.padding, "width");
  ConvGeometry g;
  g.in = in;
  g.out = {in.n, gh.out, gw.out, spec.out_channels};
  g.kh = spec.kernel_h;
  g.kw = spec.kernel_w;
  g.sh = spec.stride_h;
  g.sw = spec.stride_w;
  g.pad_top = gh.pad_before;
  g.pad_left = gw.pad_before;
  g.patch = spec.fan_in();
  return g;
}

// Rows [row0, row0 + rows) of the patch matrix; row r is output position
// (n, oy, ox) in NHWC order, columns ordered (ky, kx, ci).
template <class T>
void im2col(const T* x, const ConvGeometry& g, std::size_t row0, std::size_t rows, T* buf) {
  const std::size_t ic = g.in.c;
  const std::size_t plane = g.out.h * g.out.w;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t pos = row0 + r;
    const std::size_t n = pos / plane;
    const std::size_t oy = (pos % plane) / g.out.w;
    const std::size_t ox = pos % g.out.w;
    T* dst = buf + r * g.patch;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.sh + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
      for (std::size_t kx = 0; kx < g.kw; ++kx, dst += ic) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.sw + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
        if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in.h) ||
            ix >= static_cast<std::ptrdiff_t>(g.in.w)) {
          std::fill(dst, dst + ic, T(0));
        } else {
          const T* src = x + ((n * g.in.h + static_cast<std::size_t>(iy)) * g.in.w + static_cast<std::size_t>(ix)) * ic;
          std::copy(src, src + ic, dst);
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* buf, const ConvGeometry& g, std::size_t row0, std::size_t rows, T* dx) {
  const std::size_t ic = g.in.c;
  const std::size_t plane = g.out.h * g.out.w;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t pos = row0 + r;
    const std::size_t n = pos / plane;
    const std::size_t oy = (pos % plane) / g.out.w;
    const std::size_t ox = pos % g.out.w;
    const T* src = buf + r * g.patch;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.sh + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
      for (std::size_t kx = 0; kx < g.kw; ++kx, src += ic) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.sw + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
        if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in.h) ||
            ix >= static_cast<std::ptrdiff_t>(g.in.w))
          continue;
        T* dst = dx + ((n * g.in.h + static_cast<std::size_t>(iy)) * g.in.w + static_cast<std::size_t>(ix)) * ic;
        for (std::size_t c = 0; c < ic; ++c) dst[c] += src[c];
      }
    }
  }
}

template <class T>
std::vector<T> transpose(const T* m, std::size_t rows, std::size_t cols) {
  std::vector<T> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = m[i * cols + j];
  return t;
}

std::size_t row_count(const Shape& s) { return s.n * s.h * s.w; }

}  // namespace

AxisGeometry axis_geometry(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding,
                           const char* axis) {
  if (kernel == 0) throw ConfigError(std::string("kernel ") + axis + " must be positive");
  if (stride == 0) throw ConfigError(std::string("stride ") + axis + " must be positive");
  if (in == 0) throw ConfigError(std::string("input ") + axis + " extent is zero");
  AxisGeometry g;
  if (padding == Padding::SameCeil) {
    g.out = (in + stride - 1) / stride;
    const std::size_t needed = (g.out - 1) * stride + kernel;
    const std::size_t total = needed > in ? needed - in : 0;
    g.pad_before = total / 2;
  } else {
    if (kernel > in)
      throw ConfigError(std::string("window ") + axis + " " + std::to_string(kernel) +
                        " exceeds input " + axis + " " + std::to_string(in));
    g.out = (in - kernel) / stride + 1;
    g.pad_before = 0;
  }
  return g;
}

void ConvSpec::validate() const {
  if (kernel_h == 0) throw ConfigError("conv: kernel height must be positive");
  if (kernel_w == 0) throw ConfigError("conv: kernel width must be positive");
  if (in_channels == 0) throw ConfigError("conv: in_channels must be positive");
  if (out_channels == 0) throw ConfigError("conv: out_channels must be positive");
  if (stride_h == 0) throw ConfigError("conv: vertical stride must be positive");
  if (stride_w == 0) throw ConfigError("conv: horizontal stride must be positive");
}

Shape conv_output_shape(const Shape& input, const ConvSpec& spec) {
  spec.validate();
  if (input.c != spec.in_channels) throw ConfigError(axis_msg("conv2d", "channel", input.c, spec.in_channels));
  return conv_geometry(input, spec).out;
}

Shape pool_output_shape(const Shape& input, const PoolSpec& spec) {
  if (spec.pool_h == 0 || spec.pool_w == 0) throw ConfigError("maxpool: pool extents must be >= 1");
  const AxisGeometry gh = axis_geometry(input.h, spec.pool_h, spec.stride_h, spec.padding, "height");
  const AxisGeometry gw = axis_geometry(input.w, spec.pool_w, spec.stride_w, spec.padding, "width");
  return {input.n, gh.out, gw.out, input.c};
}

bool dropout_keeps(std::uint64_t seed, std::size_t index, double ratio) {
  return unit_interval(splitmix64(splitmix64(seed) + index)) >= ratio;
}

template <class T>
Var conv2d(Graph<T>& g, Var x, const ConvSpec& spec, Var weights, Var bias) {
  const Tensor<T>& xt = g.value(x);
  const Tensor<T>& wt = g.value(weights);
  const Tensor<T>& bt = g.value(bias);
  spec.validate();
  if (xt.shape().c != spec.in_channels)
    throw ConfigError(axis_msg("conv2d input", "channel", xt.shape().c, spec.in_channels));
  const Shape ws = spec.weight_shape();
  if (wt.shape().n != ws.n) throw ConfigError(axis_msg("conv2d weights", "kernel height", wt.shape().n, ws.n));
  if (wt.shape().h != ws.h) throw ConfigError(axis_msg("conv2d weights", "kernel width", wt.shape().h, ws.h));
  if (wt.shape().w != ws.w) throw ConfigError(axis_msg("conv2d weights", "input channel", wt.shape().w, ws.w));
  if (wt.shape().c != ws.c) throw ConfigError(axis_msg("conv2d weights", "output channel", wt.shape().c, ws.c));
  if (bt.size() != spec.out_channels) throw ConfigError(axis_msg("conv2d bias", "length", bt.size(), spec.out_channels));

  const ConvGeometry geo = conv_geometry(xt.shape(), spec);
  const std::size_t oc = spec.out_channels;
  const std::size_t total_rows = row_count(geo.out);
  Tensor<T> out(geo.out, uninitialized);
  for (std::size_t r = 0; r < total_rows; ++r) std::copy(bt.ptr(), bt.ptr() + oc, out.ptr() + r * oc);

  if (geo.direct()) {
    simd::gemm<T>(total_rows, oc, geo.patch, xt.ptr(), geo.patch, 1, wt.ptr(), oc, out.ptr(), oc);
  } else {
    Buffer<T> buf(kChunkRows * geo.patch);
    for (std::size_t r0 = 0; r0 < total_rows; r0 += kChunkRows) {
      const std::size_t rows = std::min(kChunkRows, total_rows - r0);
      im2col(xt.ptr(), geo, r0, rows, buf.data());
      simd::gemm<T>(rows, oc, geo.patch, buf.data(), geo.patch, 1, wt.ptr(), oc, out.ptr() + r0 * oc, oc);
    }
  }

  return g.emit(std::move(out), {x, weights, bias}, [x, weights, bias, geo](Graph<T>& gr, Var self) {
    const Tensor<T>& dy = gr.grad(self);
    const Tensor<T>& xv = gr.value(x);
    const Tensor<T>& wv = gr.value(weights);
    const std::size_t oc = geo.out.c;
    const std::size_t total_rows = row_count(geo.out);
    const bool need_w = gr.requires_grad(weights);
    const bool need_b = gr.requires_grad(bias);
    const bool need_x = gr.requires_grad(x);

    if (need_b) {
      Tensor<T>& db = gr.grad(bias);
      for (std::size_t r = 0; r < total_rows; ++r) {
        const T* row = dy.ptr() + r * oc;
        for (std::size_t c = 0; c < oc; ++c) db[c] += row[c];
      }
    }
    if (!need_w && !need_x) return;

    std::vector<T> w_t;
    if (need_x) w_t = transpose(wv.ptr(), geo.patch, oc);
    T* dw = need_w ? gr.grad(weights).ptr() : nullptr;
    T* dx = need_x ? gr.grad(x).ptr() : nullptr;

    if (geo.direct()) {
      if (need_w) simd::gemm<T>(geo.patch, oc, total_rows, xv.ptr(), 1, geo.patch, dy.ptr(), oc, dw, oc);
      if (need_x) simd::gemm<T>(total_rows, geo.patch, oc, dy.ptr(), oc, 1, w_t.data(), geo.patch, dx, geo.patch);
      return;
    }

    Buffer<T> buf(kChunkRows * geo.patch);
    Buffer<T> dbuf(need_x ? kChunkRows * geo.patch : 0);
    for (std::size_t r0 = 0; r0 < total_rows; r0 += kChunkRows) {
      const std::size_t rows = std::min(kChunkRows, total_rows - r0);
      const T* dy_chunk = dy.ptr() + r0 * oc;
      if (need_w) {
        im2col(xv.ptr(), geo, r0, rows, buf.data());
        simd::gemm<T>(geo.patch, oc, rows, buf.data(), 1, geo.patch, dy_chunk, oc, dw, oc);
      }
      if (need_x) {
        std::fill(dbuf.begin(), dbuf.begin() + rows * geo.patch, T(0));
        simd::gemm<T>(rows, geo.patch, oc, dy_chunk, oc, 1, w_t.data(), geo.patch, dbuf.data(), geo.patch);
        col2im_add(dbuf.data(), geo, r0, rows, dx);
      }
    }
  });
}

template <class T>
Var relu(Graph<T>& g, Var x) {
  const Tensor<T>& xt = g.value(x);
  Tensor<T> out(xt.shape(), uninitialized);
  simd::relu<T>(xt.size(), xt.ptr(), out.ptr());
  return g.emit(std::move(out), {x}, [x](Graph<T>& gr, Var self) {
    const Tensor<T>& xv = gr.value(x);
    simd::relu_backward<T>(xv.size(), xv.ptr(), gr.grad(self).ptr(), gr.grad(x).ptr());
  });
}

template <class T>
Var maxpool(Graph<T>& g, Var x, const PoolSpec& spec) {
  const Tensor<T>& xt = g.value(x);
  const Shape in = xt.shape();
  const Shape os = pool_output_shape(in, spec);
  const AxisGeometry gh = axis_geometry(in.h, spec.pool_h, spec.stride_h, spec.padding, "height");
  const AxisGeometry gw = axis_geometry(in.w, spec.pool_w, spec.stride_w, spec.padding, "width");

  Tensor<T> out(os, uninitialized);
  auto argmax = std::make_shared<std::vector<std::size_t>>(os.count());
  const std::size_t ch = in.c;
  for (std::size_t n = 0; n < os.n; ++n)
    for (std::size_t oy = 0; oy < os.h; ++oy)
      for (std::size_t ox = 0; ox < os.w; ++ox) {
        const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * spec.stride_h) - static_cast<std::ptrdiff_t>(gh.pad_before);
        const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(ox * spec.stride_w) - static_cast<std::ptrdiff_t>(gw.pad_before);
        const std::size_t ylo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(y0, 0));
        const std::size_t xlo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(x0, 0));
        const std::size_t yhi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(y0 + static_cast<std::ptrdiff_t>(spec.pool_h), static_cast<std::ptrdiff_t>(in.h)));
        const std::size_t xhi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(x0 + static_cast<std::ptrdiff_t>(spec.pool_w), static_cast<std::ptrdiff_t>(in.w)));
        if (ylo >= yhi || xlo >= xhi)
          throw ConfigError("maxpool: window at (" + std::to_string(oy) + ", " + std::to_string(ox) +
                            ") lies entirely in padding");
        const std::size_t o = out.index(n, oy, ox, 0);
        T* best = out.ptr() + o;
        std::size_t* arg = argmax->data() + o;
        // Scan window positions in row-major order; strict > keeps the first
        // maximum on ties.
        bool first = true;
        for (std::size_t iy = ylo; iy < yhi; ++iy)
          for (std::size_t ix = xlo; ix < xhi; ++ix) {
            const std::size_t base = xt.index(n, iy, ix, 0);
            const T* src = xt.ptr() + base;
            if (first) {
              for (std::size_t c = 0; c < ch; ++c) {
                best[c] = src[c];
                arg[c] = base + c;
              }
              first = false;
              continue;
            }
            for (std::size_t c = 0; c < ch; ++c)
              if (src[c] > best[c]) {
                best[c] = src[c];
                arg[c] = base + c;
              }
          }
      }

  return g.emit(std::move(out), {x}, [x, argmax](Graph<T>& gr, Var self) {
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad(x);
    for (std::size_t o = 0; o < dy.size(); ++o) dx[(*argmax)[o]] += dy[o];
  });
}

template <class T>
Var global_avgpool(Graph<T>& g, Var x) {
  const Tensor<T>& xt = g.value(x);
  const Shape in = xt.shape();
  if (in.h == 0 || in.w == 0) throw ConfigError("global_avgpool: spatial extents must be >= 1");
  const std::size_t area = in.h * in.w;
  Tensor<T> out(Shape{in.n, 1, 1, in.c});
  for (std::size_t n = 0; n < in.n; ++n) {
    T* o = out.ptr() + n * in.c;
    const T* src = xt.ptr() + n * area * in.c;
    for (std::size_t s = 0; s < area; ++s)
      for (std::size_t c = 0; c < in.c; ++c) o[c] += src[s * in.c + c];
    for (std::size_t c = 0; c < in.c; ++c) o[c] /= static_cast<T>(area);
  }
  return g.emit(std::move(out), {x}, [x, in, area](Graph<T>& gr, Var self) {
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad(x);
    const T inv = T(1) / static_cast<T>(area);
    for (std::size_t n = 0; n < in.n; ++n) {
      const T* d = dy.ptr() + n * in.c;
      T* dst = dx.ptr() + n * area * in.c;
      for (std::size_t s = 0; s < area; ++s)
        for (std::size_t c = 0; c < in.c; ++c) dst[s * in.c + c] += d[c] * inv;
    }
  });
}

template <class T>
Var depthcat(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& at = g.value(a);
  const Tensor<T>& bt = g.value(b);
  const Shape sa = at.shape();
  const Shape sb = bt.shape();
  if (sa.n != sb.n) throw ConfigError(axis_msg("depthcat", "batch", sb.n, sa.n));
  if (sa.h != sb.h) throw ConfigError(axis_msg("depthcat", "height", sb.h, sa.h));
  if (sa.w != sb.w) throw ConfigError(axis_msg("depthcat", "width", sb.w, sa.w));
  const std::size_t rows = row_count(sa);
  const std::size_t c = sa.c + sb.c;
  Tensor<T> out(Shape{sa.n, sa.h, sa.w, c}, uninitialized);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(at.ptr() + r * sa.c, at.ptr() + (r + 1) * sa.c, out.ptr() + r * c);
    std::copy(bt.ptr() + r * sb.c, bt.ptr() + (r + 1) * sb.c, out.ptr() + r * c + sa.c);
  }
  return g.emit(std::move(out), {a, b}, [a, b, rows, ca = sa.c, cb = sb.c](Graph<T>& gr, Var self) {
    const Tensor<T>& dy = gr.grad(self);
    const std::size_t c = ca + cb;
    if (gr.requires_grad(a)) {
      Tensor<T>& da = gr.grad(a);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < ca; ++k) da[r * ca + k] += dy[r * c + k];
    }
    if (gr.requires_grad(b)) {
      Tensor<T>& db = gr.grad(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < cb; ++k) db[r * cb + k] += dy[r * c + ca + k];
    }
  });
}

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& at = g.value(a);
  const Tensor<T>& bt = g.value(b);
  const Shape sa = at.shape();
  const Shape sb = bt.shape();
  if (sa.n != sb.n) throw ConfigError(axis_msg("add", "batch", sb.n, sa.n));
  if (sa.h != sb.h) throw ConfigError(axis_msg("add", "height", sb.h, sa.h));
  if (sa.w != sb.w) throw ConfigError(axis_msg("add", "width", sb.w, sa.w));
  if (sa.c != sb.c) throw ConfigError(axis_msg("add", "channel", sb.c, sa.c));
  Tensor<T> out = at;
  simd::axpy<T>(out.size(), T(1), bt.ptr(), out.ptr());
  return g.emit(std::move(out), {a, b}, [a, b](Graph<T>& gr, Var self) {
    const Tensor<T>& dy = gr.grad(self);
    if (gr.requires_grad(a)) simd::axpy<T>(dy.size(), T(1), dy.ptr(), gr.grad(a).ptr());
    if (gr.requires_grad(b)) simd::axpy<T>(dy.size(), T(1), dy.ptr(), gr.grad(b).ptr());
  });
}

template <class T>
Var fully_connected(Graph<T>& g, Var x, Var weights, Var bias) {
  const Tensor<T>& xt = g.value(x);
  const Tensor<T>& wt = g.value(weights);
  const Tensor<T>& bt = g.value(bias);
  const std::size_t batch = xt.shape().n;
  const std::size_t in = xt.shape().h * xt.shape().w * xt.shape().c;
  if (wt.shape().n != 1 || wt.shape().h != 1)
    throw ConfigError("fully_connected: weights must be shaped 1 x 1 x in x out, got " + wt.shape().str());
  if (wt.shape().w != in) throw ConfigError(axis_msg("fully_connected", "input", in, wt.shape().w));
  const std::size_t outn = wt.shape().c;
  if (bt.size() != outn) throw ConfigError(axis_msg("fully_connected bias", "length", bt.size(), outn));

  Tensor<T> out(Shape{batch, 1, 1, outn}, uninitialized);
  for (std::size_t n = 0; n < batch; ++n) std::copy(bt.ptr(), bt.ptr() + outn, out.ptr() + n * outn);
  simd::gemm<T>(batch, outn, in, xt.ptr(), in, 1, wt.ptr(), outn, out.ptr(), outn);

  return g.emit(std::move(out), {x, weights, bias}, [x, weights, bias, batch, in, outn](Graph<T>& gr, Var self) {
    const Tensor<T>& dy = gr.grad(self);
    if (gr.requires_grad(bias)) {
      Tensor<T>& db = gr.grad(bias);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t j = 0; j < outn; ++j) db[j] += dy[n * outn + j];
    }
    if (gr.requires_grad(weights))
      simd::gemm<T>(in, outn, batch, gr.value(x).ptr(), 1, in, dy.ptr(), outn, gr.grad(weights).ptr(), outn);
    if (gr.requires_grad(x)) {
      const std::vector<T> w_t = transpose(gr.value(weights).ptr(), in, outn);
      simd::gemm<T>(batch, in, outn, dy.ptr(), outn, 1, w_t.data(), in, gr.grad(x).ptr(), in);
    }
  });
}

template <class T>
Var dropout(Graph<T>& g, Var x, double ratio, Mode mode, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0))
    throw ConfigError("dropout: ratio must lie in [0, 1), got " + std::to_string(ratio));
  const Tensor<T>& xt = g.value(x);
  if (mode == Mode::Infer || ratio == 0.0) {
    return g.emit(xt, {x}, [x](Graph<T>& gr, Var self) {
      simd::axpy<T>(gr.grad(self).size(), T(1), gr.grad(self).ptr(), gr.grad(x).ptr());
    });
  }
  auto scale = std::make_shared<std::vector<T>>(xt.size());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - ratio));
  Tensor<T> out(xt.shape());
  for (std::size_t i = 0; i < xt.size(); ++i) {
    (*scale)[i] = dropout_keeps(seed, i, ratio) ? keep_scale : T(0);
    out[i] = xt[i] * (*scale)[i];
  }
  return g.emit(std::move(out), {x}, [x, scale](Graph<T>& gr, Var self) {
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (*scale)[i];
  });
}

namespace {

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  const Shape s = logits.shape();
  if (s.c == 0) throw ConfigError("softmax: class extent must be >= 1");
  Tensor<T> out(s);
  const std::size_t rows = row_count(s);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = logits.ptr() + r * s.c;
    T* o = out.ptr() + r * s.c;
    const T mx = *std::max_element(in, in + s.c);
    T sum = 0;
    for (std::size_t c = 0; c < s.c; ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (std::size_t c = 0; c < s.c; ++c) o[c] /= sum;
  }
  return out;
}

void check_targets(const Shape& p, const Shape& t, const char* op) {
  if (p.n != t.n) throw ConfigError(axis_msg(op, "target batch", t.n, p.n));
  if (p.h != t.h) throw ConfigError(axis_msg(op, "target height", t.h, p.h));
  if (p.w != t.w) throw ConfigError(axis_msg(op, "target width", t.w, p.w));
  if (p.c != t.c) throw ConfigError(axis_msg(op, "target class", t.c, p.c));
}

}  // namespace

template <class T>
Var softmax(Graph<T>& g, Var logits) {
  Tensor<T> out = softmax_rows(g.value(logits));
  return g.emit(std::move(out), {logits}, [logits](Graph<T>& gr, Var self) {
    const Tensor<T>& y = gr.value(self);
    const Tensor<T>& dy = gr.grad(self);
    Tensor<T>& dx = gr.grad(logits);
    const std::size_t c = y.shape().c;
    const std::size_t rows = row_count(y.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = y.ptr() + r * c;
      const T* gr_ = dy.ptr() + r * c;
      T dot = 0;
      for (std::size_t k = 0; k < c; ++k) dot += gr_[k] * yr[k];
      for (std::size_t k = 0; k < c; ++k) dx[r * c + k] += yr[k] * (gr_[k] - dot);
    }
  });
}

template <class T>
Var cross_entropy(Graph<T>& g, Var probs, Var targets, double normalizer) {
  const Tensor<T>& p = g.value(probs);
  const Tensor<T>& t = g.value(targets);
  check_targets(p.shape(), t.shape(), "cross_entropy");
  const double norm = normalizer > 0 ? normalizer : static_cast<double>(row_count(p.shape()));
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (t[i] != T(0)) total -= static_cast<double>(t[i]) * std::log(std::max(static_cast<double>(p[i]), kLogFloor));
  }
  Tensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(total / norm));
  return g.emit(std::move(out), {probs, targets}, [probs, targets, norm](Graph<T>& gr, Var self) {
    if (!gr.requires_grad(probs)) return;
    const T up = gr.grad(self)[0];
    const Tensor<T>& pv = gr.value(probs);
    const Tensor<T>& tv = gr.value(targets);
    Tensor<T>& dp = gr.grad(probs);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      if (tv[i] != T(0) && static_cast<double>(pv[i]) > kLogFloor)
        dp[i] -= up * tv[i] / (pv[i] * static_cast<T>(norm));
    }
  });
}

template <class T>
SoftmaxLoss softmax_cross_entropy(Graph<T>& g, Var logits, Var targets, double normalizer) {
  const Tensor<T>& z = g.value(logits);
  const Tensor<T>& t = g.value(targets);
  check_targets(z.shape(), t.shape(), "softmax_cross_entropy");
  const double norm = normalizer > 0 ? normalizer : static_cast<double>(row_count(z.shape()));
  Tensor<T> p = softmax_rows(z);
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (t[i] != T(0)) total -= static_cast<double>(t[i]) * std::log(std::max(static_cast<double>(p[i]), kLogFloor));
  }
  const Var probs = g.input(p);
  Tensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(total / norm));
  const Var loss = g.emit(std::move(out), {logits, targets}, [logits, targets, probs, norm](Graph<T>& gr, Var self) {
    if (!gr.requires_grad(logits)) return;
    const T scale = gr.grad(self)[0] / static_cast<T>(norm);
    const Tensor<T>& pv = gr.value(probs);
    const Tensor<T>& tv = gr.value(targets);
    Tensor<T>& dz = gr.grad(logits);
    for (std::size_t i = 0; i < pv.size(); ++i) dz[i] += scale * (pv[i] - tv[i]);
  });
  return {loss, probs};
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, std::size_t at) {
  const Shape s = t.shape();
  if (at > s.c) throw ConfigError(axis_msg("split_channels", "channel", at, s.c));
  Tensor<T> a(Shape{s.n, s.h, s.w, at});
  Tensor<T> b(Shape{s.n, s.h, s.w, s.c - at});
  const std::size_t rows = row_count(s);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(t.ptr() + r * s.c, t.ptr() + r * s.c + at, a.ptr() + r * at);
    std::copy(t.ptr() + r * s.c + at, t.ptr() + (r + 1) * s.c, b.ptr() + r * (s.c - at));
  }
  return {std::move(a), std::move(b)};
}

#define INSTANTIATE(T)                                                                        \
  template Var conv2d<T>(Graph<T>&, Var, const ConvSpec&, Var, Var);                          \
  template Var relu<T>(Graph<T>&, Var);                                                       \
  template Var maxpool<T>(Graph<T>&, Var, const PoolSpec&);                                   \
  template Var global_avgpool<T>(Graph<T>&, Var);                                             \
  template Var depthcat<T>(Graph<T>&, Var, Var);                                              \
  template Var add<T>(Graph<T>&, Var, Var);                                                   \
  template Var fully_connected<T>(Graph<T>&, Var, Var, Var);                                  \
  template Var dropout<T>(Graph<T>&, Var, double, Mode, std::uint64_t);                       \
  template Var softmax<T>(Graph<T>&, Var);                                                    \
  template Var cross_entropy<T>(Graph<T>&, Var, Var, double);                                 \
  template SoftmaxLoss softmax_cross_entropy<T>(Graph<T>&, Var, Var, double);                 \
  template std::pair<Tensor<T>, Tensor<T>> split_channels<T>(const Tensor<T>&, std::size_t);

INSTANTIATE(float)
INSTANTIATE(double)

#undef INSTANTIATE

}  // namespace chainnet::nn
