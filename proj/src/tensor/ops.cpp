#include "omad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <utility>

#include "omad/error.hpp"
#include "omad/rng.hpp"
#include "omad/simd.hpp"

namespace omad {

namespace {
thread_local KinkRecorder* g_kink_recorder = nullptr;
}  // namespace

KinkRecorder::KinkRecorder() {
  if (g_kink_recorder != nullptr) throw ContractError("KinkRecorder: one recorder per thread");
  g_kink_recorder = this;
}

KinkRecorder::~KinkRecorder() { g_kink_recorder = nullptr; }

void KinkRecorder::fold(std::uint64_t word) { hash_ = mix64(hash_ ^ mix64(word)); }

KinkRecorder* KinkRecorder::active() { return g_kink_recorder; }

namespace {

template <typename Real>
Graph<Real>& same_graph(Var<Real> a, Var<Real> b, const char* op) {
  if (!a.valid() || !b.valid()) throw ContractError(std::string(op) + ": invalid variable");
  if (a.graph() != b.graph()) throw ContractError(std::string(op) + ": variables from different graphs");
  return *a.graph();
}

template <typename Real>
Graph<Real>& graph_of(Var<Real> a, const char* op) {
  if (!a.valid()) throw ContractError(std::string(op) + ": invalid variable");
  return *a.graph();
}

[[noreturn]] void dimension_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                       shape_string(b));
}

[[noreturn]] void rank_error(const char* op, const Shape& a, const char* expected) {
  throw DimensionError(std::string(op) + ": expected " + expected + ", got shape " +
                       shape_string(a));
}

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w;
  std::size_t out_c, k_h, k_w;
  std::size_t out_h, out_w;
  int stride, padding;

  std::size_t patch() const { return in_c * k_h * k_w; }
  std::size_t pixels() const { return out_h * out_w; }
  std::size_t in_plane() const { return in_c * in_h * in_w; }
  std::size_t out_plane() const { return out_c * out_h * out_w; }
};

// cols is [patch, pixels]: row j = (ci, ky, kx), column = output pixel.
template <typename Real>
void im2col(const ConvGeometry& g, const Real* image, Real* cols) {
  const std::size_t pixels = g.pixels();
  for (std::size_t ci = 0; ci < g.in_c; ++ci) {
    for (std::size_t ky = 0; ky < g.k_h; ++ky) {
      for (std::size_t kx = 0; kx < g.k_w; ++kx) {
        Real* row = cols + ((ci * g.k_h + ky) * g.k_w + kx) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.padding;
          Real* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, Real{0});
            continue;
          }
          const Real* src = image + (ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride + static_cast<long>(kx) - g.padding;
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.in_w)) ? Real{0} : src[ix];
          }
        }
      }
    }
  }
}

template <typename Real>
void col2im_add(const ConvGeometry& g, const Real* cols, Real* image) {
  const std::size_t pixels = g.pixels();
  for (std::size_t ci = 0; ci < g.in_c; ++ci) {
    for (std::size_t ky = 0; ky < g.k_h; ++ky) {
      for (std::size_t kx = 0; kx < g.k_w; ++kx) {
        const Real* row = cols + ((ci * g.k_h + ky) * g.k_w + kx) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.padding;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          Real* dst = image + (ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          const Real* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride + static_cast<long>(kx) - g.padding;
            if (ix >= 0 && ix < static_cast<long>(g.in_w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Real>
Real stable_sigmoid(Real x) {
  Real y;
  if (x >= 0) {
    y = Real{1} / (Real{1} + std::exp(-x));
  } else {
    const Real e = std::exp(x);
    y = e / (Real{1} + e);
  }
  // Keep the open interval (0,1) even where the exponential saturates.
  const Real hi = Real{1} - std::numeric_limits<Real>::epsilon() / 2;
  return std::clamp(y, std::numeric_limits<Real>::min(), hi);
}

}  // namespace

template <typename Real>
Var<Real> conv2d(Var<Real> input, Var<Real> kernel, int stride, int padding) {
  Graph<Real>& graph = same_graph(input, kernel, "conv2d");
  const Tensor<Real>& x = input.value();
  const Tensor<Real>& k = kernel.value();
  if (x.rank() != 3 && x.rank() != 4) rank_error("conv2d", x.shape(), "input [C,H,W] or [N,C,H,W]");
  if (k.rank() != 4) rank_error("conv2d", k.shape(), "kernel [C_out,C_in,kH,kW]");
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  if (padding < 0) throw ContractError("conv2d: padding must be >= 0");

  const bool batched = x.rank() == 4;
  const std::size_t off = batched ? 1 : 0;
  ConvGeometry g{};
  g.batch = batched ? x.dim(0) : 1;
  g.in_c = x.dim(off);
  g.in_h = x.dim(off + 1);
  g.in_w = x.dim(off + 2);
  g.out_c = k.dim(0);
  g.k_h = k.dim(2);
  g.k_w = k.dim(3);
  g.stride = stride;
  g.padding = padding;
  const std::size_t pad2 = 2 * static_cast<std::size_t>(padding);
  if (k.dim(1) != g.in_c || g.k_h > g.in_h + pad2 || g.k_w > g.in_w + pad2 || g.k_h == 0 ||
      g.k_w == 0) {
    dimension_error("conv2d", x.shape(), k.shape());
  }
  g.out_h = (g.in_h + pad2 - g.k_h) / static_cast<std::size_t>(stride) + 1;
  g.out_w = (g.in_w + pad2 - g.k_w) / static_cast<std::size_t>(stride) + 1;

  const std::size_t patch = g.patch();
  const std::size_t pixels = g.pixels();
  auto cols = std::make_shared<std::vector<Real>>(g.batch * patch * pixels);
  Shape out_shape = batched ? Shape{g.batch, g.out_c, g.out_h, g.out_w}
                            : Shape{g.out_c, g.out_h, g.out_w};
  Tensor<Real> out(std::move(out_shape));
  const Real* kdata = k.data().data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    Real* col = cols->data() + n * patch * pixels;
    im2col(g, x.data().data() + n * g.in_plane(), col);
    Real* dst = out.data().data() + n * g.out_plane();
    for (std::size_t co = 0; co < g.out_c; ++co) {
      std::span<Real> out_row(dst + co * pixels, pixels);
      for (std::size_t j = 0; j < patch; ++j) {
        simd::axpy(kdata[co * patch + j], std::span<const Real>(col + j * pixels, pixels), out_row);
      }
    }
  }

  const std::size_t in_id = input.id();
  const std::size_t k_id = kernel.id();
  return graph.record(
      "conv2d", std::move(out), {in_id, k_id}, [g, cols, in_id, k_id](Graph<Real>& gr, std::size_t self) {
        const std::size_t patch = g.patch();
        const std::size_t pixels = g.pixels();
        std::span<const Real> gout = gr.grad(self);
        if (gr.needs_grad(k_id)) {
          std::span<Real> gk = gr.grad(k_id);
          for (std::size_t n = 0; n < g.batch; ++n) {
            const Real* col = cols->data() + n * patch * pixels;
            const Real* go = gout.data() + n * g.out_plane();
            for (std::size_t co = 0; co < g.out_c; ++co) {
              std::span<const Real> grow(go + co * pixels, pixels);
              for (std::size_t j = 0; j < patch; ++j) {
                gk[co * patch + j] += simd::dot(grow, std::span<const Real>(col + j * pixels, pixels));
              }
            }
          }
        }
        if (gr.needs_grad(in_id)) {
          std::span<Real> gx = gr.grad(in_id);
          const Real* kdata = gr.value(k_id).data().data();
          std::vector<Real> dcol(patch * pixels);
          for (std::size_t n = 0; n < g.batch; ++n) {
            std::fill(dcol.begin(), dcol.end(), Real{0});
            const Real* go = gout.data() + n * g.out_plane();
            for (std::size_t j = 0; j < patch; ++j) {
              std::span<Real> drow(dcol.data() + j * pixels, pixels);
              for (std::size_t co = 0; co < g.out_c; ++co) {
                simd::axpy(kdata[co * patch + j], std::span<const Real>(go + co * pixels, pixels), drow);
              }
            }
            col2im_add(g, dcol.data(), gx.data() + n * g.in_plane());
          }
        }
      });
}

template <typename Real>
Var<Real> dense(Var<Real> input, Var<Real> weight, std::optional<Var<Real>> bias) {
  Graph<Real>& graph = same_graph(input, weight, "dense");
  const Tensor<Real>& x = input.value();
  const Tensor<Real>& w = weight.value();
  if (x.rank() != 1) rank_error("dense", x.shape(), "rank-1 input");
  if (w.rank() != 2 || w.dim(1) != x.dim(0)) dimension_error("dense", w.shape(), x.shape());
  const std::size_t m = w.dim(0);
  const std::size_t n = w.dim(1);
  if (bias) {
    same_graph(input, *bias, "dense");
    if (bias->value().shape() != Shape{m}) dimension_error("dense", w.shape(), bias->value().shape());
  }

  Tensor<Real> out(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    out[i] = simd::dot(w.data().subspan(i * n, n), x.data());
    if (bias) out[i] += bias->value()[i];
  }

  std::vector<std::size_t> inputs{input.id(), weight.id()};
  if (bias) inputs.push_back(bias->id());
  const std::size_t x_id = input.id();
  const std::size_t w_id = weight.id();
  const std::optional<std::size_t> b_id = bias ? std::optional(bias->id()) : std::nullopt;
  return graph.record("dense", std::move(out), std::move(inputs),
                      [m, n, x_id, w_id, b_id](Graph<Real>& gr, std::size_t self) {
                        std::span<const Real> gout = gr.grad(self);
                        if (gr.needs_grad(w_id)) {
                          std::span<Real> gw = gr.grad(w_id);
                          std::span<const Real> xv = gr.value(x_id).data();
                          for (std::size_t i = 0; i < m; ++i) simd::axpy(gout[i], xv, gw.subspan(i * n, n));
                        }
                        if (gr.needs_grad(x_id)) {
                          std::span<Real> gx = gr.grad(x_id);
                          std::span<const Real> wv = gr.value(w_id).data();
                          for (std::size_t i = 0; i < m; ++i) simd::axpy(gout[i], wv.subspan(i * n, n), gx);
                        }
                        if (b_id && gr.needs_grad(*b_id)) {
                          std::span<Real> gb = gr.grad(*b_id);
                          for (std::size_t i = 0; i < m; ++i) gb[i] += gout[i];
                        }
                      });
}

template <typename Real>
Var<Real> activation(Var<Real> input, Activation kind) {
  Graph<Real>& graph = graph_of(input, "activation");
  const Tensor<Real>& x = input.value();
  Tensor<Real> out(x.shape());
  if (kind == Activation::kRelu) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > Real{0} ? x[i] : Real{0};
    if (KinkRecorder* rec = KinkRecorder::active()) {
      std::uint64_t word = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        word = (word << 1) | (x[i] > Real{0} ? 1u : 0u);
        if (i % 64 == 63) rec->fold(std::exchange(word, 0));
      }
      rec->fold(word ^ (static_cast<std::uint64_t>(x.size()) << 32));
    }
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = stable_sigmoid(x[i]);
  }
  const std::size_t x_id = input.id();
  return graph.record(kind == Activation::kRelu ? "relu" : "sigmoid", std::move(out), {x_id},
                      [kind, x_id](Graph<Real>& gr, std::size_t self) {
                        if (!gr.needs_grad(x_id)) return;
                        std::span<const Real> gout = gr.grad(self);
                        std::span<Real> gx = gr.grad(x_id);
                        if (kind == Activation::kRelu) {
                          std::span<const Real> xv = gr.value(x_id).data();
                          for (std::size_t i = 0; i < gx.size(); ++i) {
                            if (xv[i] > Real{0}) gx[i] += gout[i];
                          }
                        } else {
                          std::span<const Real> y = gr.value(self).data();
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i] * y[i] * (Real{1} - y[i]);
                        }
                      });
}

template <typename Real>
Var<Real> global_avg_pool(Var<Real> input) {
  Graph<Real>& graph = graph_of(input, "global_avg_pool");
  const Tensor<Real>& x = input.value();
  if (x.rank() != 3 || x.dim(1) == 0 || x.dim(2) == 0) {
    rank_error("global_avg_pool", x.shape(), "[C,H,W] with H,W >= 1");
  }
  const std::size_t channels = x.dim(0);
  const std::size_t plane = x.dim(1) * x.dim(2);
  Tensor<Real> out(Shape{channels});
  for (std::size_t c = 0; c < channels; ++c) {
    Real sum = 0;
    for (std::size_t i = 0; i < plane; ++i) sum += x[c * plane + i];
    out[c] = sum / static_cast<Real>(plane);
  }
  const std::size_t x_id = input.id();
  return graph.record("global_avg_pool", std::move(out), {x_id},
                      [channels, plane, x_id](Graph<Real>& gr, std::size_t self) {
                        if (!gr.needs_grad(x_id)) return;
                        std::span<const Real> gout = gr.grad(self);
                        std::span<Real> gx = gr.grad(x_id);
                        for (std::size_t c = 0; c < channels; ++c) {
                          const Real share = gout[c] / static_cast<Real>(plane);
                          for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += share;
                        }
                      });
}

template <typename Real>
Var<Real> concat(Var<Real> a, Var<Real> b) {
  Graph<Real>& graph = same_graph(a, b, "concat");
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  if (av.rank() != 1 || bv.rank() != 1) dimension_error("concat", av.shape(), bv.shape());
  const std::size_t p = av.size();
  const std::size_t q = bv.size();
  std::vector<Real> joined(av.data().begin(), av.data().end());
  joined.insert(joined.end(), bv.data().begin(), bv.data().end());
  const std::size_t a_id = a.id();
  const std::size_t b_id = b.id();
  return graph.record("concat", Tensor<Real>(Shape{p + q}, std::move(joined)), {a_id, b_id},
                      [p, q, a_id, b_id](Graph<Real>& gr, std::size_t self) {
                        std::span<const Real> gout = gr.grad(self);
                        if (gr.needs_grad(a_id)) {
                          std::span<Real> ga = gr.grad(a_id);
                          for (std::size_t i = 0; i < p; ++i) ga[i] += gout[i];
                        }
                        if (gr.needs_grad(b_id)) {
                          std::span<Real> gb = gr.grad(b_id);
                          for (std::size_t i = 0; i < q; ++i) gb[i] += gout[p + i];
                        }
                      });
}

template <typename Real>
Var<Real> inner_product(Var<Real> a, Var<Real> b) {
  Graph<Real>& graph = same_graph(a, b, "inner_product");
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  if (av.rank() != 1 || av.shape() != bv.shape()) dimension_error("inner_product", av.shape(), bv.shape());
  const Real value = simd::dot(av.data(), bv.data());
  const std::size_t a_id = a.id();
  const std::size_t b_id = b.id();
  return graph.record("inner_product", Tensor<Real>::scalar(value), {a_id, b_id},
                      [a_id, b_id](Graph<Real>& gr, std::size_t self) {
                        const Real g = gr.grad(self)[0];
                        if (gr.needs_grad(a_id)) simd::axpy(g, gr.value(b_id).data(), gr.grad(a_id));
                        if (gr.needs_grad(b_id)) simd::axpy(g, gr.value(a_id).data(), gr.grad(b_id));
                      });
}

template <typename Real>
Var<Real> cosine(Var<Real> a, Var<Real> b) {
  Graph<Real>& graph = same_graph(a, b, "cosine");
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  if (av.rank() != 1 || av.shape() != bv.shape()) dimension_error("cosine", av.shape(), bv.shape());
  const Real na = std::sqrt(simd::dot(av.data(), av.data()));
  const Real nb = std::sqrt(simd::dot(bv.data(), bv.data()));
  const bool degenerate = na == Real{0} || nb == Real{0};
  const Real c = degenerate ? Real{0} : simd::dot(av.data(), bv.data()) / (na * nb);
  const std::size_t a_id = a.id();
  const std::size_t b_id = b.id();
  return graph.record("cosine", Tensor<Real>::scalar(c), {a_id, b_id},
                      [=](Graph<Real>& gr, std::size_t self) {
                        if (degenerate) return;
                        const Real g = gr.grad(self)[0];
                        std::span<const Real> x = gr.value(a_id).data();
                        std::span<const Real> y = gr.value(b_id).data();
                        // d cos / dx = y / (|x||y|) - cos * x / |x|^2
                        if (gr.needs_grad(a_id)) {
                          std::span<Real> ga = gr.grad(a_id);
                          simd::axpy(g / (na * nb), y, ga);
                          simd::axpy(-g * c / (na * na), x, ga);
                        }
                        if (gr.needs_grad(b_id)) {
                          std::span<Real> gb = gr.grad(b_id);
                          simd::axpy(g / (na * nb), x, gb);
                          simd::axpy(-g * c / (nb * nb), y, gb);
                        }
                      });
}

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  Graph<Real>& graph = same_graph(a, b, "add");
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  if (av.shape() != bv.shape()) dimension_error("add", av.shape(), bv.shape());
  Tensor<Real> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t a_id = a.id();
  const std::size_t b_id = b.id();
  return graph.record("add", std::move(out), {a_id, b_id}, [a_id, b_id](Graph<Real>& gr, std::size_t self) {
    std::span<const Real> gout = gr.grad(self);
    for (std::size_t id : {a_id, b_id}) {
      if (!gr.needs_grad(id)) continue;
      std::span<Real> gi = gr.grad(id);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gout[i];
    }
  });
}

template <typename Real>
Var<Real> add_channel_padded(Var<Real> a, Var<Real> b) {
  Graph<Real>& graph = same_graph(a, b, "add_channel_padded");
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || bv.dim(0) > av.dim(0) || av.dim(1) != bv.dim(1) ||
      av.dim(2) != bv.dim(2)) {
    dimension_error("add_channel_padded", av.shape(), bv.shape());
  }
  Tensor<Real> out = av;
  const std::size_t covered = bv.size();
  for (std::size_t i = 0; i < covered; ++i) out[i] += bv[i];
  const std::size_t a_id = a.id();
  const std::size_t b_id = b.id();
  return graph.record("add_channel_padded", std::move(out), {a_id, b_id},
                      [covered, a_id, b_id](Graph<Real>& gr, std::size_t self) {
                        std::span<const Real> gout = gr.grad(self);
                        if (gr.needs_grad(a_id)) {
                          std::span<Real> ga = gr.grad(a_id);
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i];
                        }
                        if (gr.needs_grad(b_id)) {
                          std::span<Real> gb = gr.grad(b_id);
                          for (std::size_t i = 0; i < covered; ++i) gb[i] += gout[i];
                        }
                      });
}

template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  Graph<Real>& graph = same_graph(a, b, "mul");
  const Tensor<Real>& av = a.value();
  const Tensor<Real>& bv = b.value();
  if (av.shape() != bv.shape()) dimension_error("mul", av.shape(), bv.shape());
  Tensor<Real> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t a_id = a.id();
  const std::size_t b_id = b.id();
  return graph.record("mul", std::move(out), {a_id, b_id}, [a_id, b_id](Graph<Real>& gr, std::size_t self) {
    std::span<const Real> gout = gr.grad(self);
    if (gr.needs_grad(a_id)) {
      std::span<Real> ga = gr.grad(a_id);
      std::span<const Real> bv = gr.value(b_id).data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * bv[i];
    }
    if (gr.needs_grad(b_id)) {
      std::span<Real> gb = gr.grad(b_id);
      std::span<const Real> av = gr.value(a_id).data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[i] * av[i];
    }
  });
}

template <typename Real>
Var<Real> scale(Var<Real> a, Real factor) {
  Graph<Real>& graph = graph_of(a, "scale");
  const Tensor<Real>& av = a.value();
  Tensor<Real> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  const std::size_t a_id = a.id();
  return graph.record("scale", std::move(out), {a_id}, [a_id, factor](Graph<Real>& gr, std::size_t self) {
    if (!gr.needs_grad(a_id)) return;
    std::span<const Real> gout = gr.grad(self);
    std::span<Real> ga = gr.grad(a_id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * factor;
  });
}

template <typename Real>
Var<Real> square(Var<Real> a) {
  Graph<Real>& graph = graph_of(a, "square");
  const Tensor<Real>& av = a.value();
  Tensor<Real> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * av[i];
  const std::size_t a_id = a.id();
  return graph.record("square", std::move(out), {a_id}, [a_id](Graph<Real>& gr, std::size_t self) {
    if (!gr.needs_grad(a_id)) return;
    std::span<const Real> gout = gr.grad(self);
    std::span<const Real> av = gr.value(a_id).data();
    std::span<Real> ga = gr.grad(a_id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * Real{2} * av[i];
  });
}

template <typename Real>
Var<Real> sum(Var<Real> a) {
  Graph<Real>& graph = graph_of(a, "sum");
  Real total = 0;
  for (Real v : a.value().data()) total += v;
  const std::size_t a_id = a.id();
  return graph.record("sum", Tensor<Real>::scalar(total), {a_id}, [a_id](Graph<Real>& gr, std::size_t self) {
    if (!gr.needs_grad(a_id)) return;
    const Real g = gr.grad(self)[0];
    for (Real& v : gr.grad(a_id)) v += g;
  });
}

template <typename Real>
Var<Real> mean(std::span<const Var<Real>> scalars) {
  if (scalars.empty()) throw ContractError("mean: no inputs");
  Graph<Real>& graph = graph_of(scalars.front(), "mean");
  std::vector<std::size_t> ids;
  Real sum = 0;
  for (const Var<Real>& v : scalars) {
    same_graph(scalars.front(), v, "mean");
    if (v.value().size() != 1) rank_error("mean", v.shape(), "scalar inputs");
    sum += v.value()[0];
    ids.push_back(v.id());
  }
  const Real count = static_cast<Real>(ids.size());
  std::vector<std::size_t> inputs = ids;
  return graph.record("mean", Tensor<Real>::scalar(sum / count), std::move(inputs),
                      [ids = std::move(ids), count](Graph<Real>& gr, std::size_t self) {
                        const Real share = gr.grad(self)[0] / count;
                        for (std::size_t id : ids) {
                          if (gr.needs_grad(id)) gr.grad(id)[0] += share;
                        }
                      });
}

template <typename Real>
Var<Real> binary_cross_entropy(Var<Real> probability, int label) {
  Graph<Real>& graph = graph_of(probability, "binary_cross_entropy");
  if (label != 0 && label != 1) {
    throw ContractError("binary_cross_entropy: label must be 0 or 1, got " + std::to_string(label));
  }
  const Tensor<Real>& pv = probability.value();
  if (pv.size() != 1) rank_error("binary_cross_entropy", pv.shape(), "scalar probability");
  const Real lo = static_cast<Real>(kProbClamp);
  const Real hi = Real{1} - static_cast<Real>(kProbClamp);
  const Real p = pv[0];
  const Real pc = std::clamp(p, lo, hi);
  const Real loss = label == 1 ? -std::log(pc) : -std::log(Real{1} - pc);
  const bool inside = p > lo && p < hi;
  if (KinkRecorder* rec = KinkRecorder::active()) rec->fold(p <= lo ? 1 : p >= hi ? 2 : 3);
  const std::size_t p_id = probability.id();
  return graph.record("binary_cross_entropy", Tensor<Real>::scalar(loss), {p_id},
                      [=](Graph<Real>& gr, std::size_t self) {
                        if (!inside || !gr.needs_grad(p_id)) return;
                        const Real g = gr.grad(self)[0];
                        gr.grad(p_id)[0] += label == 1 ? -g / p : g / (Real{1} - p);
                      });
}

#define OMAD_INSTANTIATE_OPS(Real)                                                           \
  template Var<Real> conv2d(Var<Real>, Var<Real>, int, int);                                 \
  template Var<Real> dense(Var<Real>, Var<Real>, std::optional<Var<Real>>);                  \
  template Var<Real> activation(Var<Real>, Activation);                                      \
  template Var<Real> global_avg_pool(Var<Real>);                                             \
  template Var<Real> concat(Var<Real>, Var<Real>);                                           \
  template Var<Real> inner_product(Var<Real>, Var<Real>);                                    \
  template Var<Real> cosine(Var<Real>, Var<Real>);                                           \
  template Var<Real> add(Var<Real>, Var<Real>);                                              \
  template Var<Real> add_channel_padded(Var<Real>, Var<Real>);                               \
  template Var<Real> mul(Var<Real>, Var<Real>);                                              \
  template Var<Real> scale(Var<Real>, Real);                                                 \
  template Var<Real> square(Var<Real>);                                                      \
  template Var<Real> sum(Var<Real>);                                                         \
  template Var<Real> mean(std::span<const Var<Real>>);                                       \
  template Var<Real> binary_cross_entropy(Var<Real>, int);

OMAD_INSTANTIATE_OPS(float)
OMAD_INSTANTIATE_OPS(double)

#undef OMAD_INSTANTIATE_OPS

}  // namespace omad
