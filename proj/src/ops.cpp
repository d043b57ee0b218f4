#include "aaunet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "aaunet/errors.hpp"

namespace aaunet::ops {

namespace {

thread_local bool trace_on = false;
thread_local uint64_t trace_hash = 0;

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Eigen's vectorized sum() peels by address alignment, so its rounding varies
// between otherwise identical runs.
template <typename T>
T sequential_sum(const T* p, int64_t n, int64_t stride) {
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += p[i * stride];
  return acc;
}

void require_rank(const Shape& s, size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " + shape_str(s));
  }
}

struct ConvGeom {
  int64_t n, c, h, w;
  int64_t cout, cin_g, kh, kw;
  int64_t ho, wo;
  int stride, padding, groups;
  int64_t k() const { return cin_g * kh * kw; }
  int64_t hwo() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && padding == 0; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const int64_t hwo = g.hwo();
  for (int64_t c = 0; c < g.cin_g; ++c) {
    const T* xc = x + c * g.h * g.w;
    for (int64_t ki = 0; ki < g.kh; ++ki) {
      for (int64_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * hwo;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * g.stride - g.padding + ki;
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = xc + iy * g.w;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.padding + kj;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  const int64_t hwo = g.hwo();
  for (int64_t c = 0; c < g.cin_g; ++c) {
    T* dxc = dx + c * g.h * g.w;
    for (int64_t ki = 0; ki < g.kh; ++ki) {
      for (int64_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * hwo;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * g.stride - g.padding + ki;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = dxc + iy * g.w;
          const T* src = row + oy * g.wo;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.padding + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

struct ResizeAxis {
  std::vector<int64_t> i0, i1;
  std::vector<double> lambda;
};

ResizeAxis resize_axis(int64_t in, int64_t out) {
  ResizeAxis a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.lambda.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = scale * (static_cast<double>(o) + 0.5) - 0.5;
    if (src < 0) src = 0;
    int64_t i0 = static_cast<int64_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    a.i0[o] = i0;
    a.i1[o] = i0 < in - 1 ? i0 + 1 : i0;
    a.lambda[o] = src - static_cast<double>(i0);
  }
  return a;
}

}  // namespace

int default_norm_groups(int64_t channels, int preferred) {
  if (channels < 1) throw ConfigError("norm groups: channel count must be positive");
  for (int g = std::min<int64_t>(preferred, channels); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int padding, int groups) {
  require_rank(x.shape(), 4, "conv2d", "input");
  require_rank(w.shape(), 4, "conv2d", "weight");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  if (groups < 1) throw ConfigError("conv2d: groups must be >= 1");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(1), w.dim(2),
             w.dim(3), 0, 0, stride, padding, groups};
  if (g.c % groups != 0 || g.cout % groups != 0) {
    throw ConfigError("conv2d: channels (in " + std::to_string(g.c) + ", out " +
                      std::to_string(g.cout) + ") not divisible by groups " +
                      std::to_string(groups));
  }
  if (g.cin_g * groups != g.c) {
    throw DimensionError("conv2d: channel axis mismatch, input has C=" + std::to_string(g.c) +
                         " but weight " + shape_str(w.shape()) + " expects " +
                         std::to_string(g.cin_g * groups));
  }
  if (b.defined() && (b.rank() != 1 || b.dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias axis 0 must be Cout=" + std::to_string(g.cout) +
                         ", got " + shape_str(b.shape()));
  }
  if (g.h + 2 * padding < g.kh) {
    throw DimensionError("conv2d: height axis " + std::to_string(g.h) +
                         " smaller than kernel " + std::to_string(g.kh));
  }
  if (g.w + 2 * padding < g.kw) {
    throw DimensionError("conv2d: width axis " + std::to_string(g.w) +
                         " smaller than kernel " + std::to_string(g.kw));
  }
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;

  const int64_t K = g.k(), HWo = g.hwo(), cout_g = g.cout / groups;
  std::vector<T> out(static_cast<size_t>(g.n * g.cout * HWo));
  std::vector<T> col(g.pointwise() ? 0 : static_cast<size_t>(K * HWo));
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t gi = 0; gi < groups; ++gi) {
      const T* xg = xp + (n * g.c + gi * g.cin_g) * g.h * g.w;
      const T* colp = xg;
      if (!g.pointwise()) {
        im2col(xg, g, col.data());
        colp = col.data();
      }
      Eigen::Map<const MatR<T>> Wm(wp + gi * cout_g * K, cout_g, K);
      Eigen::Map<const MatR<T>> Cm(colp, K, HWo);
      Eigen::Map<MatR<T>> Om(out.data() + (n * g.cout + gi * cout_g) * HWo, cout_g, HWo);
      Om.noalias() = Wm * Cm;
      if (b.defined()) {
        for (int64_t o = 0; o < cout_g; ++o) Om.row(o).array() += b.ptr()[gi * cout_g + o];
      }
    }
  }

  return Tensor<T>::make_result(
      {g.n, g.cout, g.ho, g.wo}, std::move(out), {x, w, b},
      [g](TensorNode<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        TensorNode<T>* bn = self.parents.size() > 2 && self.parents[2] ? self.parents[2].get()
                                                                      : nullptr;
        const int64_t K = g.k(), HWo = g.hwo(), cout_g = g.cout / g.groups;
        std::vector<T> col(g.pointwise() ? 0 : static_cast<size_t>(K * HWo));
        std::vector<T> dcol(static_cast<size_t>(K * HWo));
        for (int64_t n = 0; n < g.n; ++n) {
          for (int64_t gi = 0; gi < g.groups; ++gi) {
            Eigen::Map<const MatR<T>> dO(self.grad.data() + (n * g.cout + gi * cout_g) * HWo,
                                         cout_g, HWo);
            if (bn && bn->requires_grad) {
              for (int64_t o = 0; o < cout_g; ++o) {
                bn->grad[gi * cout_g + o] += sequential_sum(dO.row(o).data(), HWo, 1);
              }
            }
            const T* xg = xn.value.data() + (n * g.c + gi * g.cin_g) * g.h * g.w;
            if (wn.requires_grad) {
              const T* colp = xg;
              if (!g.pointwise()) {
                im2col(xg, g, col.data());
                colp = col.data();
              }
              Eigen::Map<const MatR<T>> Cm(colp, K, HWo);
              Eigen::Map<MatR<T>> dW(wn.grad.data() + gi * cout_g * K, cout_g, K);
              dW.noalias() += dO * Cm.transpose();
            }
            if (xn.requires_grad) {
              Eigen::Map<const MatR<T>> Wm(wn.value.data() + gi * cout_g * K, cout_g, K);
              T* dxg = xn.grad.data() + (n * g.c + gi * g.cin_g) * g.h * g.w;
              if (g.pointwise()) {
                Eigen::Map<MatR<T>> dX(dxg, K, HWo);
                dX.noalias() += Wm.transpose() * dO;
              } else {
                Eigen::Map<MatR<T>> dC(dcol.data(), K, HWo);
                dC.noalias() = Wm.transpose() * dO;
                col2im_add(dcol.data(), g, dxg);
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// normalization

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps) {
  require_rank(x.shape(), 4, "group_norm", "input");
  if (eps <= 0) throw ConfigError("group_norm: eps must be > 0");
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (groups < 1 || C % groups != 0) {
    throw ConfigError("group_norm: channel count " + std::to_string(C) +
                      " not divisible by groups " + std::to_string(groups));
  }
  if (gamma.numel() != C || beta.numel() != C) {
    throw DimensionError("group_norm: affine parameters must have C=" + std::to_string(C) +
                         " entries along axis 0");
  }
  const int64_t cg = C / groups;
  const int64_t M = cg * HW;
  std::vector<T> out(x.data().size());
  std::vector<T> xhat(x.data().size());
  std::vector<double> invstd(static_cast<size_t>(N * groups));
  const T* xp = x.ptr();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t gi = 0; gi < groups; ++gi) {
      const int64_t base = (n * C + gi * cg) * HW;
      double sum = 0;
      for (int64_t i = 0; i < M; ++i) sum += xp[base + i];
      const double mean = sum / static_cast<double>(M);
      double sq = 0;
      for (int64_t i = 0; i < M; ++i) {
        const double d = xp[base + i] - mean;
        sq += d * d;
      }
      const double var = sq / static_cast<double>(M);
      const double is = 1.0 / std::sqrt(var + eps);
      invstd[n * groups + gi] = is;
      for (int64_t c = 0; c < cg; ++c) {
        const int64_t ch = gi * cg + c;
        const double ga = gamma.ptr()[ch], be = beta.ptr()[ch];
        for (int64_t i = 0; i < HW; ++i) {
          const int64_t idx = base + c * HW + i;
          const double xh = (xp[idx] - mean) * is;
          xhat[idx] = static_cast<T>(xh);
          out[idx] = static_cast<T>(ga * xh + be);
        }
      }
    }
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [N, C, HW, groups, cg, M, xhat = std::move(xhat),
       invstd = std::move(invstd)](TensorNode<T>& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const T* dy = self.grad.data();
        for (int64_t n = 0; n < N; ++n) {
          for (int64_t gi = 0; gi < groups; ++gi) {
            const int64_t base = (n * C + gi * cg) * HW;
            double s1 = 0, s2 = 0;
            for (int64_t c = 0; c < cg; ++c) {
              const int64_t ch = gi * cg + c;
              const double ga = gn.value[ch];
              double dg = 0, db = 0;
              for (int64_t i = 0; i < HW; ++i) {
                const int64_t idx = base + c * HW + i;
                const double d = dy[idx];
                dg += d * xhat[idx];
                db += d;
                s1 += d * ga;
                s2 += d * ga * xhat[idx];
              }
              if (gn.requires_grad) gn.grad[ch] += static_cast<T>(dg);
              if (bn.requires_grad) bn.grad[ch] += static_cast<T>(db);
            }
            if (!xn.requires_grad) continue;
            const double is = invstd[n * groups + gi];
            const double inv_m = 1.0 / static_cast<double>(M);
            for (int64_t c = 0; c < cg; ++c) {
              const double ga = gn.value[gi * cg + c];
              for (int64_t i = 0; i < HW; ++i) {
                const int64_t idx = base + c * HW + i;
                const double dxh = dy[idx] * ga;
                xn.grad[idx] += static_cast<T>(is * (dxh - inv_m * s1 - xhat[idx] * inv_m * s2));
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                        double eps) {
  require_rank(x.shape(), 4, "instance_norm", "input");
  return group_norm(x, static_cast<int>(x.dim(1)), gamma, beta, eps);
}

void BranchTrace::begin() {
  trace_on = true;
  trace_hash = 0xcbf29ce484222325ull;
}

uint64_t BranchTrace::end() {
  trace_on = false;
  return trace_hash;
}

bool BranchTrace::active() { return trace_on; }

void BranchTrace::mix(uint64_t v) { trace_hash = (trace_hash ^ v) * 0x100000001b3ull; }

namespace {

template <typename T>
void trace_signs(const std::vector<T>& out) {
  uint64_t word = 0;
  for (size_t i = 0; i < out.size(); ++i) {
    word = (word << 1) | (out[i] > T(0));
    if (i % 64 == 63) BranchTrace::mix(word);
  }
  BranchTrace::mix(word);
}

}  // namespace

// ---------------------------------------------------------------------------
// pointwise

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  if (BranchTrace::active()) trace_signs(out);
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [](TensorNode<T>& self) {
    auto& xn = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (self.value[i] > T(0)) xn.grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.data().size());
  const T* xp = x.ptr();
  for (size_t i = 0; i < out.size(); ++i) {
    const T v = xp[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [](TensorNode<T>& self) {
    auto& xn = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const T y = self.value[i];
      xn.grad[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int r = static_cast<int>(x.rank());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(x.shape()));
  }
  int64_t outer = 1, inner = 1;
  const int64_t len = x.dim(axis);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);
  std::vector<T> out(x.data().size());
  const T* xp = x.ptr();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (int64_t k = 0; k < len; ++k) mx = std::max(mx, xp[base + k * inner]);
      double sum = 0;
      for (int64_t k = 0; k < len; ++k) {
        const T e = std::exp(xp[base + k * inner] - mx);
        out[base + k * inner] = e;
        sum += e;
      }
      for (int64_t k = 0; k < len; ++k) {
        out[base + k * inner] = static_cast<T>(out[base + k * inner] / sum);
      }
    }
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x}, [outer, inner, len](TensorNode<T>& self) {
        auto& xn = *self.parents[0];
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * len * inner + in;
            double dot = 0;
            for (int64_t k = 0; k < len; ++k) {
              dot += double(self.grad[base + k * inner]) * self.value[base + k * inner];
            }
            for (int64_t k = 0; k < len; ++k) {
              const int64_t i = base + k * inner;
              xn.grad[i] += static_cast<T>(self.value[i] * (self.grad[i] - dot));
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// pooling and resampling

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool", "input");
  const int64_t NC = x.dim(0) * x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<T> out(static_cast<size_t>(NC));
  for (int64_t i = 0; i < NC; ++i) {
    double s = 0;
    const T* p = x.ptr() + i * HW;
    for (int64_t j = 0; j < HW; ++j) s += p[j];
    out[i] = static_cast<T>(s / static_cast<double>(HW));
  }
  return Tensor<T>::make_result({x.dim(0), x.dim(1), 1, 1}, std::move(out), {x},
                                [NC, HW](TensorNode<T>& self) {
                                  auto& xn = *self.parents[0];
                                  for (int64_t i = 0; i < NC; ++i) {
                                    const T g = self.grad[i] / static_cast<T>(HW);
                                    T* d = xn.grad.data() + i * HW;
                                    for (int64_t j = 0; j < HW; ++j) d[j] += g;
                                  }
                                });
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
  require_rank(x.shape(), 4, "resize_bilinear", "input");
  if (out_h < 1 || out_w < 1) throw ConfigError("resize_bilinear: output size must be >= 1");
  const int64_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  auto ay = std::make_shared<ResizeAxis>(resize_axis(H, out_h));
  auto ax = std::make_shared<ResizeAxis>(resize_axis(W, out_w));
  std::vector<T> out(static_cast<size_t>(NC * out_h * out_w));
  for (int64_t p = 0; p < NC; ++p) {
    const T* src = x.ptr() + p * H * W;
    T* dst = out.data() + p * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const T* r0 = src + ay->i0[oy] * W;
      const T* r1 = src + ay->i1[oy] * W;
      const double ly = ay->lambda[oy];
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const double lx = ax->lambda[ox];
        const int64_t x0 = ax->i0[ox], x1 = ax->i1[ox];
        const double top = (1 - lx) * r0[x0] + lx * r0[x1];
        const double bot = (1 - lx) * r1[x0] + lx * r1[x1];
        dst[oy * out_w + ox] = static_cast<T>((1 - ly) * top + ly * bot);
      }
    }
  }
  return Tensor<T>::make_result(
      {x.dim(0), x.dim(1), out_h, out_w}, std::move(out), {x},
      [NC, H, W, out_h, out_w, ay, ax](TensorNode<T>& self) {
        auto& xn = *self.parents[0];
        for (int64_t p = 0; p < NC; ++p) {
          T* dsrc = xn.grad.data() + p * H * W;
          const T* g = self.grad.data() + p * out_h * out_w;
          for (int64_t oy = 0; oy < out_h; ++oy) {
            T* r0 = dsrc + ay->i0[oy] * W;
            T* r1 = dsrc + ay->i1[oy] * W;
            const double ly = ay->lambda[oy];
            for (int64_t ox = 0; ox < out_w; ++ox) {
              const double lx = ax->lambda[ox];
              const int64_t x0 = ax->i0[ox], x1 = ax->i1[ox];
              const double gv = g[oy * out_w + ox];
              r0[x0] += static_cast<T>((1 - ly) * (1 - lx) * gv);
              r0[x1] += static_cast<T>((1 - ly) * lx * gv);
              r1[x0] += static_cast<T>(ly * (1 - lx) * gv);
              r1[x1] += static_cast<T>(ly * lx * gv);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int factor) {
  if (factor < 2) throw ConfigError("upsample_bilinear: factor must be >= 2");
  require_rank(x.shape(), 4, "upsample_bilinear", "input");
  return resize_bilinear(x, x.dim(2) * factor, x.dim(3) * factor);
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int padding) {
  require_rank(x.shape(), 4, "max_pool2d", "input");
  if (kernel < 1 || stride < 1 || padding < 0 || 2 * padding > kernel) {
    throw ConfigError("max_pool2d: invalid kernel/stride/padding");
  }
  const int64_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Ho = (H + 2 * padding - kernel) / stride + 1;
  const int64_t Wo = (W + 2 * padding - kernel) / stride + 1;
  std::vector<T> out(static_cast<size_t>(NC * Ho * Wo));
  auto arg = std::make_shared<std::vector<int64_t>>(out.size());
  for (int64_t p = 0; p < NC; ++p) {
    const T* src = x.ptr() + p * H * W;
    for (int64_t oy = 0; oy < Ho; ++oy) {
      for (int64_t ox = 0; ox < Wo; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t bi = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int64_t iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int64_t ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= W) continue;
            if (src[iy * W + ix] > best || bi < 0) {
              best = src[iy * W + ix];
              bi = iy * W + ix;
            }
          }
        }
        const int64_t o = (p * Ho + oy) * Wo + ox;
        out[o] = best;
        (*arg)[o] = p * H * W + bi;
      }
    }
  }
  if (BranchTrace::active()) {
    for (int64_t a : *arg) BranchTrace::mix(static_cast<uint64_t>(a));
  }
  return Tensor<T>::make_result({x.dim(0), x.dim(1), Ho, Wo}, std::move(out), {x},
                                [arg](TensorNode<T>& self) {
                                  auto& xn = *self.parents[0];
                                  for (size_t o = 0; o < self.grad.size(); ++o) {
                                    xn.grad[(*arg)[o]] += self.grad[o];
                                  }
                                });
}

// ---------------------------------------------------------------------------
// dense

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(x.shape(), 2, "fully_connected", "input");
  require_rank(w.shape(), 2, "fully_connected", "weight");
  const int64_t N = x.dim(0), Cin = x.dim(1), Cout = w.dim(0);
  if (w.dim(1) != Cin) {
    throw DimensionError("fully_connected: input axis 1 has " + std::to_string(Cin) +
                         " features but weight expects " + std::to_string(w.dim(1)));
  }
  if (b.defined() && b.numel() != Cout) {
    throw DimensionError("fully_connected: bias axis 0 must be " + std::to_string(Cout));
  }
  std::vector<T> out(static_cast<size_t>(N * Cout));
  Eigen::Map<const MatR<T>> X(x.ptr(), N, Cin);
  Eigen::Map<const MatR<T>> Wm(w.ptr(), Cout, Cin);
  Eigen::Map<MatR<T>> Y(out.data(), N, Cout);
  Y.noalias() = X * Wm.transpose();
  if (b.defined()) {
    for (int64_t n = 0; n < N; ++n) {
      for (int64_t o = 0; o < Cout; ++o) Y(n, o) += b.ptr()[o];
    }
  }
  return Tensor<T>::make_result(
      {N, Cout}, std::move(out), {x, w, b}, [N, Cin, Cout](TensorNode<T>& self) {
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        TensorNode<T>* bn = self.parents.size() > 2 && self.parents[2] ? self.parents[2].get()
                                                                      : nullptr;
        Eigen::Map<const MatR<T>> dY(self.grad.data(), N, Cout);
        if (xn.requires_grad) {
          Eigen::Map<MatR<T>> dX(xn.grad.data(), N, Cin);
          Eigen::Map<const MatR<T>> Wm(wn.value.data(), Cout, Cin);
          dX.noalias() += dY * Wm;
        }
        if (wn.requires_grad) {
          Eigen::Map<const MatR<T>> X(xn.value.data(), N, Cin);
          Eigen::Map<MatR<T>> dW(wn.grad.data(), Cout, Cin);
          dW.noalias() += dY.transpose() * X;
        }
        if (bn && bn->requires_grad) {
          for (int64_t o = 0; o < Cout; ++o) bn->grad[o] += sequential_sum(dY.data() + o, N, Cout);
        }
      });
}

// ---------------------------------------------------------------------------
// structural

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.ptr()[i] + b.ptr()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](TensorNode<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return Tensor<T>::make_result(x.shape(), std::move(out), {x},
                                [factor](TensorNode<T>& self) {
                                  auto& xn = *self.parents[0];
                                  for (size_t i = 0; i < self.grad.size(); ++i) {
                                    xn.grad[i] += factor * self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& s) {
  require_rank(x.shape(), 4, "scale_channels", "input");
  if (s.shape() != Shape{x.dim(0), x.dim(1), 1, 1}) {
    throw DimensionError("scale_channels: channel axis mismatch, scales " +
                         shape_str(s.shape()) + " for input " + shape_str(x.shape()));
  }
  const int64_t NC = x.dim(0) * x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<T> out(x.data().size());
  for (int64_t i = 0; i < NC; ++i) {
    const T f = s.ptr()[i];
    for (int64_t j = 0; j < HW; ++j) out[i * HW + j] = x.ptr()[i * HW + j] * f;
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x, s},
                                [NC, HW](TensorNode<T>& self) {
                                  auto& xn = *self.parents[0];
                                  auto& sn = *self.parents[1];
                                  for (int64_t i = 0; i < NC; ++i) {
                                    double ds = 0;
                                    const T f = sn.value[i];
                                    for (int64_t j = 0; j < HW; ++j) {
                                      const T g = self.grad[i * HW + j];
                                      ds += double(g) * xn.value[i * HW + j];
                                      if (xn.requires_grad) xn.grad[i * HW + j] += g * f;
                                    }
                                    if (sn.requires_grad) sn.grad[i] += static_cast<T>(ds);
                                  }
                                });
}

template <typename T>
Tensor<T> scale_spatial(const Tensor<T>& x, const Tensor<T>& a) {
  require_rank(x.shape(), 4, "scale_spatial", "input");
  if (a.shape() != Shape{x.dim(0), 1, x.dim(2), x.dim(3)}) {
    throw DimensionError("scale_spatial: spatial axes mismatch, gate " + shape_str(a.shape()) +
                         " for input " + shape_str(x.shape()));
  }
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<T> out(x.data().size());
  for (int64_t n = 0; n < N; ++n) {
    const T* ap = a.ptr() + n * HW;
    for (int64_t c = 0; c < C; ++c) {
      const int64_t base = (n * C + c) * HW;
      for (int64_t j = 0; j < HW; ++j) out[base + j] = x.ptr()[base + j] * ap[j];
    }
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, a}, [N, C, HW](TensorNode<T>& self) {
        auto& xn = *self.parents[0];
        auto& an = *self.parents[1];
        for (int64_t n = 0; n < N; ++n) {
          for (int64_t c = 0; c < C; ++c) {
            const int64_t base = (n * C + c) * HW;
            for (int64_t j = 0; j < HW; ++j) {
              const T g = self.grad[base + j];
              if (xn.requires_grad) xn.grad[base + j] += g * an.value[n * HW + j];
              if (an.requires_grad) an.grad[n * HW + j] += g * xn.value[base + j];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  require_rank(s0, 4, "concat_channels", "input");
  int64_t C = 0;
  std::vector<int64_t> widths;
  for (const auto& p : parts) {
    require_rank(p.shape(), 4, "concat_channels", "input");
    if (p.dim(0) != s0[0]) throw DimensionError("concat_channels: batch axis mismatch");
    if (p.dim(2) != s0[2] || p.dim(3) != s0[3]) {
      throw DimensionError("concat_channels: spatial axes mismatch " + shape_str(p.shape()) +
                           " vs " + shape_str(s0));
    }
    widths.push_back(p.dim(1));
    C += p.dim(1);
  }
  const int64_t N = s0[0], HW = s0[2] * s0[3];
  std::vector<T> out(static_cast<size_t>(N * C * HW));
  for (int64_t n = 0; n < N; ++n) {
    int64_t off = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
      const T* src = parts[k].ptr() + n * widths[k] * HW;
      std::copy(src, src + widths[k] * HW, out.data() + (n * C + off) * HW);
      off += widths[k];
    }
  }
  return Tensor<T>::make_result(
      {N, C, s0[2], s0[3]}, std::move(out), parts, [N, C, HW, widths](TensorNode<T>& self) {
        for (int64_t n = 0; n < N; ++n) {
          int64_t off = 0;
          for (size_t k = 0; k < widths.size(); ++k) {
            auto& pn = *self.parents[k];
            if (pn.requires_grad) {
              const T* g = self.grad.data() + (n * C + off) * HW;
              T* d = pn.grad.data() + n * widths[k] * HW;
              for (int64_t j = 0; j < widths[k] * HW; ++j) d[j] += g[j];
            }
            off += widths[k];
          }
        }
      });
}

template <typename T>
Tensor<T> narrow_channels(const Tensor<T>& x, int64_t start, int64_t length) {
  require_rank(x.shape(), 4, "narrow_channels", "input");
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (start < 0 || length < 1 || start + length > C) {
    throw DimensionError("narrow_channels: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") outside channel axis of " +
                         std::to_string(C));
  }
  std::vector<T> out(static_cast<size_t>(N * length * HW));
  for (int64_t n = 0; n < N; ++n) {
    const T* src = x.ptr() + (n * C + start) * HW;
    std::copy(src, src + length * HW, out.data() + n * length * HW);
  }
  return Tensor<T>::make_result({N, length, x.dim(2), x.dim(3)}, std::move(out), {x},
                                [N, C, HW, start, length](TensorNode<T>& self) {
                                  auto& xn = *self.parents[0];
                                  for (int64_t n = 0; n < N; ++n) {
                                    const T* g = self.grad.data() + n * length * HW;
                                    T* d = xn.grad.data() + (n * C + start) * HW;
                                    for (int64_t j = 0; j < length * HW; ++j) d[j] += g[j];
                                  }
                                });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return Tensor<T>::make_result(std::move(shape), std::move(out), {x},
                                [](TensorNode<T>& self) {
                                  auto& xn = *self.parents[0];
                                  for (size_t i = 0; i < self.grad.size(); ++i) {
                                    xn.grad[i] += self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> dot_constant(const Tensor<T>& x, const std::vector<T>& weights) {
  if (static_cast<int64_t>(weights.size()) != x.numel()) {
    throw DimensionError("dot_constant: weight count does not match " + shape_str(x.shape()));
  }
  double s = 0;
  for (size_t i = 0; i < weights.size(); ++i) s += double(x.ptr()[i]) * weights[i];
  return Tensor<T>::make_result({1}, {static_cast<T>(s)}, {x}, [weights](TensorNode<T>& self) {
    auto& xn = *self.parents[0];
    const T g = self.grad[0];
    for (size_t i = 0; i < weights.size(); ++i) xn.grad[i] += g * weights[i];
  });
}

template <typename T>
Tensor<T> radix_softmax(const Tensor<T>& logits, int cardinality, int radix) {
  require_rank(logits.shape(), 4, "radix_softmax", "logits");
  if (cardinality < 1 || radix < 1) throw ConfigError("radix_softmax: K and R must be >= 1");
  const int64_t N = logits.dim(0), CR = logits.dim(1);
  if (logits.dim(2) != 1 || logits.dim(3) != 1) {
    throw DimensionError("radix_softmax: logits must be N x C x 1 x 1, got " +
                         shape_str(logits.shape()));
  }
  if (CR % (int64_t(cardinality) * radix) != 0) {
    throw ConfigError("radix_softmax: channel count " + std::to_string(CR) +
                      " not divisible by cardinality*radix");
  }
  const int64_t C = CR / radix, cg = C / cardinality;
  const int K = cardinality, R = radix;
  // src index [k][r][j] -> dst index [r][k][j]
  auto src_index = [=](int64_t n, int64_t k, int64_t r, int64_t j) {
    return n * CR + k * R * cg + r * cg + j;
  };
  auto dst_index = [=](int64_t n, int64_t k, int64_t r, int64_t j) {
    return n * CR + r * C + k * cg + j;
  };
  std::vector<T> out(static_cast<size_t>(N * CR));
  const T* lp = logits.ptr();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t k = 0; k < K; ++k) {
      for (int64_t j = 0; j < cg; ++j) {
        if (R == 1) {
          const T v = lp[src_index(n, k, 0, j)];
          out[dst_index(n, k, 0, j)] =
              v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
          continue;
        }
        T mx = -std::numeric_limits<T>::infinity();
        for (int64_t r = 0; r < R; ++r) mx = std::max(mx, lp[src_index(n, k, r, j)]);
        double sum = 0;
        for (int64_t r = 0; r < R; ++r) {
          const T e = std::exp(lp[src_index(n, k, r, j)] - mx);
          out[dst_index(n, k, r, j)] = e;
          sum += e;
        }
        for (int64_t r = 0; r < R; ++r) {
          out[dst_index(n, k, r, j)] = static_cast<T>(out[dst_index(n, k, r, j)] / sum);
        }
      }
    }
  }
  return Tensor<T>::make_result(
      logits.shape(), std::move(out), {logits},
      [=](TensorNode<T>& self) {
        auto& ln = *self.parents[0];
        for (int64_t n = 0; n < N; ++n) {
          for (int64_t k = 0; k < K; ++k) {
            for (int64_t j = 0; j < cg; ++j) {
              if (R == 1) {
                const int64_t d = dst_index(n, k, 0, j);
                const T y = self.value[d];
                ln.grad[src_index(n, k, 0, j)] += self.grad[d] * y * (T(1) - y);
                continue;
              }
              double dot = 0;
              for (int64_t r = 0; r < R; ++r) {
                const int64_t d = dst_index(n, k, r, j);
                dot += double(self.grad[d]) * self.value[d];
              }
              for (int64_t r = 0; r < R; ++r) {
                const int64_t d = dst_index(n, k, r, j);
                ln.grad[src_index(n, k, r, j)] +=
                    static_cast<T>(self.value[d] * (self.grad[d] - dot));
              }
            }
          }
        }
      });
}

#define AAUNET_INSTANTIATE_OPS(T)                                                             \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int,   \
                            int);                                                             \
  template Tensor<T> group_norm(const Tensor<T>&, int, const Tensor<T>&, const Tensor<T>&,    \
                                double);                                                      \
  template Tensor<T> instance_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                   double);                                                   \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> sigmoid(const Tensor<T>&);                                               \
  template Tensor<T> softmax(const Tensor<T>&, int);                                          \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                       \
  template Tensor<T> resize_bilinear(const Tensor<T>&, int64_t, int64_t);                     \
  template Tensor<T> upsample_bilinear(const Tensor<T>&, int);                                \
  template Tensor<T> max_pool2d(const Tensor<T>&, int, int, int);                             \
  template Tensor<T> fully_connected(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> scale_channels(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> scale_spatial(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                          \
  template Tensor<T> narrow_channels(const Tensor<T>&, int64_t, int64_t);                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                        \
  template Tensor<T> dot_constant(const Tensor<T>&, const std::vector<T>&);                   \
  template Tensor<T> radix_softmax(const Tensor<T>&, int, int);

AAUNET_INSTANTIATE_OPS(float)
AAUNET_INSTANTIATE_OPS(double)

}  // namespace aaunet::ops
