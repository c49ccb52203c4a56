#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/nn/tape.hpp"

namespace ccat::nn {

namespace detail {

template <class T, class MakeBackward>
Tensor<T> emit(Tape<T>& tp, Shape shape, std::vector<T> values,
               std::initializer_list<const Tensor<T>*> inputs, MakeBackward&& make_backward) {
  bool rg = false;
  for (const auto* in : inputs) rg = rg || in->requires_grad();
  const std::size_t out = tp.size();
  std::function<void()> bw;
  if (rg && tp.grad_enabled()) bw = make_backward(out);
  return Tensor<T>(&tp, tp.push(std::move(shape), std::move(values), rg, std::move(bw)));
}

template <class T>
void require_same_tape(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.tape() != b.tape()) throw ShapeError("tensors live on different tapes");
}

template <class T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op) {
  if (a.shape().size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(a.shape()));
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_tape(a, b);
  if (a.shape() != b.shape())
    throw ShapeError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  auto& tp = *a.tape();
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
  const auto ia = a.id(), ib = b.id();
  return detail::emit(tp, a.shape(), std::move(v), {&a, &b}, [&tp, ia, ib](std::size_t out) {
    return [&tp, ia, ib, out] {
      const auto& g = tp.grad_of(out);
      for (auto id : {ia, ib}) {
        if (!tp.node(id).requires_grad) continue;
        auto& gi = tp.grad_of(id);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    };
  });
}

/// x + c for a constant array c of the same size.
template <class T>
Tensor<T> add_constant(const Tensor<T>& x, std::span<const T> c) {
  if (c.size() != x.size()) throw ShapeError("add_constant: size mismatch");
  auto& tp = *x.tape();
  std::vector<T> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.values()[i] + c[i];
  const auto ix = x.id();
  return detail::emit(tp, x.shape(), std::move(v), {&x}, [&tp, ix](std::size_t out) {
    return [&tp, ix, out] {
      const auto& g = tp.grad_of(out);
      auto& gx = tp.grad_of(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  auto& tp = *x.tape();
  std::vector<T> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.values()[i] * s;
  const auto ix = x.id();
  return detail::emit(tp, x.shape(), std::move(v), {&x}, [&tp, ix, s](std::size_t out) {
    return [&tp, ix, out, s] {
      const auto& g = tp.grad_of(out);
      auto& gx = tp.grad_of(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
    };
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  auto& tp = *x.tape();
  const auto ix = x.id();
  return detail::emit(tp, std::move(shape), x.values(), {&x}, [&tp, ix](std::size_t out) {
    return [&tp, ix, out] {
      const auto& g = tp.grad_of(out);
      auto& gx = tp.grad_of(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  });
}

/// min(max(x, 0), cap); the gradient is 1 strictly inside (0, cap) and 0 elsewhere.
template <class T>
Tensor<T> clipped_relu(const Tensor<T>& x, T cap) {
  auto& tp = *x.tape();
  std::vector<T> v(x.size());
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const T xi = x.values()[i];
    v[i] = std::min(std::max(xi, T(0)), cap);
    // Exact zeros are skipped: they come from zero-padded frames pushed
    // through bias-free convs and stay zero under any perturbation.
    if (xi != T(0)) margin = std::min(margin, static_cast<double>(std::abs(xi)));
    if (std::isfinite(static_cast<double>(cap)))
      margin = std::min(margin, static_cast<double>(std::abs(xi - cap)));
  }
  if (tp.grad_enabled()) tp.note_kink_distance(margin);
  const auto ix = x.id();
  return detail::emit(tp, x.shape(), std::move(v), {&x}, [&tp, ix, cap](std::size_t out) {
    return [&tp, ix, out, cap] {
      const auto& g = tp.grad_of(out);
      const auto& xv = tp.node(ix).value;
      auto& gx = tp.grad_of(ix);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > T(0) && xv[i] < cap) gx[i] += g[i];
    };
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return clipped_relu(x, std::numeric_limits<T>::infinity());
}

/// ReLU capped at the top of the MOS scale.
template <class T>
Tensor<T> clipped_relu5(const Tensor<T>& x) {
  return clipped_relu(x, T(5));
}

/// Bias-free 2-D cross-correlation, stride 1, SAME zero padding.
/// x: [N,H,W,Cin], k: [kh,kw,Cin,Cout] -> [N,H,W,Cout].
template <class T>
Tensor<T> conv2d_nobias(const Tensor<T>& x, const Tensor<T>& k) {
  detail::require_same_tape(x, k);
  detail::require_rank(x, 4, "conv2d_nobias");
  detail::require_rank(k, 4, "conv2d_nobias");
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const int kh = k.dim(0), kw = k.dim(1), Co = k.dim(3);
  if (k.dim(2) != Ci)
    throw ShapeError("conv2d_nobias: input channels " + std::to_string(Ci) + " vs kernel " +
                     shape_string(k.shape()));
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d_nobias: kernel sizes must be odd");
  const int ph = kh / 2, pw = kw / 2;
  auto& tp = *x.tape();
  std::vector<T> v(static_cast<std::size_t>(N) * H * W * Co, T(0));
  const auto& xv = x.values();
  const auto& kv = k.values();
  for (int n = 0; n < N; ++n)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        T* o = &v[((static_cast<std::size_t>(n) * H + h) * W + w) * Co];
        for (int dh = 0; dh < kh; ++dh) {
          const int ih = h + dh - ph;
          if (ih < 0 || ih >= H) continue;
          for (int dw = 0; dw < kw; ++dw) {
            const int iw = w + dw - pw;
            if (iw < 0 || iw >= W) continue;
            const T* xp = &xv[((static_cast<std::size_t>(n) * H + ih) * W + iw) * Ci];
            const T* kp = &kv[(static_cast<std::size_t>(dh) * kw + dw) * Ci * Co];
            for (int ci = 0; ci < Ci; ++ci) {
              const T xval = xp[ci];
              if (xval == T(0)) continue;
              const T* kr = kp + static_cast<std::size_t>(ci) * Co;
              for (int co = 0; co < Co; ++co) o[co] += xval * kr[co];
            }
          }
        }
      }
  const auto ix = x.id(), ik = k.id();
  return detail::emit(
      tp, Shape{N, H, W, Co}, std::move(v), {&x, &k},
      [&tp, ix, ik, N, H, W, Ci, Co, kh, kw, ph, pw](std::size_t out) {
        return [&tp, ix, ik, out, N, H, W, Ci, Co, kh, kw, ph, pw] {
          const auto& g = tp.grad_of(out);
          const auto& xv = tp.node(ix).value;
          const auto& kv = tp.node(ik).value;
          const bool need_x = tp.node(ix).requires_grad;
          const bool need_k = tp.node(ik).requires_grad;
          auto* gx = need_x ? tp.grad_of(ix).data() : nullptr;
          auto* gk = need_k ? tp.grad_of(ik).data() : nullptr;
          for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
              for (int w = 0; w < W; ++w) {
                const T* go = &g[((static_cast<std::size_t>(n) * H + h) * W + w) * Co];
                for (int dh = 0; dh < kh; ++dh) {
                  const int ih = h + dh - ph;
                  if (ih < 0 || ih >= H) continue;
                  for (int dw = 0; dw < kw; ++dw) {
                    const int iw = w + dw - pw;
                    if (iw < 0 || iw >= W) continue;
                    const std::size_t xo = ((static_cast<std::size_t>(n) * H + ih) * W + iw) * Ci;
                    const std::size_t ko = (static_cast<std::size_t>(dh) * kw + dw) * Ci * Co;
                    for (int ci = 0; ci < Ci; ++ci) {
                      const std::size_t kr = ko + static_cast<std::size_t>(ci) * Co;
                      if (need_x) {
                        T acc = T(0);
                        for (int co = 0; co < Co; ++co) acc += go[co] * kv[kr + co];
                        gx[xo + ci] += acc;
                      }
                      if (need_k) {
                        const T xval = xv[xo + ci];
                        if (xval == T(0)) continue;
                        for (int co = 0; co < Co; ++co) gk[kr + co] += xval * go[co];
                      }
                    }
                  }
                }
              }
        };
      });
}

/// Pooled length of one axis under 2-wide floor pooling. An axis of length 1
/// has nothing to pair with and passes through unchanged.
inline int pooled_extent(int n) {
  if (n <= 0) throw ShapeError("avgpool2d: empty axis");
  return n == 1 ? 1 : n / 2;
}

/// Non-overlapping 2x2 mean pooling over (H, W) of [N,H,W,C]. Trailing odd
/// rows/columns are dropped.
template <class T>
Tensor<T> avgpool2d(const Tensor<T>& x) {
  detail::require_rank(x, 4, "avgpool2d");
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const int Ho = pooled_extent(H), Wo = pooled_extent(W);
  const int sh = H == 1 ? 1 : 2, sw = W == 1 ? 1 : 2;
  const T inv = T(1) / static_cast<T>(sh * sw);
  auto& tp = *x.tape();
  std::vector<T> v(static_cast<std::size_t>(N) * Ho * Wo * C, T(0));
  const auto& xv = x.values();
  for (int n = 0; n < N; ++n)
    for (int h = 0; h < Ho; ++h)
      for (int w = 0; w < Wo; ++w) {
        T* o = &v[((static_cast<std::size_t>(n) * Ho + h) * Wo + w) * C];
        for (int a = 0; a < sh; ++a)
          for (int b = 0; b < sw; ++b) {
            const T* xp = &xv[((static_cast<std::size_t>(n) * H + h * sh + a) * W + w * sw + b) * C];
            for (int c = 0; c < C; ++c) o[c] += xp[c];
          }
        for (int c = 0; c < C; ++c) o[c] *= inv;
      }
  const auto ix = x.id();
  return detail::emit(tp, Shape{N, Ho, Wo, C}, std::move(v), {&x},
                      [&tp, ix, N, H, W, C, Ho, Wo, sh, sw, inv](std::size_t out) {
                        return [&tp, ix, out, N, H, W, C, Ho, Wo, sh, sw, inv] {
                          const auto& g = tp.grad_of(out);
                          auto& gx = tp.grad_of(ix);
                          for (int n = 0; n < N; ++n)
                            for (int h = 0; h < Ho; ++h)
                              for (int w = 0; w < Wo; ++w) {
                                const T* go = &g[((static_cast<std::size_t>(n) * Ho + h) * Wo + w) * C];
                                for (int a = 0; a < sh; ++a)
                                  for (int b = 0; b < sw; ++b) {
                                    T* gp = &gx[((static_cast<std::size_t>(n) * H + h * sh + a) * W +
                                                 w * sw + b) * C];
                                    for (int c = 0; c < C; ++c) gp[c] += go[c] * inv;
                                  }
                              }
                        };
                      });
}

/// Affine map x W + b. x: [N,Din], W: [Din,Dout], b: [Dout] (optional).
template <class T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& Wt, const std::optional<Tensor<T>>& b = std::nullopt) {
  detail::require_same_tape(x, Wt);
  detail::require_rank(x, 2, "dense");
  detail::require_rank(Wt, 2, "dense");
  const int N = x.dim(0), Din = x.dim(1), Dout = Wt.dim(1);
  if (Wt.dim(0) != Din)
    throw ShapeError("dense: " + shape_string(x.shape()) + " x " + shape_string(Wt.shape()));
  if (b && (b->shape().size() != 1 || b->dim(0) != Dout))
    throw ShapeError("dense: bias shape " + shape_string(b->shape()));
  auto& tp = *x.tape();
  std::vector<T> v(static_cast<std::size_t>(N) * Dout, T(0));
  const auto& xv = x.values();
  const auto& wv = Wt.values();
  for (int n = 0; n < N; ++n) {
    T* o = &v[static_cast<std::size_t>(n) * Dout];
    if (b) std::copy(b->values().begin(), b->values().end(), o);
    for (int i = 0; i < Din; ++i) {
      const T xi = xv[static_cast<std::size_t>(n) * Din + i];
      if (xi == T(0)) continue;
      const T* wr = &wv[static_cast<std::size_t>(i) * Dout];
      for (int j = 0; j < Dout; ++j) o[j] += xi * wr[j];
    }
  }
  const auto ix = x.id(), iw = Wt.id();
  const std::optional<std::size_t> ib = b ? std::optional<std::size_t>(b->id()) : std::nullopt;
  Tensor<T> bias_dummy = b ? *b : x;
  return detail::emit(tp, Shape{N, Dout}, std::move(v), {&x, &Wt, &bias_dummy},
                      [&tp, ix, iw, ib, N, Din, Dout](std::size_t out) {
                        return [&tp, ix, iw, ib, out, N, Din, Dout] {
                          const auto& g = tp.grad_of(out);
                          const auto& xv = tp.node(ix).value;
                          const auto& wv = tp.node(iw).value;
                          if (tp.node(ix).requires_grad) {
                            auto& gx = tp.grad_of(ix);
                            for (int n = 0; n < N; ++n)
                              for (int i = 0; i < Din; ++i) {
                                T acc = T(0);
                                const T* wr = &wv[static_cast<std::size_t>(i) * Dout];
                                const T* gr = &g[static_cast<std::size_t>(n) * Dout];
                                for (int j = 0; j < Dout; ++j) acc += gr[j] * wr[j];
                                gx[static_cast<std::size_t>(n) * Din + i] += acc;
                              }
                          }
                          if (tp.node(iw).requires_grad) {
                            auto& gw = tp.grad_of(iw);
                            for (int n = 0; n < N; ++n)
                              for (int i = 0; i < Din; ++i) {
                                const T xi = xv[static_cast<std::size_t>(n) * Din + i];
                                if (xi == T(0)) continue;
                                T* gr = &gw[static_cast<std::size_t>(i) * Dout];
                                const T* go = &g[static_cast<std::size_t>(n) * Dout];
                                for (int j = 0; j < Dout; ++j) gr[j] += xi * go[j];
                              }
                          }
                          if (ib && tp.node(*ib).requires_grad) {
                            auto& gb = tp.grad_of(*ib);
                            for (int n = 0; n < N; ++n)
                              for (int j = 0; j < Dout; ++j)
                                gb[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(n) * Dout + j];
                          }
                        };
                      });
}

/// a [M,K] times b^T where b is [N,K] -> [M,N].
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_tape(a, b);
  detail::require_rank(a, 2, "matmul_nt");
  detail::require_rank(b, 2, "matmul_nt");
  const int M = a.dim(0), K = a.dim(1), N = b.dim(0);
  if (b.dim(1) != K) throw ShapeError("matmul_nt: inner dimensions differ");
  auto& tp = *a.tape();
  std::vector<T> v(static_cast<std::size_t>(M) * N, T(0));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      T acc = T(0);
      for (int k = 0; k < K; ++k)
        acc += av[static_cast<std::size_t>(i) * K + k] * bv[static_cast<std::size_t>(j) * K + k];
      v[static_cast<std::size_t>(i) * N + j] = acc;
    }
  const auto ia = a.id(), ib = b.id();
  return detail::emit(tp, Shape{M, N}, std::move(v), {&a, &b}, [&tp, ia, ib, M, K, N](std::size_t out) {
    return [&tp, ia, ib, out, M, K, N] {
      const auto& g = tp.grad_of(out);
      const auto& av = tp.node(ia).value;
      const auto& bv = tp.node(ib).value;
      const bool need_a = tp.node(ia).requires_grad, need_b = tp.node(ib).requires_grad;
      for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
          const T gij = g[static_cast<std::size_t>(i) * N + j];
          if (gij == T(0)) continue;
          for (int k = 0; k < K; ++k) {
            if (need_a) tp.grad_of(ia)[static_cast<std::size_t>(i) * K + k] += gij * bv[static_cast<std::size_t>(j) * K + k];
            if (need_b) tp.grad_of(ib)[static_cast<std::size_t>(j) * K + k] += gij * av[static_cast<std::size_t>(i) * K + k];
          }
        }
    };
  });
}

/// a [M,K] times b [K,N] -> [M,N].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  return dense(a, b);
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, int start, int width) {
  detail::require_rank(x, 2, "slice_cols");
  const int M = x.dim(0), N = x.dim(1);
  if (start < 0 || width < 0 || start + width > N) throw ShapeError("slice_cols: out of range");
  auto& tp = *x.tape();
  std::vector<T> v(static_cast<std::size_t>(M) * width);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < width; ++j)
      v[static_cast<std::size_t>(i) * width + j] = x.values()[static_cast<std::size_t>(i) * N + start + j];
  const auto ix = x.id();
  return detail::emit(tp, Shape{M, width}, std::move(v), {&x}, [&tp, ix, M, N, start, width](std::size_t out) {
    return [&tp, ix, out, M, N, start, width] {
      const auto& g = tp.grad_of(out);
      auto& gx = tp.grad_of(ix);
      for (int i = 0; i < M; ++i)
        for (int j = 0; j < width; ++j)
          gx[static_cast<std::size_t>(i) * N + start + j] += g[static_cast<std::size_t>(i) * width + j];
    };
  });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const int M = parts.front().dim(0);
  int N = 0;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_cols");
    if (p.dim(0) != M) throw ShapeError("concat_cols: row counts differ");
    N += p.dim(1);
  }
  auto& tp = *parts.front().tape();
  std::vector<T> v(static_cast<std::size_t>(M) * N);
  std::vector<std::pair<std::size_t, int>> src;  // (node id, width)
  bool rg = false;
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.dim(1);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < w; ++j)
        v[static_cast<std::size_t>(i) * N + off + j] = p.values()[static_cast<std::size_t>(i) * w + j];
    off += w;
    src.emplace_back(p.id(), w);
    rg = rg || p.requires_grad();
  }
  const std::size_t out = tp.size();
  std::function<void()> bw;
  if (rg && tp.grad_enabled()) {
    bw = [&tp, src, out, M, N] {
      const auto& g = tp.grad_of(out);
      int off = 0;
      for (const auto& [id, w] : src) {
        if (tp.node(id).requires_grad) {
          auto& gp = tp.grad_of(id);
          for (int i = 0; i < M; ++i)
            for (int j = 0; j < w; ++j)
              gp[static_cast<std::size_t>(i) * w + j] += g[static_cast<std::size_t>(i) * N + off + j];
        }
        off += w;
      }
    };
  }
  return Tensor<T>(&tp, tp.push(Shape{M, N}, std::move(v), rg, std::move(bw)));
}

/// Rows [start, start+count) along the leading axis; trailing axes kept.
template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, int start, int count) {
  if (x.shape().empty()) throw ShapeError("slice_rows on a scalar");
  const int M = x.dim(0);
  if (start < 0 || count < 0 || start + count > M) throw ShapeError("slice_rows: out of range");
  const std::size_t stride = x.size() / static_cast<std::size_t>(M);
  Shape shape = x.shape();
  shape[0] = count;
  auto& tp = *x.tape();
  std::vector<T> v(x.values().begin() + static_cast<std::ptrdiff_t>(start * stride),
                   x.values().begin() + static_cast<std::ptrdiff_t>((start + count) * stride));
  const auto ix = x.id();
  return detail::emit(tp, std::move(shape), std::move(v), {&x}, [&tp, ix, start, stride](std::size_t out) {
    return [&tp, ix, out, start, stride] {
      const auto& g = tp.grad_of(out);
      auto& gx = tp.grad_of(ix);
      const std::size_t base = static_cast<std::size_t>(start) * stride;
      for (std::size_t i = 0; i < g.size(); ++i) gx[base + i] += g[i];
    };
  });
}

/// Additive logit used for masked keys; exp() of it underflows to exactly 0.
inline constexpr double kMaskedLogit = -1e30;

/// Row-wise softmax of [M,N] logits. Columns with key_mask == 0 receive a
/// -1e30 logit, so their probability is exactly zero.
template <class T>
Tensor<T> masked_softmax_rows(const Tensor<T>& x, std::span<const std::uint8_t> key_mask) {
  detail::require_rank(x, 2, "masked_softmax_rows");
  const int M = x.dim(0), N = x.dim(1);
  if (!key_mask.empty() && static_cast<int>(key_mask.size()) != N)
    throw ShapeError("masked_softmax_rows: mask length differs from key count");
  if (!key_mask.empty() && std::none_of(key_mask.begin(), key_mask.end(), [](auto m) { return m != 0; }))
    throw AllMasked("every key position is masked");
  auto& tp = *x.tape();
  std::vector<T> v(static_cast<std::size_t>(M) * N);
  for (int i = 0; i < M; ++i) {
    T* row = &v[static_cast<std::size_t>(i) * N];
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < N; ++j) {
      const bool masked = !key_mask.empty() && key_mask[static_cast<std::size_t>(j)] == 0;
      row[j] = masked ? x.values()[static_cast<std::size_t>(i) * N + j] + static_cast<T>(kMaskedLogit)
                      : x.values()[static_cast<std::size_t>(i) * N + j];
      mx = std::max(mx, row[j]);
    }
    T sum = T(0);
    for (int j = 0; j < N; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < N; ++j) row[j] /= sum;
  }
  const auto ix = x.id();
  return detail::emit(tp, Shape{M, N}, std::move(v), {&x}, [&tp, ix, M, N](std::size_t out) {
    return [&tp, ix, out, M, N] {
      const auto& g = tp.grad_of(out);
      const auto& p = tp.node(out).value;
      auto& gx = tp.grad_of(ix);
      for (int i = 0; i < M; ++i) {
        const std::size_t r = static_cast<std::size_t>(i) * N;
        T dot = T(0);
        for (int j = 0; j < N; ++j) dot += p[r + j] * g[r + j];
        for (int j = 0; j < N; ++j) gx[r + j] += p[r + j] * (g[r + j] - dot);
      }
    };
  });
}

/// Per-row normalisation to zero mean / unit variance, then gain * x + bias.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
  detail::require_rank(x, 2, "layer_norm");
  const int M = x.dim(0), D = x.dim(1);
  if (static_cast<int>(gain.size()) != D || static_cast<int>(bias.size()) != D)
    throw ShapeError("layer_norm: gain/bias length differs from row width");
  auto& tp = *x.tape();
  std::vector<T> v(x.size());
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(static_cast<std::size_t>(M));
  const auto& xv = x.values();
  for (int i = 0; i < M; ++i) {
    const std::size_t r = static_cast<std::size_t>(i) * D;
    T mean = T(0);
    for (int j = 0; j < D; ++j) mean += xv[r + j];
    mean /= static_cast<T>(D);
    T var = T(0);
    for (int j = 0; j < D; ++j) var += (xv[r + j] - mean) * (xv[r + j] - mean);
    var /= static_cast<T>(D);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < D; ++j) {
      xhat[r + j] = (xv[r + j] - mean) * is;
      v[r + j] = gain.values()[static_cast<std::size_t>(j)] * xhat[r + j] + bias.values()[static_cast<std::size_t>(j)];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return detail::emit(tp, x.shape(), std::move(v), {&x, &gain, &bias},
                      [&tp, ix, ig, ib, M, D, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::size_t out) {
                        return [&tp, ix, ig, ib, out, M, D, xhat, inv_std] {
                          const auto& g = tp.grad_of(out);
                          const auto& gv = tp.node(ig).value;
                          for (int i = 0; i < M; ++i) {
                            const std::size_t r = static_cast<std::size_t>(i) * D;
                            if (tp.node(ig).requires_grad)
                              for (int j = 0; j < D; ++j) tp.grad_of(ig)[static_cast<std::size_t>(j)] += g[r + j] * xhat[r + j];
                            if (tp.node(ib).requires_grad)
                              for (int j = 0; j < D; ++j) tp.grad_of(ib)[static_cast<std::size_t>(j)] += g[r + j];
                            if (!tp.node(ix).requires_grad) continue;
                            T mean_d = T(0), mean_dx = T(0);
                            for (int j = 0; j < D; ++j) {
                              const T d = g[r + j] * gv[static_cast<std::size_t>(j)];
                              mean_d += d;
                              mean_dx += d * xhat[r + j];
                            }
                            mean_d /= static_cast<T>(D);
                            mean_dx /= static_cast<T>(D);
                            auto& gx = tp.grad_of(ix);
                            for (int j = 0; j < D; ++j) {
                              const T d = g[r + j] * gv[static_cast<std::size_t>(j)];
                              gx[r + j] += inv_std[static_cast<std::size_t>(i)] * (d - mean_d - xhat[r + j] * mean_dx);
                            }
                          }
                        };
                      });
}

/// Inverted dropout: kept entries are scaled by 1/(1-rate). Identity when
/// not training or rate == 0.
template <class T, class Rng>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  auto& tp = *x.tape();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& m : mask) m = u(rng) >= rate ? keep_scale : T(0);
  std::vector<T> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.values()[i] * mask[i];
  const auto ix = x.id();
  return detail::emit(tp, x.shape(), std::move(v), {&x}, [&tp, ix, mask = std::move(mask)](std::size_t out) {
    return [&tp, ix, out, mask] {
      const auto& g = tp.grad_of(out);
      auto& gx = tp.grad_of(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    };
  });
}

/// Mean over entries whose mask is set; x holds one value per mask entry.
template <class T>
Tensor<T> masked_mean(const Tensor<T>& x, std::span<const std::uint8_t> mask) {
  if (mask.size() != x.size()) throw ShapeError("masked_mean: mask length differs from tensor size");
  std::size_t count = 0;
  T acc = T(0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      acc += x.values()[i];
      ++count;
    }
  if (count == 0) throw EmptyInput("masked_mean: no valid entries");
  auto& tp = *x.tape();
  const T inv = T(1) / static_cast<T>(count);
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  const auto ix = x.id();
  return detail::emit(tp, Shape{1}, std::vector<T>{acc * inv}, {&x}, [&tp, ix, inv, m = std::move(m)](std::size_t out) {
    return [&tp, ix, out, inv, m] {
      const T g = tp.grad_of(out)[0];
      auto& gx = tp.grad_of(ix);
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) gx[i] += g * inv;
    };
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (const T& v : x.values()) acc += v;
  auto& tp = *x.tape();
  const auto ix = x.id();
  return detail::emit(tp, Shape{1}, std::vector<T>{acc}, {&x}, [&tp, ix](std::size_t out) {
    return [&tp, ix, out] {
      const T g = tp.grad_of(out)[0];
      for (auto& gx : tp.grad_of(ix)) gx += g;
    };
  });
}

/// Elementwise product; used by tests to build weighted scalar objectives.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_tape(a, b);
  if (a.shape() != b.shape()) throw ShapeError("mul: shape mismatch");
  auto& tp = *a.tape();
  std::vector<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
  const auto ia = a.id(), ib = b.id();
  return detail::emit(tp, a.shape(), std::move(v), {&a, &b}, [&tp, ia, ib](std::size_t out) {
    return [&tp, ia, ib, out] {
      const auto& g = tp.grad_of(out);
      const auto& av = tp.node(ia).value;
      const auto& bv = tp.node(ib).value;
      if (tp.node(ia).requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) tp.grad_of(ia)[i] += g[i] * bv[i];
      if (tp.node(ib).requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) tp.grad_of(ib)[i] += g[i] * av[i];
    };
  });
}

}  // namespace ccat::nn
