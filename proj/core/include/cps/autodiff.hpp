#pragma once

// Tape-based reverse-mode automatic differentiation over dense tensors.
//
// Every operation appends one node holding its forward value and a closure that
// scatters the node's gradient into its parents. backward() walks the tape in
// reverse creation order, so accumulation order is fixed and results are
// bitwise reproducible.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cps/errors.hpp"
#include "cps/tensor.hpp"

namespace cps::ad {

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor<T> value) { return push(std::move(value), false, {}); }
  Var variable(Tensor<T> value) { return push(std::move(value), true, {}); }

  /// Records an operation result. The node needs a gradient iff any parent does.
  Var record(Tensor<T> value, std::initializer_list<Var> parents, BackwardFn fn) {
    bool needs = false;
    for (auto p : parents) needs = needs || nodes_.at(p.id).requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient accumulated into `v` by the last backward(); zeros if none reached it.
  Tensor<T> grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    if (n.grad.empty()) return Tensor<T>(n.value.shape());
    return n.grad;
  }

  /// Accumulation buffer for `v`, allocated on first use.
  Tensor<T>& grad_buffer(Var v) { return grad_buffer(v.id); }
  Tensor<T>& grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  const Tensor<T>& upstream(std::size_t id) const { return nodes_[id].grad; }

  void backward(Var root) {
    auto& r = nodes_.at(root.id);
    if (r.value.size() != 1) throw ShapeError("backward() needs a scalar root");
    for (auto& n : nodes_) n.grad = Tensor<T>();
    if (!r.requires_grad) return;
    grad_buffer(root.id)[0] = T{1};
    for (std::size_t i = root.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, i);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), requires_grad, std::move(fn)});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape " + shape_string(a) + " vs " + shape_string(b));
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(s));
  }
}

template <typename T>
void accumulate(Tape<T>& tape, Var target, std::span<const T> g) {
  if (!tape.requires_grad(target)) return;
  auto dst = tape.grad_buffer(target).data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace detail

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  detail::require_same_shape(av.shape(), bv.shape(), "add");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto g = t.upstream(self);
    detail::accumulate<T>(t, a, g.data());
    detail::accumulate<T>(t, b, g.data());
  });
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  detail::require_same_shape(av.shape(), bv.shape(), "sub");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    auto g = t.upstream(self);
    detail::accumulate<T>(t, a, g.data());
    for (auto& x : g.data()) x = -x;
    detail::accumulate<T>(t, b, g.data());
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T factor) {
  Tensor<T> out = tape.value(a);
  for (auto& x : out.data()) x *= factor;
  return tape.record(std::move(out), {a}, [a, factor](Tape<T>& t, std::size_t self) {
    auto g = t.upstream(self);
    for (auto& x : g.data()) x *= factor;
    detail::accumulate<T>(t, a, g.data());
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var a, Shape shape) {
  Tensor<T> out = tape.value(a).reshaped(std::move(shape));
  return tape.record(std::move(out), {a}, [a](Tape<T>& t, std::size_t self) {
    detail::accumulate<T>(t, a, t.upstream(self).data());
  });
}

/// Contiguous slice [offset, offset + product(shape)) of a tensor's flat data, reshaped.
template <typename T>
Var slice(Tape<T>& tape, Var flat, std::size_t offset, Shape shape) {
  const auto& src = tape.value(flat);
  const std::size_t n = shape_size(shape);
  if (offset + n > src.size()) throw ShapeError("slice exceeds source length");
  std::vector<T> data(src.data().begin() + static_cast<std::ptrdiff_t>(offset),
                      src.data().begin() + static_cast<std::ptrdiff_t>(offset + n));
  Tensor<T> out(std::move(shape), std::move(data));
  return tape.record(std::move(out), {flat}, [flat, offset](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(flat)) return;
    const auto& g = t.upstream(self);
    auto dst = t.grad_buffer(flat).data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[offset + i] += g[i];
  });
}

/// y[b, o] = sum_i x[b, i] * w[o, i]
template <typename T>
Var matmul_nt(Tape<T>& tape, Var x, Var w) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(w);
  detail::require_rank(xv.shape(), 2, "matmul_nt");
  detail::require_rank(wv.shape(), 2, "matmul_nt");
  const std::size_t rows = xv.dim(0), in = xv.dim(1), outs = wv.dim(0);
  if (wv.dim(1) != in) throw ShapeError("matmul_nt: inner dimensions " + shape_string(xv.shape()) + " x " + shape_string(wv.shape()));
  Tensor<T> out({rows, outs});
  for (std::size_t b = 0; b < rows; ++b) {
    const T* xr = &xv[b * in];
    for (std::size_t o = 0; o < outs; ++o) {
      const T* wr = &wv[o * in];
      T acc{0};
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      out[b * outs + o] = acc;
    }
  }
  return tape.record(std::move(out), {x, w}, [x, w, rows, in, outs](Tape<T>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    const auto& xv = t.value(x);
    const auto& wv = t.value(w);
    if (t.requires_grad(x)) {
      auto& gx = t.grad_buffer(x);
      for (std::size_t b = 0; b < rows; ++b)
        for (std::size_t o = 0; o < outs; ++o) {
          const T go = g[b * outs + o];
          for (std::size_t i = 0; i < in; ++i) gx[b * in + i] += go * wv[o * in + i];
        }
    }
    if (t.requires_grad(w)) {
      auto& gw = t.grad_buffer(w);
      for (std::size_t b = 0; b < rows; ++b)
        for (std::size_t o = 0; o < outs; ++o) {
          const T go = g[b * outs + o];
          for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += go * xv[b * in + i];
        }
    }
  });
}

/// Adds bias[c] along axis 1 of a (batch, channels, ...) tensor.
template <typename T>
Var add_channel_bias(Tape<T>& tape, Var x, Var bias) {
  const auto& xv = tape.value(x);
  const auto& bv = tape.value(bias);
  if (xv.rank() < 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw ShapeError("add_channel_bias: " + shape_string(xv.shape()) + " + " + shape_string(bv.shape()));
  }
  const std::size_t rows = xv.dim(0), channels = xv.dim(1), inner = xv.size() / (rows * channels);
  Tensor<T> out = xv;
  for (std::size_t b = 0; b < rows; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t k = 0; k < inner; ++k) out[(b * channels + c) * inner + k] += bv[c];
  return tape.record(std::move(out), {x, bias}, [x, bias, rows, channels, inner](Tape<T>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    detail::accumulate<T>(t, x, g.data());
    if (t.requires_grad(bias)) {
      auto& gb = t.grad_buffer(bias);
      for (std::size_t b = 0; b < rows; ++b)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t k = 0; k < inner; ++k) gb[c] += g[(b * channels + c) * inner + k];
    }
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data()) v = (v > T{0} || std::isnan(v)) ? v : T{0};  // NaN passes through
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, std::size_t self) {
    auto g = t.upstream(self);
    const auto& xv = t.value(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(xv[i] > T{0})) g[i] = T{0};
    detail::accumulate<T>(t, x, g.data());
  });
}

/// Stride-1 convolution with zero padding that preserves spatial size.
/// x: (B, C, H, W), w: (O, C, K, K) with odd K.
template <typename T>
Var conv2d_same(Tape<T>& tape, Var x, Var w) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(w);
  detail::require_rank(xv.shape(), 4, "conv2d_same");
  detail::require_rank(wv.shape(), 4, "conv2d_same");
  const std::size_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::size_t O = wv.dim(0), K = wv.dim(2);
  if (wv.dim(1) != C || wv.dim(3) != K || K % 2 == 0) {
    throw ShapeError("conv2d_same: input " + shape_string(xv.shape()) + " kernel " + shape_string(wv.shape()));
  }
  const auto pad = static_cast<std::ptrdiff_t>(K / 2);
  const auto Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);
  Tensor<T> out({B, O, H, W});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::ptrdiff_t i = 0; i < Hs; ++i)
        for (std::ptrdiff_t j = 0; j < Ws; ++j) {
          T acc{0};
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < K; ++ki) {
              const std::ptrdiff_t si = i + static_cast<std::ptrdiff_t>(ki) - pad;
              if (si < 0 || si >= Hs) continue;
              for (std::size_t kj = 0; kj < K; ++kj) {
                const std::ptrdiff_t sj = j + static_cast<std::ptrdiff_t>(kj) - pad;
                if (sj < 0 || sj >= Ws) continue;
                acc += xv[((b * C + c) * H + static_cast<std::size_t>(si)) * W + static_cast<std::size_t>(sj)] *
                       wv[((o * C + c) * K + ki) * K + kj];
              }
            }
          out[((b * O + o) * H + static_cast<std::size_t>(i)) * W + static_cast<std::size_t>(j)] = acc;
        }
  return tape.record(std::move(out), {x, w}, [x, w, B, C, H, W, O, K, pad](Tape<T>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    const auto& xv = t.value(x);
    const auto& wv = t.value(w);
    const bool need_x = t.requires_grad(x), need_w = t.requires_grad(w);
    Tensor<T>* gx = need_x ? &t.grad_buffer(x) : nullptr;
    Tensor<T>* gw = need_w ? &t.grad_buffer(w) : nullptr;
    const auto Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < O; ++o)
        for (std::ptrdiff_t i = 0; i < Hs; ++i)
          for (std::ptrdiff_t j = 0; j < Ws; ++j) {
            const T go = g[((b * O + o) * H + static_cast<std::size_t>(i)) * W + static_cast<std::size_t>(j)];
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t ki = 0; ki < K; ++ki) {
                const std::ptrdiff_t si = i + static_cast<std::ptrdiff_t>(ki) - pad;
                if (si < 0 || si >= Hs) continue;
                for (std::size_t kj = 0; kj < K; ++kj) {
                  const std::ptrdiff_t sj = j + static_cast<std::ptrdiff_t>(kj) - pad;
                  if (sj < 0 || sj >= Ws) continue;
                  const std::size_t xi =
                      ((b * C + c) * H + static_cast<std::size_t>(si)) * W + static_cast<std::size_t>(sj);
                  const std::size_t wi = ((o * C + c) * K + ki) * K + kj;
                  if (gx) (*gx)[xi] += go * wv[wi];
                  if (gw) (*gw)[wi] += go * xv[xi];
                }
              }
          }
  });
}

/// 2x2 max pooling with stride 2 over (B, C, H, W); odd trailing rows/columns are dropped.
/// Ties resolve to the first maximum in row-major window order.
template <typename T>
Var maxpool2(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  detail::require_rank(xv.shape(), 4, "maxpool2");
  const std::size_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  if (H < 2 || W < 2) throw ShapeError("maxpool2: spatial size below 2 in " + shape_string(xv.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor<T> out({B, C, Ho, Wo});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t bc = 0; bc < B * C; ++bc)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        std::size_t best = (bc * H + 2 * i) * W + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (bc * H + 2 * i + di) * W + 2 * j + dj;
            if (xv[idx] > xv[best] || (std::isnan(xv[idx]) && !std::isnan(xv[best]))) best = idx;
          }
        const std::size_t o = (bc * Ho + i) * Wo + j;
        out[o] = xv[best];
        argmax[o] = best;
      }
  return tape.record(std::move(out), {x}, [x, argmax = std::move(argmax)](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(x)) return;
    const auto& g = t.upstream(self);
    auto& gx = t.grad_buffer(x);
    for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
  });
}

/// (B, C, H, W) -> (B, C), mean over spatial positions.
template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  detail::require_rank(xv.shape(), 4, "global_avg_pool");
  const std::size_t BC = xv.dim(0) * xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  Tensor<T> out({xv.dim(0), xv.dim(1)});
  for (std::size_t k = 0; k < BC; ++k) {
    T acc{0};
    for (std::size_t p = 0; p < HW; ++p) acc += xv[k * HW + p];
    out[k] = acc / static_cast<T>(HW);
  }
  return tape.record(std::move(out), {x}, [x, BC, HW](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(x)) return;
    const auto& g = t.upstream(self);
    auto& gx = t.grad_buffer(x);
    for (std::size_t k = 0; k < BC; ++k) {
      const T share = g[k] / static_cast<T>(HW);
      for (std::size_t p = 0; p < HW; ++p) gx[k * HW + p] += share;
    }
  });
}

/// Mean of all elements, shape {1}.
template <typename T>
Var mean_all(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  T acc{0};
  for (const T v : xv.data()) acc += v;
  const auto n = static_cast<T>(xv.size());
  Tensor<T> out({1}, std::vector<T>{acc / n});
  return tape.record(std::move(out), {x}, [x, n](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(x)) return;
    const T share = t.upstream(self)[0] / n;
    for (auto& v : t.grad_buffer(x).data()) v += share;
  });
}

/// (B, D) -> (1, D), mean over rows.
template <typename T>
Var mean_rows(Tape<T>& tape, Var x) {
  const auto& xv = tape.value(x);
  detail::require_rank(xv.shape(), 2, "mean_rows");
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor<T> out({1, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += xv[r * cols + c];
  for (auto& v : out.data()) v /= static_cast<T>(rows);
  return tape.record(std::move(out), {x}, [x, rows, cols](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(x)) return;
    const auto& g = t.upstream(self);
    auto& gx = t.grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c] / static_cast<T>(rows);
  });
}

namespace detail {

/// Row-wise log-softmax with max subtraction.
template <typename T>
std::vector<T> log_softmax_rows(const Tensor<T>& logits) {
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  std::vector<T> out(logits.size());
  for (std::size_t b = 0; b < rows; ++b) {
    const T* z = &logits[b * classes];
    T m = z[0];
    for (std::size_t c = 1; c < classes; ++c) m = std::max(m, z[c]);
    T s{0};
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(z[c] - m);
    const T lse = m + std::log(s);
    for (std::size_t c = 0; c < classes; ++c) out[b * classes + c] = z[c] - lse;
  }
  return out;
}

}  // namespace detail

/// Mean negative log-likelihood of `labels` under softmax(logits); shape {1}.
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const int> labels) {
  const auto& z = tape.value(logits);
  detail::require_rank(z.shape(), 2, "cross_entropy");
  const std::size_t rows = z.dim(0), classes = z.dim(1);
  if (labels.size() != rows) throw ShapeError("cross_entropy: label count does not match batch");
  for (const int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  auto logp = detail::log_softmax_rows(z);
  T acc{0};
  for (std::size_t b = 0; b < rows; ++b) acc -= logp[b * classes + static_cast<std::size_t>(labels[b])];
  Tensor<T> out({1}, std::vector<T>{acc / static_cast<T>(rows)});
  std::vector<int> ys(labels.begin(), labels.end());
  return tape.record(std::move(out), {logits},
                     [logits, rows, classes, ys = std::move(ys), logp = std::move(logp)](Tape<T>& t, std::size_t self) {
                       if (!t.requires_grad(logits)) return;
                       const T g = t.upstream(self)[0] / static_cast<T>(rows);
                       auto& gz = t.grad_buffer(logits);
                       for (std::size_t b = 0; b < rows; ++b)
                         for (std::size_t c = 0; c < classes; ++c) {
                           const T p = std::exp(logp[b * classes + c]);
                           const T onehot = static_cast<std::size_t>(ys[b]) == c ? T{1} : T{0};
                           gz[b * classes + c] += g * (p - onehot);
                         }
                     });
}

/// Cross-entropy against per-row probability targets (rows of `targets` sum to 1).
template <typename T>
Var soft_cross_entropy(Tape<T>& tape, Var logits, const Tensor<T>& targets) {
  const auto& z = tape.value(logits);
  detail::require_rank(z.shape(), 2, "soft_cross_entropy");
  detail::require_same_shape(z.shape(), targets.shape(), "soft_cross_entropy");
  const std::size_t rows = z.dim(0), classes = z.dim(1);
  auto logp = detail::log_softmax_rows(z);
  T acc{0};
  for (std::size_t k = 0; k < z.size(); ++k) acc -= targets[k] * logp[k];
  Tensor<T> out({1}, std::vector<T>{acc / static_cast<T>(rows)});
  return tape.record(std::move(out), {logits},
                     [logits, rows, classes, targets, logp = std::move(logp)](Tape<T>& t, std::size_t self) {
                       if (!t.requires_grad(logits)) return;
                       const T g = t.upstream(self)[0] / static_cast<T>(rows);
                       auto& gz = t.grad_buffer(logits);
                       for (std::size_t b = 0; b < rows; ++b) {
                         T mass{0};
                         for (std::size_t c = 0; c < classes; ++c) mass += targets[b * classes + c];
                         for (std::size_t c = 0; c < classes; ++c) {
                           const std::size_t k = b * classes + c;
                           gz[k] += g * (mass * std::exp(logp[k]) - targets[k]);
                         }
                       }
                     });
}

/// mean((a - target)^2) over all elements; `target` is a constant. Shape {1}.
template <typename T>
Var mean_squared_error(Tape<T>& tape, Var a, const Tensor<T>& target) {
  const auto& av = tape.value(a);
  detail::require_same_shape(av.shape(), target.shape(), "mean_squared_error");
  T acc{0};
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T d = av[i] - target[i];
    acc += d * d;
  }
  const auto n = static_cast<T>(av.size());
  Tensor<T> out({1}, std::vector<T>{acc / n});
  return tape.record(std::move(out), {a}, [a, target, n](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(a)) return;
    const T g = t.upstream(self)[0];
    const auto& av = t.value(a);
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] += g * T{2} * (av[i] - target[i]) / n;
  });
}

/// 1 - <a, b> / (|a| |b|) over the flattened tensors. Shape {1}.
template <typename T>
Var cosine_distance(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.size() != bv.size()) throw ShapeError("cosine_distance: length mismatch");
  T dot{0}, aa{0}, bb{0};
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  if (!(aa > T{0}) || !(bb > T{0})) throw NumericError("cosine_distance: zero-norm vector");
  const T na = std::sqrt(aa), nb = std::sqrt(bb);
  const T cos = dot / (na * nb);
  Tensor<T> out({1}, std::vector<T>{T{1} - cos});
  return tape.record(std::move(out), {a, b}, [a, b, dot, aa, bb, na, nb](Tape<T>& t, std::size_t self) {
    const T g = t.upstream(self)[0];
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    // d(1 - cos)/da = -(b / (|a||b|) - dot * a / (|a|^3 |b|))
    if (t.requires_grad(a)) {
      auto& ga = t.grad_buffer(a);
      const T inv = T{1} / (na * nb);
      const T k = dot / (aa * na * nb);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] -= g * (bv[i] * inv - k * av[i]);
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad_buffer(b);
      const T inv = T{1} / (na * nb);
      const T k = dot / (bb * na * nb);
      for (std::size_t i = 0; i < bv.size(); ++i) gb[i] -= g * (av[i] * inv - k * bv[i]);
    }
  });
}

}  // namespace cps::ad
