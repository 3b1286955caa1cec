#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "deepheart/errors.hpp"
#include "deepheart/rng.hpp"
#include "deepheart/tensor.hpp"

namespace deepheart::autodiff {

template <typename T>
class Tape;

// Handle to a tensor recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const std::vector<std::size_t>& shape() const { return value().shape(); }
  std::size_t dim(std::size_t i) const { return value().dim(i); }
};

// Records primitive applications in execution order; backward() replays them
// in reverse, visiting each node once. A tape and its tensors belong to a
// single thread. With gradients disabled nothing is saved for backward.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, nullptr); }

  // Leaf that receives a gradient (used to check input gradients).
  Var<T> input(Tensor<T> value) { return push("input", std::move(value), grad_enabled_, nullptr); }

  // Parameter leaf referencing external storage; after backward its gradient
  // can be added into a sink at index `slot`.
  Var<T> bind(const Tensor<T>& external, std::size_t slot) {
    check_finite("parameter", external);
    Node node;
    node.op = "parameter";
    node.external = &external;
    node.requires_grad = grad_enabled_;
    node.slot = static_cast<std::ptrdiff_t>(slot);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
  }

  // Appends an op result. `backward` runs only if some input requires grad.
  Var<T> record(const char* op, Tensor<T> value, bool requires_grad, Backward backward) {
    check_finite(op, value);
    const bool needs = grad_enabled_ && requires_grad;
    return push(op, std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Tensor<T>& value(Var<T> v) const { return value(v.id); }
  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.own;
  }
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }

  // Gradient of the last backward() w.r.t. v; zeros if none reached it.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == value(v).size() && !n.grad.empty()) return n.grad;
    return Tensor<T>(value(v).shape());
  }

  // Mutable gradient buffer, allocated as zeros on first access.
  Tensor<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != value(id).size() || n.grad.empty()) n.grad = Tensor<T>(value(id).shape());
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  void backward(Var<T> loss) {
    if (value(loss).size() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar, got " +
                                  value(loss).shape_string());
    }
    if (!grad_enabled_) throw std::logic_error("backward: tape recorded without gradients");
    grad_buffer(loss.id)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (!n.grad.all_finite()) {
        throw NumericError(std::string("non-finite gradient flowing out of op '") + n.op + "'");
      }
      if (n.backward) n.backward(*this, i);
    }
  }

  // sink[slot] += gradient, for every parameter leaf reached by backward().
  void accumulate_parameter_grads(std::vector<Tensor<T>>& sink) const {
    for (const Node& n : nodes_) {
      if (n.slot < 0 || n.grad.empty()) continue;
      auto& dst = sink.at(static_cast<std::size_t>(n.slot));
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += n.grad[j];
    }
  }

 private:
  struct Node {
    const char* op = "";
    Tensor<T> own;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    std::ptrdiff_t slot = -1;
    Backward backward;
  };

  Var<T> push(const char* op, Tensor<T> value, bool requires_grad, Backward backward) {
    Node node;
    node.op = op;
    node.own = std::move(value);
    node.requires_grad = requires_grad;
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return {this, nodes_.size() - 1};
  }

  static void check_finite(const char* op, const Tensor<T>& t) {
    if (!t.all_finite()) {
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
  }

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op, const char* what) {
  require(t.rank() == 2, std::string(op) + ": " + what + " must be rank 2, got " + t.shape_string());
}

template <typename T>
bool any_grad(const Tape<T>& tape, std::initializer_list<Var<T>> vars) {
  for (auto v : vars) {
    if (tape.requires_grad(v)) return true;
  }
  return false;
}

template <typename T>
Tape<T>& tape_of(Var<T> v) {
  return *v.tape;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dense algebra

// [n x k] * [k x m] -> [n x m]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& tape = detail::tape_of(a);
  const auto& A = a.value();
  const auto& B = b.value();
  detail::require_rank2(A, "matmul", "lhs");
  detail::require_rank2(B, "matmul", "rhs");
  detail::require(A.dim(1) == B.dim(0),
                  "matmul: shape mismatch " + A.shape_string() + " x " + B.shape_string());
  const std::size_t n = A.dim(0), k = A.dim(1), m = B.dim(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    T* o = out.row(i);
    const T* arow = A.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = B.row(p);
      for (std::size_t j = 0; j < m; ++j) o[j] += av * brow[j];
    }
  }
  return tape.record("matmul", std::move(out), detail::any_grad(tape, {a, b}),
                     [a = a.id, b = b.id, n, k, m](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_buffer(self);
                       const auto& A = t.value(a);
                       const auto& B = t.value(b);
                       if (t.requires_grad(a)) {
                         auto& dA = t.grad_buffer(a);
                         for (std::size_t i = 0; i < n; ++i) {
                           const T* g = G.row(i);
                           for (std::size_t p = 0; p < k; ++p) {
                             const T* brow = B.row(p);
                             T acc{0};
                             for (std::size_t j = 0; j < m; ++j) acc += g[j] * brow[j];
                             dA.at(i, p) += acc;
                           }
                         }
                       }
                       if (t.requires_grad(b)) {
                         auto& dB = t.grad_buffer(b);
                         for (std::size_t i = 0; i < n; ++i) {
                           const T* g = G.row(i);
                           const T* arow = A.row(i);
                           for (std::size_t p = 0; p < k; ++p) {
                             const T av = arow[p];
                             T* db = dB.row(p);
                             for (std::size_t j = 0; j < m; ++j) db[j] += av * g[j];
                           }
                         }
                       }
                     });
}

// x [T x C] + b [C] broadcast over rows.
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> b) {
  auto& tape = detail::tape_of(x);
  const auto& X = x.value();
  const auto& B = b.value();
  detail::require_rank2(X, "add_bias", "input");
  detail::require(B.size() == X.dim(1), "add_bias: bias " + B.shape_string() +
                                            " does not match input " + X.shape_string());
  Tensor<T> out = X;
  const std::size_t rows = X.dim(0), cols = X.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    T* o = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) o[c] += B[c];
  }
  return tape.record("add_bias", std::move(out), detail::any_grad(tape, {x, b}),
                     [x = x.id, b = b.id, rows, cols](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_buffer(self);
                       if (t.requires_grad(x)) {
                         auto& dx = t.grad_buffer(x);
                         for (std::size_t j = 0; j < G.size(); ++j) dx[j] += G[j];
                       }
                       if (t.requires_grad(b)) {
                         auto& db = t.grad_buffer(b);
                         for (std::size_t r = 0; r < rows; ++r) {
                           const T* g = G.row(r);
                           for (std::size_t c = 0; c < cols; ++c) db[c] += g[c];
                         }
                       }
                     });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& tape = detail::tape_of(a);
  detail::require(a.shape() == b.shape(), "add: shape mismatch " + a.value().shape_string() +
                                              " vs " + b.value().shape_string());
  Tensor<T> out = a.value();
  const auto& B = b.value();
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += B[j];
  return tape.record("add", std::move(out), detail::any_grad(tape, {a, b}),
                     [a = a.id, b = b.id](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_buffer(self);
                       for (auto id : {a, b}) {
                         if (!t.requires_grad(id)) continue;
                         auto& d = t.grad_buffer(id);
                         for (std::size_t j = 0; j < G.size(); ++j) d[j] += G[j];
                       }
                     });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  auto& tape = detail::tape_of(x);
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v *= factor;
  return tape.record("scale", std::move(out), tape.requires_grad(x),
                     [x = x.id, factor](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_buffer(self);
                       auto& d = t.grad_buffer(x);
                       for (std::size_t j = 0; j < G.size(); ++j) d[j] += factor * G[j];
                     });
}

// ---------------------------------------------------------------------------
// Elementwise activations

namespace detail {

// out = f(x); dx += g * dfdy(y) where the derivative is expressed in terms of
// the output y.
template <typename T, typename F, typename D>
Var<T> unary(const char* op, Var<T> x, F f, D dfdy) {
  auto& tape = tape_of(x);
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = f(v);
  return tape.record(op, std::move(out), tape.requires_grad(x),
                     [x = x.id, dfdy](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_buffer(self);
                       const auto& Y = t.value(self);
                       auto& d = t.grad_buffer(x);
                       for (std::size_t j = 0; j < G.size(); ++j) d[j] += G[j] * dfdy(Y[j]);
                     });
}

template <typename T>
T sigmoid(T v) {
  return T{1} / (T{1} + std::exp(-v));
}

}  // namespace detail

template <typename T>
Var<T> tanh(Var<T> x) {
  return detail::unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary<T>(
      "sigmoid", x, [](T v) { return detail::sigmoid(v); }, [](T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return detail::unary<T>(
      "relu", x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T y) { return y > T{0} ? T{1} : T{0}; });
}

// ---------------------------------------------------------------------------
// Sequence plumbing

// [T x C1] ++ [T x C2] -> [T x (C1 + C2)]
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  auto& tape = detail::tape_of(a);
  const auto& A = a.value();
  const auto& B = b.value();
  detail::require_rank2(A, "concat_channels", "lhs");
  detail::require_rank2(B, "concat_channels", "rhs");
  detail::require(A.dim(0) == B.dim(0), "concat_channels: length mismatch " + A.shape_string() +
                                            " vs " + B.shape_string());
  const std::size_t rows = A.dim(0), ca = A.dim(1), cb = B.dim(1);
  Tensor<T> out({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(A.row(r), A.row(r) + ca, out.row(r));
    std::copy(B.row(r), B.row(r) + cb, out.row(r) + ca);
  }
  return tape.record("concat_channels", std::move(out), detail::any_grad(tape, {a, b}),
                     [a = a.id, b = b.id, rows, ca, cb](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_buffer(self);
                       if (t.requires_grad(a)) {
                         auto& d = t.grad_buffer(a);
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < ca; ++c) d.at(r, c) += G.at(r, c);
                         }
                       }
                       if (t.requires_grad(b)) {
                         auto& d = t.grad_buffer(b);
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < cb; ++c) d.at(r, c) += G.at(r, ca + c);
                         }
                       }
                     });
}

template <typename T>
Var<T> reverse_time(Var<T> x) {
  auto& tape = detail::tape_of(x);
  const auto& X = x.value();
  detail::require_rank2(X, "reverse_time", "input");
  const std::size_t rows = X.dim(0), cols = X.dim(1);
  Tensor<T> out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) std::copy(X.row(r), X.row(r) + cols, out.row(rows - 1 - r));
  return tape.record("reverse_time", std::move(out), tape.requires_grad(x),
                     [x = x.id, rows, cols](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_buffer(self);
                       auto& d = t.grad_buffer(x);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const T* g = G.row(rows - 1 - r);
                         T* dr = d.row(r);
                         for (std::size_t c = 0; c < cols; ++c) dr[c] += g[c];
                       }
                     });
}

// Repeats every timestep `factor` times and keeps the first out_len rows.
template <typename T>
Var<T> nearest_upsample1d(Var<T> x, std::size_t factor, std::size_t out_len) {
  auto& tape = detail::tape_of(x);
  const auto& X = x.value();
  detail::require_rank2(X, "nearest_upsample1d", "input");
  detail::require(factor >= 1, "nearest_upsample1d: factor must be >= 1");
  detail::require(out_len <= X.dim(0) * factor,
                  "nearest_upsample1d: out_len exceeds length x factor");
  const std::size_t cols = X.dim(1);
  Tensor<T> out({out_len, cols});
  for (std::size_t r = 0; r < out_len; ++r) std::copy(X.row(r / factor), X.row(r / factor) + cols, out.row(r));
  return tape.record("nearest_upsample1d", std::move(out), tape.requires_grad(x),
                     [x = x.id, factor, out_len, cols](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_buffer(self);
                       auto& d = t.grad_buffer(x);
                       for (std::size_t r = 0; r < out_len; ++r) {
                         const T* g = G.row(r);
                         T* dr = d.row(r / factor);
                         for (std::size_t c = 0; c < cols; ++c) dr[c] += g[c];
                       }
                     });
}

// ---------------------------------------------------------------------------
// Temporal convolution and pooling

// x [T x Cin], w [F x Cin x Cout], b [Cout] -> [T x Cout], zero "same"
// padding: floor((F-1)/2) rows before, the rest after.
template <typename T>
Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b) {
  auto& tape = detail::tape_of(x);
  const auto& X = x.value();
  const auto& W = w.value();
  const auto& B = b.value();
  detail::require_rank2(X, "conv1d", "input");
  detail::require(W.rank() == 3 && W.dim(1) == X.dim(1) && B.size() == W.dim(2),
                  "conv1d: shape mismatch, input " + X.shape_string() + " weight " +
                      W.shape_string() + " bias " + B.shape_string());
  const std::size_t len = X.dim(0), cin = W.dim(1), cout = W.dim(2), filter = W.dim(0);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((filter - 1) / 2);
  Tensor<T> out({len, cout});
  for (std::size_t t = 0; t < len; ++t) {
    T* o = out.row(t);
    for (std::size_t j = 0; j < cout; ++j) o[j] = B[j];
    for (std::size_t f = 0; f < filter; ++f) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + f) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      const T* xr = X.row(static_cast<std::size_t>(src));
      const T* wf = W.data() + f * cin * cout;
      for (std::size_t c = 0; c < cin; ++c) {
        const T xv = xr[c];
        const T* wr = wf + c * cout;
        for (std::size_t j = 0; j < cout; ++j) o[j] += xv * wr[j];
      }
    }
  }
  return tape.record(
      "conv1d", std::move(out), detail::any_grad(tape, {x, w, b}),
      [x = x.id, w = w.id, b = b.id, len, cin, cout, filter, pad](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        const auto& X = t.value(x);
        const auto& W = t.value(w);
        if (t.requires_grad(b)) {
          auto& db = t.grad_buffer(b);
          for (std::size_t r = 0; r < len; ++r) {
            const T* g = G.row(r);
            for (std::size_t j = 0; j < cout; ++j) db[j] += g[j];
          }
        }
        const bool need_x = t.requires_grad(x);
        const bool need_w = t.requires_grad(w);
        Tensor<T>* dx = need_x ? &t.grad_buffer(x) : nullptr;
        Tensor<T>* dw = need_w ? &t.grad_buffer(w) : nullptr;
        for (std::size_t r = 0; r < len; ++r) {
          const T* g = G.row(r);
          for (std::size_t f = 0; f < filter; ++f) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(r + f) - pad;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
            const auto s = static_cast<std::size_t>(src);
            const T* xr = X.row(s);
            const T* wf = W.data() + f * cin * cout;
            T* dxr = need_x ? dx->row(s) : nullptr;
            T* dwf = need_w ? dw->data() + f * cin * cout : nullptr;
            for (std::size_t c = 0; c < cin; ++c) {
              if (need_x) {
                const T* wr = wf + c * cout;
                T acc{0};
                for (std::size_t j = 0; j < cout; ++j) acc += g[j] * wr[j];
                dxr[c] += acc;
              }
              if (need_w) {
                const T xv = xr[c];
                T* dwr = dwf + c * cout;
                for (std::size_t j = 0; j < cout; ++j) dwr[j] += xv * g[j];
              }
            }
          }
        }
      });
}

template <typename T>
struct PoolResult {
  Tensor<T> output;                  // [ceil(T / pool) x C]
  std::vector<std::size_t> argmax;  // source row for each output element
};

// Non-overlapping max pooling; a trailing partial window is pooled as is.
// Ties resolve to the earliest row.
template <typename T>
PoolResult<T> maxpool1d_forward(const Tensor<T>& X, std::size_t pool) {
  detail::require_rank2(X, "maxpool1d", "input");
  detail::require(pool >= 1, "maxpool1d: pool must be >= 1");
  const std::size_t len = X.dim(0), cols = X.dim(1);
  const std::size_t out_len = (len + pool - 1) / pool;
  PoolResult<T> r{Tensor<T>({out_len, cols}), std::vector<std::size_t>(out_len * cols)};
  for (std::size_t o = 0; o < out_len; ++o) {
    const std::size_t begin = o * pool, end = std::min(len, begin + pool);
    T* out = r.output.row(o);
    std::size_t* idx = r.argmax.data() + o * cols;
    const T* first = X.row(begin);
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = first[c];
      idx[c] = begin;
    }
    for (std::size_t s = begin + 1; s < end; ++s) {
      const T* xr = X.row(s);
      for (std::size_t c = 0; c < cols; ++c) {
        if (xr[c] > out[c]) {
          out[c] = xr[c];
          idx[c] = s;
        }
      }
    }
  }
  return r;
}

template <typename T>
Var<T> maxpool1d(Var<T> x, std::size_t pool) {
  auto& tape = detail::tape_of(x);
  auto result = maxpool1d_forward(x.value(), pool);
  const std::size_t cols = x.dim(1);
  return tape.record("maxpool1d", std::move(result.output), tape.requires_grad(x),
                     [x = x.id, cols, argmax = std::move(result.argmax)](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_buffer(self);
                       auto& d = t.grad_buffer(x);
                       for (std::size_t i = 0; i < G.size(); ++i) {
                         d[argmax[i] * cols + i % cols] += G[i];
                       }
                     });
}

// ---------------------------------------------------------------------------
// LSTM

// Unidirectional LSTM over x [T x Cin] with zero initial state.
// wx [Cin x 4H], wh [H x 4H], b [4H]; gate blocks ordered (input, forget,
// candidate, output). Returns hidden states [T x H].
template <typename T>
Var<T> lstm(Var<T> x, Var<T> wx, Var<T> wh, Var<T> b) {
  auto& tape = detail::tape_of(x);
  const auto& X = x.value();
  const auto& Wx = wx.value();
  const auto& Wh = wh.value();
  const auto& B = b.value();
  detail::require_rank2(X, "lstm", "input");
  detail::require_rank2(Wx, "lstm", "input weights");
  detail::require_rank2(Wh, "lstm", "recurrent weights");
  const std::size_t len = X.dim(0), cin = X.dim(1), hidden = Wh.dim(0), g4 = 4 * hidden;
  detail::require(Wx.dim(0) == cin && Wx.dim(1) == g4 && Wh.dim(1) == g4 && B.size() == g4,
                  "lstm: shape mismatch, input " + X.shape_string() + " wx " + Wx.shape_string() +
                      " wh " + Wh.shape_string() + " bias " + B.shape_string());

  // Activated gates [T x 4H], cell states and tanh(cell) [T x H].
  Tensor<T> gates({len, g4});
  Tensor<T> cell({len, hidden});
  Tensor<T> tanh_cell({len, hidden});
  Tensor<T> h({len, hidden});
  for (std::size_t t = 0; t < len; ++t) {
    T* z = gates.row(t);
    for (std::size_t j = 0; j < g4; ++j) z[j] = B[j];
    const T* xr = X.row(t);
    for (std::size_t c = 0; c < cin; ++c) {
      const T xv = xr[c];
      const T* wr = Wx.row(c);
      for (std::size_t j = 0; j < g4; ++j) z[j] += xv * wr[j];
    }
    if (t > 0) {
      const T* hp = h.row(t - 1);
      for (std::size_t k = 0; k < hidden; ++k) {
        const T hv = hp[k];
        const T* wr = Wh.row(k);
        for (std::size_t j = 0; j < g4; ++j) z[j] += hv * wr[j];
      }
    }
    const T* cp = t > 0 ? cell.row(t - 1) : nullptr;
    T* cr = cell.row(t);
    T* tc = tanh_cell.row(t);
    T* hr = h.row(t);
    for (std::size_t k = 0; k < hidden; ++k) {
      const T i = detail::sigmoid(z[k]);
      const T f = detail::sigmoid(z[hidden + k]);
      const T g = std::tanh(z[2 * hidden + k]);
      const T o = detail::sigmoid(z[3 * hidden + k]);
      z[k] = i;
      z[hidden + k] = f;
      z[2 * hidden + k] = g;
      z[3 * hidden + k] = o;
      cr[k] = (cp ? f * cp[k] : T{0}) + i * g;
      tc[k] = std::tanh(cr[k]);
      hr[k] = o * tc[k];
    }
  }
  Tensor<T> out = h;
  return tape.record(
      "lstm", std::move(out), detail::any_grad(tape, {x, wx, wh, b}),
      [x = x.id, wx = wx.id, wh = wh.id, b = b.id, len, cin, hidden, g4, gates = std::move(gates),
       cell = std::move(cell), tanh_cell = std::move(tanh_cell),
       h = std::move(h)](Tape<T>& t, std::size_t self) {
        const auto& G = t.grad_buffer(self);
        const auto& X = t.value(x);
        const auto& Wx = t.value(wx);
        const auto& Wh = t.value(wh);
        Tensor<T> dz({len, g4});
        std::vector<T> dh_next(hidden, T{0}), dc_next(hidden, T{0});
        const bool need_wh = t.requires_grad(wh);
        Tensor<T>* dWh = need_wh ? &t.grad_buffer(wh) : nullptr;
        for (std::size_t s = len; s-- > 0;) {
          const T* z = gates.row(s);
          const T* tc = tanh_cell.row(s);
          const T* cp = s > 0 ? cell.row(s - 1) : nullptr;
          const T* g = G.row(s);
          T* dzr = dz.row(s);
          for (std::size_t k = 0; k < hidden; ++k) {
            const T i = z[k], f = z[hidden + k], gg = z[2 * hidden + k], o = z[3 * hidden + k];
            const T dh = g[k] + dh_next[k];
            const T dc = dh * o * (T{1} - tc[k] * tc[k]) + dc_next[k];
            dzr[k] = dc * gg * i * (T{1} - i);
            dzr[hidden + k] = cp ? dc * cp[k] * f * (T{1} - f) : T{0};
            dzr[2 * hidden + k] = dc * i * (T{1} - gg * gg);
            dzr[3 * hidden + k] = dh * tc[k] * o * (T{1} - o);
            dc_next[k] = dc * f;
          }
          for (std::size_t k = 0; k < hidden; ++k) {
            const T* wr = Wh.row(k);
            T acc{0};
            for (std::size_t j = 0; j < g4; ++j) acc += dzr[j] * wr[j];
            dh_next[k] = acc;
          }
          if (need_wh && s > 0) {
            const T* hp = h.row(s - 1);
            for (std::size_t k = 0; k < hidden; ++k) {
              const T hv = hp[k];
              T* dw = dWh->row(k);
              for (std::size_t j = 0; j < g4; ++j) dw[j] += hv * dzr[j];
            }
          }
        }
        if (t.requires_grad(b)) {
          auto& db = t.grad_buffer(b);
          for (std::size_t s = 0; s < len; ++s) {
            const T* dzr = dz.row(s);
            for (std::size_t j = 0; j < g4; ++j) db[j] += dzr[j];
          }
        }
        if (t.requires_grad(wx)) {
          auto& dWx = t.grad_buffer(wx);
          for (std::size_t s = 0; s < len; ++s) {
            const T* xr = X.row(s);
            const T* dzr = dz.row(s);
            for (std::size_t c = 0; c < cin; ++c) {
              const T xv = xr[c];
              T* dw = dWx.row(c);
              for (std::size_t j = 0; j < g4; ++j) dw[j] += xv * dzr[j];
            }
          }
        }
        if (t.requires_grad(x)) {
          auto& dX = t.grad_buffer(x);
          for (std::size_t s = 0; s < len; ++s) {
            const T* dzr = dz.row(s);
            T* dxr = dX.row(s);
            for (std::size_t c = 0; c < cin; ++c) {
              const T* wr = Wx.row(c);
              T acc{0};
              for (std::size_t j = 0; j < g4; ++j) acc += dzr[j] * wr[j];
              dxr[c] += acc;
            }
          }
        }
      });
}

template <typename T>
struct LstmWeights {
  Var<T> wx, wh, b;
};

// Forward pass plus a second LSTM over the reversed sequence whose output is
// re-reversed; the two hidden streams are concatenated -> [T x 2H].
template <typename T>
Var<T> bidirectional_lstm(Var<T> x, const LstmWeights<T>& fw, const LstmWeights<T>& bw) {
  auto forward = lstm(x, fw.wx, fw.wh, fw.b);
  auto backward = reverse_time(lstm(reverse_time(x), bw.wx, bw.wh, bw.b));
  return concat_channels(forward, backward);
}

// ---------------------------------------------------------------------------
// Stochastic ops

// Inverted dropout: in training each element is zeroed with probability p and
// survivors are scaled by 1 / (1 - p). Identity otherwise.
template <typename T>
Var<T> dropout(Var<T> x, double p, bool training, Philox& rng) {
  detail::require(p >= 0.0 && p < 1.0, "dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  auto& tape = detail::tape_of(x);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> factor(x.value().size());
  Tensor<T> out = x.value();
  for (std::size_t j = 0; j < out.size(); ++j) {
    factor[j] = rng.uniform() < p ? T{0} : keep_scale;
    out[j] *= factor[j];
  }
  return tape.record("dropout", std::move(out), tape.requires_grad(x),
                     [x = x.id, factor = std::move(factor)](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_buffer(self);
                       auto& d = t.grad_buffer(x);
                       for (std::size_t j = 0; j < G.size(); ++j) d[j] += G[j] * factor[j];
                     });
}

// Adds N(0, sigma^2) noise to rows [0, valid_rows); gradient passes through.
template <typename T>
Var<T> gaussian_noise(Var<T> x, double sigma, Philox& rng, std::size_t valid_rows) {
  auto& tape = detail::tape_of(x);
  Tensor<T> out = x.value();
  detail::require_rank2(out, "gaussian_noise", "input");
  const std::size_t rows = std::min(valid_rows, out.dim(0)), cols = out.dim(1);
  if (sigma > 0.0) {
    for (std::size_t j = 0; j < rows * cols; ++j) out[j] += static_cast<T>(sigma * rng.normal());
  }
  return tape.record("gaussian_noise", std::move(out), tape.requires_grad(x),
                     [x = x.id](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_buffer(self);
                       auto& d = t.grad_buffer(x);
                       for (std::size_t j = 0; j < G.size(); ++j) d[j] += G[j];
                     });
}

// ---------------------------------------------------------------------------
// Losses

// sum(mask * (pred - y)^2). Masked-out positions contribute nothing to the
// value or the gradient, whatever y holds there.
template <typename T>
Var<T> masked_sq_sum(Var<T> pred, const Tensor<T>& y, const Tensor<T>& mask) {
  auto& tape = detail::tape_of(pred);
  const auto& P = pred.value();
  detail::require(P.shape() == y.shape() && P.shape() == mask.shape(),
                  "masked_sse: shape mismatch, pred " + P.shape_string() + " target " +
                      y.shape_string() + " mask " + mask.shape_string());
  std::vector<T> residual(P.size(), T{0});
  T total{0};
  for (std::size_t j = 0; j < P.size(); ++j) {
    if (mask[j] == T{0}) continue;
    residual[j] = mask[j] * (P[j] - y[j]);
    total += residual[j] * (P[j] - y[j]);
  }
  return tape.record("masked_sse", Tensor<T>({1}, std::vector<T>{total}), tape.requires_grad(pred),
                     [pred = pred.id, residual = std::move(residual)](Tape<T>& t, std::size_t self) {
                       const T g = t.grad_buffer(self)[0];
                       auto& d = t.grad_buffer(pred);
                       for (std::size_t j = 0; j < residual.size(); ++j) d[j] += T{2} * g * residual[j];
                     });
}

template <typename T>
T mask_total(const Tensor<T>& mask) {
  T s{0};
  for (const T& m : mask.values()) s += m;
  return s;
}

// sum(mask * (pred - y)^2) / max(1, sum(mask)).
template <typename T>
Var<T> masked_sse(Var<T> pred, const Tensor<T>& y, const Tensor<T>& mask) {
  const T denom = std::max(T{1}, mask_total(mask));
  return scale(masked_sq_sum(pred, y, mask), T{1} / denom);
}

// ---------------------------------------------------------------------------
// Finite-difference verification

template <typename T>
using LossFn = std::function<Var<T>(Tape<T>&, const std::vector<Var<T>>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares the tape gradient of `loss` with central differences on up to
// `max_coords` randomly chosen coordinates of every parameter.
template <typename T>
GradCheckResult grad_check(const LossFn<T>& loss, std::vector<Parameter<T>>& params, T eps,
                           std::uint64_t seed = 0, std::size_t max_coords = 200) {
  auto evaluate = [&]() {
    Tape<T> tape(false);
    std::vector<Var<T>> vars;
    for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.bind(params[i].value, i));
    return tape.value(loss(tape, vars))[0];
  };

  std::vector<Tensor<T>> grads;
  for (auto& p : params) grads.emplace_back(p.value.shape());
  T base{};
  {
    Tape<T> tape(true);
    std::vector<Var<T>> vars;
    for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.bind(params[i].value, i));
    auto out = loss(tape, vars);
    base = tape.value(out)[0];
    tape.backward(out);
    tape.accumulate_parameter_grads(grads);
  }
  const T again = evaluate();
  if (!(again == base)) {
    throw std::runtime_error("grad_check: loss is not deterministic (" + std::to_string(base) +
                             " vs " + std::to_string(again) + ")");
  }

  GradCheckResult result;
  Philox rng(seed, 0x6772616463686bULL);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = params[pi].value;
    std::vector<std::size_t> coords(value.size());
    for (std::size_t j = 0; j < coords.size(); ++j) coords[j] = j;
    if (coords.size() > max_coords) {
      for (std::size_t j = 0; j < max_coords; ++j) {
        std::swap(coords[j], coords[j + rng.below(coords.size() - j)]);
      }
      coords.resize(max_coords);
    }
    for (std::size_t j : coords) {
      const T saved = value[j];
      value[j] = saved + eps;
      const T plus = evaluate();
      value[j] = saved - eps;
      const T minus = evaluate();
      value[j] = saved;
      const double numeric = (static_cast<double>(plus) - static_cast<double>(minus)) /
                             (2.0 * static_cast<double>(eps));
      const double analytic = static_cast<double>(grads[pi][j]);
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      ++result.coordinates;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_parameter = params[pi].name;
        result.worst_index = j;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace deepheart::autodiff
