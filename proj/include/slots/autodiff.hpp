#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// Ops record a backward closure on the thread's current Tape whenever any
// input requires a gradient. A Tape is installed by constructing it (RAII) and
// is consumed by exactly one backward() call. Without an active tape, ops run
// as plain numeric functions.
//
// Epsilon policy: l2_normalize divides by (norm + 1e-12) and log evaluates
// log(x + 1e-12); relu'(0) is 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slots/errors.hpp"

namespace slots::ad {

using Shape = std::vector<std::size_t>;

inline constexpr double kEpsilon = 1e-12;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same size as data iff requires_grad
  bool requires_grad = false;
};

/// Shared handle to a tensor. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : impl_(std::make_shared<TensorImpl>()) {
    if (ad::numel(shape) != data.size()) {
      fail(ErrorKind::dimension, "tensor shape " + shape_str(shape) + " holds " +
                                     std::to_string(ad::numel(shape)) + " values, got " +
                                     std::to_string(data.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    set_requires_grad(requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = ad::numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const auto n = ad::numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({}, {value}, requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  /// Mutable access; only for leaves (parameters, inputs) outside a recorded pass.
  std::span<double> mutable_data() { return impl_->data; }
  std::vector<double> to_vector() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) {
    impl_->requires_grad = value;
    if (value) {
      impl_->grad.assign(impl_->data.size(), 0.0);
    } else {
      impl_->grad.clear();
    }
  }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad; }
  void zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

  double item() const {
    if (numel() != 1) fail(ErrorKind::dimension, "item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }
  double operator[](std::size_t i) const { return impl_->data[i]; }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of backward closures for one forward pass.
class Tape {
 public:
  Tape() : previous_(slot()) { slot() = this; }
  ~Tape() { slot() = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return slot(); }

  void record(std::function<void()> backward_fn) {
    if (consumed_) fail(ErrorKind::state, "recording onto a tape that was already consumed by backward()");
    entries_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Leaf gradients accumulate.
  void backward(const Tensor& loss) {
    if (consumed_) fail(ErrorKind::state, "backward() called twice on the same tape");
    if (!loss.defined() || loss.numel() != 1) {
      fail(ErrorKind::contract, "backward() requires a scalar loss, got shape " +
                                    (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad() || entries_.empty()) {
      fail(ErrorKind::state, "backward() on a loss with no recorded operations");
    }
    loss.impl()->grad[0] += 1.0;
    consumed_ = true;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
    entries_.shrink_to_fit();
  }

 private:
  static Tape*& slot() {
    thread_local Tape* current = nullptr;
    return current;
  }
  friend class NoGradGuard;

  std::vector<std::function<void()>> entries_;
  Tape* previous_;
  bool consumed_ = false;
};

/// Suspends recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : saved_(Tape::slot()) { Tape::slot() = nullptr; }
  ~NoGradGuard() { Tape::slot() = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

inline void backward(const Tensor& loss) {
  Tape* tape = Tape::current();
  if (!tape) fail(ErrorKind::state, "backward() without an active tape");
  tape->backward(loss);
}

namespace detail {

using ImplPtr = std::shared_ptr<TensorImpl>;

inline Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::current();
  if (!tape) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

inline Tensor make_output(Shape shape, std::vector<double> data, Tape* tape) {
  return Tensor(std::move(shape), std::move(data), tape != nullptr);
}

inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) fail(ErrorKind::dimension, std::string(op) + ": " + what);
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Splits a shape around `axis` into (outer, axis extent, inner) for strided loops.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisView axis_view(const Shape& shape, std::size_t axis, const char* op) {
  require(axis < shape.size(), op, "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  Tape* tape = recording_tape({&x});
  std::vector<double> out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xs[i]);
  Tensor y = make_output(x.shape(), std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), yi = y.impl(), deriv] {
      for (std::size_t i = 0; i < xi->data.size(); ++i) {
        xi->grad[i] += yi->grad[i] * deriv(xi->data[i], yi->data[i]);
      }
    });
  }
  return y;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tape* tape = detail::recording_tape({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor y = detail::make_output(a.shape(), std::move(out), tape);
  if (tape) {
    tape->record([ai = a.impl(), bi = b.impl(), yi = y.impl()] {
      if (ai->requires_grad) for (std::size_t i = 0; i < yi->grad.size(); ++i) ai->grad[i] += yi->grad[i];
      if (bi->requires_grad) for (std::size_t i = 0; i < yi->grad.size(); ++i) bi->grad[i] += yi->grad[i];
    });
  }
  return y;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tape* tape = detail::recording_tape({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor y = detail::make_output(a.shape(), std::move(out), tape);
  if (tape) {
    tape->record([ai = a.impl(), bi = b.impl(), yi = y.impl()] {
      if (ai->requires_grad) for (std::size_t i = 0; i < yi->grad.size(); ++i) ai->grad[i] += yi->grad[i];
      if (bi->requires_grad) for (std::size_t i = 0; i < yi->grad.size(); ++i) bi->grad[i] -= yi->grad[i];
    });
  }
  return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tape* tape = detail::recording_tape({&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor y = detail::make_output(a.shape(), std::move(out), tape);
  if (tape) {
    tape->record([ai = a.impl(), bi = b.impl(), yi = y.impl()] {
      const auto n = yi->grad.size();
      if (ai->requires_grad) for (std::size_t i = 0; i < n; ++i) ai->grad[i] += yi->grad[i] * bi->data[i];
      if (bi->requires_grad) for (std::size_t i = 0; i < n; ++i) bi->grad[i] += yi->grad[i] * ai->data[i];
    });
  }
  return y;
}

inline Tensor mul_scalar(const Tensor& x, double s) {
  return detail::unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

/// log(x + 1e-12); negative arguments are a domain error.
inline Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v + kEpsilon > 0.0)) fail(ErrorKind::domain, "log: argument " + std::to_string(v) + " is not positive");
  }
  return detail::unary(
      x, [](double v) { return std::log(v + kEpsilon); }, [](double v, double) { return 1.0 / (v + kEpsilon); });
}

/// Adds `bias` (1-D, extent == x.dim(axis)) broadcast along every other axis.
inline Tensor add_bias(const Tensor& x, const Tensor& bias, std::size_t axis) {
  const auto v = detail::axis_view(x.shape(), axis, "add_bias");
  detail::require(bias.ndim() == 1 && bias.dim(0) == v.extent, "add_bias",
                  "bias " + shape_str(bias.shape()) + " does not match axis extent " + std::to_string(v.extent));
  Tape* tape = detail::recording_tape({&x, &bias});
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t c = 0; c < v.extent; ++c) {
      double* row = out.data() + (o * v.extent + c) * v.inner;
      const double b = bias[c];
      for (std::size_t i = 0; i < v.inner; ++i) row[i] += b;
    }
  Tensor y = detail::make_output(x.shape(), std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), bi = bias.impl(), yi = y.impl(), v] {
      if (xi->requires_grad) for (std::size_t i = 0; i < yi->grad.size(); ++i) xi->grad[i] += yi->grad[i];
      if (bi->requires_grad) {
        for (std::size_t o = 0; o < v.outer; ++o)
          for (std::size_t c = 0; c < v.extent; ++c) {
            const double* g = yi->grad.data() + (o * v.extent + c) * v.inner;
            double acc = 0.0;
            for (std::size_t i = 0; i < v.inner; ++i) acc += g[i];
            bi->grad[c] += acc;
          }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  Tape* tape = detail::recording_tape({&x});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor y = detail::make_output({}, {acc}, tape);
  if (tape) {
    tape->record([xi = x.impl(), yi = y.impl()] {
      const double g = yi->grad[0];
      for (double& gx : xi->grad) gx += g;
    });
  }
  return y;
}

inline Tensor mean(const Tensor& x) {
  if (x.numel() == 0) fail(ErrorKind::dimension, "mean of an empty tensor");
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

/// Sum over one axis; the axis is removed from the shape.
inline Tensor sum(const Tensor& x, std::size_t axis) {
  const auto v = detail::axis_view(x.shape(), axis, "sum");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tape* tape = detail::recording_tape({&x});
  std::vector<double> out(v.outer * v.inner, 0.0);
  const auto xs = x.data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t c = 0; c < v.extent; ++c) {
      const double* src = xs.data() + (o * v.extent + c) * v.inner;
      double* dst = out.data() + o * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
    }
  Tensor y = detail::make_output(std::move(out_shape), std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), yi = y.impl(), v] {
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t c = 0; c < v.extent; ++c) {
          double* dst = xi->grad.data() + (o * v.extent + c) * v.inner;
          const double* g = yi->grad.data() + o * v.inner;
          for (std::size_t i = 0; i < v.inner; ++i) dst[i] += g[i];
        }
    });
  }
  return y;
}

inline Tensor mean(const Tensor& x, std::size_t axis) {
  const auto extent = detail::axis_view(x.shape(), axis, "mean").extent;
  if (extent == 0) fail(ErrorKind::dimension, "mean over an empty axis");
  return mul_scalar(sum(x, axis), 1.0 / static_cast<double>(extent));
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0), "matmul",
                  "cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tape* tape = detail::recording_tape({&a, &b});
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  Tensor y = detail::make_output({m, n}, std::move(out), tape);
  if (tape) {
    tape->record([ai = a.impl(), bi = b.impl(), yi = y.impl(), m, k, n] {
      const double* G = yi->grad.data();
      if (ai->requires_grad) {
        // dA = G B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = bi->data.data() + p * n;
            const double* grow = G + i * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ai->grad[i * k + p] += acc;
          }
      }
      if (bi->requires_grad) {
        // dB = A^T G
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = ai->data[i * k + p];
            const double* grow = G + i * n;
            double* dst = bi->grad.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) dst[j] += av * grow[j];
          }
      }
    });
  }
  return y;
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  detail::require(numel(shape) == x.numel(), "reshape",
                  "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tape* tape = detail::recording_tape({&x});
  Tensor y = detail::make_output(std::move(shape), x.to_vector(), tape);
  if (tape) {
    tape->record([xi = x.impl(), yi = y.impl()] {
      for (std::size_t i = 0; i < yi->grad.size(); ++i) xi->grad[i] += yi->grad[i];
    });
  }
  return y;
}

/// Reorders axes: output axis i is input axis perm[i].
inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const auto nd = x.ndim();
  detail::require(perm.size() == nd, "permute", "permutation length does not match rank of " + shape_str(x.shape()));
  std::vector<bool> seen(nd, false);
  for (auto p : perm) {
    detail::require(p < nd && !seen[p], "permute", "invalid permutation");
    seen[p] = true;
  }
  std::vector<std::size_t> in_strides(nd, 1);
  for (std::size_t i = nd; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.dim(i);
  Shape out_shape(nd);
  std::vector<std::size_t> gather_strides(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    out_shape[i] = x.dim(perm[i]);
    gather_strides[i] = in_strides[perm[i]];
  }
  // Source offset for every output element, in output order.
  std::vector<std::size_t> src(x.numel());
  std::vector<std::size_t> idx(nd, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    src[flat] = offset;
    for (std::size_t d = nd; d-- > 0;) {
      ++idx[d];
      offset += gather_strides[d];
      if (idx[d] < out_shape[d]) break;
      offset -= gather_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  Tape* tape = detail::recording_tape({&x});
  std::vector<double> out(src.size());
  const auto xs = x.data();
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = xs[src[i]];
  Tensor y = detail::make_output(std::move(out_shape), std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), yi = y.impl(), src = std::move(src)] {
      for (std::size_t i = 0; i < src.size(); ++i) xi->grad[src[i]] += yi->grad[i];
    });
  }
  return y;
}

inline Tensor transpose(const Tensor& x) {
  detail::require(x.ndim() == 2, "transpose", "expects a matrix, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat", "no inputs");
  const Shape& ref = parts.front().shape();
  detail::require(axis < ref.size(), "concat", "axis out of range for " + shape_str(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    detail::require(p.ndim() == ref.size(), "concat", "rank mismatch " + shape_str(p.shape()) + " vs " + shape_str(ref));
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis) {
        detail::require(p.dim(d) == ref[d], "concat",
                        "extent mismatch " + shape_str(p.shape()) + " vs " + shape_str(ref));
      }
    }
    out_shape[axis] += p.dim(axis);
  }
  const auto v = detail::axis_view(out_shape, axis, "concat");
  Tape* tape = nullptr;
  if (Tape* t = Tape::current()) {
    for (const auto& p : parts)
      if (p.requires_grad()) tape = t;
  }
  std::vector<double> out(numel(out_shape));
  std::size_t axis_offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(axis_offset);
    const std::size_t chunk = p.dim(axis) * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(p.data().data() + o * chunk, chunk, out.data() + o * v.extent * v.inner + axis_offset * v.inner);
    }
    axis_offset += p.dim(axis);
  }
  Tensor y = detail::make_output(std::move(out_shape), std::move(out), tape);
  if (tape) {
    std::vector<detail::ImplPtr> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    tape->record([impls = std::move(impls), offsets = std::move(offsets), yi = y.impl(), v, axis] {
      for (std::size_t n = 0; n < impls.size(); ++n) {
        auto& pi = *impls[n];
        if (!pi.requires_grad) continue;
        const std::size_t chunk = pi.shape[axis] * v.inner;
        for (std::size_t o = 0; o < v.outer; ++o) {
          const double* g = yi->grad.data() + o * v.extent * v.inner + offsets[n] * v.inner;
          double* dst = pi.grad.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
        }
      }
    });
  }
  return y;
}

/// Elements [begin, end) along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto v = detail::axis_view(x.shape(), axis, "slice");
  detail::require(begin <= end && end <= v.extent, "slice",
                  "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") exceeds extent " +
                      std::to_string(v.extent));
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * v.inner;
  Tape* tape = detail::recording_tape({&x});
  std::vector<double> out(v.outer * chunk);
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(x.data().data() + (o * v.extent + begin) * v.inner, chunk, out.data() + o * chunk);
  }
  Tensor y = detail::make_output(std::move(out_shape), std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), yi = y.impl(), v, begin, chunk] {
      for (std::size_t o = 0; o < v.outer; ++o) {
        double* dst = xi->grad.data() + (o * v.extent + begin) * v.inner;
        const double* g = yi->grad.data() + o * chunk;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
      }
    });
  }
  return y;
}

/// Picks flat elements of x by index into a 1-D tensor.
inline Tensor gather(const Tensor& x, std::vector<std::size_t> indices) {
  for (auto i : indices) {
    detail::require(i < x.numel(), "gather", "index " + std::to_string(i) + " out of range for " + shape_str(x.shape()));
  }
  Tape* tape = detail::recording_tape({&x});
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = x[indices[i]];
  Tensor y = detail::make_output({indices.size()}, std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), yi = y.impl(), indices = std::move(indices)] {
      for (std::size_t i = 0; i < indices.size(); ++i) xi->grad[indices[i]] += yi->grad[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Normalization and softmax family

/// x / (||x||_2 + 1e-12) along `axis`.
inline Tensor l2_normalize(const Tensor& x, std::size_t axis) {
  const auto v = detail::axis_view(x.shape(), axis, "l2_normalize");
  Tape* tape = detail::recording_tape({&x});
  const auto xs = x.data();
  std::vector<double> norms(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t c = 0; c < v.extent; ++c)
      for (std::size_t i = 0; i < v.inner; ++i) {
        const double e = xs[(o * v.extent + c) * v.inner + i];
        norms[o * v.inner + i] += e * e;
      }
  for (double& n : norms) n = std::sqrt(n);
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t c = 0; c < v.extent; ++c)
      for (std::size_t i = 0; i < v.inner; ++i) {
        const auto k = (o * v.extent + c) * v.inner + i;
        out[k] = xs[k] / (norms[o * v.inner + i] + kEpsilon);
      }
  Tensor y = detail::make_output(x.shape(), std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), yi = y.impl(), v, norms = std::move(norms)] {
      // dx = g/s - x (g.x) / (n s^2), s = n + eps
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
          const double n = norms[o * v.inner + i];
          const double s = n + kEpsilon;
          double gx = 0.0;
          for (std::size_t c = 0; c < v.extent; ++c) {
            const auto k = (o * v.extent + c) * v.inner + i;
            gx += yi->grad[k] * xi->data[k];
          }
          const double coef = n > 0.0 ? gx / (n * s * s) : 0.0;
          for (std::size_t c = 0; c < v.extent; ++c) {
            const auto k = (o * v.extent + c) * v.inner + i;
            xi->grad[k] += yi->grad[k] / s - xi->data[k] * coef;
          }
        }
    });
  }
  return y;
}

/// Pairwise cosine similarities of the rows of a [n, d] and b [m, d] -> [n, m].
inline Tensor cosine_similarity_matrix(const Tensor& a, const Tensor& b) {
  detail::require(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(1), "cosine_similarity_matrix",
                  "row dimensions differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const Tensor an = l2_normalize(a, 1);
  const Tensor bn = (a.impl() == b.impl()) ? an : l2_normalize(b, 1);
  return matmul(an, transpose(bn));
}

namespace detail {

template <bool Log>
Tensor softmax_impl(const Tensor& x, std::size_t axis, const char* op) {
  const auto v = axis_view(x.shape(), axis, op);
  Tape* tape = recording_tape({&x});
  const auto xs = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i) {
      const auto at = [&](std::size_t c) { return (o * v.extent + c) * v.inner + i; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < v.extent; ++c) mx = std::max(mx, xs[at(c)]);
      double z = 0.0;
      for (std::size_t c = 0; c < v.extent; ++c) z += std::exp(xs[at(c)] - mx);
      const double lz = std::log(z);
      for (std::size_t c = 0; c < v.extent; ++c) {
        const double ls = xs[at(c)] - mx - lz;
        out[at(c)] = Log ? ls : std::exp(ls);
      }
    }
  Tensor y = make_output(x.shape(), std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), yi = y.impl(), v] {
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
          const auto at = [&](std::size_t c) { return (o * v.extent + c) * v.inner + i; };
          if constexpr (Log) {
            // dx_c = g_c - softmax_c * sum(g)
            double gs = 0.0;
            for (std::size_t c = 0; c < v.extent; ++c) gs += yi->grad[at(c)];
            for (std::size_t c = 0; c < v.extent; ++c)
              xi->grad[at(c)] += yi->grad[at(c)] - std::exp(yi->data[at(c)]) * gs;
          } else {
            // dx_c = y_c (g_c - sum(g y))
            double gy = 0.0;
            for (std::size_t c = 0; c < v.extent; ++c) gy += yi->grad[at(c)] * yi->data[at(c)];
            for (std::size_t c = 0; c < v.extent; ++c)
              xi->grad[at(c)] += yi->data[at(c)] * (yi->grad[at(c)] - gy);
          }
        }
    });
  }
  return y;
}

}  // namespace detail

inline Tensor softmax(const Tensor& x, std::size_t axis) { return detail::softmax_impl<false>(x, axis, "softmax"); }

inline Tensor log_softmax(const Tensor& x, std::size_t axis) {
  return detail::softmax_impl<true>(x, axis, "log_softmax");
}

/// Row-wise log(sum(exp(x[r, c]))) over the columns where mask[r * C + c] is set.
/// Rows with an empty mask evaluate to 0 and receive no gradient.
inline Tensor masked_logsumexp(const Tensor& x, const std::vector<char>& mask) {
  detail::require(x.ndim() == 2 && mask.size() == x.numel(), "masked_logsumexp",
                  "mask of " + std::to_string(mask.size()) + " entries for " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tape* tape = detail::recording_tape({&x});
  const auto xs = x.data();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (mask[r * cols + c]) mx = std::max(mx, xs[r * cols + c]);
    if (mx == -std::numeric_limits<double>::infinity()) continue;
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      if (mask[r * cols + c]) z += std::exp(xs[r * cols + c] - mx);
    out[r] = mx + std::log(z);
  }
  Tensor y = detail::make_output({rows}, std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), yi = y.impl(), mask, rows, cols] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = yi->grad[r];
        for (std::size_t c = 0; c < cols; ++c)
          if (mask[r * cols + c]) xi->grad[r * cols + c] += g * std::exp(xi->data[r * cols + c] - yi->data[r]);
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Convolution and pooling over [batch, channels, length]

struct Conv1dOptions {
  std::size_t dilation = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;  // zeros on both ends of the length axis
};

namespace detail {

inline std::size_t conv_out_length(std::size_t length, std::size_t kernel, const Conv1dOptions& o, const char* op) {
  require(o.dilation >= 1 && o.stride >= 1, op, "dilation and stride must be >= 1");
  const std::size_t span = o.dilation * (kernel - 1) + 1;
  require(length + 2 * o.padding >= span, op,
          "input length " + std::to_string(length) + " shorter than kernel span " + std::to_string(span));
  return (length + 2 * o.padding - span) / o.stride + 1;
}

// y[i*s] += w * x[i] over n elements; s == 1 takes a contiguous, vectorizable path.
inline void strided_axpy(double* y, std::size_t ys, double w, const double* x, std::size_t xs, std::size_t n) {
  if (ys == 1 && xs == 1) {
    for (std::size_t i = 0; i < n; ++i) y[i] += w * x[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) y[i * ys] += w * x[i * xs];
  }
}

// sum_i a[i] * b[i*s], with four partial sums (fixed order, so deterministic).
inline double strided_dot(const double* a, const double* b, std::size_t bs, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  if (bs == 1) {
    for (; i + 4 <= n; i += 4)
      for (std::size_t j = 0; j < 4; ++j) acc[j] += a[i + j] * b[i + j];
  }
  for (; i < n; ++i) acc[i % 4] += a[i] * b[i * bs];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

// Output positions t with 0 <= t*stride + offset < length, as [first, last).
inline std::pair<std::size_t, std::size_t> valid_range(std::ptrdiff_t offset, std::size_t length, std::size_t out_len,
                                                       std::size_t stride) {
  const auto s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t first = offset >= 0 ? 0 : (-offset + s - 1) / s;
  std::ptrdiff_t last = (static_cast<std::ptrdiff_t>(length) - 1 - offset);
  last = last < 0 ? 0 : last / s + 1;
  last = std::min<std::ptrdiff_t>(last, static_cast<std::ptrdiff_t>(out_len));
  if (first > last) first = last;
  return {static_cast<std::size_t>(first), static_cast<std::size_t>(last)};
}

}  // namespace detail

namespace detail {

// Per kernel tap k: output range [t0, t1) reading input index t0*stride + offset onward.
struct Tap {
  std::size_t t0 = 0, t1 = 0;
  std::ptrdiff_t first = 0;
};

inline std::vector<Tap> conv_taps(std::size_t K, std::size_t L, std::size_t Lo, const Conv1dOptions& o) {
  std::vector<Tap> taps(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto off = static_cast<std::ptrdiff_t>(k * o.dilation) - static_cast<std::ptrdiff_t>(o.padding);
    const auto [t0, t1] = valid_range(off, L, Lo, o.stride);
    taps[k] = {t0, t1, static_cast<std::ptrdiff_t>(t0 * o.stride) + off};
  }
  return taps;
}

}  // namespace detail

/// Direct cross-correlation: x [B, Cin, L], kernel [Cout, Cin, K] -> [B, Cout, Lout].
inline Tensor conv1d(const Tensor& x, const Tensor& kernel, const Conv1dOptions& opt = {}) {
  detail::require(x.ndim() == 3 && kernel.ndim() == 3 && x.dim(1) == kernel.dim(1), "conv1d",
                  "input " + shape_str(x.shape()) + " incompatible with kernel " + shape_str(kernel.shape()));
  const std::size_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const std::size_t Cout = kernel.dim(0), K = kernel.dim(2);
  detail::require(K >= 1, "conv1d", "kernel width must be >= 1");
  const std::size_t Lo = detail::conv_out_length(L, K, opt, "conv1d");
  const auto taps = detail::conv_taps(K, L, Lo, opt);
  Tape* tape = detail::recording_tape({&x, &kernel});
  std::vector<double> out(B * Cout * Lo, 0.0);
  const double* X = x.data().data();
  const double* W = kernel.data().data();
  const auto s = opt.stride;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co) {
      double* orow = out.data() + (b * Cout + co) * Lo;
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const double* xrow = X + (b * Cin + ci) * L;
        const double* wrow = W + (co * Cin + ci) * K;
        for (std::size_t k = 0; k < K; ++k) {
          const auto& tp = taps[k];
          if (tp.t0 < tp.t1) detail::strided_axpy(orow + tp.t0, 1, wrow[k], xrow + tp.first, s, tp.t1 - tp.t0);
        }
      }
    }
  Tensor y = detail::make_output({B, Cout, Lo}, std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), wi = kernel.impl(), yi = y.impl(), B, Cin, L, Cout, K, Lo, s = opt.stride, taps] {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t co = 0; co < Cout; ++co) {
          const double* grow = yi->grad.data() + (b * Cout + co) * Lo;
          for (std::size_t ci = 0; ci < Cin; ++ci) {
            const double* xrow = xi->data.data() + (b * Cin + ci) * L;
            double* gxrow = xi->requires_grad ? xi->grad.data() + (b * Cin + ci) * L : nullptr;
            for (std::size_t k = 0; k < K; ++k) {
              const auto& tp = taps[k];
              if (tp.t0 >= tp.t1) continue;
              const auto widx = (co * Cin + ci) * K + k;
              const std::size_t n = tp.t1 - tp.t0;
              if (wi->requires_grad) wi->grad[widx] += detail::strided_dot(grow + tp.t0, xrow + tp.first, s, n);
              if (gxrow) detail::strided_axpy(gxrow + tp.first, s, wi->data[widx], grow + tp.t0, 1, n);
            }
          }
        }
    });
  }
  return y;
}

/// Depthwise correlation with channel multiplier: x [B, C, L], kernel [C*multiplier, K]
/// -> [B, C*multiplier, Lout]; output channel c*multiplier + m reads input channel c.
inline Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, std::size_t multiplier,
                               const Conv1dOptions& opt = {}) {
  detail::require(multiplier >= 1, "depthwise_conv1d", "multiplier must be >= 1");
  detail::require(x.ndim() == 3 && kernel.ndim() == 2 && kernel.dim(0) == x.dim(1) * multiplier, "depthwise_conv1d",
                  "input " + shape_str(x.shape()) + " incompatible with kernel " + shape_str(kernel.shape()) +
                      " at multiplier " + std::to_string(multiplier));
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), K = kernel.dim(1);
  const std::size_t Cout = C * multiplier;
  const std::size_t Lo = detail::conv_out_length(L, K, opt, "depthwise_conv1d");
  const auto taps = detail::conv_taps(K, L, Lo, opt);
  Tape* tape = detail::recording_tape({&x, &kernel});
  std::vector<double> out(B * Cout * Lo, 0.0);
  const auto s = opt.stride;
  const double* W = kernel.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co) {
      const double* xrow = x.data().data() + (b * C + co / multiplier) * L;
      double* orow = out.data() + (b * Cout + co) * Lo;
      for (std::size_t k = 0; k < K; ++k) {
        const auto& tp = taps[k];
        if (tp.t0 < tp.t1) detail::strided_axpy(orow + tp.t0, 1, W[co * K + k], xrow + tp.first, s, tp.t1 - tp.t0);
      }
    }
  Tensor y = detail::make_output({B, Cout, Lo}, std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), wi = kernel.impl(), yi = y.impl(), B, C, L, K, Cout, Lo, multiplier, s, taps] {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t co = 0; co < Cout; ++co) {
          const auto xoff = (b * C + co / multiplier) * L;
          const double* grow = yi->grad.data() + (b * Cout + co) * Lo;
          for (std::size_t k = 0; k < K; ++k) {
            const auto& tp = taps[k];
            if (tp.t0 >= tp.t1) continue;
            const std::size_t n = tp.t1 - tp.t0;
            const auto base = static_cast<std::ptrdiff_t>(xoff) + tp.first;
            if (wi->requires_grad) wi->grad[co * K + k] += detail::strided_dot(grow + tp.t0, xi->data.data() + base, s, n);
            if (xi->requires_grad) detail::strided_axpy(xi->grad.data() + base, s, wi->data[co * K + k], grow + tp.t0, 1, n);
          }
        }
    });
  }
  return y;
}

/// Non-overlapping average pooling along the last axis of [B, C, L] -> [B, C, L / window].
inline Tensor avg_pool(const Tensor& x, std::size_t window) {
  detail::require(window >= 1, "avg_pool", "window must be >= 1");
  detail::require(x.ndim() == 3 && x.dim(2) >= window, "avg_pool",
                  "input " + shape_str(x.shape()) + " shorter than window " + std::to_string(window));
  const std::size_t rows = x.dim(0) * x.dim(1), L = x.dim(2), Lo = L / window;
  const double inv = 1.0 / static_cast<double>(window);
  Tape* tape = detail::recording_tape({&x});
  std::vector<double> out(rows * Lo, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < Lo; ++t) {
      double acc = 0.0;
      for (std::size_t w = 0; w < window; ++w) acc += x[r * L + t * window + w];
      out[r * Lo + t] = acc * inv;
    }
  Tensor y = detail::make_output({x.dim(0), x.dim(1), Lo}, std::move(out), tape);
  if (tape) {
    tape->record([xi = x.impl(), yi = y.impl(), rows, L, Lo, window, inv] {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < Lo; ++t) {
          const double g = yi->grad[r * Lo + t] * inv;
          for (std::size_t w = 0; w < window; ++w) xi->grad[r * L + t * window + w] += g;
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Max over all input components of |analytic - central difference| /
/// max(|analytic|, |numeric|, 1e-12). Inputs are evaluated in place and restored.
inline double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn, std::vector<Tensor> inputs,
                         double step = 1e-5) {
  if (!(step > 0.0 && step <= 1e-2)) fail(ErrorKind::contract, "grad_check step must lie in (0, 1e-2]");
  for (auto& in : inputs) in.set_requires_grad(true);
  {
    Tape tape;
    Tensor out = fn(inputs);
    if (out.numel() != 1) fail(ErrorKind::contract, "grad_check closure must return a scalar");
    if (!std::isfinite(out.item())) fail(ErrorKind::numeric, "grad_check closure returned a non-finite value");
    tape.backward(out);
  }
  const auto eval = [&] {
    NoGradGuard guard;
    const double v = fn(inputs).item();
    if (!std::isfinite(v)) fail(ErrorKind::numeric, "grad_check closure returned a non-finite value");
    return v;
  };
  double worst = 0.0;
  for (auto& in : inputs) {
    const std::vector<double> analytic(in.grad().begin(), in.grad().end());
    auto values = in.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = eval();
      values[i] = saved - step;
      const double down = eval();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace slots::ad
