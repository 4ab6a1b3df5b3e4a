#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaide/random.hpp"

namespace gaide {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Dense row-major double tensor. Copying a Tensor copies the handle; the
// underlying buffer is shared. Values are treated as immutable once an op has
// consumed them; only gradient accumulation mutates shared state.
class Tensor {
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
  };

 public:
  Tensor() : s_(std::make_shared<Storage>()) {}

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.s_->shape = std::move(shape);
    t.s_->data.assign(shape_numel(t.s_->shape), 0.0);
    return t;
  }

  static Tensor full(Shape shape, double v) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.s_->data) x = v;
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size())
      throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) +
                                  " does not hold " + std::to_string(values.size()) +
                                  " values");
    Tensor t;
    t.s_->shape = std::move(shape);
    t.s_->data = std::move(values);
    return t;
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.s_->data) x = rng.uniform(lo, hi);
    return t;
  }

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t numel() const { return s_->data.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }

  std::vector<double>& data() { return s_->data; }
  const std::vector<double>& data() const { return s_->data; }

  double value() const {
    if (numel() != 1)
      throw std::invalid_argument("Tensor::value: tensor " + shape_str(shape()) +
                                  " is not scalar");
    return s_->data[0];
  }

  double at(std::size_t r, std::size_t c) const {
    return s_->data[r * s_->shape.back() + c];
  }

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    s_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !s_->grad.empty(); }
  // Gradient buffer, zero-allocated on first access. A Tensor is a shared
  // handle, so accumulation is reachable through const handles as well.
  std::vector<double>& grad() const {
    ensure_grad();
    return s_->grad;
  }
  void ensure_grad() const {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
  }
  void zero_grad() const { s_->grad.clear(); }

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  std::shared_ptr<Storage> s_;
};

// Execution-ordered record of differentiable ops. Forward execution appends
// records, so the order is already topological: parents precede children.
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    records_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and walks the records once, in reverse.
  void backward(Tensor loss) {
    if (loss.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  shape_str(loss.shape()));
    loss.ensure_grad();
    loss.grad()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  }

  static Tape*& active() {
    thread_local Tape* t = nullptr;
    return t;
  }

 private:
  std::vector<std::function<void()>> records_;
};

// Makes a tape the active recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : prev_(Tape::active()) { Tape::active() = &tape; }
  ~TapeScope() { Tape::active() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

inline void backward(const Tensor& loss) {
  Tape* t = Tape::active();
  if (!t) throw std::runtime_error("backward: no active tape");
  t->backward(loss);
}

namespace detail {

inline bool track(const Tensor& out) {
  return Tape::active() != nullptr && out.requires_grad();
}

inline void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r)
    throw std::invalid_argument(std::string(op) + ": expected rank " +
                                std::to_string(r) + " tensor, got " +
                                shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// differentiable ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) od[i * n + j] += av * bd[p * n + j];
    }
  out.set_requires_grad(a.requires_grad() || b.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([a, b, out, m, k, n]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        const auto& bd = b.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bd[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        const auto& ad = a.data();
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t i = 0; i < m; ++i) {
            const double av = ad[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
          }
      }
    });
  }
  return out;
}

inline Tensor transpose(const Tensor& x) {
  detail::require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out = Tensor::zeros({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data()[j * r + i] = x.data()[i * c + j];
  out.set_requires_grad(x.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([x, out, r, c]() mutable {
      auto& gx = x.grad();
      const auto& g = out.grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    });
  }
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  out.set_requires_grad(a.requires_grad() || b.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  out.set_requires_grad(a.requires_grad() || b.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  out.set_requires_grad(a.requires_grad() || b.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
      }
    });
  }
  return out;
}

inline Tensor scale(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.data()[i] = x.data()[i] * c;
  out.set_requires_grad(x.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([x, out, c]() mutable {
      auto& gx = x.grad();
      const auto& g = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * c;
    });
  }
  return out;
}

// m[R x C] + v, v a length-C vector (or single-row matrix) broadcast over
// rows; the only broadcasting form supported anywhere
inline Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  detail::require_rank(m, 2, "add_rowvec");
  const bool vec_like = v.rank() == 1 || (v.rank() == 2 && v.dim(0) == 1);
  if (!vec_like || m.dim(1) != v.numel())
    throw std::invalid_argument("add_rowvec: width mismatch " + shape_str(m.shape()) +
                                " vs " + shape_str(v.shape()));
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor out = Tensor::zeros(m.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out.data()[i * c + j] = m.data()[i * c + j] + v.data()[j];
  out.set_requires_grad(m.requires_grad() || v.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([m, v, out, r, c]() mutable {
      const auto& g = out.grad();
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
      }
    });
  }
  return out;
}

// smooth gated unit x * sigmoid(x)
inline Tensor silu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = v / (1.0 + std::exp(-v));
  }
  out.set_requires_grad(x.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([x, out]() mutable {
      auto& gx = x.grad();
      const auto& g = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = x.data()[i];
        const double s = 1.0 / (1.0 + std::exp(-v));
        gx[i] += g[i] * (s + v * s * (1.0 - s));
      }
    });
  }
  return out;
}

// Softmax over the last dimension with max-subtraction. Entries equal to
// -inf are assigned weight exactly 0 without entering exp arithmetic; a slice
// with no finite entry is an error (an all-masked attention row).
inline Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() < 1 || x.shape().back() < 1)
    throw std::invalid_argument("softmax_lastdim: need a nonempty last dimension, got " +
                                shape_str(x.shape()));
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = x.data().data() + r * n;
    double* oi = out.data().data() + r * n;
    double mx = kNegInf;
    for (std::size_t j = 0; j < n; ++j)
      if (xi[j] > mx) mx = xi[j];
    if (mx == kNegInf)
      throw std::runtime_error("softmax_lastdim: fully masked row " + std::to_string(r) +
                               " (every entry is -inf)");
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (xi[j] == kNegInf) {
        oi[j] = 0.0;
      } else {
        oi[j] = std::exp(xi[j] - mx);
        denom += oi[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) oi[j] /= denom;
  }
  out.set_requires_grad(x.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([x, out, rows, n]() mutable {
      auto& gx = x.grad();
      const auto& g = out.grad();
      const auto& w = out.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * w[r * n + j];
        for (std::size_t j = 0; j < n; ++j)
          gx[r * n + j] += w[r * n + j] * (g[r * n + j] - dot);
      }
    });
  }
  return out;
}

// Per-slice normalization over the last dimension followed by affine
// gain/bias. eps guards zero-variance slices.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  if (x.rank() < 1)
    throw std::invalid_argument("layer_norm: need rank >= 1, got " + shape_str(x.shape()));
  const std::size_t h = x.shape().back();
  detail::require_rank(gain, 1, "layer_norm");
  detail::require_rank(bias, 1, "layer_norm");
  if (gain.dim(0) != h || bias.dim(0) != h)
    throw std::invalid_argument("layer_norm: affine width mismatch, x " +
                                shape_str(x.shape()) + " gain " + shape_str(gain.shape()) +
                                " bias " + shape_str(bias.shape()));
  const std::size_t rows = x.numel() / h;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = x.data().data() + r * h;
    double mean = 0.0;
    for (std::size_t j = 0; j < h; ++j) mean += xi[j];
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(h);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < h; ++j) {
      xhat[r * h + j] = (xi[j] - mean) * inv;
      out.data()[r * h + j] = gain.data()[j] * xhat[r * h + j] + bias.data()[j];
    }
  }
  out.set_requires_grad(x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([x, gain, bias, out, rows, h, xhat = std::move(xhat),
                            inv_std = std::move(inv_std)]() mutable {
      const auto& g = out.grad();
      if (gain.requires_grad()) {
        auto& gg = gain.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < h; ++j) gg[j] += g[r * h + j] * xhat[r * h + j];
      }
      if (bias.requires_grad()) {
        auto& gb = bias.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < h; ++j) gb[j] += g[r * h + j];
      }
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < h; ++j) {
            const double dxhat = g[r * h + j] * gain.data()[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[r * h + j];
          }
          mean_dxhat /= static_cast<double>(h);
          mean_dxhat_xhat /= static_cast<double>(h);
          for (std::size_t j = 0; j < h; ++j) {
            const double dxhat = g[r * h + j] * gain.data()[j];
            gx[r * h + j] +=
                inv_std[r] * (dxhat - mean_dxhat - xhat[r * h + j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

enum class DropoutMode { kTrain, kStochasticInfer, kEval };

// Inverted dropout. kStochasticInfer keeps the mask active at deployment to
// make repeated queries stochastic; kEval is the identity.
inline Tensor dropout(const Tensor& x, double p, DropoutMode mode, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (mode == DropoutMode::kEval || p == 0.0) {
    Tensor out = Tensor::from(x.shape(), x.data());
    out.set_requires_grad(x.requires_grad());
    if (detail::track(out)) {
      Tape::active()->record([x, out]() mutable {
        auto& gx = x.grad();
        const auto& g = out.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      });
    }
    return out;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<std::uint8_t> keep(x.numel());
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    keep[i] = rng.uniform() >= p ? 1 : 0;
    out.data()[i] = keep[i] ? x.data()[i] * keep_scale : 0.0;
  }
  out.set_requires_grad(x.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([x, out, keep = std::move(keep), keep_scale]() mutable {
      auto& gx = x.grad();
      const auto& g = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (keep[i]) gx[i] += g[i] * keep_scale;
    });
  }
  return out;
}

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  out.set_requires_grad(x.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([x, out]() mutable {
      auto& gx = x.grad();
      const double g = out.grad()[0];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

// columns [c0, c1) of a matrix
inline Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  detail::require_rank(x, 2, "slice_cols");
  if (c0 >= c1 || c1 > x.dim(1))
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + ", " +
                                std::to_string(c1) + ") for " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1), w = c1 - c0;
  Tensor out = Tensor::zeros({r, w});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out.data()[i * w + j] = x.data()[i * c + c0 + j];
  out.set_requires_grad(x.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([x, out, r, c, c0, w]() mutable {
      auto& gx = x.grad();
      const auto& g = out.grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) gx[i * c + c0 + j] += g[i * w + j];
    });
  }
  return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const std::size_t r = parts[0].dim(0);
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_cols");
    if (p.dim(0) != r)
      throw std::invalid_argument("concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                                  " vs " + shape_str(p.shape()));
    total += p.dim(1);
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({r, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j)
        out.data()[i * total + off + j] = p.data()[i * w + j];
    off += w;
  }
  out.set_requires_grad(rg);
  if (detail::track(out)) {
    Tape::active()->record([parts, out, r, total]() mutable {
      const auto& g = out.grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        const std::size_t w = p.dim(1);
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + off + j];
        }
        off += w;
      }
    });
  }
  return out;
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const std::size_t c = parts[0].dim(1);
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_rows");
    if (p.dim(1) != c)
      throw std::invalid_argument("concat_rows: column mismatch " +
                                  shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    total += p.dim(0);
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({total, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t n = p.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[off + i] = p.data()[i];
    off += n;
  }
  out.set_requires_grad(rg);
  if (detail::track(out)) {
    Tape::active()->record([parts, out]() mutable {
      const auto& g = out.grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        const std::size_t n = p.numel();
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
        }
        off += n;
      }
    });
  }
  return out;
}

// column-wise max over the rows of a matrix -> [1 x C]; gradient routes to the
// first row attaining the maximum
inline Tensor max_over_rows(const Tensor& x) {
  detail::require_rank(x, 2, "max_over_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (r == 0) throw std::invalid_argument("max_over_rows: empty matrix");
  Tensor out = Tensor::zeros({1, c});
  std::vector<std::size_t> argmax(c, 0);
  for (std::size_t j = 0; j < c; ++j) {
    double best = x.data()[j];
    for (std::size_t i = 1; i < r; ++i) {
      const double v = x.data()[i * c + j];
      if (v > best) {
        best = v;
        argmax[j] = i;
      }
    }
    out.data()[j] = best;
  }
  out.set_requires_grad(x.requires_grad());
  if (detail::track(out)) {
    Tape::active()->record([x, out, c, argmax = std::move(argmax)]() mutable {
      auto& gx = x.grad();
      const auto& g = out.grad();
      for (std::size_t j = 0; j < c; ++j) gx[argmax[j] * c + j] += g[j];
    });
  }
  return out;
}

}  // namespace gaide
