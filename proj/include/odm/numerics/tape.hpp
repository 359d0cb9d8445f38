#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "odm/numerics/parameters.hpp"
#include "odm/numerics/tensor.hpp"

namespace odm::nn {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode tape. Ops append nodes in evaluation order; `backward`
/// walks them in reverse once. Inference mode records values only.
class Tape {
 public:
  enum class Mode { training, inference };
  using Backward = std::function<void(Tape&, std::uint32_t)>;

  explicit Tape(Mode mode = Mode::training) : mode_(mode) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const { return mode_; }

  Var constant(Tensor value) {
    check_finite(value, "constant");
    Node n;
    n.own = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  /// Binds a stored parameter as a leaf. Repeated binds return the same node.
  Var param(const ParameterStore& store, std::string_view name) {
    std::string key(name);
    if (auto it = param_ids_.find(key); it != param_ids_.end())
      return Var(this, it->second);
    const auto& e = store.entry(name);
    Node n;
    n.external = &e.value;
    n.requires_grad = mode_ == Mode::training && !e.frozen;
    n.param = key;
    nodes_.push_back(std::move(n));
    const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
    param_ids_.emplace(std::move(key), id);
    return Var(this, id);
  }

  /// Appends an op result. `back` is kept only when some input needs grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward back,
             const char* op) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(back), op);
  }

  Var record(Tensor value, const std::vector<Var>& inputs, Backward back,
             const char* op) {
    check_finite(value, op);
    bool needs = false;
    for (const Var& v : inputs) {
      if (v.tape_ != this) throw std::invalid_argument(std::string(op) + ": input from another tape");
      needs = needs || nodes_[v.id_].requires_grad;
    }
    Node n;
    n.own = std::move(value);
    if (needs && mode_ == Mode::training) {
      n.requires_grad = true;
      n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  const Tensor& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.own;
  }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  /// Upstream gradient of a node (zeros if nothing flowed into it).
  const Tensor& grad(std::uint32_t id) {
    return grad_target(id);
  }

  /// Gradient buffer of `v`, allocated as zeros on first touch.
  Tensor& grad_target(Var v) { return grad_target(v.id_); }
  Tensor& grad_target(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != value(id).size()) n.grad = Tensor(value(id).shape());
    return n.grad;
  }

  void backward(Var loss) {
    if (loss.tape_ != this) throw std::invalid_argument("backward: loss from another tape");
    if (backward_done_) throw std::logic_error("backward: tape already consumed");
    if (value(loss.id_).size() != 1)
      throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                  shape_str(value(loss.id_).shape()));
    backward_done_ = true;
    if (!nodes_[loss.id_].requires_grad) return;
    grad_target(loss.id_).fill(1.0);
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.back || n.grad.empty()) continue;
      n.back(*this, static_cast<std::uint32_t>(i));
    }
  }

  bool consumed() const { return backward_done_; }

  /// Gradients for every non-frozen parameter of `store`; parameters the
  /// loss never reached get zeros.
  GradientMap gradients(const ParameterStore& store) const {
    GradientMap out;
    for (const auto& e : store.entries()) {
      if (e.frozen) continue;
      auto it = param_ids_.find(e.name);
      if (it != param_ids_.end() && !nodes_[it->second].grad.empty())
        out.emplace(e.name, nodes_[it->second].grad);
      else
        out.emplace(e.name, Tensor(e.value.shape()));
    }
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor own;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Backward back;
    std::string param;
  };

  static void check_finite(const Tensor& t, const char* op) {
    if (!t.all_finite())
      throw std::domain_error(std::string(op) + ": non-finite value");
  }

  Mode mode_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::uint32_t> param_ids_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace detail {

inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

inline void same_shape(const Var& a, const Var& b, const char* op) {
  require(a.size() == b.size() && a.cols() == b.cols(), op,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline void add_into(Tensor& dst, const Tensor& src, double scale = 1.0) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += scale * s[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) {
  detail::same_shape(a, b, "add");
  Tensor out = a.value();
  detail::add_into(out, b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) detail::add_into(t.grad_target(a), g);
    if (t.requires_grad(b)) detail::add_into(t.grad_target(b), g);
  }, "add");
}

inline Var sub(Var a, Var b) {
  detail::same_shape(a, b, "sub");
  Tensor out = a.value();
  detail::add_into(out, b.value(), -1.0);
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) detail::add_into(t.grad_target(a), g);
    if (t.requires_grad(b)) detail::add_into(t.grad_target(b), g, -1.0);
  }, "sub");
}

inline Var mul(Var a, Var b) {
  detail::same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_target(a);
      const Tensor& bv = t.value(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_target(b);
      const Tensor& av = t.value(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  }, "mul");
}

/// a * c elementwise with a constant tensor c.
inline Var mul_const(Var a, const Tensor& c) {
  detail::require(a.size() == c.size(), "mul_const", "shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return a.tape()->record(std::move(out), {a}, [a, c](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_target(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c[i];
  }, "mul_const");
}

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return a.tape()->record(std::move(out), {a}, [a, s](Tape& t, std::uint32_t self) {
    detail::add_into(t.grad_target(a), t.grad(self), s);
  }, "scale");
}

inline Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v += s;
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
    detail::add_into(t.grad_target(a), t.grad(self));
  }, "add_scalar");
}

inline Var square(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= v;
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a.id());
    Tensor& ga = t.grad_target(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * av[i] * g[i];
  }, "square");
}

inline Var exp(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::exp(v);
  return a.tape()->record(out, {a}, [a, out](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_target(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += out[i] * g[i];
  }, "exp");
}

inline Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a.id());
    Tensor& ga = t.grad_target(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) ga[i] += g[i];
  }, "relu");
}

/// Clamp with zero gradient outside [lo, hi].
inline Var clamp(Var a, double lo, double hi) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return a.tape()->record(std::move(out), {a}, [a, lo, hi](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a.id());
    Tensor& ga = t.grad_target(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] >= lo && av[i] <= hi) ga[i] += g[i];
  }, "clamp");
}

/// Elementwise min; ties route the gradient to `a`.
inline Var minimum(Var a, Var b) {
  detail::same_shape(a, b, "minimum");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], b.value()[i]);
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a.id());
    const Tensor& bv = t.value(b.id());
    const bool ra = t.requires_grad(a), rb = t.requires_grad(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (av[i] <= bv[i]) {
        if (ra) t.grad_target(a)[i] += g[i];
      } else if (rb) {
        t.grad_target(b)[i] += g[i];
      }
    }
  }, "minimum");
}

// ---------------------------------------------------------------------------
// Broadcasting and reductions
// ---------------------------------------------------------------------------

/// a[r, :] + row[0, :] for every row r.
inline Var add_row(Var a, Var row) {
  detail::require(row.size() == a.cols(), "add_row",
                  "row width " + std::to_string(row.size()) + " vs " + std::to_string(a.cols()));
  Tensor out = a.value();
  const std::size_t c = a.cols();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t j = 0; j < c; ++j) out.at(r, j) += row.value()[j];
  return a.tape()->record(std::move(out), {a, row}, [a, row, c](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) detail::add_into(t.grad_target(a), g);
    if (t.requires_grad(row)) {
      Tensor& gr = t.grad_target(row);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < c; ++j) gr[j] += g.at(r, j);
    }
  }, "add_row");
}

/// a[r, :] * row[0, :] for every row r.
inline Var mul_row(Var a, Var row) {
  detail::require(row.size() == a.cols(), "mul_row", "row width mismatch");
  Tensor out = a.value();
  const std::size_t c = a.cols();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t j = 0; j < c; ++j) out.at(r, j) *= row.value()[j];
  return a.tape()->record(std::move(out), {a, row}, [a, row, c](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(a.id());
    const Tensor& rv = t.value(row.id());
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_target(a);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < c; ++j) ga.at(r, j) += g.at(r, j) * rv[j];
    }
    if (t.requires_grad(row)) {
      Tensor& gr = t.grad_target(row);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < c; ++j) gr[j] += g.at(r, j) * av.at(r, j);
    }
  }, "mul_row");
}

/// Repeats a 1 x C row `count` times.
inline Var broadcast_rows(Var row, std::size_t count) {
  const std::size_t c = row.size();
  Tensor out = Tensor::matrix(count, c);
  for (std::size_t r = 0; r < count; ++r)
    std::copy(row.value().data(), row.value().data() + c, out.data() + r * c);
  return row.tape()->record(std::move(out), {row}, [row, c](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gr = t.grad_target(row);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t j = 0; j < c; ++j) gr[j] += g.at(r, j);
  }, "broadcast_rows");
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape()->record(Tensor::scalar(s), {a}, [a](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_target(a).values()) v += g;
  }, "sum");
}

inline Var mean(Var a) {
  detail::require(a.size() > 0, "mean", "empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

/// Per-row sums: R x C -> R x 1.
inline Var sum_cols(Var a) {
  const std::size_t c = a.cols();
  Tensor out = Tensor::matrix(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t j = 0; j < c; ++j) out[r] += a.value().at(r, j);
  return a.tape()->record(std::move(out), {a}, [a, c](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_target(a);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t j = 0; j < c; ++j) ga.at(r, j) += g[r];
  }, "sum_cols");
}

/// sum_i a[i] * w[i] with constant weights.
inline Var weighted_sum(Var a, const Tensor& w) {
  detail::require(a.size() == w.size(), "weighted_sum", "shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.value()[i] * w[i];
  return a.tape()->record(Tensor::scalar(s), {a}, [a, w](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    Tensor& ga = t.grad_target(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * w[i];
  }, "weighted_sum");
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Var reshape(Var a, Shape shape) {
  detail::require(shape_size(shape) == a.size(), "reshape",
                  shape_str(a.shape()) + " -> " + shape_str(shape));
  return a.tape()->record(a.value().reshaped(std::move(shape)), {a},
                          [a](Tape& t, std::uint32_t self) {
                            detail::add_into(t.grad_target(a), t.grad(self));
                          }, "reshape");
}

/// Horizontal concatenation of matrices with equal row counts.
inline Var concat_cols(const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat_cols", "no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    detail::require(p.rows() == rows, "concat_cols", "row count mismatch");
    cols += p.cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(p.value().data() + r * c, p.value().data() + (r + 1) * c,
                out.data() + r * cols + off);
    off += c;
  }
  return parts[0].tape()->record(std::move(out), parts, [parts, cols](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t c = p.cols();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_target(p);
        for (std::size_t r = 0; r < gp.rows(); ++r)
          for (std::size_t j = 0; j < c; ++j) gp.at(r, j) += g[r * cols + off + j];
      }
      off += c;
    }
  }, "concat_cols");
}

/// Vertical concatenation of matrices with equal widths.
inline Var concat_rows(const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat_rows", "no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    detail::require(p.cols() == cols || p.size() == 0, "concat_rows", "width mismatch");
    rows += p.rows();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.size(), out.data() + off);
    off += p.size();
  }
  return parts[0].tape()->record(std::move(out), parts, [parts](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (const Var& p : parts) {
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_target(p);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
      }
      off += p.size();
    }
  }, "concat_rows");
}

/// out[i, :] = a[index[i], :]
inline Var gather_rows(Var a, std::vector<std::size_t> index) {
  const std::size_t c = a.cols();
  Tensor out = Tensor::matrix(index.size(), c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    detail::require(index[i] < a.rows(), "gather_rows", "row index out of range");
    std::copy(a.value().data() + index[i] * c, a.value().data() + (index[i] + 1) * c,
              out.data() + i * c);
  }
  return a.tape()->record(std::move(out), {a}, [a, c, index = std::move(index)](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_target(a);
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) ga.at(index[i], j) += g.at(i, j);
  }, "gather_rows");
}

/// Weighted sums over consecutive row groups:
/// out[g, :] = sum_j w[g*group + j] * a[g*group + j, :].
inline Var pool_rows(Var a, std::size_t group, const std::vector<double>& weights) {
  detail::require(group > 0 && a.rows() % group == 0, "pool_rows", "rows not divisible by group");
  detail::require(weights.size() == a.rows(), "pool_rows", "weight count mismatch");
  const std::size_t c = a.cols(), groups = a.rows() / group;
  Tensor out = Tensor::matrix(groups, c);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double w = weights[r];
    if (w == 0.0) continue;
    for (std::size_t j = 0; j < c; ++j) out.at(r / group, j) += w * a.value().at(r, j);
  }
  return a.tape()->record(std::move(out), {a}, [a, group, c, weights](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_target(a);
    for (std::size_t r = 0; r < ga.rows(); ++r) {
      const double w = weights[r];
      if (w == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) ga.at(r, j) += w * g.at(r / group, j);
    }
  }, "pool_rows");
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  detail::require(b.rows() == k, "matmul",
                  shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out = Tensor::matrix(m, n);
  gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
  return a.tape()->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a))
      gemm_nt(g.data(), t.value(b.id()).data(), t.grad_target(a).data(), m, n, k, true);
    if (t.requires_grad(b))
      gemm_tn(t.value(a.id()).data(), g.data(), t.grad_target(b).data(), m, k, n, true);
  }, "matmul");
}

/// x * W + b with W of shape in x out and b of shape 1 x out.
inline Var affine(Var x, Var w, Var b) {
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  detail::require(w.rows() == k, "affine",
                  "input width " + std::to_string(k) + " vs weight " + shape_str(w.shape()));
  detail::require(b.size() == n, "affine", "bias width mismatch");
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t r = 0; r < m; ++r)
    std::copy(b.value().data(), b.value().data() + n, out.data() + r * n);
  gemm_nn(x.value().data(), w.value().data(), out.data(), m, k, n, true);
  return x.tape()->record(std::move(out), {x, w, b}, [x, w, b, m, k, n](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(x))
      gemm_nt(g.data(), t.value(w.id()).data(), t.grad_target(x).data(), m, n, k, true);
    if (t.requires_grad(w))
      gemm_tn(t.value(x.id()).data(), g.data(), t.grad_target(w).data(), m, k, n, true);
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_target(b);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(r, j);
    }
  }, "affine");
}

}  // namespace odm::nn
