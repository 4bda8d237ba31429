// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Reverse-mode differentiation over dense row-major tensors.
//
// A Tape records every operation applied to its Vars in creation order, so
// parents always precede children and a single reverse sweep visits each
// node once. Leaves are either parameters (gradients wanted) or constants.
// Nodes whose inputs are all constants are recorded without a backward rule.

#include "nerfin/core.hpp"

#include <cmath>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace nerfin {

enum class Axis { rows, cols };

template <typename Scalar>
class Tape;

/// Handle to one node of a Tape.
template <typename Scalar>
class Var {
 public:
  using Mat = Tensor<Scalar>;

  Var() = default;
  Var(Tape<Scalar>* tape, Index id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  Index id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Mat& value() const { return tape_->value(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Shape shape() const { return shape_of(value()); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  Index id_ = -1;
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Tensor<Scalar>;
  using BackwardFn = std::function<void(Tape&, Index)>;

  /// With `record` false no backward rules are stored and products are
  /// evaluated coefficient-wise, so every output row of a matmul depends only
  /// on its own input row (batch-size independent inference).
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> parameter(Mat value) { return push(std::move(value), record_, {}); }
  Var<Scalar> constant(Mat value) { return push(std::move(value), false, {}); }

  bool recording() const { return record_; }
  Index size() const { return static_cast<Index>(nodes_.size()); }

  const Mat& value(Index id) const { return nodes_[id].value; }
  bool requires_grad(Index id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulated at a node; zero-filled if nothing reached it.
  Mat gradient(const Var<Scalar>& v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void zero_grad() {
    for (auto& n : nodes_) n.grad.resize(0, 0);
  }

  /// Propagates d(root)/d(node) to every node that requires a gradient.
  void backward(const Var<Scalar>& root) {
    if (&root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
    const Node& r = nodes_[root.id()];
    if (r.value.rows() != 1 || r.value.cols() != 1) {
      throw ShapeError("backward: root must be a scalar, got " + shape_string(shape_of(r.value)));
    }
    zero_grad();
    if (!r.requires_grad) return;
    nodes_[root.id()].grad = Mat::Ones(1, 1);
    for (Index i = root.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  // Op-construction interface.

  /// Records a node; it requires a gradient if any parent does.
  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> parents, BackwardFn fn) {
    bool needs = false;
    if (record_) {
      for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }

  Var<Scalar> record(Mat value, std::span<const Var<Scalar>> parents, BackwardFn fn) {
    bool needs = false;
    if (record_) {
      for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }

  const Mat& grad(Index id) const { return nodes_[id].grad; }

  template <typename Expr>
  void accumulate(Index id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Accumulates lhs * rhs without a temporary.
  template <typename L, typename R>
  void accumulate_product(Index id, const L& lhs, const R& rhs) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad.noalias() = lhs * rhs;
    } else {
      n.grad.noalias() += lhs * rhs;
    }
  }

  /// Accumulates into a sub-block of a node's gradient.
  template <typename Expr>
  void accumulate_block(Index id, Index row, Index col, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad.block(row, col, g.rows(), g.cols()) += g;
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<Scalar> push(Mat value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Mat{}, requires_grad, std::move(fn)});
    return Var<Scalar>(this, size() - 1);
  }

  bool record_;
  std::vector<Node> nodes_;
};

namespace detail {

template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
}

template <typename Scalar>
void require_same_tape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

/// Applies a coefficient-wise array function with every element evaluated in
/// a full SIMD packet, so a value never depends on its position in the tensor.
template <typename Scalar, typename F>
Tensor<Scalar> lanewise(const Tensor<Scalar>& x, F f) {
  constexpr Index packet = Eigen::internal::packet_traits<Scalar>::size;
  const Index n = x.size();
  const Index padded = (n + packet - 1) / packet * packet;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> buf(padded);
  buf.head(n) = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(x.data(), n);
  buf.tail(padded - n).setZero();
  Eigen::Array<Scalar, Eigen::Dynamic, 1> out = f(buf);
  Tensor<Scalar> result(x.rows(), x.cols());
  Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(result.data(), n) = out.head(n);
  return result;
}

/// Row sums accumulated left to right.
template <typename Scalar>
Tensor<Scalar> row_sums(const Tensor<Scalar>& x) {
  Tensor<Scalar> out(x.rows(), 1);
  for (Index r = 0; r < x.rows(); ++r) {
    Scalar acc(0);
    for (Index c = 0; c < x.cols(); ++c) acc += x(r, c);
    out(r, 0) = acc;
  }
  return out;
}

/// Column sums accumulated top to bottom.
template <typename Scalar>
Tensor<Scalar> column_sums(const Tensor<Scalar>& x) {
  Tensor<Scalar> out = Tensor<Scalar>::Zero(1, x.cols());
  for (Index r = 0; r < x.rows(); ++r) out += x.row(r);
  return out;
}

/// Sum of all elements with a 64-bit accumulator.
template <typename Scalar>
double total(const Tensor<Scalar>& x) {
  double acc = 0;
  for (Index i = 0; i < x.size(); ++i) acc += static_cast<double>(x.data()[i]);
  return acc;
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_tape("add", a, b);
  detail::require_same_shape("add", a, b);
  const Index ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_tape("sub", a, b);
  detail::require_same_shape("sub", a, b);
  const Index ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_tape("mul", a, b);
  detail::require_same_shape("mul", a, b);
  const Index ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape<Scalar>& t, Index self) {
    if (t.requires_grad(ia)) t.accumulate(ia, t.grad(self).cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, t.grad(self).cwiseProduct(t.value(ia)));
  });
}

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_tape("matmul", a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " do not conform");
  }
  Tensor<Scalar> out(a.rows(), b.cols());
  if (a.tape().recording()) {
    out.noalias() = a.value() * b.value();
  } else {
    out.noalias() = a.value().lazyProduct(b.value());
  }
  const Index ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<Scalar>& t, Index self) {
    if (t.requires_grad(ia)) t.accumulate_product(ia, t.grad(self), t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate_product(ib, t.value(ia).transpose(), t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> neg(const Var<Scalar>& a) {
  const Index ia = a.id();
  return a.tape().record(-a.value(), {a}, [ia](Tape<Scalar>& t, Index self) { t.accumulate(ia, -t.grad(self)); });
}

/// y = scale * a + shift, elementwise.
template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& a, Scalar scale, Scalar shift = Scalar(0)) {
  const Index ia = a.id();
  Tensor<Scalar> out = (a.value().array() * scale + shift).matrix();
  return a.tape().record(std::move(out), {a}, [ia, scale](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, t.grad(self) * scale);
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  const Index ia = a.id();
  return a.tape().record(a.value().cwiseMax(Scalar(0)), {a}, [ia](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, (t.value(ia).array() > Scalar(0)).select(t.grad(self).array(), Scalar(0)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  const Index ia = a.id();
  Tensor<Scalar> out = detail::lanewise(a.value(), [](const auto& x) { return Scalar(1) / (Scalar(1) + (-x).exp()); });
  return a.tape().record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    const auto y = t.value(self).array();
    t.accumulate(ia, (t.grad(self).array() * y * (Scalar(1) - y)).matrix());
  });
}

/// log(1 + exp(a)), evaluated without overflow.
template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& a) {
  const Index ia = a.id();
  Tensor<Scalar> out =
      detail::lanewise(a.value(), [](const auto& x) { return x.max(Scalar(0)) + (-x.abs()).exp().log1p(); });
  return a.tape().record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    const Tensor<Scalar> s =
        detail::lanewise(t.value(ia), [](const auto& x) { return Scalar(1) / (Scalar(1) + (-x).exp()); });
    t.accumulate(ia, t.grad(self).cwiseProduct(s));
  });
}

template <typename Scalar>
Var<Scalar> sin(const Var<Scalar>& a) {
  const Index ia = a.id();
  Tensor<Scalar> out = detail::lanewise(a.value(), [](const auto& x) { return x.sin(); });
  return a.tape().record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    const Tensor<Scalar> c = detail::lanewise(t.value(ia), [](const auto& x) { return x.cos(); });
    t.accumulate(ia, t.grad(self).cwiseProduct(c));
  });
}

template <typename Scalar>
Var<Scalar> cos(const Var<Scalar>& a) {
  const Index ia = a.id();
  Tensor<Scalar> out = detail::lanewise(a.value(), [](const auto& x) { return x.cos(); });
  return a.tape().record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    const Tensor<Scalar> s = detail::lanewise(t.value(ia), [](const auto& x) { return x.sin(); });
    t.accumulate(ia, -t.grad(self).cwiseProduct(s));
  });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  const Index ia = a.id();
  Tensor<Scalar> out = detail::lanewise(a.value(), [](const auto& x) { return x.exp(); });
  return a.tape().record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

/// Sum of all elements, as a 1x1 tensor (accumulated in double).
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  const Index ia = a.id();
  Tensor<Scalar> out(1, 1);
  out(0, 0) = static_cast<Scalar>(detail::total(a.value()));
  return a.tape().record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    const auto& v = t.value(ia);
    t.accumulate(ia, Tensor<Scalar>::Constant(v.rows(), v.cols(), t.grad(self)(0, 0)));
  });
}

/// Reduction that collapses one axis: Axis::rows gives 1 x cols, Axis::cols gives rows x 1.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a, Axis axis) {
  const Index ia = a.id();
  if (axis == Axis::rows) {
    Tensor<Scalar> out = detail::column_sums(a.value());
    return a.tape().record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
      t.accumulate(ia, t.grad(self).replicate(t.value(ia).rows(), 1));
    });
  }
  Tensor<Scalar> out = detail::row_sums(a.value());
  return a.tape().record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    t.accumulate(ia, t.grad(self).replicate(1, t.value(ia).cols()));
  });
}

/// Expands a 1x1, 1xC or Rx1 tensor to rows x cols.
template <typename Scalar>
Var<Scalar> broadcast(const Var<Scalar>& a, Index rows, Index cols) {
  const Index r = a.rows(), c = a.cols();
  const bool ok = (r == rows || r == 1) && (c == cols || c == 1);
  if (!ok) {
    throw ShapeError("broadcast: cannot expand " + shape_string(a.shape()) + " to " +
                     shape_string({rows, cols}));
  }
  const Index ia = a.id();
  Tensor<Scalar> out(rows, cols);
  const auto& v = a.value();
  for (Index i = 0; i < rows; ++i) {
    if (c == cols) {
      out.row(i) = v.row(r == 1 ? 0 : i);
    } else {
      out.row(i).setConstant(v(r == 1 ? 0 : i, 0));
    }
  }
  return a.tape().record(std::move(out), {a}, [ia, r, c](Tape<Scalar>& t, Index self) {
    const auto& g = t.grad(self);
    if (r == g.rows() && c == g.cols()) {
      t.accumulate(ia, g);
    } else if (r == 1 && c == 1) {
      Tensor<Scalar> s(1, 1);
      s(0, 0) = static_cast<Scalar>(detail::total(g));
      t.accumulate(ia, s);
    } else if (r == 1) {
      t.accumulate(ia, detail::column_sums(g));
    } else {
      t.accumulate(ia, detail::row_sums(g));
    }
  });
}

/// Contiguous range [begin, begin + count) along one axis.
template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& a, Axis axis, Index begin, Index count) {
  const Index extent = axis == Axis::rows ? a.rows() : a.cols();
  if (begin < 0 || count < 0 || begin + count > extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of bounds for " + shape_string(a.shape()));
  }
  const Index ia = a.id();
  const bool rows = axis == Axis::rows;
  Tensor<Scalar> out = rows ? Tensor<Scalar>(a.value().middleRows(begin, count))
                            : Tensor<Scalar>(a.value().middleCols(begin, count));
  return a.tape().record(std::move(out), {a}, [ia, rows, begin](Tape<Scalar>& t, Index self) {
    const auto& g = t.grad(self);
    t.accumulate_block(ia, rows ? begin : 0, rows ? 0 : begin, g);
  });
}

template <typename Scalar>
Var<Scalar> concat(std::span<const Var<Scalar>> parts, Axis axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const bool rows = axis == Axis::rows;
  Index total = 0;
  for (const auto& p : parts) {
    detail::require_same_tape("concat", parts[0], p);
    const Index other = rows ? p.cols() : p.rows();
    const Index expect = rows ? parts[0].cols() : parts[0].rows();
    if (other != expect) {
      throw ShapeError("concat: shapes " + shape_string(parts[0].shape()) + " and " + shape_string(p.shape()) +
                       " do not conform");
    }
    total += rows ? p.rows() : p.cols();
  }
  Tensor<Scalar> out = rows ? Tensor<Scalar>(total, parts[0].cols()) : Tensor<Scalar>(parts[0].rows(), total);
  std::vector<Index> ids, offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    if (rows) {
      out.middleRows(offset, p.rows()) = p.value();
    } else {
      out.middleCols(offset, p.cols()) = p.value();
    }
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += rows ? p.rows() : p.cols();
  }
  return parts[0].tape().record(std::move(out), parts, [ids, offsets, rows](Tape<Scalar>& t, Index self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      const auto& v = t.value(ids[k]);
      if (rows) {
        t.accumulate(ids[k], g.middleRows(offsets[k], v.rows()));
      } else {
        t.accumulate(ids[k], g.middleCols(offsets[k], v.cols()));
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> concat(std::initializer_list<Var<Scalar>> parts, Axis axis) {
  return concat(std::span<const Var<Scalar>>(parts.begin(), parts.size()), axis);
}

/// Reinterprets the row-major element order under a new shape.
template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string({rows, cols}));
  }
  const Index ia = a.id();
  Tensor<Scalar> out = Eigen::Map<const Tensor<Scalar>>(a.value().data(), rows, cols);
  return a.tape().record(std::move(out), {a}, [ia](Tape<Scalar>& t, Index self) {
    const auto& v = t.value(ia);
    const auto& g = t.grad(self);
    t.accumulate(ia, Eigen::Map<const Tensor<Scalar>>(g.data(), v.rows(), v.cols()));
  });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return add(a, b);
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  return sub(a, b);
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) {
  return neg(a);
}

/// Mean of all elements.
template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  return affine(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

/// x @ weight + bias, with bias a 1 x out row vector. Recorded as one node.
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  detail::require_same_tape("linear", x, weight);
  detail::require_same_tape("linear", x, bias);
  if (x.cols() != weight.rows() || bias.rows() != 1 || bias.cols() != weight.cols()) {
    throw ShapeError("linear: " + shape_string(x.shape()) + " @ " + shape_string(weight.shape()) + " + " +
                     shape_string(bias.shape()));
  }
  Tensor<Scalar> out(x.rows(), weight.cols());
  if (x.tape().recording()) {
    out.noalias() = x.value() * weight.value();
  } else {
    out.noalias() = x.value().lazyProduct(weight.value());
  }
  out.rowwise() += bias.value().row(0);
  const Index ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, weight, bias}, [ix, iw, ib](Tape<Scalar>& t, Index self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ix)) t.accumulate_product(ix, g, t.value(iw).transpose());
    if (t.requires_grad(iw)) t.accumulate_product(iw, t.value(ix).transpose(), g);
    if (t.requires_grad(ib)) t.accumulate(ib, detail::column_sums(g));
  });
}

}  // namespace nerfin
