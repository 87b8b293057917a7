#pragma once

#include <algorithm>
#include <cmath>

#include "dang/tensor.hpp"

namespace dang {

namespace detail {

template <class Scalar>
void check_binary_shapes(const char* name, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape() && a.numel() != 1 && b.numel() != 1)
    throw DimensionError(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// Accumulate g into node, reducing to a single element when the node is a
// broadcast scalar.
template <class Scalar, class Expr>
void accum_maybe_scalar(const std::shared_ptr<TensorNode<Scalar>>& n, const Expr& g) {
  if (!n->needs_grad) return;
  if (n->value.size() == 1) {
    n->ensure_grad();
    n->grad[0] += g.sum();
  } else {
    n->accumulate(g);
  }
}

template <class Scalar>
ArrayX<Scalar> broadcast_to(const ArrayX<Scalar>& v, Eigen::Index n) {
  if (v.size() == n) return v;
  return ArrayX<Scalar>::Constant(n, v[0]);
}

}  // namespace detail

// ---- elementwise: tensor (+|-|*|/) tensor, either side may be scalar-shaped

template <class Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_binary_shapes("add", a, b);
  const Shape& out_shape = a.numel() == 1 ? b.shape() : a.shape();
  const Eigen::Index n = shape_numel(out_shape);
  ArrayX<Scalar> out = detail::broadcast_to(a.value(), n) + detail::broadcast_to(b.value(), n);
  auto an = a.node(), bn = b.node();
  return detail::make_op<Scalar>("add", out_shape, std::move(out), {a, b},
                                 [an, bn](TensorNode<Scalar>& o) {
                                   detail::accum_maybe_scalar(an, o.grad);
                                   detail::accum_maybe_scalar(bn, o.grad);
                                 });
}

template <class Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_binary_shapes("sub", a, b);
  const Shape& out_shape = a.numel() == 1 ? b.shape() : a.shape();
  const Eigen::Index n = shape_numel(out_shape);
  ArrayX<Scalar> out = detail::broadcast_to(a.value(), n) - detail::broadcast_to(b.value(), n);
  auto an = a.node(), bn = b.node();
  return detail::make_op<Scalar>("sub", out_shape, std::move(out), {a, b},
                                 [an, bn](TensorNode<Scalar>& o) {
                                   detail::accum_maybe_scalar(an, o.grad);
                                   detail::accum_maybe_scalar(bn, -o.grad);
                                 });
}

template <class Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_binary_shapes("mul", a, b);
  const Shape& out_shape = a.numel() == 1 ? b.shape() : a.shape();
  const Eigen::Index n = shape_numel(out_shape);
  ArrayX<Scalar> av = detail::broadcast_to(a.value(), n);
  ArrayX<Scalar> bv = detail::broadcast_to(b.value(), n);
  ArrayX<Scalar> out = av * bv;
  auto an = a.node(), bn = b.node();
  return detail::make_op<Scalar>("mul", out_shape, std::move(out), {a, b},
                                 [an, bn, av = std::move(av), bv = std::move(bv)](TensorNode<Scalar>& o) {
                                   detail::accum_maybe_scalar(an, (o.grad * bv).eval());
                                   detail::accum_maybe_scalar(bn, (o.grad * av).eval());
                                 });
}

template <class Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_binary_shapes("div", a, b);
  if ((b.value() == Scalar(0)).any()) throw DomainError("div: zero denominator");
  const Shape& out_shape = a.numel() == 1 ? b.shape() : a.shape();
  const Eigen::Index n = shape_numel(out_shape);
  ArrayX<Scalar> av = detail::broadcast_to(a.value(), n);
  ArrayX<Scalar> bv = detail::broadcast_to(b.value(), n);
  ArrayX<Scalar> out = av / bv;
  auto an = a.node(), bn = b.node();
  return detail::make_op<Scalar>("div", out_shape, std::move(out), {a, b},
                                 [an, bn, av = std::move(av), bv = std::move(bv)](TensorNode<Scalar>& o) {
                                   detail::accum_maybe_scalar(an, (o.grad / bv).eval());
                                   detail::accum_maybe_scalar(bn, (-o.grad * av / (bv * bv)).eval());
                                 });
}

// ---- tensor-constant variants (constant carries no gradient)

template <class Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, Scalar c) {
  ArrayX<Scalar> out = a.value() + c;
  auto an = a.node();
  return detail::make_op<Scalar>("add_c", a.shape(), std::move(out), {a},
                                 [an](TensorNode<Scalar>& o) { an->accumulate(o.grad); });
}

// c - a
template <class Scalar>
Tensor<Scalar> sub(Scalar c, const Tensor<Scalar>& a) {
  ArrayX<Scalar> out = c - a.value();
  auto an = a.node();
  return detail::make_op<Scalar>("rsub_c", a.shape(), std::move(out), {a},
                                 [an](TensorNode<Scalar>& o) { an->accumulate(-o.grad); });
}

template <class Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, Scalar c) {
  return add(a, Scalar(-c));
}

// scale: a * c
template <class Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c) {
  ArrayX<Scalar> out = a.value() * c;
  auto an = a.node();
  return detail::make_op<Scalar>("scale", a.shape(), std::move(out), {a},
                                 [an, c](TensorNode<Scalar>& o) { an->accumulate(o.grad * c); });
}

template <class Scalar>
Tensor<Scalar> neg(const Tensor<Scalar>& a) {
  return scale(a, Scalar(-1));
}

// Gradient passes through where lo <= a <= hi and is zero outside.
template <class Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& a, Scalar lo, Scalar hi) {
  ArrayX<Scalar> out = a.value().max(lo).min(hi);
  ArrayX<Scalar> mask = ((a.value() >= lo) && (a.value() <= hi)).template cast<Scalar>();
  auto an = a.node();
  return detail::make_op<Scalar>("clamp", a.shape(), std::move(out), {a},
                                 [an, mask = std::move(mask)](TensorNode<Scalar>& o) {
                                   an->accumulate(o.grad * mask);
                                 });
}

// ---- activations

template <class Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  ArrayX<Scalar> out = a.value().max(Scalar(0));
  ArrayX<Scalar> mask = (a.value() > Scalar(0)).template cast<Scalar>();
  auto an = a.node();
  return detail::make_op<Scalar>("relu", a.shape(), std::move(out), {a},
                                 [an, mask = std::move(mask)](TensorNode<Scalar>& o) {
                                   an->accumulate(o.grad * mask);
                                 });
}

template <class Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& a, Scalar slope = Scalar(0.01)) {
  ArrayX<Scalar> out = (a.value() > Scalar(0)).select(a.value(), a.value() * slope);
  ArrayX<Scalar> dmask =
      (a.value() > Scalar(0)).select(ArrayX<Scalar>::Ones(a.numel()), ArrayX<Scalar>::Constant(a.numel(), slope));
  auto an = a.node();
  return detail::make_op<Scalar>("leaky_relu", a.shape(), std::move(out), {a},
                                 [an, dmask = std::move(dmask)](TensorNode<Scalar>& o) {
                                   an->accumulate(o.grad * dmask);
                                 });
}

template <class Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a) {
  // Stable logistic: never exponentiates a positive argument.
  ArrayX<Scalar> out(a.numel());
  const auto& v = a.value();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const Scalar x = v[i];
    if (x >= Scalar(0)) {
      out[i] = Scalar(1) / (Scalar(1) + std::exp(-x));
    } else {
      const Scalar e = std::exp(x);
      out[i] = e / (Scalar(1) + e);
    }
  }
  auto an = a.node();
  ArrayX<Scalar> saved = out;
  return detail::make_op<Scalar>("sigmoid", a.shape(), std::move(out), {a},
                                 [an, s = std::move(saved)](TensorNode<Scalar>& o) {
                                   an->accumulate(o.grad * s * (Scalar(1) - s));
                                 });
}

template <class Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& a) {
  if ((a.value() <= Scalar(0)).any())
    throw DomainError("log: non-positive input; clamp to >= 1e-7 first");
  ArrayX<Scalar> out = a.value().log();
  auto an = a.node();
  ArrayX<Scalar> av = a.value();
  return detail::make_op<Scalar>("log", a.shape(), std::move(out), {a},
                                 [an, av = std::move(av)](TensorNode<Scalar>& o) {
                                   an->accumulate(o.grad / av);
                                 });
}

// ---- reductions

enum class Reduce { sum, mean };

template <class Scalar>
Tensor<Scalar> reduce(const Tensor<Scalar>& a, Reduce kind, const std::vector<int>& axes) {
  if (axes.empty()) throw DimensionError("reduce: empty axis set");
  const int r = a.rank();
  std::vector<bool> reduced(static_cast<std::size_t>(r), false);
  for (int ax : axes) {
    if (ax < 0 || ax >= r) throw DimensionError("reduce: axis " + std::to_string(ax) + " out of range");
    if (reduced[static_cast<std::size_t>(ax)]) throw DimensionError("reduce: repeated axis");
    reduced[static_cast<std::size_t>(ax)] = true;
  }
  Shape out_shape;
  for (int i = 0; i < r; ++i)
    if (!reduced[static_cast<std::size_t>(i)]) out_shape.push_back(a.dim(i));
  if (out_shape.empty()) out_shape = {1};

  const Shape in_shape = a.shape();
  const std::int64_t n = a.numel();
  std::int64_t count = 1;
  for (int i = 0; i < r; ++i)
    if (reduced[static_cast<std::size_t>(i)]) count *= in_shape[static_cast<std::size_t>(i)];

  // Row-major strides of the output indexed by kept input dims.
  std::vector<std::int64_t> out_stride(static_cast<std::size_t>(r), 0);
  {
    std::int64_t s = 1;
    for (int i = r - 1; i >= 0; --i) {
      if (!reduced[static_cast<std::size_t>(i)]) {
        out_stride[static_cast<std::size_t>(i)] = s;
        s *= in_shape[static_cast<std::size_t>(i)];
      }
    }
  }
  std::vector<std::int64_t> in_stride(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i)
    in_stride[static_cast<std::size_t>(i)] =
        in_stride[static_cast<std::size_t>(i + 1)] * in_shape[static_cast<std::size_t>(i + 1)];

  auto map_index = [&](std::int64_t flat) {
    std::int64_t out = 0;
    for (int i = 0; i < r; ++i) {
      const std::int64_t idx = (flat / in_stride[static_cast<std::size_t>(i)]) %
                               in_shape[static_cast<std::size_t>(i)];
      out += idx * out_stride[static_cast<std::size_t>(i)];
    }
    return out;
  };

  ArrayX<Scalar> out = ArrayX<Scalar>::Zero(shape_numel(out_shape));
  const bool full = shape_numel(out_shape) == 1;
  if (full) {
    out[0] = a.value().sum();
  } else {
    for (std::int64_t i = 0; i < n; ++i) out[map_index(i)] += a.value()[i];
  }
  if (kind == Reduce::mean) out /= static_cast<Scalar>(count);

  auto an = a.node();
  const Scalar w = kind == Reduce::mean ? Scalar(1) / static_cast<Scalar>(count) : Scalar(1);
  return detail::make_op<Scalar>(
      kind == Reduce::mean ? "mean" : "sum", out_shape, std::move(out), {a},
      [an, w, full, n, map_index](TensorNode<Scalar>& o) {
        an->ensure_grad();
        if (full) {
          an->grad += w * o.grad[0];
        } else {
          for (std::int64_t i = 0; i < n; ++i) an->grad[i] += w * o.grad[map_index(i)];
        }
      });
}

template <class Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  std::vector<int> axes(static_cast<std::size_t>(a.rank()));
  for (int i = 0; i < a.rank(); ++i) axes[static_cast<std::size_t>(i)] = i;
  return reduce(a, Reduce::sum, axes);
}

template <class Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  std::vector<int> axes(static_cast<std::size_t>(a.rank()));
  for (int i = 0; i < a.rank(); ++i) axes[static_cast<std::size_t>(i)] = i;
  return reduce(a, Reduce::mean, axes);
}

}  // namespace dang
