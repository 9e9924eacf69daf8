#pragma once

#include "sril/tensor.hpp"

namespace sril {

// Builds a tape node. The backward rule is attached only when some input
// requires grad, so constant subgraphs (e.g. the frozen old model) record
// nothing.
Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
               std::function<void(Node&)> backward_fn);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// x: (..., N), bias: (N); bias broadcast over leading dims.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// a: (m,k), b: (k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);

// a: (m,k), b: (n,k) -> (m,n); b used transposed.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);

// x: (B,C,H,W), w: (F,C,kh,kw), bias: (F); stride 1, same padding (kh/2,kw/2).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);

// 2x2 average pooling, stride 2, floor division of spatial dims.
Tensor avg_pool2(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);

// Rows of the last dimension are scaled to unit L2 norm. Rows with norm
// below 1e-8 map to the zero vector (and pass zero gradient).
Tensor l2_normalize_lastdim(const Tensor& x);

Tensor softmax_lastdim(const Tensor& x);
Tensor log_elem(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_lastdim(const Tensor& x);

inline constexpr double kNormalizeEps = 1e-8;

}  // namespace sril
