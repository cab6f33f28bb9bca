#pragma once

#include <vector>

#include "arc/tensor.hpp"

namespace arc {

// Elementwise binaries. Shapes must match exactly, except that either side
// may be scalar-shaped (numel 1) and broadcasts over the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& t);
Tensor abs(const Tensor& t);
Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);  // throws std::domain_error on non-positive input
Tensor sigmoid(const Tensor& t);
Tensor tanh(const Tensor& t);
// Gradient passes only where lo <= x <= hi.
Tensor clamp(const Tensor& t, double lo, double hi);

// (m,k)x(k,n) -> (m,n); also accepts a rank-1 right operand (k) -> (m).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& t);  // rank-2 only

Tensor reshape(const Tensor& t, Shape shape);
Tensor flatten(const Tensor& t);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& t, int axis, int start, int len);

// Full reductions produce a scalar-shaped {1} tensor. Axis reductions drop
// the axis (a rank-1 input reduces to {1}). max routes its subgradient to the
// first maximal element.
Tensor sum(const Tensor& t);
Tensor sum(const Tensor& t, int axis);
Tensor mean(const Tensor& t);
Tensor mean(const Tensor& t, int axis);
Tensor max_reduce(const Tensor& t);
Tensor max_reduce(const Tensor& t, int axis);

// Rank-1 softmax, computed with max subtraction. Output sums to 1.
Tensor softmax(const Tensor& t);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& t) { return neg(t); }

inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
inline Tensor operator/(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

}  // namespace arc
