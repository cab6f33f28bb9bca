#include "arc/lstm.hpp"

#include <cmath>

#include "arc/error.hpp"

namespace arc {

namespace {

// Thin-QR of a tall column-major-free row-major matrix via Householder
// reflections; returns Q (m x n, orthonormal columns) with column signs
// fixed so diag(R) > 0.
std::vector<double> householder_q(int m, int n, std::vector<double> a) {
  std::vector<std::vector<double>> vs;
  std::vector<double> diag_sign(static_cast<std::size_t>(n), 1.0);
  for (int k = 0; k < n; ++k) {
    std::vector<double> v(static_cast<std::size_t>(m), 0.0);
    double norm = 0;
    for (int i = k; i < m; ++i) {
      v[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i * n + k)];
      norm += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
    }
    norm = std::sqrt(norm);
    const double akk = v[static_cast<std::size_t>(k)];
    const double alpha = akk >= 0 ? -norm : norm;
    diag_sign[static_cast<std::size_t>(k)] = alpha >= 0 ? 1.0 : -1.0;
    v[static_cast<std::size_t>(k)] -= alpha;
    double vnorm2 = 0;
    for (int i = k; i < m; ++i) vnorm2 += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
    if (vnorm2 > 0) {
      for (int j = k; j < n; ++j) {
        double dot = 0;
        for (int i = k; i < m; ++i) dot += v[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i * n + j)];
        const double s = 2.0 * dot / vnorm2;
        for (int i = k; i < m; ++i) a[static_cast<std::size_t>(i * n + j)] -= s * v[static_cast<std::size_t>(i)];
      }
    }
    vs.push_back(std::move(v));
  }
  // Q = H_0 ... H_{n-1} applied to the first n identity columns
  std::vector<double> q(static_cast<std::size_t>(m) * static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j) q[static_cast<std::size_t>(j * n + j)] = 1.0;
  for (int k = n - 1; k >= 0; --k) {
    const auto& v = vs[static_cast<std::size_t>(k)];
    double vnorm2 = 0;
    for (int i = k; i < m; ++i) vnorm2 += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
    if (vnorm2 == 0) continue;
    for (int j = 0; j < n; ++j) {
      double dot = 0;
      for (int i = k; i < m; ++i) dot += v[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(i * n + j)];
      const double s = 2.0 * dot / vnorm2;
      for (int i = k; i < m; ++i) q[static_cast<std::size_t>(i * n + j)] -= s * v[static_cast<std::size_t>(i)];
    }
  }
  for (int j = 0; j < n; ++j) {
    if (diag_sign[static_cast<std::size_t>(j)] < 0) {
      for (int i = 0; i < m; ++i) q[static_cast<std::size_t>(i * n + j)] = -q[static_cast<std::size_t>(i * n + j)];
    }
  }
  return q;
}

}  // namespace

Tensor orthogonal_init(int rows, int cols, Rng& rng, double gain) {
  const int m = std::max(rows, cols);
  const int n = std::min(rows, cols);
  std::vector<double> a(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
  for (auto& v : a) v = rng.normal();
  std::vector<double> q = householder_q(m, n, std::move(a));  // m x n
  std::vector<double> out(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
  if (rows >= cols) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gain * q[i];
  } else {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        out[static_cast<std::size_t>(i * cols + j)] = gain * q[static_cast<std::size_t>(j * rows + i)];
  }
  return Tensor::from({rows, cols}, std::move(out));
}

LstmCell::LstmCell(int input, int hidden, Rng& rng) : input_size(input), hidden_size(hidden) {
  const int z = input + hidden;
  w_i = orthogonal_init(hidden, z, rng);
  w_f = orthogonal_init(hidden, z, rng);
  w_o = orthogonal_init(hidden, z, rng);
  w_c = orthogonal_init(hidden, z, rng);
  b_i = Tensor::zeros({hidden});
  b_f = Tensor::full({hidden}, 1.0);
  b_o = Tensor::zeros({hidden});
  b_c = Tensor::zeros({hidden});
  mark_trainable();
}

LstmState LstmCell::zero_state() const {
  return {Tensor::zeros({hidden_size}), Tensor::zeros({hidden_size})};
}

LstmState LstmCell::step(const Tensor& input, const LstmState& state) const {
  if (static_cast<int>(input.numel()) != input_size) {
    throw dim_error("lstm: input size " + shape_str(input.shape()) + " does not match cell input " +
                    std::to_string(input_size));
  }
  if (static_cast<int>(state.h.numel()) != hidden_size ||
      static_cast<int>(state.c.numel()) != hidden_size) {
    throw dim_error("lstm: state size mismatch for hidden " + std::to_string(hidden_size));
  }
  Tensor x = input.rank() == 1 ? input : flatten(input);
  Tensor z = concat({x, state.h}, 0);
  Tensor gi = sigmoid(matmul(w_i, z) + b_i);
  Tensor gf = sigmoid(matmul(w_f, z) + b_f);
  Tensor go = sigmoid(matmul(w_o, z) + b_o);
  Tensor gc = tanh(matmul(w_c, z) + b_c);
  Tensor c_next = gf * state.c + gi * gc;
  Tensor h_next = go * tanh(c_next);
  return {h_next, c_next};
}

std::vector<std::pair<std::string, Tensor>> LstmCell::named_params(const std::string& prefix) const {
  return {{prefix + ".w_i", w_i}, {prefix + ".b_i", b_i}, {prefix + ".w_f", w_f},
          {prefix + ".b_f", b_f}, {prefix + ".w_o", w_o}, {prefix + ".b_o", b_o},
          {prefix + ".w_c", w_c}, {prefix + ".b_c", b_c}};
}

void LstmCell::mark_trainable() {
  for (Tensor* t : {&w_i, &w_f, &w_o, &w_c, &b_i, &b_f, &b_o, &b_c}) t->set_requires_grad(true);
}

GlimpseProjection::GlimpseProjection(int hidden, Rng& rng, bool with_bias) : use_bias(with_bias) {
  w = orthogonal_init(3, hidden, rng);
  b = Tensor::zeros({3});
  mark_trainable();
}

Tensor GlimpseProjection::operator()(const Tensor& h) const {
  Tensor omega = matmul(w, h);
  return use_bias ? omega + b : omega;
}

std::vector<std::pair<std::string, Tensor>> GlimpseProjection::named_params(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out{{prefix + ".w", w}};
  if (use_bias) out.emplace_back(prefix + ".b", b);
  return out;
}

void GlimpseProjection::mark_trainable() {
  w.set_requires_grad(true);
  b.set_requires_grad(true);
}

}  // namespace arc
