#pragma once

#include <string>
#include <utility>
#include <vector>

#include "arc/ops.hpp"
#include "arc/rng.hpp"
#include "arc/tensor.hpp"

namespace arc {

// Rows (cols if wide) orthonormal, scaled by gain. Standard QR-based recipe.
Tensor orthogonal_init(int rows, int cols, Rng& rng, double gain = 1.0);

struct LstmState {
  Tensor h, c;
};

// Single LSTM cell with forget gates. Gate weights act on [input; hidden].
struct LstmCell {
  int input_size = 0;
  int hidden_size = 0;
  Tensor w_i, w_f, w_o, w_c;  // each (hidden, input+hidden)
  Tensor b_i, b_f, b_o, b_c;  // each (hidden)

  LstmCell() = default;
  // Orthogonal weights at gain 1, forget bias 1, other biases 0.
  LstmCell(int input, int hidden, Rng& rng);

  LstmState zero_state() const;
  LstmState step(const Tensor& input, const LstmState& state) const;

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const;
  void mark_trainable();
};

// Projects the controller state to the three glimpse parameters,
// omega = W_g * h. Bias off by default; the projection is pure by default.
struct GlimpseProjection {
  Tensor w;  // (3, hidden)
  Tensor b;  // (3), used only when use_bias
  bool use_bias = false;

  GlimpseProjection() = default;
  GlimpseProjection(int hidden, Rng& rng, bool with_bias = false);

  Tensor operator()(const Tensor& h) const;

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const;
  void mark_trainable();
};

}  // namespace arc
