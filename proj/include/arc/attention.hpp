#pragma once

#include <utility>

#include "arc/ops.hpp"
#include "arc/tensor.hpp"

namespace arc {

// Attention-window parameters for one glimpse. x_hat/y_hat/delta_hat are the
// squashed controller outputs in [-1, 1]; x/y/delta/gamma are the derived
// window center (pixels), kernel stride (pixels) and Cauchy scale. All are
// scalar tensors so the window stays differentiable end to end.
struct GlimpseParams {
  Tensor x_hat, y_hat, delta_hat;
  Tensor x, y, delta, gamma;
  int image_side = 0;    // S
  int glimpse_side = 0;  // N
};

// Row-normalized horizontal/vertical filterbanks (each N x S). zx/zy record
// the raw per-row kernel mass before the epsilon guard, for diagnostics.
struct Filterbank {
  Tensor fx, fy;
  Tensor zx, zy;
};

// Cauchy-kernel glimpse extraction over S x S images with an N x N grid.
// Constant index tensors are built once so repeated glimpses reuse them.
class Attention {
 public:
  Attention(int image_side, int glimpse_side);

  int image_side() const { return s_; }
  int glimpse_side() const { return n_; }

  // tanh-squashes the three raw controller outputs, then applies the window
  // transforms: x = (S-1)(x_hat+1)/2, delta = (S/N)(1-|d_hat|),
  // gamma = e^(1-2|d_hat|).
  GlimpseParams unpack(const Tensor& omega) const;

  // Kernel center coordinates, mu[i] = center + (i - (N+1)/2) * delta with
  // 1-based i, for each axis.
  std::pair<Tensor, Tensor> kernel_centers(const GlimpseParams& p) const;

  Filterbank filterbanks(const GlimpseParams& p) const;

  // F_Y * I * F_X^T flattened row-major to N*N.
  Tensor attend(const Tensor& image, const Tensor& omega) const;
  Tensor attend(const Tensor& image, const Filterbank& fb) const;

 private:
  Tensor cauchy_rows(const Tensor& mu, const Tensor& gamma, Tensor* z_out) const;

  int s_, n_;
  Tensor pixel_grid_;   // N x S, row r = 0..S-1
  Tensor ones_row_;     // 1 x S
  Tensor offsets_;      // N, (i - (N+1)/2) for i = 1..N
};

// Contract-level wrappers for one-off use.
GlimpseParams unpack_params(const Tensor& omega, int image_side, int glimpse_side);
std::pair<Tensor, Tensor> kernel_centers(const GlimpseParams& p);
Filterbank build_filterbanks(const GlimpseParams& p);
Tensor attend(const Tensor& image, const Tensor& omega, int glimpse_side);

}  // namespace arc
