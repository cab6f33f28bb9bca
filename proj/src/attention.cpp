#include "arc/attention.hpp"

#include <cmath>
#include <limits>

#include "arc/error.hpp"

namespace arc {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kRowMassFloor = 1e-12;
}  // namespace

Attention::Attention(int image_side, int glimpse_side) : s_(image_side), n_(glimpse_side) {
  if (glimpse_side < 1 || image_side < glimpse_side) {
    throw config_error("attention: need S >= N >= 1, got S=" + std::to_string(image_side) +
                       " N=" + std::to_string(glimpse_side));
  }
  std::vector<double> grid(static_cast<std::size_t>(n_) * static_cast<std::size_t>(s_));
  for (int i = 0; i < n_; ++i)
    for (int a = 0; a < s_; ++a) grid[static_cast<std::size_t>(i * s_ + a)] = a;
  pixel_grid_ = Tensor::from({n_, s_}, std::move(grid));
  ones_row_ = Tensor::ones({1, s_});
  std::vector<double> off(static_cast<std::size_t>(n_));
  for (int i = 1; i <= n_; ++i)
    off[static_cast<std::size_t>(i - 1)] = i - (n_ + 1) / 2.0;
  offsets_ = Tensor::from({n_}, std::move(off));
}

GlimpseParams Attention::unpack(const Tensor& omega) const {
  if (omega.numel() != 3) {
    throw dim_error("unpack: omega must have 3 entries, got " + shape_str(omega.shape()));
  }
  for (double v : omega.values()) {
    if (!std::isfinite(v)) throw numeric_error("unpack: non-finite glimpse parameter");
  }
  Tensor flat = omega.rank() == 1 ? omega : flatten(omega);
  GlimpseParams p;
  p.image_side = s_;
  p.glimpse_side = n_;
  p.x_hat = tanh(slice(flat, 0, 0, 1));
  p.y_hat = tanh(slice(flat, 0, 1, 1));
  p.delta_hat = tanh(slice(flat, 0, 2, 1));
  p.x = (p.x_hat + 1.0) * ((s_ - 1) / 2.0);
  p.y = (p.y_hat + 1.0) * ((s_ - 1) / 2.0);
  p.delta = (static_cast<double>(s_) / n_) * (1.0 - abs(p.delta_hat));
  p.gamma = exp(1.0 - 2.0 * abs(p.delta_hat));
  return p;
}

std::pair<Tensor, Tensor> Attention::kernel_centers(const GlimpseParams& p) const {
  Tensor step = mul(offsets_, p.delta);
  return {add(step, p.x), add(step, p.y)};
}

Tensor Attention::cauchy_rows(const Tensor& mu, const Tensor& gamma, Tensor* z_out) const {
  // pixel distances: D[i,a] = a - mu_i
  Tensor mu_col = reshape(mu, {n_, 1});
  Tensor d = sub(pixel_grid_, matmul(mu_col, ones_row_));
  Tensor u = div(d, gamma);
  Tensor kernel = div(Tensor::scalar(1.0), (gamma * kPi) * (mul(u, u) + 1.0));
  Tensor z_raw = sum(kernel, 1);
  if (z_out) *z_out = z_raw;
  // a window pushed far off-image must not divide by ~0
  Tensor z = clamp(z_raw, kRowMassFloor, std::numeric_limits<double>::infinity());
  Tensor z_inv_col = reshape(div(Tensor::scalar(1.0), z), {n_, 1});
  return mul(kernel, matmul(z_inv_col, ones_row_));
}

Filterbank Attention::filterbanks(const GlimpseParams& p) const {
  auto [mu_x, mu_y] = kernel_centers(p);
  Filterbank fb;
  fb.fx = cauchy_rows(mu_x, p.gamma, &fb.zx);
  fb.fy = cauchy_rows(mu_y, p.gamma, &fb.zy);
  return fb;
}

Tensor Attention::attend(const Tensor& image, const Tensor& omega) const {
  return attend(image, filterbanks(unpack(omega)));
}

Tensor Attention::attend(const Tensor& image, const Filterbank& fb) const {
  if (image.rank() != 2 || image.dim(0) != s_ || image.dim(1) != s_) {
    throw dim_error("attend: image must be " + std::to_string(s_) + "x" + std::to_string(s_) +
                    ", got " + shape_str(image.shape()));
  }
  Tensor patch = matmul(matmul(fb.fy, image), transpose(fb.fx));
  return flatten(patch);
}

GlimpseParams unpack_params(const Tensor& omega, int image_side, int glimpse_side) {
  return Attention(image_side, glimpse_side).unpack(omega);
}

std::pair<Tensor, Tensor> kernel_centers(const GlimpseParams& p) {
  return Attention(p.image_side, p.glimpse_side).kernel_centers(p);
}

Filterbank build_filterbanks(const GlimpseParams& p) {
  return Attention(p.image_side, p.glimpse_side).filterbanks(p);
}

Tensor attend(const Tensor& image, const Tensor& omega, int glimpse_side) {
  return Attention(image.dim(0), glimpse_side).attend(image, omega);
}

}  // namespace arc
