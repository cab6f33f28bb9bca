#include "arc/augment.hpp"

#include <cmath>

#include "arc/error.hpp"

namespace arc {

namespace {
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
}

std::vector<double> affine_transform(const std::vector<double>& img, int side, double rotate_deg,
                                     double shear_deg, double tx, double ty, bool flip_h,
                                     bool flip_v) {
  if (img.size() != static_cast<std::size_t>(side) * static_cast<std::size_t>(side)) {
    throw dim_error("affine_transform: image is not side*side");
  }
  std::vector<double> src = img;
  if (flip_h) {
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side / 2; ++c)
        std::swap(src[static_cast<std::size_t>(r * side + c)],
                  src[static_cast<std::size_t>(r * side + side - 1 - c)]);
  }
  if (flip_v) {
    for (int r = 0; r < side / 2; ++r)
      for (int c = 0; c < side; ++c)
        std::swap(src[static_cast<std::size_t>(r * side + c)],
                  src[static_cast<std::size_t>((side - 1 - r) * side + c)]);
  }
  if (rotate_deg == 0.0 && shear_deg == 0.0 && tx == 0.0 && ty == 0.0) {
    return src;  // exact identity path
  }

  // forward map: shear (x' = x + tan(s) y), then rotation, then translation,
  // all about the image center
  const double th = rotate_deg * kDegToRad;
  const double sh = std::tan(shear_deg * kDegToRad);
  const double ct = std::cos(th), st = std::sin(th);
  // A = R * Sh
  const double a00 = ct, a01 = ct * sh - st;
  const double a10 = st, a11 = st * sh + ct;
  const double det = a00 * a11 - a01 * a10;
  const double i00 = a11 / det, i01 = -a01 / det;
  const double i10 = -a10 / det, i11 = a00 / det;
  const double cx = (side - 1) / 2.0, cy = (side - 1) / 2.0;

  std::vector<double> out(src.size(), 0.0);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const double dx = c - cx - tx;
      const double dy = r - cy - ty;
      const double sx = i00 * dx + i01 * dy + cx;
      const double sy = i10 * dx + i11 * dy + cy;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      auto pick = [&](int yy, int xx) -> double {
        if (xx < 0 || xx >= side || yy < 0 || yy >= side) return 0.0;
        return src[static_cast<std::size_t>(yy * side + xx)];
      };
      const double v = (1 - fy) * ((1 - fx) * pick(y0, x0) + fx * pick(y0, x0 + 1)) +
                       fy * ((1 - fx) * pick(y0 + 1, x0) + fx * pick(y0 + 1, x0 + 1));
      out[static_cast<std::size_t>(r * side + c)] = std::min(1.0, std::max(0.0, v));
    }
  }
  return out;
}

AffineParams draw_affine(const AugmentationPolicy& policy, Rng& rng) {
  AffineParams p;
  p.flip_h = policy.flip_h_on && rng.bernoulli(policy.flip_prob);
  p.flip_v = policy.flip_v_on && rng.bernoulli(policy.flip_prob);
  if (policy.rotate_on) p.rotate_deg = rng.uniform(-policy.max_rotate_deg, policy.max_rotate_deg);
  if (policy.shear_on) p.shear_deg = rng.uniform(-policy.max_shear_deg, policy.max_shear_deg);
  if (policy.translate_on) {
    p.tx = rng.uniform(-policy.max_translate_px, policy.max_translate_px);
    p.ty = rng.uniform(-policy.max_translate_px, policy.max_translate_px);
  }
  return p;
}

std::vector<double> apply_affine(const std::vector<double>& img, int side,
                                 const AffineParams& p) {
  return affine_transform(img, side, p.rotate_deg, p.shear_deg, p.tx, p.ty, p.flip_h, p.flip_v);
}

std::vector<double> augment(const std::vector<double>& img, int side,
                            const AugmentationPolicy& policy, Rng& rng) {
  return apply_affine(img, side, draw_affine(policy, rng));
}

Tensor augment(const Tensor& img, const AugmentationPolicy& policy, Rng& rng) {
  const int side = img.dim(0);
  return Tensor::from(img.shape(), augment(img.values(), side, policy, rng));
}

}  // namespace arc
