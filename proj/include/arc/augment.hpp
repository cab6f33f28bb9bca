#pragma once

#include <vector>

#include "arc/rng.hpp"
#include "arc/tensor.hpp"

namespace arc {

// Label-preserving training augmentation: translation, flips, rotation and
// shear, each independently toggleable. Magnitudes are maxima; the sampled
// transform parameters are uniform within them.
struct AugmentationPolicy {
  bool translate_on = true;
  double max_translate_px = 4.0;
  bool rotate_on = true;
  double max_rotate_deg = 15.0;
  bool shear_on = true;
  double max_shear_deg = 10.0;
  bool flip_h_on = false;
  bool flip_v_on = false;
  double flip_prob = 0.2;

  static AugmentationPolicy disabled() {
    AugmentationPolicy p;
    p.translate_on = p.rotate_on = p.shear_on = p.flip_h_on = p.flip_v_on = false;
    return p;
  }
};

// Deterministic core: optional flips, then shear -> rotate -> translate about
// the image center, bilinear resampling with zero padding, output clamped to
// [0, 1]. The all-zero transform is a bit-exact identity.
std::vector<double> affine_transform(const std::vector<double>& img, int side, double rotate_deg,
                                     double shear_deg, double tx, double ty, bool flip_h,
                                     bool flip_v);

struct AffineParams {
  double rotate_deg = 0, shear_deg = 0, tx = 0, ty = 0;
  bool flip_h = false, flip_v = false;
};

// One transform draw under the policy. Pulling the draw out lets callers
// apply the identical transform to both members of a pair.
AffineParams draw_affine(const AugmentationPolicy& policy, Rng& rng);
std::vector<double> apply_affine(const std::vector<double>& img, int side,
                                 const AffineParams& params);

std::vector<double> augment(const std::vector<double>& img, int side,
                            const AugmentationPolicy& policy, Rng& rng);
Tensor augment(const Tensor& img, const AugmentationPolicy& policy, Rng& rng);

}  // namespace arc
