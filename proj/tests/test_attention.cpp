#include <cmath>

#include "arc/attention.hpp"
#include "arc/error.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace arc;

namespace {

// Independent oracle: the double sum G[j,i] = sum_b sum_a FY[j,b] I[b,a] FX[i,a].
std::vector<double> brute_force_glimpse(const Tensor& image, const Tensor& fx, const Tensor& fy) {
  const int n = fx.dim(0), s = fx.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      double acc = 0;
      for (int b = 0; b < s; ++b)
        for (int a = 0; a < s; ++a) acc += fy.at(j, b) * image.at(b, a) * fx.at(i, a);
      out[static_cast<std::size_t>(j * n + i)] = acc;
    }
  return out;
}

GlimpseParams synthetic_params(int s, int n, double x, double y, double delta, double gamma) {
  GlimpseParams p;
  p.image_side = s;
  p.glimpse_side = n;
  p.x = Tensor::scalar(x);
  p.y = Tensor::scalar(y);
  p.delta = Tensor::scalar(delta);
  p.gamma = Tensor::scalar(gamma);
  p.x_hat = Tensor::scalar(2.0 * x / (s - 1) - 1.0);
  p.y_hat = Tensor::scalar(2.0 * y / (s - 1) - 1.0);
  p.delta_hat = Tensor::scalar(1.0 - delta * n / s);
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("attention");

TEST_CASE("unpack closed forms") {
  Attention att(32, 4);
  GlimpseParams p = att.unpack(Tensor::zeros({3}));
  CHECK(p.x.value() == doctest::Approx(15.5).epsilon(1e-14));
  CHECK(p.y.value() == doctest::Approx(15.5).epsilon(1e-14));
  CHECK(p.delta.value() == doctest::Approx(8.0).epsilon(1e-14));
  CHECK(p.gamma.value() == doctest::Approx(std::exp(1.0)).epsilon(1e-14));

  // delta_hat -> 1 collapses the grid onto (x, y)
  GlimpseParams q = att.unpack(Tensor::from({3}, {0.0, 0.0, 25.0}));
  CHECK(q.delta_hat.value() == 1.0);
  CHECK(q.delta.value() == 0.0);
  CHECK(q.gamma.value() == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  auto [mx, my] = att.kernel_centers(q);
  for (int i = 0; i < 4; ++i) CHECK(mx.at(i) == q.x.value());

  CHECK_THROWS_AS(att.unpack(Tensor::zeros({2})), dim_error);
  CHECK_THROWS_AS(att.unpack(Tensor::from({3}, {0.0, std::nan(""), 0.0})), numeric_error);
}

TEST_CASE("kernel centers") {
  Attention a3(32, 3);
  auto [mx, my] = a3.kernel_centers(synthetic_params(32, 3, 10, 10, 2, 1));
  CHECK(mx.values() == std::vector<double>{8, 10, 12});

  Attention a4(32, 4);
  auto [mx4, my4] = a4.kernel_centers(synthetic_params(32, 4, 15.5, 15.5, 8, 1));
  CHECK(mx4.values() == std::vector<double>{3.5, 11.5, 19.5, 27.5});

  auto [mz, _] = a4.kernel_centers(synthetic_params(32, 4, 7.25, 7.25, 0, 1));
  for (int i = 0; i < 4; ++i) CHECK(mz.at(i) == 7.25);
}

TEST_CASE("filterbank rows are normalized Cauchy densities") {
  Rng rng(41);
  Attention att(32, 4);
  for (int trial = 0; trial < 200; ++trial) {
    GlimpseParams p = att.unpack(Tensor::randn({3}, rng, 2.0));
    Filterbank fb = att.filterbanks(p);
    for (int i = 0; i < 4; ++i) {
      double sx = 0, sy = 0;
      for (int a = 0; a < 32; ++a) {
        CHECK(fb.fx.at(i, a) >= 0.0);
        sx += fb.fx.at(i, a);
        sy += fb.fy.at(i, a);
      }
      CHECK(std::abs(sx - 1.0) <= 1e-9);
      CHECK(std::abs(sy - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("flat-kernel limit approaches uniform rows") {
  const int s = 16;
  Attention att(s, 3);
  Filterbank fb = att.filterbanks(synthetic_params(s, 3, 7.5, 7.5, 4, 1e6));
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < s; ++a) CHECK(std::abs(fb.fx.at(i, a) - 1.0 / s) < 1e-9);
}

TEST_CASE("unnormalized Cauchy peak is 1/pi at gamma 1") {
  const int s = 16;
  Attention att(s, 1);
  Filterbank fb = att.filterbanks(synthetic_params(s, 1, 8.0, 8.0, 1, 1.0));
  const double unnormalized = fb.fx.at(0, 8) * fb.zx.at(0);
  CHECK(unnormalized == doctest::Approx(1.0 / (4.0 * std::atan(1.0)) ).epsilon(1e-12));
}

TEST_CASE("attend maps constant images to constant glimpses") {
  Rng rng(43);
  Attention att(16, 4);
  Tensor omega = Tensor::randn({3}, rng);
  Tensor ones_img = Tensor::ones({16, 16});
  Tensor g = att.attend(ones_img, omega);
  for (std::size_t i = 0; i < g.numel(); ++i) CHECK(std::abs(g.values()[i] - 1.0) <= 1e-12);

  Tensor const_img = Tensor::full({16, 16}, 0.37);
  Tensor gc = att.attend(const_img, omega);
  for (std::size_t i = 0; i < gc.numel(); ++i) CHECK(std::abs(gc.values()[i] - 0.37) <= 1e-12);

  CHECK_THROWS_AS(att.attend(Tensor::zeros({8, 8}), omega), dim_error);
}

TEST_CASE("attend matches the brute-force double sum") {
  Rng rng(47);
  Attention att(8, 3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor image = Tensor::randn({8, 8}, rng);
    Tensor omega = Tensor::randn({3}, rng);
    GlimpseParams p = att.unpack(omega);
    Filterbank fb = att.filterbanks(p);
    Tensor got = att.attend(image, fb);
    std::vector<double> want = brute_force_glimpse(image, fb.fx, fb.fy);
    REQUIRE(got.numel() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.values()[i] - want[i]) <= 1e-12);
  }
}

TEST_CASE("glimpse values stay inside the image value range") {
  Rng rng(53);
  Attention att(12, 4);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor image = Tensor::randn({12, 12}, rng);
    double lo = image.values()[0], hi = lo;
    for (double v : image.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    Tensor g = att.attend(image, Tensor::randn({3}, rng, 3.0));
    for (double v : g.values()) {
      CHECK(v >= lo - 1e-12);
      CHECK(v <= hi + 1e-12);
    }
  }
}

TEST_CASE("attend gradients match finite differences") {
  Rng rng(59);
  Attention att(8, 3);
  Tensor image = Tensor::randn({8, 8}, rng);
  Tensor omega = Tensor::from({3}, {0.3, -0.4, 0.5});
  Tensor weights = Tensor::randn({9}, rng);
  auto rep = arctest::finite_diff_check(
      {omega, image}, [&] { return sum(mul(att.attend(image, omega), weights)); });
  CHECK(rep.max_err < 1e-5);
}

TEST_CASE("shrinking gamma concentrates row mass near the center") {
  const int s = 16;
  Attention att(s, 1);
  double prev = 0.0;
  for (double gamma : {2.0, 1.0, 0.5}) {
    Filterbank fb = att.filterbanks(synthetic_params(s, 1, 8.0, 8.0, 1, gamma));
    const double near = fb.fx.at(0, 7) + fb.fx.at(0, 8) + fb.fx.at(0, 9);
    CHECK(near > prev);
    prev = near;
  }
}

TEST_CASE("window-level translation consistency") {
  const int s = 32;
  Attention att(s, 4);

  // Pattern constant along x: moving the window horizontally by any k must
  // leave the glimpse content unchanged (period-1 tiling along x).
  std::vector<double> img(s * s);
  for (int b = 0; b < s; ++b)
    for (int a = 0; a < s; ++a) img[static_cast<std::size_t>(b * s + a)] = 0.5 + 0.5 * std::sin(b * 0.7);
  Tensor image = Tensor::from({s, s}, img);

  auto omega_for_x = [&](double x) {
    const double x_hat = 2.0 * x / (s - 1) - 1.0;
    return Tensor::from({3}, {std::atanh(x_hat), 0.0, std::atanh(0.5)});
  };
  Tensor g0 = att.attend(image, omega_for_x(12.0));
  Tensor g3 = att.attend(image, omega_for_x(15.0));
  for (std::size_t i = 0; i < g0.numel(); ++i)
    CHECK(std::abs(g0.values()[i] - g3.values()[i]) <= 1e-6);

  // Vertical stripes with period 4: shifting the window by one period keeps
  // the content approximately equal; the deviation is the Cauchy boundary
  // tail, far below the stripe contrast.
  for (int b = 0; b < s; ++b)
    for (int a = 0; a < s; ++a) img[static_cast<std::size_t>(b * s + a)] = (a % 4 < 2) ? 1.0 : 0.0;
  Tensor stripes = Tensor::from({s, s}, img);
  Tensor h0 = att.attend(stripes, omega_for_x(14.0));
  Tensor h4 = att.attend(stripes, omega_for_x(18.0));
  for (std::size_t i = 0; i < h0.numel(); ++i)
    CHECK(std::abs(h0.values()[i] - h4.values()[i]) <= 0.02);
}

TEST_SUITE_END();
