#include <cmath>
#include <sstream>

#include "arc/arc_model.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace arc;

namespace {

ArcConfig small_cfg() {
  ArcConfig cfg;
  cfg.image_side = 8;
  cfg.glimpse_side = 3;
  cfg.glimpses = 2;
  cfg.hidden = 8;
  return cfg;
}

Tensor random_image(int s, Rng& rng) {
  Tensor img = Tensor::zeros({s, s});
  for (auto& v : img.values_mut()) v = rng.uniform01();
  return img;
}

Tensor bce(const Tensor& p, double label) {
  Tensor pc = clamp(p, 1e-7, 1.0 - 1e-7);
  return neg(label * log(pc) + (1.0 - label) * log(1.0 - pc));
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("presentation sequence alternates starting with the first image") {
  Tensor a = Tensor::zeros({2, 2});
  Tensor b = Tensor::ones({2, 2});
  CHECK(present(0, a, b, 16).store() == a.store());
  CHECK(present(1, a, b, 16).store() == b.store());
  for (int t = 0; t < 16; ++t) {
    CHECK(present(t, a, b, 16).store() == (t % 2 == 0 ? a : b).store());
  }
  CHECK_THROWS_AS(present(16, a, b, 16), std::out_of_range);
  CHECK_THROWS_AS(present(-1, a, b, 16), std::out_of_range);
}

TEST_CASE("untrained model scores exactly one half") {
  ArcModel model(small_cfg(), 1);
  Rng rng(3);
  for (int i = 0; i < 3; ++i) {
    Tensor a = random_image(8, rng), b = random_image(8, rng);
    CHECK(model.similarity(a, b) == 0.5);
  }
}

TEST_CASE("compare is deterministic and trace-invariant") {
  ArcModel model(small_cfg(), 2);
  Rng rng(5);
  Tensor a = random_image(8, rng), b = random_image(8, rng);
  ComparisonResult r1 = model.compare(a, b);
  ComparisonResult r2 = model.compare(a, b, true);
  CHECK(r1.similarity.value() == r2.similarity.value());
  CHECK(r1.embedding.values() == r2.embedding.values());
  REQUIRE(r2.trace.has_value());
  CHECK(r2.trace->steps.size() == 4);
  for (int t = 0; t < 4; ++t) {
    CHECK(r2.trace->steps[static_cast<std::size_t>(t)].attended == t % 2);
  }
}

TEST_CASE("first window is centered and full extent when the state is zero") {
  ArcConfig cfg = small_cfg();
  ArcModel model(cfg, 7);
  Rng rng(9);
  ComparisonResult r = model.compare(random_image(8, rng), random_image(8, rng), true);
  const GlimpseRecord& first = r.trace->steps[0];
  CHECK(first.x == doctest::Approx((8 - 1) / 2.0).epsilon(1e-14));
  CHECK(first.y == doctest::Approx((8 - 1) / 2.0).epsilon(1e-14));
  CHECK(first.delta == doctest::Approx(8.0 / 3.0).epsilon(1e-14));
  CHECK(first.gamma == doctest::Approx(std::exp(1.0)).epsilon(1e-14));
}

TEST_CASE("non-finite image is refused") {
  ArcModel model(small_cfg(), 4);
  Tensor bad = Tensor::zeros({8, 8});
  bad.values_mut()[10] = std::nan("");
  CHECK_THROWS_AS(model.compare(bad, Tensor::zeros({8, 8})), numeric_error);
  CHECK_THROWS_AS(model.compare(Tensor::zeros({4, 4}), Tensor::zeros({8, 8})), dim_error);
}

TEST_CASE("swap sensitivity and symmetrized invariance") {
  ArcModel model(small_cfg(), 11);
  // nudge the head off zero so scores are informative
  Rng rng(13);
  for (auto& v : model.head_w.values_mut()) v = rng.normal(0, 0.5);
  Tensor a = random_image(8, rng), b = random_image(8, rng);
  const double ab = model.similarity(a, b);
  const double ba = model.similarity(b, a);
  CHECK(ab != ba);  // order-sensitive by construction
  CHECK(model.symmetrized_similarity(a, b) == model.symmetrized_similarity(b, a));
}

TEST_CASE("probe states cover every even step and end at the embedding") {
  ArcConfig cfg = small_cfg();
  cfg.glimpses = 3;
  ArcModel model(cfg, 15);
  Rng rng(17);
  Tensor a = random_image(8, rng), b = random_image(8, rng);
  auto probes = model.probe_states(a, b);
  REQUIRE(probes.size() == 3);
  ComparisonResult r = model.compare(a, b);
  CHECK(probes.back() == r.embedding.values());

  cfg.glimpses = 1;
  ArcModel tiny(cfg, 15);
  auto single = tiny.probe_states(a, b);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == tiny.compare(a, b).embedding.values());
}

TEST_CASE("end-to-end gradient of the verification loss matches finite differences") {
  ArcModel model(small_cfg(), 19);
  Rng rng(21);
  // informative head so the loss actually depends on the trajectory
  for (auto& v : model.head_w.values_mut()) v = rng.normal(0, 0.3);
  Tensor a = random_image(8, rng), b = random_image(8, rng);
  std::vector<Tensor> leaves = model.params();
  auto rep = arctest::finite_diff_check(
      leaves, [&] { return bce(model.compare(a, b).similarity, 1.0); });
  CHECK(rep.max_err < 1e-4);
}

TEST_CASE("checkpoint round trip preserves behaviour bit-exactly") {
  ArcConfig cfg = small_cfg();
  ArcModel model(cfg, 23);
  Rng rng(25);
  for (auto& v : model.head_w.values_mut()) v = rng.normal(0, 0.4);
  model.head_b.values_mut()[0] = 0.1;
  Tensor a = random_image(8, rng), b = random_image(8, rng);

  std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
  save_model(ss, model);
  ArcModel back = load_model(ss);
  CHECK(back.config().image_side == cfg.image_side);
  CHECK(back.config().glimpses == cfg.glimpses);
  CHECK(back.similarity(a, b) == model.similarity(a, b));
  CHECK(back.compare(a, b).embedding.values() == model.compare(a, b).embedding.values());
}

TEST_SUITE_END();
