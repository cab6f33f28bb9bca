#include <cmath>
#include <filesystem>
#include <fstream>

#include "arc/error.hpp"
#include "arc/training.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace arc;
namespace fs = std::filesystem;

namespace {

ArcConfig tiny_cfg() {
  ArcConfig cfg;
  cfg.image_side = 8;
  cfg.glimpse_side = 3;
  cfg.glimpses = 2;
  cfg.hidden = 16;
  return cfg;
}

TrainConfig quick_cfg(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.batch = 4;
  cfg.lr = 1e-3;
  cfg.seed = seed;
  cfg.eval_interval = 10;
  cfg.eval_pairs = 40;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("bce closed forms") {
  CHECK(bce_loss(Tensor::scalar(0.5), 1).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(Tensor::scalar(0.5), 0).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(Tensor::scalar(1.0), 1).value() <= 1e-6);
  CHECK(bce_loss(Tensor::scalar(0.0), 0).value() <= 1e-6);

  Tensor p = Tensor::scalar(0.8);
  p.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(bce_loss(p, 1));
  }
  CHECK(p.grad()[0] == doctest::Approx(-1.25).epsilon(1e-12));  // -1/p
  CHECK_THROWS_AS(bce_loss(Tensor::scalar(0.5), 2), config_error);
}

TEST_CASE("episode cross entropy and the softmax identity") {
  Tensor uniform = Tensor::full({20}, 0.05);
  CHECK(episode_ce_loss(uniform, 7).value() == doctest::Approx(std::log(20.0)).epsilon(1e-12));
  Tensor onehot = Tensor::from({3}, {0, 1, 0});
  CHECK(episode_ce_loss(onehot, 1).value() == 0.0);
  CHECK_THROWS_AS(episode_ce_loss(onehot, 3), std::out_of_range);

  // d ce(softmax(s)) / d s = p - onehot(true)
  Rng rng(3);
  Tensor s = Tensor::randn({5}, rng);
  const int true_idx = 2;
  s.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(episode_ce_loss(softmax(s), true_idx));
  }
  Tensor p = softmax(s);
  for (int i = 0; i < 5; ++i) {
    const double want = p.at(i) - (i == true_idx ? 1.0 : 0.0);
    CHECK(s.grad()[static_cast<std::size_t>(i)] == doctest::Approx(want).epsilon(1e-9));
  }
  s.clear_grad();
  auto rep = arctest::finite_diff_check({s}, [&] { return episode_ce_loss(softmax(s), true_idx); });
  CHECK(rep.max_err < 1e-6);
}

TEST_CASE("adam fixed point, first step and clipping") {
  Tensor w = Tensor::from({2}, {1.0, -2.0});
  w.set_requires_grad(true);
  Adam opt({w}, {.lr = 1e-3, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .clip = 10.0});

  // zero gradient: parameters unchanged
  w.zero_grad();
  opt.step();
  CHECK(w.values() == std::vector<double>{1.0, -2.0});

  // bias-corrected first step from zero moments with grad 1 moves by ~lr
  Tensor u = Tensor::scalar(0.5);
  u.set_requires_grad(true);
  Adam opt2({u}, {.lr = 1e-3, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .clip = 0.0});
  u.zero_grad();
  {
    Tape tape;
    tape.backward(mul(u, Tensor::scalar(1.0)));  // d/du = 1
  }
  opt2.step();
  CHECK(u.value() == doctest::Approx(0.5 - 1e-3).epsilon(1e-6));

  CHECK(clip_scale(100.0, 10.0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(clip_scale(5.0, 10.0) == 1.0);
  CHECK(clip_scale(100.0, 0.0) == 1.0);
}

TEST_CASE("verification training runs, logs and is seed deterministic") {
  Dataset ds = make_toy_dataset(8, 6, 8, 201);
  Split split = make_split(ds, SplitScheme::custom, 0, {6, 2});
  fs::path dir = fs::temp_directory_path() / "arc_test_train";
  fs::remove_all(dir);

  ArcModel m1(tiny_cfg(), 1);
  TrainHistory h1 = train_verification(m1, ds, split, quick_cfg(5), (dir / "run1").string());
  REQUIRE(h1.points.size() == 2);
  for (const auto& pt : h1.points) CHECK(std::isfinite(pt.train_loss));

  ArcModel m2(tiny_cfg(), 1);
  TrainHistory h2 = train_verification(m2, ds, split, quick_cfg(5), (dir / "run2").string());
  REQUIRE(h2.points.size() == h1.points.size());
  for (std::size_t i = 0; i < h1.points.size(); ++i) {
    CHECK(h1.points[i].train_loss == h2.points[i].train_loss);  // bit identical
    CHECK(h1.points[i].val_acc == h2.points[i].val_acc);
  }

  // metrics and checkpoints byte-identical across same-seed runs
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  CHECK(slurp(dir / "run1" / "metrics.log") == slurp(dir / "run2" / "metrics.log"));
  CHECK(slurp(dir / "run1" / "params.arct") == slurp(dir / "run2" / "params.arct"));
  CHECK(!slurp(dir / "run1" / "config.txt").empty());

  // checkpoint reloads into an equivalent model
  ArcModel loaded = load_model((dir / "run1" / "params.arct").string());
  Rng rng(7);
  Tensor a = Tensor::from({8, 8}, ds.alphabets[0].characters[0].drawings[0].pix);
  Tensor b = Tensor::from({8, 8}, ds.alphabets[0].characters[1].drawings[0].pix);
  CHECK(loaded.similarity(a, b) == m1.similarity(a, b));
  fs::remove_all(dir);
}

TEST_CASE("zero-step training returns an untouched model and empty history") {
  Dataset ds = make_toy_dataset(6, 4, 8, 205);
  Split split = make_split(ds, SplitScheme::custom, 0, {4, 2});
  ArcModel model(tiny_cfg(), 9);
  auto before = model.head_w.values();
  TrainConfig cfg = quick_cfg(1);
  cfg.steps = 0;
  TrainHistory h = train_verification(model, ds, split, cfg);
  CHECK(h.points.empty());
  CHECK(model.head_w.values() == before);
}

TEST_CASE("loss decreases when overfitting a frozen 16-pair batch") {
  Dataset ds = make_toy_dataset(6, 6, 8, 207);
  Split split = make_split(ds, SplitScheme::custom, 0, {4, 2});
  VerificationSampler sampler(ds, split.train());
  Rng rng(11);
  std::vector<PairSample> batch;
  for (int i = 0; i < 16; ++i) batch.push_back(sampler.sample(rng));

  ArcModel model(tiny_cfg(), 13);
  std::vector<Tensor> params = model.params();
  Adam opt(params, {.lr = 3e-3, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .clip = 10.0});
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) {
    opt.zero_grad();
    double total = 0;
    for (const PairSample& ps : batch) {
      Tape tape;
      Tensor loss = bce_loss(
          model.compare(Tensor::from({8, 8}, ps.a), Tensor::from({8, 8}, ps.b)).similarity,
          ps.label);
      total += loss.value();
      tape.backward(loss);
    }
    losses.push_back(total / 16);
    opt.step(1.0 / 16);
  }
  CHECK(losses.back() < losses.front());
  // decreasing trend, not just endpoints
  double first10 = 0, last10 = 0;
  for (int i = 0; i < 10; ++i) {
    first10 += losses[static_cast<std::size_t>(i)];
    last10 += losses[losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(last10 < first10);
}

TEST_CASE("divergence aborts with a step-stamped error") {
  Dataset ds = make_toy_dataset(6, 4, 8, 209);
  Split split = make_split(ds, SplitScheme::custom, 0, {4, 2});
  ArcModel model(tiny_cfg(), 15);
  // poison a parameter so the forward pass goes non-finite
  model.head_b.values_mut()[0] = std::nan("");
  TrainConfig cfg = quick_cfg(2);
  CHECK_THROWS_AS(train_verification(model, ds, split, cfg), numeric_error);
}

TEST_CASE("probes on an uninformative dataset stay near chance") {
  // every character is the same glyph, so states carry no label signal
  Dataset ds = make_toy_dataset(4, 6, 8, 211);
  const auto base = ds.alphabets[0].characters[0].drawings[0].pix;
  for (auto& ch : ds.alphabets[0].characters)
    for (auto& d : ch.drawings) d.pix = base;
  Split split = make_split(ds, SplitScheme::custom, 0, {2, 2});
  ArcModel model(tiny_cfg(), 17);
  TrainConfig cfg = quick_cfg(3);
  cfg.probe_train_pairs = 256;
  cfg.probe_eval_pairs = 512;
  cfg.probe_epochs = 60;
  ProbeReport report = train_probe_classifiers(model, ds, split, cfg);
  REQUIRE(report.accuracy.size() == 2);
  for (double acc : report.accuracy) {
    CHECK(acc > 0.40);
    CHECK(acc < 0.60);
  }
}

TEST_CASE("probe persistence round trip") {
  ProbeClassifiers probes;
  probes.hidden = 4;
  probes.glimpses = 2;
  probes.w = {{0.1, -0.2, 0.3, 0.4}, {1, 2, 3, 4}};
  probes.b = {0.5, -0.5};
  fs::path dir = fs::temp_directory_path() / "arc_test_probes";
  fs::create_directories(dir);
  save_probes((dir / "probes.arct").string(), probes);
  ProbeClassifiers back = load_probes((dir / "probes.arct").string());
  CHECK(back.w == probes.w);
  CHECK(back.b == probes.b);
  std::vector<double> h{1, 0, -1, 2};
  CHECK(back.score(0, h) == probes.score(0, h));
  fs::remove_all(dir);
}

TEST_CASE("full-context training starts at ln(way) and is deterministic") {
  Dataset ds = make_toy_dataset(8, 6, 8, 213);
  Split split = make_split(ds, SplitScheme::custom, 0, {5, 3});
  ArcModel m1(tiny_cfg(), 19);
  FullContextHead head1(16, 8, 20);
  TrainConfig cfg = quick_cfg(4);
  cfg.steps = 6;
  cfg.batch = 2;
  cfg.way = 3;
  cfg.eval_interval = 1;
  cfg.eval_episodes = 20;
  TrainHistory h1 = train_full_context(m1, head1, ds, split, cfg);
  REQUIRE(!h1.points.empty());
  // zero scoring weights make the first batch exactly uniform
  CHECK(h1.points[0].train_loss == doctest::Approx(std::log(3.0)).epsilon(1e-9));

  ArcModel m2(tiny_cfg(), 19);
  FullContextHead head2(16, 8, 20);
  TrainHistory h2 = train_full_context(m2, head2, ds, split, cfg);
  for (std::size_t i = 0; i < h1.points.size(); ++i) {
    CHECK(h1.points[i].train_loss == h2.points[i].train_loss);
  }

  // frozen comparator variant trains only the head
  ArcModel m3(tiny_cfg(), 19);
  FullContextHead head3(16, 8, 20);
  auto arc_before = m3.head_w.values();
  auto lstm_before = m3.cell.w_i.values();
  TrainConfig frozen = cfg;
  frozen.freeze_arc = true;
  train_full_context(m3, head3, ds, split, frozen);
  CHECK(m3.head_w.values() == arc_before);
  CHECK(m3.cell.w_i.values() == lstm_before);
}

TEST_SUITE_END();
