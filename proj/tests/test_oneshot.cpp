#include <cmath>
#include <filesystem>
#include <set>

#include "arc/error.hpp"
#include "arc/oneshot.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace arc;
namespace fs = std::filesystem;

namespace {

ArcConfig tiny_cfg(int side) {
  ArcConfig cfg;
  cfg.image_side = side;
  cfg.glimpse_side = 3;
  cfg.glimpses = 2;
  cfg.hidden = 8;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("oneshot");

TEST_CASE("within-alphabet episodes honor the protocol invariants") {
  Dataset ds = make_toy_dataset(60, 4, 8, 51);  // 3 alphabets of 20
  EpisodeSampler sampler(ds, ds.all_characters(), 20, EpisodeMode::within);
  Rng rng(53);
  for (int i = 0; i < 500; ++i) {
    Episode ep = sampler.sample(rng);
    REQUIRE(ep.way == 20);
    REQUIRE(ep.support.size() == 20);
    std::set<int> classes(ep.support_class.begin(), ep.support_class.end());
    CHECK(classes.size() == 20);  // distinct classes
    CHECK(classes.count(ep.true_class) == 1);
    CHECK(ep.support_class[static_cast<std::size_t>(ep.true_index)] == ep.true_class);
    CHECK(ep.alphabet >= 0);
    // single alphabet: uids of one toy alphabet fall in one block of 20
    const int block = *classes.begin() / 20;
    for (int uid : classes) CHECK(uid / 20 == block);
    CHECK(ep.support_drawer != ep.test_drawer);
  }
}

TEST_CASE("two-class toy episode exhausts the classes") {
  Dataset ds = make_toy_dataset(2, 4, 8, 57);
  Rng rng(59);
  Episode ep = sample_episode(ds, ds.all_characters(), 2, EpisodeMode::within, rng);
  std::set<int> classes(ep.support_class.begin(), ep.support_class.end());
  CHECK(classes.size() == 2);
}

TEST_CASE("support inclusion frequency matches the binomial rate") {
  Dataset ds = make_toy_dataset(20, 4, 8, 61);
  EpisodeSampler sampler(ds, ds.all_characters(), 5, EpisodeMode::within);
  Rng rng(67);
  std::vector<int> counts(20, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    Episode ep = sampler.sample(rng);
    for (int uid : ep.support_class) counts[static_cast<std::size_t>(uid)]++;
  }
  // each char included with p = way/chars = 0.25; 3 sigma = 3*sqrt(n*p*(1-p))
  const double expect = n * 0.25;
  const double bound = 3.0 * std::sqrt(n * 0.25 * 0.75);
  for (int c = 0; c < 20; ++c) CHECK(std::abs(counts[static_cast<std::size_t>(c)] - expect) <= bound);
}

TEST_CASE("across episodes draw from the whole pool") {
  Dataset ds = make_toy_dataset(50, 4, 8, 71);
  EpisodeSampler sampler(ds, ds.all_characters(), 20, EpisodeMode::across);
  Rng rng(73);
  bool mixed = false;
  for (int i = 0; i < 50; ++i) {
    Episode ep = sampler.sample(rng);
    std::set<int> alphabets;
    for (int uid : ep.support_class) alphabets.insert(uid / 20);
    if (alphabets.size() > 1) mixed = true;
    std::set<int> classes(ep.support_class.begin(), ep.support_class.end());
    CHECK(classes.size() == 20);
    CHECK(ep.test != ep.support[static_cast<std::size_t>(ep.true_index)]);
  }
  CHECK(mixed);
}

TEST_CASE("episode sampler rejects impossible requests") {
  Dataset ds = make_toy_dataset(4, 4, 8, 79);
  CHECK_THROWS_AS(EpisodeSampler(ds, ds.all_characters(), 5, EpisodeMode::within), config_error);
  CHECK_THROWS_AS(EpisodeSampler(ds, ds.all_characters(), 5, EpisodeMode::across), config_error);
  CHECK_THROWS_AS(EpisodeSampler(ds, ds.all_characters(), 0, EpisodeMode::within), config_error);
}

TEST_CASE("naive classification takes the symmetrized argmax with first-index ties") {
  Dataset ds = make_toy_dataset(5, 4, 8, 83);
  Rng erng(89);
  Episode ep = sample_episode(ds, ds.all_characters(), 5, EpisodeMode::within, erng);

  // zero head: every score is exactly 0.5, ties break to index 0
  ArcModel flat(tiny_cfg(8), 1);
  NaivePrediction tie = naive_classify(flat, ep);
  for (double s : tie.scores) CHECK(s == 0.5);
  CHECK(tie.index == 0);

  // informative head: prediction equals the manual argmax of the scores
  ArcModel model(tiny_cfg(8), 2);
  Rng wrng(91);
  for (auto& v : model.head_w.values_mut()) v = wrng.normal(0, 0.5);
  NaivePrediction pred = naive_classify(model, ep);
  Tensor test = Tensor::from({8, 8}, ep.test);
  int best = 0;
  std::vector<double> manual;
  for (int j = 0; j < ep.way; ++j) {
    Tensor sj = Tensor::from({8, 8}, ep.support[static_cast<std::size_t>(j)]);
    manual.push_back(model.symmetrized_similarity(test, sj));
    if (manual.back() > manual[static_cast<std::size_t>(best)]) best = j;
  }
  CHECK(pred.index == best);
  CHECK(pred.scores == manual);
}

TEST_CASE("naive prediction is invariant under monotone score transforms") {
  // argmax property checked at the score level
  std::vector<double> scores{0.1, 0.9, 0.3};
  auto argmax = [](const std::vector<double>& s) {
    int best = 0;
    for (std::size_t j = 1; j < s.size(); ++j)
      if (s[j] > s[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
    return best;
  };
  CHECK(argmax(scores) == 1);
  std::vector<double> squashed;
  for (double s : scores) squashed.push_back(std::tanh(3 * s + 1));
  CHECK(argmax(squashed) == argmax(scores));
}

TEST_CASE("full context head produces a distribution and honors degenerate cases") {
  Dataset ds = make_toy_dataset(5, 4, 8, 97);
  Rng rng(101);
  Episode ep = sample_episode(ds, ds.all_characters(), 5, EpisodeMode::within, rng);
  ArcModel model(tiny_cfg(8), 3);
  FullContextHead head(8, 8, 4);

  // zero scoring weights give the uniform distribution
  FullContextOutput out = full_context_classify(model, head, ep);
  REQUIRE(out.probabilities.numel() == 5);
  double total = 0;
  for (int j = 0; j < 5; ++j) {
    CHECK(out.probabilities.at(j) == doctest::Approx(0.2).epsilon(1e-12));
    total += out.probabilities.at(j);
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);

  Episode single = sample_episode(ds, ds.all_characters(), 1, EpisodeMode::within, rng);
  FullContextOutput one = full_context_classify(model, head, single);
  CHECK(one.probabilities.numel() == 1);
  CHECK(one.probabilities.value() == 1.0);
}

TEST_CASE("full context gradients match finite differences") {
  Dataset ds = make_toy_dataset(3, 4, 8, 103);
  Rng rng(107);
  Episode ep = sample_episode(ds, ds.all_characters(), 3, EpisodeMode::within, rng);
  ArcModel model(tiny_cfg(8), 5);
  FullContextHead head(8, 8, 6);
  Rng wrng(109);
  for (auto& v : head.score_w.values_mut()) v = wrng.normal(0, 0.3);
  for (auto& v : model.head_w.values_mut()) v = wrng.normal(0, 0.3);

  std::vector<Tensor> leaves = head.params();
  auto rep = arctest::finite_diff_check(leaves, [&] {
    Tensor p = full_context_classify(model, head, ep).probabilities;
    return neg(log(clamp(slice(p, 0, ep.true_index, 1), 1e-7, 1.0)));
  });
  CHECK(rep.max_err < 1e-4);

  // and into the comparator itself
  std::vector<Tensor> arc_leaves{model.cell.w_i, model.proj.w, model.head_w};
  auto rep2 = arctest::finite_diff_check(arc_leaves, [&] {
    Tensor p = full_context_classify(model, head, ep).probabilities;
    return neg(log(clamp(slice(p, 0, ep.true_index, 1), 1e-7, 1.0)));
  });
  CHECK(rep2.max_err < 1e-4);
}

TEST_CASE("head checkpoint round trip") {
  FullContextHead head(8, 6, 11);
  Rng rng(113);
  for (auto& v : head.score_w.values_mut()) v = rng.normal();
  fs::path dir = fs::temp_directory_path() / "arc_test_head";
  fs::create_directories(dir);
  save_head((dir / "head.arct").string(), head);
  FullContextHead back = load_head((dir / "head.arct").string());
  CHECK(back.embed_size == 8);
  CHECK(back.hidden_size == 6);
  CHECK(back.score_w.values() == head.score_w.values());
  CHECK(back.forward_cell.w_i.values() == head.forward_cell.w_i.values());
  fs::remove_all(dir);
}

TEST_CASE("wilson interval brackets the binomial rate") {
  double lo, hi;
  wilson_interval(50, 100, &lo, &hi);
  CHECK(lo > 0.40);
  CHECK(hi < 0.60);
  CHECK(lo < 0.5);
  CHECK(hi > 0.5);
  wilson_interval(0, 100, &lo, &hi);
  CHECK(lo <= 1e-12);
  CHECK(hi < 0.05);
  wilson_interval(100, 100, &lo, &hi);
  CHECK(hi >= 1.0 - 1e-12);
  CHECK(lo > 0.95);
}

TEST_CASE("evaluation: oracle, random and pixel baselines") {
  Dataset ds = make_toy_dataset(20, 6, 8, 127);
  EpisodeSampler sampler(ds, ds.all_characters(), 20, EpisodeMode::within);

  EvalResult oracle = evaluate_oneshot([](const Episode& ep) { return ep.true_class; }, sampler,
                                       200, 1);
  CHECK(oracle.accuracy == 1.0);

  // uniform-random classifier sits at chance = 1/20
  EvalResult random = evaluate_oneshot(
      [&](const Episode& ep) {
        static Rng rng(131);
        return ep.support_class[rng.below(ep.support_class.size())];
      },
      sampler, 4000, 2);
  CHECK(std::abs(random.accuracy - 0.05) <= 3.0 * std::sqrt(0.05 * 0.95 / 4000));

  // nearest-neighbour beats chance comfortably on separated toy classes
  EvalResult knn = evaluate_oneshot(knn_pixel_classify, sampler, 500, 3);
  CHECK(knn.accuracy > 0.3);
  EvalResult cos = evaluate_oneshot(cosine_pixel_classify, sampler, 500, 3);
  CHECK(cos.accuracy > 0.3);

  // identical support copy is always recovered by the pixel metrics
  Rng erng(137);
  Episode ep = sampler.sample(erng);
  ep.test = ep.support[2];
  ep.true_class = ep.support_class[2];
  CHECK(knn_pixel_classify(ep) == ep.true_class);
  CHECK(cosine_pixel_classify(ep) == ep.true_class);
}

TEST_CASE("evaluation is order independent via per-episode streams") {
  Dataset ds = make_toy_dataset(20, 4, 8, 139);
  EpisodeSampler sampler(ds, ds.all_characters(), 5, EpisodeMode::within);
  EvalResult a = evaluate_oneshot(knn_pixel_classify, sampler, 100, 7);
  EvalResult b = evaluate_oneshot(knn_pixel_classify, sampler, 100, 7);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].predicted_class == b.records[i].predicted_class);
    CHECK(a.records[i].true_class == b.records[i].true_class);
  }
}

TEST_SUITE_END();
