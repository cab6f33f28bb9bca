#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "arc/arc_model.hpp"
#include "arc/dataset.hpp"
#include "arc/lstm.hpp"

namespace arc {

// One one-shot trial: a support set with one drawing per class and a test
// drawing whose class appears exactly once in the support set.
struct Episode {
  int way = 0;
  std::vector<std::vector<double>> support;  // way images
  std::vector<int> support_class;            // dataset char uids
  std::vector<double> test;
  int true_class = 0;
  int true_index = 0;  // position of the true class in the support set
  int alphabet = -1;   // within mode only
  int support_drawer = -1, test_drawer = -1;  // within mode only
  int side = 0;
};

enum class EpisodeMode { within, across };

// Within mode follows the standard protocol: one alphabet, `way` distinct
// characters, one drawer for the whole support set and a different drawer
// for the test drawing. Across mode pools characters over all alphabets.
class EpisodeSampler {
 public:
  EpisodeSampler(const Dataset& ds, std::vector<CharRef> part, int way, EpisodeMode mode);
  Episode sample(Rng& rng) const;
  int way() const { return way_; }

 private:
  const Dataset* ds_;
  int way_;
  EpisodeMode mode_;
  std::vector<std::vector<CharRef>> alphabet_groups_;  // within: eligible alphabets
  std::vector<std::vector<int>> common_drawers_;       // within: drawers shared by the group
  std::vector<CharRef> pool_;                          // across
};

Episode sample_episode(const Dataset& ds, const std::vector<CharRef>& part, int way,
                       EpisodeMode mode, Rng& rng);

// argmax over the symmetrized pair similarity; ties break to the lowest
// support index.
struct NaivePrediction {
  int index = 0;
  std::vector<double> scores;
};
NaivePrediction naive_classify(const ArcModel& model, const Episode& ep);

// Bi-directional LSTM over the per-support relative representations followed
// by a scored softmax.
struct FullContextHead {
  int embed_size = 0;   // ARC hidden size
  int hidden_size = 0;  // per direction
  LstmCell forward_cell, backward_cell;
  Tensor score_w;  // (1, 2*hidden)
  Tensor score_b;  // (1)

  FullContextHead() = default;
  FullContextHead(int embed, int hidden, std::uint64_t seed);

  std::vector<std::pair<std::string, Tensor>> named_params() const;
  std::vector<Tensor> params() const;
};

void save_head(const std::string& path, const FullContextHead& head);
FullContextHead load_head(const std::string& path);

struct FullContextOutput {
  Tensor probabilities;  // way, sums to 1
  int predicted = 0;
};

// Differentiable end to end into both the comparator and the head when a
// tape is active. Embeddings are symmetrized over presentation order.
FullContextOutput full_context_classify(const ArcModel& model, const FullContextHead& head,
                                        const Episode& ep);

struct EpisodeRecord {
  int predicted_class = 0;
  int true_class = 0;
  bool correct = false;
};

struct EvalResult {
  int episodes = 0;
  int correct = 0;
  double accuracy = 0;
  double wilson_lo = 0, wilson_hi = 0;
  std::vector<EpisodeRecord> records;
};

// p-hat with a 95% Wilson score interval.
void wilson_interval(int correct, int total, double* lo, double* hi);

// Classifier maps an episode to the predicted dataset class id. Episodes use
// per-index derived rng streams so results are order independent.
EvalResult evaluate_oneshot(const std::function<int(const Episode&)>& classifier,
                            const EpisodeSampler& sampler, int episodes, std::uint64_t seed);

// Raw-pixel baselines.
int knn_pixel_classify(const Episode& ep);
int cosine_pixel_classify(const Episode& ep);

// Line-oriented report: `episode_idx,predicted,true,correct` rows followed by
// a summary comment, plus a key=value summary file.
void write_eval_report(std::ostream& os, const EvalResult& result);
void write_eval_summary(std::ostream& os, const EvalResult& result,
                        const std::vector<std::pair<std::string, std::string>>& extra = {});

}  // namespace arc
