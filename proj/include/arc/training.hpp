#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "arc/arc_model.hpp"
#include "arc/augment.hpp"
#include "arc/dataset.hpp"
#include "arc/oneshot.hpp"
#include "arc/tensor.hpp"

namespace arc {

// Binary cross-entropy on a probability, clamped to [1e-7, 1 - 1e-7].
Tensor bce_loss(const Tensor& p, int label);

// -log p[true_index] on a distribution over classes.
Tensor episode_ce_loss(const Tensor& p, int true_index);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip = 10.0;  // global gradient-norm threshold, <= 0 disables
};

// Rescale factor applied to gradients whose global norm exceeds the
// threshold; 1 otherwise. threshold <= 0 disables clipping.
double clip_scale(double grad_norm, double threshold);

// Adaptive-moment optimizer with bias correction and global-norm clipping.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  // Applies one update from the accumulated gradients. grad_scale rescales
  // gradients first (batch averaging); clipping happens after scaling.
  void step(double grad_scale = 1.0);
  void zero_grad();
  long long steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  long long t_ = 0;
};

struct TrainConfig {
  long long steps = 1000;
  int batch = 16;
  double lr = 1e-3;
  double clip = 10.0;
  std::uint64_t seed = 0;
  AugmentationPolicy aug = AugmentationPolicy::disabled();
  // drawn once per pair/episode and applied to every image in it; turns each
  // sample into a fresh orientation of the same comparison problem
  AugmentationPolicy shared_aug = AugmentationPolicy::disabled();
  int eval_interval = 100;
  int eval_pairs = 400;     // fixed held-out pair set for verification
  int eval_episodes = 200;  // fixed held-out episode set for full-context
  int patience = 0;         // evals without improvement before stopping; 0 = off
  double stop_at_val = 0.0; // stop once validation accuracy reaches this; 0 = off
  // full-context
  int way = 5;
  EpisodeMode mode = EpisodeMode::within;
  bool freeze_arc = false;
  // probes
  int probe_train_pairs = 2048;
  int probe_eval_pairs = 1024;
  int probe_epochs = 300;
  double probe_lr = 0.05;
};

struct EvalPoint {
  long long step = 0;
  double train_loss = 0;
  double val_acc = 0;
};

struct TrainHistory {
  std::vector<EvalPoint> points;
  double best_val = 0;
  long long best_step = -1;
};

// Verification training: sample pair -> augment -> compare -> bce ->
// backward -> optimizer step. Keeps the best-validation parameters (restored
// into the model on return) and, when ckpt_dir is set, writes
// ckpt_dir/{params.arct, config.txt, metrics.log}.
TrainHistory train_verification(ArcModel& model, const Dataset& ds, const Split& split,
                                const TrainConfig& cfg, const std::string& ckpt_dir = "");

// One logistic classifier per even step, trained on frozen controller states.
struct ProbeClassifiers {
  int hidden = 0;
  int glimpses = 0;
  std::vector<std::vector<double>> w;  // per glimpse count, length hidden
  std::vector<double> b;

  double score(int k, const std::vector<double>& h) const;
};

struct ProbeReport {
  ProbeClassifiers probes;
  std::vector<double> accuracy;  // held-out accuracy per glimpse count 1..g
};

ProbeReport train_probe_classifiers(const ArcModel& model, const Dataset& ds, const Split& split,
                                    const TrainConfig& cfg);
void save_probes(const std::string& path, const ProbeClassifiers& probes);
ProbeClassifiers load_probes(const std::string& path);

// Episodic training of the full-context classifier; fine-tunes the
// comparator jointly unless cfg.freeze_arc is set. Writes params.arct,
// head.arct, config.txt and metrics.log when ckpt_dir is set.
TrainHistory train_full_context(ArcModel& model, FullContextHead& head, const Dataset& ds,
                                const Split& split, const TrainConfig& cfg,
                                const std::string& ckpt_dir = "");

// key=value lines, sorted, trailing newline; used for config.txt.
void write_kv_file(const std::string& path, std::vector<std::pair<std::string, std::string>> kv);

}  // namespace arc
