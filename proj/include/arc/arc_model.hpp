#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "arc/attention.hpp"
#include "arc/lstm.hpp"
#include "arc/tensor.hpp"

namespace arc {

struct ArcConfig {
  int image_side = 32;   // S
  int glimpse_side = 4;  // N
  int glimpses = 8;      // g per image; total steps T = 2g
  int hidden = 512;      // controller state size
  bool proj_bias = false;

  int total_steps() const { return 2 * glimpses; }
};

struct GlimpseRecord {
  int step = 0;
  int attended = 0;  // 0 = first image, 1 = second
  double x_hat = 0, y_hat = 0, delta_hat = 0;
  double x = 0, y = 0, delta = 0, gamma = 0;
};

struct ComparisonTrace {
  std::vector<GlimpseRecord> steps;          // exactly T entries
  std::vector<std::vector<double>> hidden;   // h_1 .. h_T
  double similarity = 0;
};

struct ComparisonResult {
  Tensor similarity;  // scalar probability
  Tensor embedding;   // controller state after the final step
  std::optional<ComparisonTrace> trace;
};

// Image presented at step t: the first image on even steps.
const Tensor& present(int t, const Tensor& x_a, const Tensor& x_b, int total_steps);

// The full comparator: alternating glimpses over an image pair driven by the
// LSTM controller, with a logistic similarity head on the final state.
class ArcModel {
 public:
  ArcModel(ArcConfig cfg, std::uint64_t seed);

  const ArcConfig& config() const { return cfg_; }
  const Attention& attention() const { return att_; }

  ComparisonResult compare(const Tensor& x_a, const Tensor& x_b, bool with_trace = false) const;

  // Convenience forward passes that do not record on any tape.
  double similarity(const Tensor& x_a, const Tensor& x_b) const;
  // 0.5 * (sim(a,b) + sim(b,a)); invariant under swapping the pair.
  double symmetrized_similarity(const Tensor& x_a, const Tensor& x_b) const;

  // Detached controller states at every even step: h_2, h_4, ..., h_2g.
  std::vector<std::vector<double>> probe_states(const Tensor& x_a, const Tensor& x_b) const;

  std::vector<std::pair<std::string, Tensor>> named_params() const;
  std::vector<Tensor> params() const;

  LstmCell cell;
  GlimpseProjection proj;
  Tensor head_w;  // (1, hidden)
  Tensor head_b;  // (1)

 private:
  ArcConfig cfg_;
  Attention att_;
};

// Checkpoint: a decimal-text header with (S, N, g, H), then each named
// parameter as a name line followed by its tensor record.
void save_model(std::ostream& os, const ArcModel& model);
void save_model(const std::string& path, const ArcModel& model);
ArcModel load_model(std::istream& is);
ArcModel load_model(const std::string& path);

}  // namespace arc
