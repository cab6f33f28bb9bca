#include "arc/oneshot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "arc/error.hpp"
#include "arc/ops.hpp"
#include "arc/serialize.hpp"

namespace arc {

EpisodeSampler::EpisodeSampler(const Dataset& ds, std::vector<CharRef> part, int way,
                               EpisodeMode mode)
    : ds_(&ds), way_(way), mode_(mode) {
  if (way < 1) throw config_error("episode sampler: way must be positive");
  if (mode == EpisodeMode::across) {
    pool_ = std::move(part);
    if (static_cast<int>(pool_.size()) < way) {
      throw config_error("episode sampler: split has " + std::to_string(pool_.size()) +
                         " characters, need " + std::to_string(way));
    }
    for (const CharRef& ref : pool_) {
      if (ds.character(ref).drawings.size() < 2) {
        throw config_error("episode sampler: character " + ds.character(ref).name +
                           " has fewer than 2 drawings");
      }
    }
    return;
  }
  std::map<int, std::vector<CharRef>> by_alphabet;
  for (const CharRef& ref : part) by_alphabet[ref.alphabet].push_back(ref);
  for (auto& [a, refs] : by_alphabet) {
    (void)a;
    if (static_cast<int>(refs.size()) < way) continue;
    // drawers usable by any character subset: those present in every character
    std::map<int, int> counts;
    for (const CharRef& ref : refs) {
      std::set<int> seen;
      for (const Drawing& d : ds.character(ref).drawings) seen.insert(d.drawer);
      for (int dr : seen) counts[dr]++;
    }
    std::vector<int> common;
    for (auto [dr, n] : counts) {
      if (n == static_cast<int>(refs.size())) common.push_back(dr);
    }
    if (static_cast<int>(common.size()) < 2) continue;
    alphabet_groups_.push_back(std::move(refs));
    common_drawers_.push_back(std::move(common));
  }
  if (alphabet_groups_.empty()) {
    throw config_error("episode sampler: no alphabet in the split has " + std::to_string(way) +
                       " characters with 2 shared drawers");
  }
}

Episode EpisodeSampler::sample(Rng& rng) const {
  Episode ep;
  ep.way = way_;
  ep.side = ds_->side;
  if (mode_ == EpisodeMode::within) {
    const std::size_t gi = rng.below(alphabet_groups_.size());
    const auto& group = alphabet_groups_[gi];
    const auto& drawers = common_drawers_[gi];
    ep.alphabet = group[0].alphabet;
    const int d1 = drawers[rng.below_int(static_cast<int>(drawers.size()))];
    int d2_idx = rng.below_int(static_cast<int>(drawers.size()) - 1);
    const int d1_idx = static_cast<int>(std::find(drawers.begin(), drawers.end(), d1) - drawers.begin());
    if (d2_idx >= d1_idx) ++d2_idx;
    const int d2 = drawers[static_cast<std::size_t>(d2_idx)];
    ep.support_drawer = d1;
    ep.test_drawer = d2;

    std::vector<int> chosen = rng.sample_distinct(static_cast<int>(group.size()), way_);
    auto drawing_by_drawer = [&](const CharRef& ref, int drawer) -> const Drawing& {
      for (const Drawing& d : ds_->character(ref).drawings) {
        if (d.drawer == drawer) return d;
      }
      throw config_error("episode sampler: drawer vanished");  // guarded by construction
    };
    for (int k = 0; k < way_; ++k) {
      const CharRef ref = group[static_cast<std::size_t>(chosen[static_cast<std::size_t>(k)])];
      ep.support.push_back(drawing_by_drawer(ref, d1).pix);
      ep.support_class.push_back(ds_->char_uid(ref));
    }
    ep.true_index = rng.below_int(way_);
    const CharRef true_ref = group[static_cast<std::size_t>(chosen[static_cast<std::size_t>(ep.true_index)])];
    ep.true_class = ds_->char_uid(true_ref);
    ep.test = drawing_by_drawer(true_ref, d2).pix;
    return ep;
  }

  std::vector<int> chosen = rng.sample_distinct(static_cast<int>(pool_.size()), way_);
  for (int k = 0; k < way_; ++k) {
    const CharRef ref = pool_[static_cast<std::size_t>(chosen[static_cast<std::size_t>(k)])];
    const auto& drawings = ds_->character(ref).drawings;
    ep.support.push_back(drawings[rng.below(drawings.size())].pix);
    ep.support_class.push_back(ds_->char_uid(ref));
  }
  ep.true_index = rng.below_int(way_);
  const CharRef true_ref = pool_[static_cast<std::size_t>(chosen[static_cast<std::size_t>(ep.true_index)])];
  ep.true_class = ds_->char_uid(true_ref);
  const auto& drawings = ds_->character(true_ref).drawings;
  // test drawing differs from the support drawing of the same character
  const auto& support_pix = ep.support[static_cast<std::size_t>(ep.true_index)];
  for (;;) {
    const Drawing& d = drawings[rng.below(drawings.size())];
    if (&d.pix != &support_pix && d.pix != support_pix) {
      ep.test = d.pix;
      break;
    }
  }
  return ep;
}

Episode sample_episode(const Dataset& ds, const std::vector<CharRef>& part, int way,
                       EpisodeMode mode, Rng& rng) {
  return EpisodeSampler(ds, part, way, mode).sample(rng);
}

NaivePrediction naive_classify(const ArcModel& model, const Episode& ep) {
  NaivePrediction out;
  const int s = ep.side;
  Tensor test = Tensor::from({s, s}, ep.test);
  for (int j = 0; j < ep.way; ++j) {
    Tensor sj = Tensor::from({s, s}, ep.support[static_cast<std::size_t>(j)]);
    out.scores.push_back(model.symmetrized_similarity(test, sj));
  }
  out.index = 0;
  for (int j = 1; j < ep.way; ++j) {
    if (out.scores[static_cast<std::size_t>(j)] > out.scores[static_cast<std::size_t>(out.index)]) {
      out.index = j;
    }
  }
  return out;
}

FullContextHead::FullContextHead(int embed, int hidden, std::uint64_t seed)
    : embed_size(embed), hidden_size(hidden) {
  Rng rng(mix_seed(seed ^ 0xF0C7));
  forward_cell = LstmCell(embed, hidden, rng);
  backward_cell = LstmCell(embed, hidden, rng);
  score_w = Tensor::zeros({1, 2 * hidden});
  score_b = Tensor::zeros({1});
  score_w.set_requires_grad(true);
  score_b.set_requires_grad(true);
}

std::vector<std::pair<std::string, Tensor>> FullContextHead::named_params() const {
  auto out = forward_cell.named_params("fwd");
  for (auto& p : backward_cell.named_params("bwd")) out.push_back(p);
  out.emplace_back("score.w", score_w);
  out.emplace_back("score.b", score_b);
  return out;
}

std::vector<Tensor> FullContextHead::params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) {
    (void)name;
    out.push_back(t);
  }
  return out;
}

void save_head(const std::string& path, const FullContextHead& head) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for write: " + path);
  f << "arc-fullcontext v1\n";
  f << "E=" << head.embed_size << " Hb=" << head.hidden_size << "\n";
  auto named = head.named_params();
  f << "params=" << named.size() << "\n";
  for (auto& [name, t] : named) {
    f << name << "\n";
    write_tensor(f, t);
  }
  if (!f) throw io_error("head write failed: " + path);
}

FullContextHead load_head(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for read: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "arc-fullcontext v1") throw io_error("bad head header");
  int e = 0, hb = 0;
  if (!std::getline(f, line) || std::sscanf(line.c_str(), "E=%d Hb=%d", &e, &hb) != 2) {
    throw io_error("bad head config line: " + line);
  }
  FullContextHead head(e, hb, 0);
  if (!std::getline(f, line) || line.rfind("params=", 0) != 0) throw io_error("bad head params line");
  const std::size_t count = std::stoul(line.substr(7));
  auto named = head.named_params();
  if (count != named.size()) throw io_error("head param count mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(f, line)) throw io_error("truncated head file");
    Tensor t = read_tensor(f);
    bool found = false;
    for (auto& [name, param] : named) {
      if (name != line) continue;
      if (t.shape() != param.shape()) throw io_error("head tensor shape mismatch: " + name);
      param.values_mut() = t.values();
      found = true;
      break;
    }
    if (!found) throw io_error("unknown head tensor: " + line);
  }
  return head;
}

FullContextOutput full_context_classify(const ArcModel& model, const FullContextHead& head,
                                        const Episode& ep) {
  const int s = ep.side;
  Tensor test = Tensor::from({s, s}, ep.test);
  std::vector<Tensor> embeddings;
  for (int j = 0; j < ep.way; ++j) {
    Tensor sj = Tensor::from({s, s}, ep.support[static_cast<std::size_t>(j)]);
    // relative representation, symmetrized over presentation order
    Tensor e1 = model.compare(sj, test).embedding;
    Tensor e2 = model.compare(test, sj).embedding;
    embeddings.push_back((e1 + e2) * 0.5);
  }
  LstmState fwd = head.forward_cell.zero_state();
  LstmState bwd = head.backward_cell.zero_state();
  std::vector<Tensor> fwd_h(static_cast<std::size_t>(ep.way));
  std::vector<Tensor> bwd_h(static_cast<std::size_t>(ep.way));
  for (int j = 0; j < ep.way; ++j) {
    fwd = head.forward_cell.step(embeddings[static_cast<std::size_t>(j)], fwd);
    fwd_h[static_cast<std::size_t>(j)] = fwd.h;
  }
  for (int j = ep.way - 1; j >= 0; --j) {
    bwd = head.backward_cell.step(embeddings[static_cast<std::size_t>(j)], bwd);
    bwd_h[static_cast<std::size_t>(j)] = bwd.h;
  }
  std::vector<Tensor> scores;
  for (int j = 0; j < ep.way; ++j) {
    Tensor cj = concat({fwd_h[static_cast<std::size_t>(j)], bwd_h[static_cast<std::size_t>(j)]}, 0);
    scores.push_back(tanh(matmul(head.score_w, cj) + head.score_b));
  }
  FullContextOutput out;
  out.probabilities = softmax(concat(scores, 0));
  out.predicted = 0;
  for (int j = 1; j < ep.way; ++j) {
    if (out.probabilities.at(j) > out.probabilities.at(out.predicted)) out.predicted = j;
  }
  return out;
}

void wilson_interval(int correct, int total, double* lo, double* hi) {
  if (total <= 0) {
    *lo = 0;
    *hi = 1;
    return;
  }
  const double z = 1.959963984540054;  // 95%
  const double n = total;
  const double p = static_cast<double>(correct) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = p + z2 / (2 * n);
  const double margin = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
  *lo = (center - margin) / denom;
  *hi = (center + margin) / denom;
}

EvalResult evaluate_oneshot(const std::function<int(const Episode&)>& classifier,
                            const EpisodeSampler& sampler, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw config_error("evaluate_oneshot: episodes must be positive");
  EvalResult result;
  result.episodes = episodes;
  result.records.reserve(static_cast<std::size_t>(episodes));
  for (int i = 0; i < episodes; ++i) {
    Rng rng = derive_rng(seed, 0xE9150DE, static_cast<std::uint64_t>(i));
    Episode ep = sampler.sample(rng);
    EpisodeRecord rec;
    rec.predicted_class = classifier(ep);
    rec.true_class = ep.true_class;
    rec.correct = rec.predicted_class == rec.true_class;
    if (rec.correct) ++result.correct;
    result.records.push_back(rec);
  }
  result.accuracy = static_cast<double>(result.correct) / episodes;
  wilson_interval(result.correct, episodes, &result.wilson_lo, &result.wilson_hi);
  return result;
}

int knn_pixel_classify(const Episode& ep) {
  int best = 0;
  double best_d = 0;
  for (int j = 0; j < ep.way; ++j) {
    const auto& s = ep.support[static_cast<std::size_t>(j)];
    double d = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double diff = s[i] - ep.test[i];
      d += diff * diff;
    }
    if (j == 0 || d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return ep.support_class[static_cast<std::size_t>(best)];
}

int cosine_pixel_classify(const Episode& ep) {
  double tn = 0;
  for (double v : ep.test) tn += v * v;
  tn = std::sqrt(tn);
  int best = 0;
  double best_c = -2;
  for (int j = 0; j < ep.way; ++j) {
    const auto& s = ep.support[static_cast<std::size_t>(j)];
    double dot = 0, sn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      dot += s[i] * ep.test[i];
      sn += s[i] * s[i];
    }
    const double c = (sn > 0 && tn > 0) ? dot / (std::sqrt(sn) * tn) : -1;
    if (c > best_c) {
      best_c = c;
      best = j;
    }
  }
  return ep.support_class[static_cast<std::size_t>(best)];
}

void write_eval_report(std::ostream& os, const EvalResult& result) {
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const EpisodeRecord& r = result.records[i];
    os << i << ',' << r.predicted_class << ',' << r.true_class << ',' << (r.correct ? 1 : 0)
       << '\n';
  }
  char line[160];
  std::snprintf(line, sizeof line, "# episodes=%d correct=%d accuracy=%.6f wilson=[%.6f,%.6f]\n",
                result.episodes, result.correct, result.accuracy, result.wilson_lo,
                result.wilson_hi);
  os << line;
}

void write_eval_summary(std::ostream& os, const EvalResult& result,
                        const std::vector<std::pair<std::string, std::string>>& extra) {
  char buf[64];
  os << "episodes=" << result.episodes << "\n";
  os << "correct=" << result.correct << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", result.accuracy);
  os << "accuracy=" << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", result.wilson_lo);
  os << "wilson_lo=" << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", result.wilson_hi);
  os << "wilson_hi=" << buf << "\n";
  for (const auto& [k, v] : extra) os << k << "=" << v << "\n";
}

}  // namespace arc
