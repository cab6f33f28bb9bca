#include "arc/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "arc/error.hpp"
#include "arc/ops.hpp"
#include "arc/serialize.hpp"

namespace fs = std::filesystem;

namespace arc {

namespace {
constexpr double kProbEps = 1e-7;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::vector<double>> snapshot_values(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> snap;
  snap.reserve(params.size());
  for (const Tensor& p : params) snap.push_back(p.values());
  return snap;
}

void restore_values(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].values_mut() = snap[i];
}

class MetricsLog {
 public:
  explicit MetricsLog(const std::string& path) {
    if (!path.empty()) {
      out_.open(path);
      if (!out_) throw io_error("cannot open metrics log: " + path);
    }
  }
  void append(long long step, double train_loss, double val_acc) {
    if (!out_.is_open()) return;
    out_ << step << ',' << fmt_double(train_loss) << ',' << fmt_double(val_acc) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace

Tensor bce_loss(const Tensor& p, int label) {
  if (p.numel() != 1) throw dim_error("bce_loss expects a scalar probability");
  if (!std::isfinite(p.value())) throw numeric_error("bce_loss: non-finite probability");
  Tensor pc = clamp(p, kProbEps, 1.0 - kProbEps);
  if (label != 0 && label != 1) throw config_error("bce_loss label must be 0 or 1");
  return label == 1 ? neg(log(pc)) : neg(log(1.0 - pc));
}

Tensor episode_ce_loss(const Tensor& p, int true_index) {
  if (true_index < 0 || true_index >= static_cast<int>(p.numel())) {
    throw std::out_of_range("episode_ce_loss: true index " + std::to_string(true_index));
  }
  Tensor pt = clamp(slice(p, 0, true_index, 1), kProbEps, 1.0);
  return neg(log(pt));
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double clip_scale(double grad_norm, double threshold) {
  if (threshold <= 0 || grad_norm <= threshold) return 1.0;
  return threshold / grad_norm;
}

void Adam::step(double grad_scale) {
  ++t_;
  double norm2 = 0;
  for (const Tensor& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) norm2 += (g * grad_scale) * (g * grad_scale);
  }
  const double scale = grad_scale * clip_scale(std::sqrt(norm2), cfg_.clip);
  const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto& vals = p.values_mut();
    const auto& grads = p.grad();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const double g = grads[j] * scale;
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1 - cfg_.beta1) * g;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1 - cfg_.beta2) * g * g;
      const double mhat = m_[i][j] / bias1;
      const double vhat = v_[i][j] / bias2;
      vals[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void write_kv_file(const std::string& path, std::vector<std::pair<std::string, std::string>> kv) {
  std::sort(kv.begin(), kv.end());
  std::ofstream f(path);
  if (!f) throw io_error("cannot open for write: " + path);
  for (const auto& [k, v] : kv) f << k << '=' << v << '\n';
}

namespace {

std::vector<std::pair<std::string, std::string>> config_kv(const TrainConfig& cfg,
                                                           const ArcConfig& mc,
                                                           const std::string& kind) {
  return {
      {"kind", kind},
      {"S", std::to_string(mc.image_side)},
      {"N", std::to_string(mc.glimpse_side)},
      {"g", std::to_string(mc.glimpses)},
      {"H", std::to_string(mc.hidden)},
      {"steps", std::to_string(cfg.steps)},
      {"batch", std::to_string(cfg.batch)},
      {"lr", fmt_double(cfg.lr)},
      {"clip", fmt_double(cfg.clip)},
      {"seed", std::to_string(cfg.seed)},
      {"way", std::to_string(cfg.way)},
      {"mode", cfg.mode == EpisodeMode::within ? "within" : "across"},
      {"eval_interval", std::to_string(cfg.eval_interval)},
  };
}

}  // namespace

TrainHistory train_verification(ArcModel& model, const Dataset& ds, const Split& split,
                                const TrainConfig& cfg, const std::string& ckpt_dir) {
  VerificationSampler train_sampler(ds, split.train());
  VerificationSampler val_sampler(ds, split.val());
  const int s = ds.side;

  // fixed validation pair set, unaugmented
  Rng val_rng = derive_rng(cfg.seed, 0x7A11DA);
  std::vector<PairSample> val_pairs;
  val_pairs.reserve(static_cast<std::size_t>(cfg.eval_pairs));
  for (int i = 0; i < cfg.eval_pairs; ++i) val_pairs.push_back(val_sampler.sample(val_rng));

  auto val_accuracy = [&] {
    int correct = 0;
    for (const PairSample& ps : val_pairs) {
      const double p = model.similarity(Tensor::from({s, s}, ps.a), Tensor::from({s, s}, ps.b));
      correct += (p >= 0.5 ? 1 : 0) == ps.label;
    }
    return static_cast<double>(correct) / static_cast<double>(val_pairs.size());
  };

  if (!ckpt_dir.empty()) fs::create_directories(ckpt_dir);
  MetricsLog metrics(ckpt_dir.empty() ? "" : (fs::path(ckpt_dir) / "metrics.log").string());

  Rng pair_rng = derive_rng(cfg.seed, 0x9A1B5);
  Rng aug_rng = derive_rng(cfg.seed, 0xA06);
  std::vector<Tensor> params = model.params();
  Adam opt(params, {cfg.lr, 0.9, 0.999, 1e-8, cfg.clip});

  TrainHistory history;
  auto best = snapshot_values(params);
  int evals_since_best = 0;
  double running_loss = 0;
  int running_count = 0;

  for (long long step = 1; step <= cfg.steps; ++step) {
    opt.zero_grad();
    double batch_loss = 0;
    try {
      for (int b = 0; b < cfg.batch; ++b) {
        PairSample ps = train_sampler.sample(pair_rng);
        const AffineParams shared = draw_affine(cfg.shared_aug, aug_rng);
        Tensor a = Tensor::from({s, s}, augment(apply_affine(ps.a, s, shared), s, cfg.aug, aug_rng));
        Tensor bimg =
            Tensor::from({s, s}, augment(apply_affine(ps.b, s, shared), s, cfg.aug, aug_rng));
        Tape tape;
        Tensor loss = bce_loss(model.compare(a, bimg).similarity, ps.label);
        batch_loss += loss.value();
        tape.backward(loss);
      }
    } catch (const numeric_error& e) {
      throw numeric_error("verification training diverged at step " + std::to_string(step) + ": " +
                          e.what());
    }
    batch_loss /= cfg.batch;
    if (!std::isfinite(batch_loss)) {
      throw numeric_error("verification training diverged at step " + std::to_string(step));
    }
    opt.step(1.0 / cfg.batch);
    running_loss += batch_loss;
    ++running_count;

    if (step % cfg.eval_interval == 0 || step == cfg.steps) {
      const double acc = val_accuracy();
      const double mean_loss = running_loss / running_count;
      running_loss = 0;
      running_count = 0;
      metrics.append(step, mean_loss, acc);
      history.points.push_back({step, mean_loss, acc});
      if (acc > history.best_val) {
        history.best_val = acc;
        history.best_step = step;
        best = snapshot_values(params);
        evals_since_best = 0;
      } else {
        ++evals_since_best;
      }
      if (cfg.stop_at_val > 0 && acc >= cfg.stop_at_val) break;
      if (cfg.patience > 0 && evals_since_best >= cfg.patience) break;
    }
  }
  if (history.best_step >= 0) restore_values(params, best);

  if (!ckpt_dir.empty()) {
    save_model((fs::path(ckpt_dir) / "params.arct").string(), model);
    write_kv_file((fs::path(ckpt_dir) / "config.txt").string(),
                  config_kv(cfg, model.config(), "verification"));
  }
  return history;
}

double ProbeClassifiers::score(int k, const std::vector<double>& h) const {
  const auto& wk = w[static_cast<std::size_t>(k)];
  double z = b[static_cast<std::size_t>(k)];
  for (std::size_t i = 0; i < wk.size(); ++i) z += wk[i] * h[i];
  return 1.0 / (1.0 + std::exp(-z));
}

ProbeReport train_probe_classifiers(const ArcModel& model, const Dataset& ds, const Split& split,
                                    const TrainConfig& cfg) {
  const int g = model.config().glimpses;
  const int h = model.config().hidden;
  const int s = ds.side;
  VerificationSampler train_sampler(ds, split.train());
  VerificationSampler eval_sampler(ds, split.val());

  auto collect = [&](VerificationSampler& sampler, Rng& rng, int count,
                     std::vector<std::vector<std::vector<double>>>& feats, std::vector<int>& labels) {
    feats.assign(static_cast<std::size_t>(g), {});
    for (int i = 0; i < count; ++i) {
      PairSample ps = sampler.sample(rng);
      auto probes = model.probe_states(Tensor::from({s, s}, ps.a), Tensor::from({s, s}, ps.b));
      for (int k = 0; k < g; ++k) feats[static_cast<std::size_t>(k)].push_back(std::move(probes[static_cast<std::size_t>(k)]));
      labels.push_back(ps.label);
    }
  };

  Rng train_rng = derive_rng(cfg.seed, 0x9500BE);
  Rng eval_rng = derive_rng(cfg.seed, 0x9500BF);
  std::vector<std::vector<std::vector<double>>> train_feats, eval_feats;
  std::vector<int> train_labels, eval_labels;
  collect(train_sampler, train_rng, cfg.probe_train_pairs, train_feats, train_labels);
  collect(eval_sampler, eval_rng, cfg.probe_eval_pairs, eval_feats, eval_labels);

  ProbeReport report;
  report.probes.hidden = h;
  report.probes.glimpses = g;
  report.probes.w.assign(static_cast<std::size_t>(g), std::vector<double>(static_cast<std::size_t>(h), 0.0));
  report.probes.b.assign(static_cast<std::size_t>(g), 0.0);

  const int n = static_cast<int>(train_labels.size());
  for (int k = 0; k < g; ++k) {
    auto& w = report.probes.w[static_cast<std::size_t>(k)];
    double& b = report.probes.b[static_cast<std::size_t>(k)];
    // full-batch adaptive-moment updates on the logistic objective
    std::vector<double> mw(w.size(), 0.0), vw(w.size(), 0.0);
    double mb = 0, vb = 0;
    for (int epoch = 1; epoch <= cfg.probe_epochs; ++epoch) {
      std::vector<double> gw(w.size(), 0.0);
      double gb = 0;
      for (int i = 0; i < n; ++i) {
        const auto& x = train_feats[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        double z = b;
        for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double d = (p - train_labels[static_cast<std::size_t>(i)]) / n;
        for (std::size_t j = 0; j < w.size(); ++j) gw[j] += d * x[j];
        gb += d;
      }
      const double b1 = 1.0 - std::pow(0.9, epoch), b2 = 1.0 - std::pow(0.999, epoch);
      for (std::size_t j = 0; j < w.size(); ++j) {
        mw[j] = 0.9 * mw[j] + 0.1 * gw[j];
        vw[j] = 0.999 * vw[j] + 0.001 * gw[j] * gw[j];
        w[j] -= cfg.probe_lr * (mw[j] / b1) / (std::sqrt(vw[j] / b2) + 1e-8);
      }
      mb = 0.9 * mb + 0.1 * gb;
      vb = 0.999 * vb + 0.001 * gb * gb;
      b -= cfg.probe_lr * (mb / b1) / (std::sqrt(vb / b2) + 1e-8);
    }
    int correct = 0;
    for (std::size_t i = 0; i < eval_labels.size(); ++i) {
      const double p = report.probes.score(k, eval_feats[static_cast<std::size_t>(k)][i]);
      correct += (p >= 0.5 ? 1 : 0) == eval_labels[i];
    }
    report.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(eval_labels.size()));
  }
  return report;
}

void save_probes(const std::string& path, const ProbeClassifiers& probes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for write: " + path);
  f << "arc-probes v1\n";
  f << "H=" << probes.hidden << " g=" << probes.glimpses << "\n";
  for (int k = 0; k < probes.glimpses; ++k) {
    std::vector<double> rec = probes.w[static_cast<std::size_t>(k)];
    rec.push_back(probes.b[static_cast<std::size_t>(k)]);
    write_tensor(f, Tensor::from({probes.hidden + 1}, std::move(rec)));
  }
}

ProbeClassifiers load_probes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for read: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "arc-probes v1") throw io_error("bad probes header");
  ProbeClassifiers probes;
  if (!std::getline(f, line) ||
      std::sscanf(line.c_str(), "H=%d g=%d", &probes.hidden, &probes.glimpses) != 2) {
    throw io_error("bad probes config line");
  }
  for (int k = 0; k < probes.glimpses; ++k) {
    Tensor t = read_tensor(f);
    if (static_cast<int>(t.numel()) != probes.hidden + 1) throw io_error("bad probe record size");
    std::vector<double> w(t.values().begin(), t.values().end() - 1);
    probes.w.push_back(std::move(w));
    probes.b.push_back(t.values().back());
  }
  return probes;
}

TrainHistory train_full_context(ArcModel& model, FullContextHead& head, const Dataset& ds,
                                const Split& split, const TrainConfig& cfg,
                                const std::string& ckpt_dir) {
  EpisodeSampler train_sampler(ds, split.train(), cfg.way, cfg.mode);
  EpisodeSampler val_sampler(ds, split.val(), cfg.way, cfg.mode);
  const int s = ds.side;

  Rng val_rng = derive_rng(cfg.seed, 0xF0C7E4);
  std::vector<Episode> val_eps;
  val_eps.reserve(static_cast<std::size_t>(cfg.eval_episodes));
  for (int i = 0; i < cfg.eval_episodes; ++i) val_eps.push_back(val_sampler.sample(val_rng));

  auto val_accuracy = [&] {
    int correct = 0;
    for (const Episode& ep : val_eps) {
      FullContextOutput out = full_context_classify(model, head, ep);
      correct += ep.support_class[static_cast<std::size_t>(out.predicted)] == ep.true_class;
    }
    return static_cast<double>(correct) / static_cast<double>(val_eps.size());
  };

  if (!ckpt_dir.empty()) fs::create_directories(ckpt_dir);
  MetricsLog metrics(ckpt_dir.empty() ? "" : (fs::path(ckpt_dir) / "metrics.log").string());

  std::vector<Tensor> params = head.params();
  if (!cfg.freeze_arc) {
    for (Tensor& p : model.params()) params.push_back(p);
  }
  Adam opt(params, {cfg.lr, 0.9, 0.999, 1e-8, cfg.clip});
  Rng ep_rng = derive_rng(cfg.seed, 0xE41);
  Rng aug_rng = derive_rng(cfg.seed, 0xA07);

  TrainHistory history;
  auto best = snapshot_values(params);
  int evals_since_best = 0;
  double running_loss = 0;
  int running_count = 0;

  for (long long step = 1; step <= cfg.steps; ++step) {
    opt.zero_grad();
    double batch_loss = 0;
    try {
      for (int b = 0; b < cfg.batch; ++b) {
        Episode ep = train_sampler.sample(ep_rng);
        const AffineParams shared = draw_affine(cfg.shared_aug, aug_rng);
        for (auto& img : ep.support) img = augment(apply_affine(img, s, shared), s, cfg.aug, aug_rng);
        ep.test = augment(apply_affine(ep.test, s, shared), s, cfg.aug, aug_rng);
        Tape tape;
        FullContextOutput out = full_context_classify(model, head, ep);
        Tensor loss = episode_ce_loss(out.probabilities, ep.true_index);
        batch_loss += loss.value();
        tape.backward(loss);
      }
    } catch (const numeric_error& e) {
      throw numeric_error("full-context training diverged at step " + std::to_string(step) + ": " +
                          e.what());
    }
    batch_loss /= cfg.batch;
    if (!std::isfinite(batch_loss)) {
      throw numeric_error("full-context training diverged at step " + std::to_string(step));
    }
    opt.step(1.0 / cfg.batch);
    running_loss += batch_loss;
    ++running_count;

    if (step % cfg.eval_interval == 0 || step == cfg.steps) {
      const double acc = val_accuracy();
      const double mean_loss = running_loss / running_count;
      running_loss = 0;
      running_count = 0;
      metrics.append(step, mean_loss, acc);
      history.points.push_back({step, mean_loss, acc});
      if (acc > history.best_val) {
        history.best_val = acc;
        history.best_step = step;
        best = snapshot_values(params);
        evals_since_best = 0;
      } else {
        ++evals_since_best;
      }
      if (cfg.stop_at_val > 0 && acc >= cfg.stop_at_val) break;
      if (cfg.patience > 0 && evals_since_best >= cfg.patience) break;
    }
  }
  if (history.best_step >= 0) restore_values(params, best);

  if (!ckpt_dir.empty()) {
    save_model((fs::path(ckpt_dir) / "params.arct").string(), model);
    save_head((fs::path(ckpt_dir) / "head.arct").string(), head);
    write_kv_file((fs::path(ckpt_dir) / "config.txt").string(),
                  config_kv(cfg, model.config(), "fullcontext"));
  }
  return history;
}

}  // namespace arc
