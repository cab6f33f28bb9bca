// Command-line driver: dataset preparation, verification and full-context
// training, one-shot evaluation with baselines, and attention-trace frames.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "arc/arc_model.hpp"
#include "arc/augment.hpp"
#include "arc/dataset.hpp"
#include "arc/error.hpp"
#include "arc/image_io.hpp"
#include "arc/oneshot.hpp"
#include "arc/training.hpp"

namespace fs = std::filesystem;
using namespace arc;

namespace {

struct Options {
  std::string data;
  std::string out;
  std::string ckpt;
  std::string toy;
  std::uint64_t seed = 0;
  int image_side = 32;
  int glimpse_side = 4;
  int glimpses = 8;
  int hidden = 512;
  int head_hidden = 64;
  long long steps = 1000;
  double lr = 1e-3;
  int batch = 16;
  std::string split = "custom";
  std::string custom_split = "15,5";
  std::string mode = "within";
  std::string part = "eval";
  int way = 20;
  int episodes = 1000;
  int eval_interval = 100;
  int eval_pairs = 400;
  int eval_episodes = 200;
  int patience = 0;
  double stop_at_val = 0.0;
  double clip = 10.0;
  bool no_aug = false;
  bool freeze_arc = false;
  double aug_translate = -1;  // <0: scale with S
  double aug_rotate = 15;
  double aug_shear = 10;
  bool aug_flips = false;
  double shared_rotate = 0;
  double shared_translate = 0;
  bool shared_flips = false;
  int scale = 8;
  std::string image_a, image_b;
  std::string train_kind;
  std::string eval_mode;
};

std::vector<int> parse_counts(const std::string& text) {
  std::vector<int> counts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) counts.push_back(std::stoi(item));
  }
  return counts;
}

Dataset load_data(const Options& opt) {
  if (opt.data.empty()) throw config_error("--data is required");
  if (fs::exists(fs::path(opt.data) / "manifest.tsv")) return load_packed(opt.data);
  return load_image_tree(opt.data, opt.image_side);
}

Split build_split(const Options& opt, const Dataset& ds) {
  const SplitScheme scheme = split_scheme_from_name(opt.split);
  return make_split(ds, scheme, opt.seed,
                    scheme == SplitScheme::custom ? parse_counts(opt.custom_split)
                                                  : std::vector<int>{});
}

const std::vector<CharRef>& pick_part(const Options& opt, const Split& split) {
  if (opt.part == "train") return split.train();
  if (opt.part == "val") return split.val();
  if (opt.part == "eval" || opt.part == "test") return split.eval();
  throw config_error("unknown --part: " + opt.part);
}

AugmentationPolicy build_aug(const Options& opt, int side) {
  if (opt.no_aug) return AugmentationPolicy::disabled();
  AugmentationPolicy pol;
  pol.max_translate_px = opt.aug_translate >= 0 ? opt.aug_translate : side / 8.0;
  pol.max_rotate_deg = opt.aug_rotate;
  pol.max_shear_deg = opt.aug_shear;
  pol.flip_h_on = pol.flip_v_on = opt.aug_flips;
  return pol;
}

TrainConfig build_train_cfg(const Options& opt, int side) {
  TrainConfig cfg;
  cfg.steps = opt.steps;
  cfg.batch = opt.batch;
  cfg.lr = opt.lr;
  cfg.clip = opt.clip;
  cfg.seed = opt.seed;
  cfg.aug = build_aug(opt, side);
  cfg.shared_aug = AugmentationPolicy::disabled();
  if (opt.shared_rotate > 0) {
    cfg.shared_aug.rotate_on = true;
    cfg.shared_aug.max_rotate_deg = opt.shared_rotate;
  }
  if (opt.shared_translate > 0) {
    cfg.shared_aug.translate_on = true;
    cfg.shared_aug.max_translate_px = opt.shared_translate;
  }
  if (opt.shared_flips) {
    cfg.shared_aug.flip_h_on = cfg.shared_aug.flip_v_on = true;
    cfg.shared_aug.flip_prob = 0.5;
  }
  cfg.eval_interval = opt.eval_interval;
  cfg.eval_pairs = opt.eval_pairs;
  cfg.eval_episodes = opt.eval_episodes;
  cfg.patience = opt.patience;
  cfg.stop_at_val = opt.stop_at_val;
  cfg.way = opt.way;
  cfg.mode = opt.mode == "across" ? EpisodeMode::across : EpisodeMode::within;
  cfg.freeze_arc = opt.freeze_arc;
  return cfg;
}

int run_prepare(const Options& opt) {
  if (opt.out.empty()) throw config_error("--out is required");
  Dataset ds;
  if (!opt.toy.empty()) {
    int classes = 20, samples = 20;
    std::uint64_t seed = opt.seed;
    std::stringstream ss(opt.toy);
    std::string kv;
    while (std::getline(ss, kv, ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw config_error("bad --toy entry: " + kv);
      const std::string key = kv.substr(0, eq);
      const int value = std::stoi(kv.substr(eq + 1));
      if (key == "classes") {
        classes = value;
      } else if (key == "samples") {
        samples = value;
      } else if (key == "seed") {
        seed = static_cast<std::uint64_t>(value);
      } else {
        throw config_error("unknown --toy key: " + key);
      }
    }
    ds = make_toy_dataset(classes, samples, opt.image_side, seed);
  } else {
    if (opt.data.empty()) throw config_error("prepare needs --data or --toy");
    ds = load_image_tree(opt.data, opt.image_side);
  }
  save_packed(opt.out, ds);
  int drawings = 0;
  for (const auto& a : ds.alphabets)
    for (const auto& c : a.characters) drawings += static_cast<int>(c.drawings.size());
  std::cout << "packed " << ds.alphabet_count() << " alphabets, " << ds.character_count()
            << " characters, " << drawings << " drawings at side " << ds.side << " into "
            << opt.out << "\n";
  return 0;
}

int run_train(const Options& opt) {
  if (opt.out.empty()) throw config_error("--out is required");
  Dataset ds = load_data(opt);
  Split split = build_split(opt, ds);
  TrainConfig cfg = build_train_cfg(opt, ds.side);

  ArcConfig mc;
  mc.image_side = ds.side;
  mc.glimpse_side = opt.glimpse_side;
  mc.glimpses = opt.glimpses;
  mc.hidden = opt.hidden;

  if (opt.train_kind == "verification") {
    ArcModel model = opt.ckpt.empty() ? ArcModel(mc, opt.seed)
                                      : load_model((fs::path(opt.ckpt) / "params.arct").string());
    if (model.config().image_side != ds.side) {
      throw config_error("checkpoint side " + std::to_string(model.config().image_side) +
                         " does not match dataset side " + std::to_string(ds.side));
    }
    TrainHistory h = train_verification(model, ds, split, cfg, opt.out);
    if (!h.points.empty()) {
      std::cout << "best val acc " << h.best_val << " at step " << h.best_step << "\n";
    }
    std::cout << "checkpoint written to " << opt.out << "\n";
    return 0;
  }
  if (opt.train_kind == "fullcontext") {
    ArcModel model = opt.ckpt.empty() ? ArcModel(mc, opt.seed)
                                      : load_model((fs::path(opt.ckpt) / "params.arct").string());
    FullContextHead head(model.config().hidden, opt.head_hidden, opt.seed + 1);
    TrainHistory h = train_full_context(model, head, ds, split, cfg, opt.out);
    if (!h.points.empty()) {
      std::cout << "best val episode acc " << h.best_val << " at step " << h.best_step << "\n";
    }
    std::cout << "checkpoint written to " << opt.out << "\n";
    return 0;
  }
  throw config_error("unknown train kind: " + opt.train_kind);
}

int run_eval(const Options& opt) {
  Dataset ds = load_data(opt);
  Split split = build_split(opt, ds);
  const std::vector<CharRef>& part = pick_part(opt, split);
  const EpisodeMode mode = opt.mode == "across" ? EpisodeMode::across : EpisodeMode::within;

  std::optional<ArcModel> model;
  if (opt.eval_mode == "verification" || opt.eval_mode == "oneshot-naive" ||
      opt.eval_mode == "oneshot-fullcontext") {
    if (opt.ckpt.empty()) throw config_error(opt.eval_mode + " needs --ckpt");
    model.emplace(load_model((fs::path(opt.ckpt) / "params.arct").string()));
    if (model->config().image_side != ds.side) {
      throw config_error("checkpoint side " + std::to_string(model->config().image_side) +
                         " does not match dataset side " + std::to_string(ds.side));
    }
  }

  EvalResult result;
  if (opt.eval_mode == "verification") {
    VerificationSampler sampler(ds, part);
    result.episodes = opt.episodes;
    const int s = ds.side;
    for (int i = 0; i < opt.episodes; ++i) {
      Rng rng = derive_rng(opt.seed, 0x7E57, static_cast<std::uint64_t>(i));
      PairSample ps = sampler.sample(rng);
      const double p =
          model->similarity(Tensor::from({s, s}, ps.a), Tensor::from({s, s}, ps.b));
      EpisodeRecord rec;
      rec.predicted_class = p >= 0.5 ? 1 : 0;
      rec.true_class = ps.label;
      rec.correct = rec.predicted_class == rec.true_class;
      if (rec.correct) ++result.correct;
      result.records.push_back(rec);
    }
    result.accuracy = static_cast<double>(result.correct) / result.episodes;
    wilson_interval(result.correct, result.episodes, &result.wilson_lo, &result.wilson_hi);
  } else {
    EpisodeSampler sampler(ds, part, opt.way, mode);
    std::function<int(const Episode&)> classifier;
    std::optional<FullContextHead> head;
    if (opt.eval_mode == "oneshot-naive") {
      classifier = [&](const Episode& ep) {
        return ep.support_class[static_cast<std::size_t>(naive_classify(*model, ep).index)];
      };
    } else if (opt.eval_mode == "oneshot-fullcontext") {
      head = load_head((fs::path(opt.ckpt) / "head.arct").string());
      classifier = [&](const Episode& ep) {
        return ep.support_class[static_cast<std::size_t>(
            full_context_classify(*model, *head, ep).predicted)];
      };
    } else if (opt.eval_mode == "baseline-knn") {
      classifier = knn_pixel_classify;
    } else if (opt.eval_mode == "baseline-cosine") {
      classifier = cosine_pixel_classify;
    } else {
      throw config_error("unknown eval mode: " + opt.eval_mode);
    }
    result = evaluate_oneshot(classifier, sampler, opt.episodes, opt.seed);
  }

  char summary[160];
  std::snprintf(summary, sizeof summary, "%s: accuracy %.4f (wilson 95%% [%.4f, %.4f], n=%d)",
                opt.eval_mode.c_str(), result.accuracy, result.wilson_lo, result.wilson_hi,
                result.episodes);
  std::cout << summary << "\n";

  if (!opt.out.empty()) {
    fs::create_directories(opt.out);
    std::ofstream report(fs::path(opt.out) / "report.csv");
    write_eval_report(report, result);
    std::ofstream sum(fs::path(opt.out) / "summary.txt");
    write_eval_summary(sum, result,
                       {{"mode", opt.eval_mode},
                        {"way", std::to_string(opt.way)},
                        {"sampling", opt.mode},
                        {"seed", std::to_string(opt.seed)}});
    std::cout << "report written to " << opt.out << "\n";
  }
  return 0;
}

GrayImage load_input_image(const std::string& path, int side) {
  GrayImage img = read_png_gray(path);
  double mean = 0;
  for (double v : img.pix) mean += v;
  mean /= static_cast<double>(img.pix.size());
  if (mean > 0.5) {
    for (double& v : img.pix) v = 1.0 - v;
  }
  if (img.width != side || img.height != side) img = resize_area(img, side, side);
  return img;
}

int run_visualize(const Options& opt) {
  if (opt.ckpt.empty() || opt.image_a.empty() || opt.image_b.empty() || opt.out.empty()) {
    throw config_error("visualize needs --ckpt, --a, --b and --out");
  }
  ArcModel model = load_model((fs::path(opt.ckpt) / "params.arct").string());
  std::optional<ProbeClassifiers> probes;
  if (fs::exists(fs::path(opt.ckpt) / "probes.arct")) {
    probes = load_probes((fs::path(opt.ckpt) / "probes.arct").string());
  }
  const int s = model.config().image_side;
  const int n = model.config().glimpse_side;
  GrayImage a = load_input_image(opt.image_a, s);
  GrayImage b = load_input_image(opt.image_b, s);
  Tensor ta = Tensor::from({s, s}, a.pix);
  Tensor tb = Tensor::from({s, s}, b.pix);
  ComparisonResult r = model.compare(ta, tb, true);

  fs::create_directories(opt.out);
  const int scale = std::max(1, opt.scale);
  const int canvas = s * scale;
  for (std::size_t t = 0; t < r.trace->steps.size(); ++t) {
    const GlimpseRecord& rec = r.trace->steps[t];
    const GrayImage& img = rec.attended == 0 ? a : b;
    std::vector<unsigned char> rgb(static_cast<std::size_t>(canvas) * canvas * 3);
    for (int y = 0; y < canvas; ++y)
      for (int x = 0; x < canvas; ++x) {
        const double v = img.at(y / scale, x / scale);
        const auto byte = static_cast<unsigned char>(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
        const std::size_t o = (static_cast<std::size_t>(y) * canvas + x) * 3;
        rgb[o] = rgb[o + 1] = rgb[o + 2] = byte;
      }
    // attention window: kernel-center bounding box expanded by gamma
    const double half = (n - 1) / 2.0 * rec.delta;
    auto clamp_px = [&](double v) { return std::min(static_cast<double>(s - 1), std::max(0.0, v)); };
    const int x0 = static_cast<int>(std::lround(clamp_px(rec.x - half - rec.gamma) * scale));
    const int x1 = static_cast<int>(std::lround((clamp_px(rec.x + half + rec.gamma) + 1) * scale)) - 1;
    const int y0 = static_cast<int>(std::lround(clamp_px(rec.y - half - rec.gamma) * scale));
    const int y1 = static_cast<int>(std::lround((clamp_px(rec.y + half + rec.gamma) + 1) * scale)) - 1;
    auto paint = [&](int y, int x) {
      if (x < 0 || x >= canvas || y < 0 || y >= canvas) return;
      const std::size_t o = (static_cast<std::size_t>(y) * canvas + x) * 3;
      rgb[o] = 255;
      rgb[o + 1] = 0;
      rgb[o + 2] = 0;
    };
    for (int x = x0; x <= x1; ++x) {
      paint(y0, x);
      paint(y1, x);
    }
    for (int y = y0; y <= y1; ++y) {
      paint(y, x0);
      paint(y, x1);
    }
    char name[32];
    std::snprintf(name, sizeof name, "step_%02zu.png", t);
    write_png_rgb((fs::path(opt.out) / name).string(), canvas, canvas, rgb);

    std::snprintf(name, sizeof name, "step_%02zu.txt", t);
    std::ofstream sidecar(fs::path(opt.out) / name);
    char buf[64];
    sidecar << "step=" << rec.step << "\n";
    sidecar << "attended=" << (rec.attended == 0 ? "a" : "b") << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", rec.x);
    sidecar << "x=" << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", rec.y);
    sidecar << "y=" << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", rec.delta);
    sidecar << "delta=" << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", rec.gamma);
    sidecar << "gamma=" << buf << "\n";
    if (probes && t % 2 == 1) {
      const int k = static_cast<int>(t) / 2;
      if (k < probes->glimpses) {
        std::snprintf(buf, sizeof buf, "%.17g",
                      probes->score(k, r.trace->hidden[t]));
        sidecar << "probe=" << buf << "\n";
      }
    }
  }
  std::cout << "wrote " << r.trace->steps.size() << " frames to " << opt.out
            << " (similarity " << r.trace->similarity << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attentive recurrent comparator training and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value config file; flags override it");

  Options opt;
  app.add_option("--seed", opt.seed, "master seed")->capture_default_str();
  app.add_option("--S", opt.image_side, "image side")->capture_default_str();
  app.add_option("--N", opt.glimpse_side, "glimpse side")->capture_default_str();
  app.add_option("--glimpses", opt.glimpses, "glimpses per image")->capture_default_str();
  app.add_option("--hidden", opt.hidden, "controller state size")->capture_default_str();
  app.add_option("--data", opt.data, "dataset directory (packed or image tree)");
  app.add_option("--out", opt.out, "output directory");
  app.add_option("--ckpt", opt.ckpt, "checkpoint directory");
  app.add_option("--split", opt.split, "split scheme: 3020, 301010, across, custom")
      ->capture_default_str();
  app.add_option("--custom-split", opt.custom_split, "character counts for custom split")
      ->capture_default_str();
  app.add_option("--mode", opt.mode, "episode sampling: within or across")->capture_default_str();
  app.add_option("--way", opt.way, "support set size")->capture_default_str();
  app.add_option("--episodes", opt.episodes, "evaluation episodes/pairs")->capture_default_str();

  auto* prep = app.add_subcommand("prepare", "pack an image tree or toy dataset");
  prep->add_option("--toy", opt.toy, "toy spec, e.g. classes=20,samples=20");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("kind", opt.train_kind, "verification or fullcontext")->required();
  train->add_option("--steps", opt.steps, "optimizer steps (episodes for fullcontext)")
      ->capture_default_str();
  train->add_option("--lr", opt.lr, "learning rate")->capture_default_str();
  train->add_option("--batch", opt.batch, "examples per optimizer step")->capture_default_str();
  train->add_option("--clip", opt.clip, "gradient norm clip")->capture_default_str();
  train->add_option("--eval-interval", opt.eval_interval, "steps between evals")
      ->capture_default_str();
  train->add_option("--eval-pairs", opt.eval_pairs, "fixed validation pairs")
      ->capture_default_str();
  train->add_option("--eval-episodes", opt.eval_episodes, "fixed validation episodes")
      ->capture_default_str();
  train->add_option("--patience", opt.patience, "evals without improvement before stopping")
      ->capture_default_str();
  train->add_option("--stop-at-val", opt.stop_at_val, "stop once val accuracy reaches this")
      ->capture_default_str();
  train->add_option("--head-hidden", opt.head_hidden, "full-context BiLSTM size per direction")
      ->capture_default_str();
  train->add_flag("--freeze-arc", opt.freeze_arc, "full-context: train the head only");
  train->add_flag("--no-aug", opt.no_aug, "disable augmentation");
  train->add_option("--aug-translate", opt.aug_translate, "max translation px (default S/8)");
  train->add_option("--aug-rotate", opt.aug_rotate, "max rotation deg")->capture_default_str();
  train->add_option("--aug-shear", opt.aug_shear, "max shear deg")->capture_default_str();
  train->add_flag("--aug-flips", opt.aug_flips, "enable horizontal/vertical flips");
  train->add_option("--shared-rotate", opt.shared_rotate,
                    "max rotation deg applied identically to a whole pair/episode");
  train->add_option("--shared-translate", opt.shared_translate,
                    "max translation px applied identically to a whole pair/episode");
  train->add_flag("--shared-flips", opt.shared_flips,
                  "pair-consistent flips with probability 0.5");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or baseline");
  eval->add_option("mode", opt.eval_mode,
                   "verification, oneshot-naive, oneshot-fullcontext, baseline-knn, "
                   "baseline-cosine")
      ->required();
  eval->add_option("--part", opt.part, "split part: train, val, eval")->capture_default_str();

  auto* vis = app.add_subcommand("visualize", "write per-step attention frames");
  vis->add_option("--a", opt.image_a, "first image (png)");
  vis->add_option("--b", opt.image_b, "second image (png)");
  vis->add_option("--scale", opt.scale, "nearest-neighbour upscale factor")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (prep->parsed()) return run_prepare(opt);
    if (train->parsed()) return run_train(opt);
    if (eval->parsed()) return run_eval(opt);
    if (vis->parsed()) return run_visualize(opt);
    throw config_error("no subcommand given");
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
