#include "arc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "arc/error.hpp"
#include "arc/image_io.hpp"
#include "arc/serialize.hpp"

namespace fs = std::filesystem;

namespace arc {

int Dataset::character_count() const {
  int n = 0;
  for (const auto& a : alphabets) n += static_cast<int>(a.characters.size());
  return n;
}

int Dataset::char_uid(CharRef ref) const {
  int uid = 0;
  for (int a = 0; a < ref.alphabet; ++a)
    uid += static_cast<int>(alphabets[static_cast<std::size_t>(a)].characters.size());
  return uid + ref.character;
}

Tensor Dataset::image(CharRef ref, int drawing) const {
  const Drawing& d = character(ref).drawings[static_cast<std::size_t>(drawing)];
  return Tensor::from({side, side}, d.pix);
}

std::vector<CharRef> Dataset::all_characters() const {
  std::vector<CharRef> refs;
  for (int a = 0; a < alphabet_count(); ++a) {
    const int nc = static_cast<int>(alphabets[static_cast<std::size_t>(a)].characters.size());
    for (int c = 0; c < nc; ++c) refs.push_back({a, c});
  }
  return refs;
}

// ---------------------------------------------------------------- image tree

Dataset load_image_tree(const std::string& root, int side) {
  if (!fs::is_directory(root)) throw io_error("dataset root is not a directory: " + root);
  std::vector<std::string> bad_files;
  Dataset ds;
  ds.side = side;

  std::vector<fs::path> alphabet_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) alphabet_dirs.push_back(e.path());
  }
  std::sort(alphabet_dirs.begin(), alphabet_dirs.end());
  if (alphabet_dirs.empty()) throw io_error("no alphabet directories under " + root);

  int expected_drawings = -1;
  for (const auto& adir : alphabet_dirs) {
    Alphabet alphabet;
    alphabet.name = adir.filename().string();
    std::vector<fs::path> char_dirs;
    for (const auto& e : fs::directory_iterator(adir)) {
      if (e.is_directory()) char_dirs.push_back(e.path());
    }
    std::sort(char_dirs.begin(), char_dirs.end());
    for (const auto& cdir : char_dirs) {
      Character ch;
      ch.name = cdir.filename().string();
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(cdir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      int index = 0;
      for (const auto& f : files) {
        Drawing d;
        // Omniglot names drawings <char-uid>_<drawer>.png; fall back to the
        // file position when the stem has no numeric suffix.
        const std::string stem = f.stem().string();
        const auto us = stem.rfind('_');
        d.drawer = index;
        if (us != std::string::npos) {
          try {
            d.drawer = std::stoi(stem.substr(us + 1));
          } catch (...) {
          }
        }
        try {
          GrayImage img = read_png_gray(f.string());
          double mean = 0;
          for (double v : img.pix) mean += v;
          mean /= static_cast<double>(img.pix.size());
          if (mean > 0.5) {
            for (double& v : img.pix) v = 1.0 - v;
          }
          if (img.width != side || img.height != side) img = resize_area(img, side, side);
          d.pix = std::move(img.pix);
        } catch (const io_error&) {
          bad_files.push_back(f.string());
          continue;
        }
        ch.drawings.push_back(std::move(d));
        ++index;
      }
      if (ch.drawings.empty()) {
        bad_files.push_back(cdir.string() + " (no readable drawings)");
        continue;
      }
      if (expected_drawings < 0) expected_drawings = static_cast<int>(ch.drawings.size());
      if (static_cast<int>(ch.drawings.size()) != expected_drawings) {
        std::cerr << "warning: " << cdir.string() << " has " << ch.drawings.size()
                  << " drawings, expected " << expected_drawings << "\n";
      }
      alphabet.characters.push_back(std::move(ch));
    }
    if (!alphabet.characters.empty()) ds.alphabets.push_back(std::move(alphabet));
  }
  if (!bad_files.empty()) {
    std::string msg = "unreadable dataset files:";
    for (const auto& f : bad_files) msg += "\n  " + f;
    throw io_error(msg);
  }
  if (ds.alphabets.empty()) throw io_error("no characters found under " + root);
  return ds;
}

// ------------------------------------------------------------------- packed

void save_packed(const std::string& dir, const Dataset& ds) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.tsv");
  std::ofstream pack(fs::path(dir) / "data.arcp", std::ios::binary);
  if (!manifest || !pack) throw io_error("cannot write packed dataset under " + dir);
  for (const auto& alphabet : ds.alphabets) {
    for (const auto& ch : alphabet.characters) {
      const int n = static_cast<int>(ch.drawings.size());
      std::vector<double> stack;
      stack.reserve(static_cast<std::size_t>(n) * ch.drawings[0].pix.size());
      for (const auto& d : ch.drawings) {
        manifest << alphabet.name << '\t' << ch.name << '\t' << d.drawer << '\n';
        stack.insert(stack.end(), d.pix.begin(), d.pix.end());
      }
      write_tensor(pack, Tensor::from({n, ds.side, ds.side}, std::move(stack)));
    }
  }
  if (!manifest || !pack) throw io_error("packed dataset write failed under " + dir);
}

Dataset load_packed(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.tsv");
  std::ifstream pack(fs::path(dir) / "data.arcp", std::ios::binary);
  if (!manifest) throw io_error("missing manifest.tsv under " + dir);
  if (!pack) throw io_error("missing data.arcp under " + dir);

  struct Record {
    std::string alphabet, character;
    std::vector<int> drawers;
  };
  std::vector<Record> records;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, c, d;
    if (!std::getline(ls, a, '\t') || !std::getline(ls, c, '\t') || !std::getline(ls, d)) {
      throw io_error("bad manifest line: " + line);
    }
    if (records.empty() || records.back().alphabet != a || records.back().character != c) {
      records.push_back({a, c, {}});
    }
    records.back().drawers.push_back(std::stoi(d));
  }
  if (records.empty()) throw io_error("empty manifest under " + dir);

  Dataset ds;
  for (const auto& rec : records) {
    Tensor t = read_tensor(pack);
    if (t.rank() != 3 || t.dim(0) != static_cast<int>(rec.drawers.size()) || t.dim(1) != t.dim(2)) {
      throw io_error("packed record shape " + shape_str(t.shape()) + " does not match manifest for " +
                     rec.alphabet + "/" + rec.character);
    }
    if (ds.side == 0) ds.side = t.dim(1);
    if (ds.side != t.dim(1)) throw io_error("inconsistent image sides in packed dataset");
    if (ds.alphabets.empty() || ds.alphabets.back().name != rec.alphabet) {
      ds.alphabets.push_back({rec.alphabet, {}});
    }
    Character ch;
    ch.name = rec.character;
    const std::size_t n = static_cast<std::size_t>(ds.side) * static_cast<std::size_t>(ds.side);
    for (std::size_t i = 0; i < rec.drawers.size(); ++i) {
      Drawing d;
      d.drawer = rec.drawers[i];
      d.pix.assign(t.values().begin() + static_cast<std::ptrdiff_t>(i * n),
                   t.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
      ch.drawings.push_back(std::move(d));
    }
    ds.alphabets.back().characters.push_back(std::move(ch));
  }
  return ds;
}

// ---------------------------------------------------------------------- toy

namespace {

struct Segment {
  double x0, y0, x1, y1;
};

double point_segment_dist(double px, double py, const Segment& s) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double wx = px - s.x0, wy = py - s.y0;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::min(1.0, std::max(0.0, t));
  const double dx = px - (s.x0 + t * vx), dy = py - (s.y0 + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

std::vector<double> render_strokes(const std::vector<Segment>& segs, int side) {
  const double s = side;
  const double width = 0.055 * s;
  const double soft = 0.6 * width;
  std::vector<double> pix(static_cast<std::size_t>(side) * static_cast<std::size_t>(side), 0.0);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      double d = 1e18;
      for (const auto& seg : segs) d = std::min(d, point_segment_dist(c, r, seg));
      double v;
      if (d <= width) {
        v = 1.0;
      } else if (d <= width + soft) {
        v = 1.0 - (d - width) / soft;
      } else {
        v = 0.0;
      }
      pix[static_cast<std::size_t>(r * side + c)] = v;
    }
  return pix;
}

std::vector<std::pair<double, double>> skeleton_points(int side, Rng& rng) {
  const double s = side;
  const int segments = 4 + rng.below_int(4);  // 4..7
  const double lo = 0.12 * s, hi = 0.88 * s;
  std::vector<std::pair<double, double>> pts;
  double x = rng.uniform(0.2 * s, 0.8 * s);
  double y = rng.uniform(0.2 * s, 0.8 * s);
  pts.emplace_back(x, y);
  for (int k = 0; k < segments; ++k) {
    const double ang = rng.uniform(0, 2 * 3.14159265358979323846);
    const double len = rng.uniform(0.22 * s, 0.42 * s);
    x += len * std::cos(ang);
    y += len * std::sin(ang);
    // reflect back into the drawable box
    if (x < lo) x = 2 * lo - x;
    if (x > hi) x = 2 * hi - x;
    if (y < lo) y = 2 * lo - y;
    if (y > hi) y = 2 * hi - y;
    pts.emplace_back(x, y);
  }
  return pts;
}

std::vector<Segment> to_segments(const std::vector<std::pair<double, double>>& pts) {
  std::vector<Segment> segs;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    segs.push_back({pts[i].first, pts[i].second, pts[i + 1].first, pts[i + 1].second});
  }
  return segs;
}

// soft-ink Jaccard; high values mean the renders are confusable
double ink_overlap(const std::vector<double>& a, const std::vector<double>& b) {
  double lo = 0, hi = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lo += std::min(a[i], b[i]);
    hi += std::max(a[i], b[i]);
  }
  return hi > 0 ? lo / hi : 1.0;
}

}  // namespace

Dataset make_toy_dataset(int classes, int samples_per_class, int side, std::uint64_t seed) {
  if (classes < 2) throw config_error("toy dataset needs at least 2 classes");
  if (samples_per_class < 1) throw config_error("toy dataset needs at least 1 sample per class");
  Dataset ds;
  ds.side = side;
  constexpr int kAlphabetSize = 20;
  const double jitter = 0.05 * side;
  const double center = (side - 1) / 2.0;

  std::vector<std::vector<double>> canonical;  // accepted class renders
  for (int cls = 0; cls < classes; ++cls) {
    const int alpha_idx = cls / kAlphabetSize;
    if (alpha_idx >= ds.alphabet_count()) {
      char name[32];
      std::snprintf(name, sizeof name, "toy-%02d", alpha_idx);
      ds.alphabets.push_back({name, {}});
    }
    // reject skeletons whose render is confusable with an accepted class;
    // after kTries keep the least-overlapping candidate
    constexpr int kTries = 24;
    constexpr double kMaxOverlap = 0.30;
    std::vector<std::pair<double, double>> base;
    double best_overlap = 2.0;
    for (int attempt = 0; attempt < kTries; ++attempt) {
      Rng skel_rng = derive_rng(seed, 0xC1A55,
                                static_cast<std::uint64_t>(cls) * 64 + static_cast<std::uint64_t>(attempt));
      auto cand = skeleton_points(side, skel_rng);
      auto render = render_strokes(to_segments(cand), side);
      double overlap = 0;
      for (const auto& prev : canonical) overlap = std::max(overlap, ink_overlap(render, prev));
      if (overlap < best_overlap) {
        best_overlap = overlap;
        base = std::move(cand);
      }
      if (best_overlap <= kMaxOverlap) break;
    }
    canonical.push_back(render_strokes(to_segments(base), side));

    Character ch;
    char cname[32];
    std::snprintf(cname, sizeof cname, "char-%03d", cls);
    ch.name = cname;
    for (int smp = 0; smp < samples_per_class; ++smp) {
      Rng jit_rng = derive_rng(seed, 0x5A3B1E + static_cast<std::uint64_t>(cls),
                               static_cast<std::uint64_t>(smp));
      // drawer variation: global rotation, translation and vertex jitter
      const double ang = jit_rng.uniform(-0.15, 0.15);  // ~8.5 degrees
      const double ca = std::cos(ang), sa = std::sin(ang);
      const double gx = jit_rng.uniform(-0.04 * side, 0.04 * side);
      const double gy = jit_rng.uniform(-0.04 * side, 0.04 * side);
      std::vector<std::pair<double, double>> pts = base;
      for (auto& [px, py] : pts) {
        const double rx = ca * (px - center) - sa * (py - center) + center;
        const double ry = sa * (px - center) + ca * (py - center) + center;
        px = rx + gx + jit_rng.normal(0, jitter);
        py = ry + gy + jit_rng.normal(0, jitter);
      }
      Drawing d;
      d.drawer = smp;
      d.pix = render_strokes(to_segments(pts), side);
      ch.drawings.push_back(std::move(d));
    }
    ds.alphabets.back().characters.push_back(std::move(ch));
  }
  return ds;
}

// -------------------------------------------------------------------- splits

SplitScheme split_scheme_from_name(const std::string& name) {
  if (name == "3020") return SplitScheme::background_eval;
  if (name == "301010") return SplitScheme::train_val_test;
  if (name == "across") return SplitScheme::across;
  if (name == "custom") return SplitScheme::custom;
  throw config_error("unknown split scheme: " + name +
                     " (expected 3020, 301010, across or custom)");
}

std::string split_scheme_name(SplitScheme scheme) {
  switch (scheme) {
    case SplitScheme::background_eval: return "3020";
    case SplitScheme::train_val_test: return "301010";
    case SplitScheme::across: return "across";
    case SplitScheme::custom: return "custom";
  }
  return "?";
}

namespace {

Split split_alphabets(const Dataset& ds, const std::vector<int>& counts, std::uint64_t seed) {
  int total = 0;
  for (int c : counts) total += c;
  if (ds.alphabet_count() != total) {
    throw config_error("split needs exactly " + std::to_string(total) + " alphabets, dataset has " +
                       std::to_string(ds.alphabet_count()));
  }
  std::vector<int> order(static_cast<std::size_t>(ds.alphabet_count()));
  for (int i = 0; i < ds.alphabet_count(); ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng = derive_rng(seed, 0x59717);
  rng.shuffle(order);
  Split split;
  std::size_t pos = 0;
  for (int count : counts) {
    std::vector<CharRef> part;
    for (int k = 0; k < count; ++k) {
      const int a = order[pos++];
      const int nc = static_cast<int>(ds.alphabets[static_cast<std::size_t>(a)].characters.size());
      for (int c = 0; c < nc; ++c) part.push_back({a, c});
    }
    split.parts.push_back(std::move(part));
  }
  return split;
}

Split split_characters(const Dataset& ds, std::vector<int> counts, std::uint64_t seed) {
  std::vector<CharRef> refs = ds.all_characters();
  int fixed = 0;
  int remainder_at = -1;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 0) {
      if (remainder_at >= 0) throw config_error("split: only one part may take the remainder");
      remainder_at = static_cast<int>(i);
    } else {
      fixed += counts[i];
    }
  }
  if (remainder_at >= 0) {
    if (fixed > static_cast<int>(refs.size())) {
      throw config_error("split asks for " + std::to_string(fixed) + " characters, dataset has " +
                         std::to_string(refs.size()));
    }
    counts[static_cast<std::size_t>(remainder_at)] = static_cast<int>(refs.size()) - fixed;
  } else if (fixed != static_cast<int>(refs.size())) {
    throw config_error("split covers " + std::to_string(fixed) + " characters, dataset has " +
                       std::to_string(refs.size()));
  }
  Rng rng = derive_rng(seed, 0x59718);
  rng.shuffle(refs);
  Split split;
  std::size_t pos = 0;
  for (int count : counts) {
    split.parts.emplace_back(refs.begin() + static_cast<std::ptrdiff_t>(pos),
                             refs.begin() + static_cast<std::ptrdiff_t>(pos + static_cast<std::size_t>(count)));
    pos += static_cast<std::size_t>(count);
  }
  return split;
}

}  // namespace

Split make_split(const Dataset& ds, SplitScheme scheme, std::uint64_t seed,
                 std::vector<int> custom_counts) {
  switch (scheme) {
    case SplitScheme::background_eval: return split_alphabets(ds, {30, 20}, seed);
    case SplitScheme::train_val_test: return split_alphabets(ds, {30, 10, 10}, seed);
    case SplitScheme::across:
      if (ds.character_count() != 1623) {
        throw config_error("across split expects the 1623-character layout, dataset has " +
                           std::to_string(ds.character_count()));
      }
      return split_characters(ds, {1200, 423}, seed);
    case SplitScheme::custom:
      if (custom_counts.empty()) throw config_error("custom split needs part counts");
      return split_characters(ds, std::move(custom_counts), seed);
  }
  throw config_error("unreachable split scheme");
}

// ------------------------------------------------------------- pair sampling

VerificationSampler::VerificationSampler(const Dataset& ds, const std::vector<CharRef>& part)
    : ds_(&ds) {
  std::map<int, std::vector<CharRef>> by_alphabet;
  for (const CharRef& ref : part) by_alphabet[ref.alphabet].push_back(ref);
  for (auto& [a, refs] : by_alphabet) {
    if (static_cast<int>(refs.size()) >= 2) {
      multi_char_groups_.push_back(static_cast<int>(groups_.size()));
    }
    groups_.push_back(std::move(refs));
  }
  if (groups_.empty()) throw config_error("verification sampler: empty split part");
  bool any_pair = false;
  for (const auto& g : groups_) {
    for (const CharRef& ref : g) {
      if (ds.character(ref).drawings.size() >= 2) any_pair = true;
    }
  }
  if (!any_pair) throw config_error("verification sampler: no character has two drawings");
}

PairSample VerificationSampler::sample(Rng& rng) const {
  PairSample out;
  out.label = rng.bernoulli(0.5) ? 1 : 0;
  if (out.label == 1) {
    for (;;) {
      const auto& group = groups_[rng.below(groups_.size())];
      const CharRef ref = group[rng.below(group.size())];
      const auto& drawings = ds_->character(ref).drawings;
      if (drawings.size() < 2) continue;
      const int i = rng.below_int(static_cast<int>(drawings.size()));
      int j = rng.below_int(static_cast<int>(drawings.size()) - 1);
      if (j >= i) ++j;
      out.a = drawings[static_cast<std::size_t>(i)].pix;
      out.b = drawings[static_cast<std::size_t>(j)].pix;
      out.ref_a = out.ref_b = ref;
      return out;
    }
  }
  if (multi_char_groups_.empty()) {
    throw config_error("verification sampler: no alphabet has two characters for negative pairs");
  }
  const auto& group =
      groups_[static_cast<std::size_t>(multi_char_groups_[rng.below(multi_char_groups_.size())])];
  const int i = rng.below_int(static_cast<int>(group.size()));
  int j = rng.below_int(static_cast<int>(group.size()) - 1);
  if (j >= i) ++j;
  const CharRef ra = group[static_cast<std::size_t>(i)];
  const CharRef rb = group[static_cast<std::size_t>(j)];
  const auto& da = ds_->character(ra).drawings;
  const auto& db = ds_->character(rb).drawings;
  out.a = da[rng.below(da.size())].pix;
  out.b = db[rng.below(db.size())].pix;
  out.ref_a = ra;
  out.ref_b = rb;
  return out;
}

PairSample sample_verification_pair(const Dataset& ds, const std::vector<CharRef>& part, Rng& rng) {
  return VerificationSampler(ds, part).sample(rng);
}

}  // namespace arc
