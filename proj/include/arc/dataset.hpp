#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arc/rng.hpp"
#include "arc/tensor.hpp"

namespace arc {

struct Drawing {
  std::vector<double> pix;  // side*side, ink = 1 on background = 0
  int drawer = 0;
};

struct Character {
  std::string name;
  std::vector<Drawing> drawings;
};

struct Alphabet {
  std::string name;
  std::vector<Character> characters;
};

struct CharRef {
  int alphabet = 0;
  int character = 0;
  bool operator==(const CharRef&) const = default;
};

struct Dataset {
  int side = 0;
  std::vector<Alphabet> alphabets;

  int alphabet_count() const { return static_cast<int>(alphabets.size()); }
  int character_count() const;
  const Character& character(CharRef ref) const {
    return alphabets[static_cast<std::size_t>(ref.alphabet)]
        .characters[static_cast<std::size_t>(ref.character)];
  }
  // stable id usable as a class label across the whole dataset
  int char_uid(CharRef ref) const;
  Tensor image(CharRef ref, int drawing) const;
  std::vector<CharRef> all_characters() const;
};

// root/<alphabet>/<character>/<file>.png. Images are converted to ink=1 on
// background=0 (inverting when the source is dark-on-light) and resized to
// `side` by area averaging.
Dataset load_image_tree(const std::string& root, int side);

// Packed layout: <dir>/manifest.tsv (alphabet<TAB>character<TAB>drawer per
// drawing) plus <dir>/data.arcp holding one rank-3 tensor record per
// character in manifest order.
void save_packed(const std::string& dir, const Dataset& ds);
Dataset load_packed(const std::string& dir);

// Procedural glyph classes: 4-7 segment stroke skeletons with per-sample
// jitter, grouped into alphabets of at most 20 characters. Deterministic in
// (classes, samples_per_class, side, seed).
Dataset make_toy_dataset(int classes, int samples_per_class, int side, std::uint64_t seed);

enum class SplitScheme { background_eval, train_val_test, across, custom };
SplitScheme split_scheme_from_name(const std::string& name);
std::string split_scheme_name(SplitScheme scheme);

struct Split {
  std::vector<std::vector<CharRef>> parts;

  const std::vector<CharRef>& train() const { return parts.front(); }
  const std::vector<CharRef>& val() const { return parts.size() > 1 ? parts[1] : parts[0]; }
  const std::vector<CharRef>& eval() const { return parts.back(); }
};

// Disjoint, exhaustive, deterministic in the seed. background_eval and
// train_val_test partition whole alphabets (30/20 and 30/10/10 and need
// exactly 50); across partitions characters 1200/423 (needs exactly 1623);
// custom partitions characters into the given counts (-1 = remainder).
Split make_split(const Dataset& ds, SplitScheme scheme, std::uint64_t seed,
                 std::vector<int> custom_counts = {});

struct PairSample {
  std::vector<double> a, b;
  int label = 0;  // 1 = same character
  CharRef ref_a, ref_b;
};

// Verification pairs within one alphabet, class-balanced 50/50.
class VerificationSampler {
 public:
  VerificationSampler(const Dataset& ds, const std::vector<CharRef>& part);
  PairSample sample(Rng& rng) const;

 private:
  const Dataset* ds_;
  std::vector<std::vector<CharRef>> groups_;  // per-alphabet characters in the part
  std::vector<int> multi_char_groups_;        // groups with >= 2 characters
};

PairSample sample_verification_pair(const Dataset& ds, const std::vector<CharRef>& part, Rng& rng);

}  // namespace arc
