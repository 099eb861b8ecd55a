#include "gridvla/env/assets.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gridvla/common/error.hpp"
#include "gridvla/common/rng.hpp"

namespace gridvla::env {

int Vocabulary::add(std::string word) {
  if (auto it = ids_.find(word); it != ids_.end()) return it->second;
  const int id = static_cast<int>(words_.size());
  ids_.emplace(word, id);
  words_.push_back(std::move(word));
  return id;
}

int Vocabulary::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  if (it == ids_.end()) throw ContractError("word not in vocabulary: '" + std::string(word) + "'");
  return it->second;
}

bool Vocabulary::contains(std::string_view word) const { return ids_.count(std::string(word)) != 0; }

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> out;
  for (const auto& w : tokenize_words(text)) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& tokens) const {
  std::string out;
  for (int t : tokens) {
    if (t == kPadToken) continue;
    if (!out.empty()) out += ' ';
    out += word(t);
  }
  return out;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else if (ch == '.' || ch == ',' || ch == '?') {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur += ch;
    }
  }
  flush();
  return out;
}

double TableAppearance::at(int c, double x, double y) const {
  const double wave = 0.5 + 0.5 * std::sin(freq_x[c] * x + freq_y[c] * y + phase[c]);
  return base[c] + amplitude[c] * wave;
}

double Texture::at(int c, double u, double v) const {
  const double a = std::sin(freq_x[c] * u + phase[c]);
  const double b = std::cos(freq_y[c] * v - 0.5 * phase[c]);
  return 0.5 + 0.25 * a + 0.25 * b;
}

namespace {

const char* const kTrainObjectNames[16] = {"apple", "banana", "carrot", "cup",    "spoon",    "sponge",
                                           "lemon", "peach",  "plum",   "pear",   "can",      "block",
                                           "eggplant", "bottle", "ball", "knife"};
const char* const kHeldoutObjectNames[9] = {"mango", "onion", "mug", "fork", "kiwi", "brick", "jar", "bell", "cube"};
const char* const kHeldoutReceptacleNames[16] = {"bowl", "tray",  "box", "basket", "pan",   "dish",  "board", "lid",
                                                 "mat",  "crate", "pot", "bin",    "rack",  "stand", "shelf", "bucket"};

const char* const kDefaultTemplate = "put $O on $R";
const char* const kHeldoutTemplates[16] = {
    "Place the $O on the $R",
    "set $O on $R",
    "move the $O to the $R",
    "Take the $O and put it on the $R",
    "pick up $O and set it down on $R",
    "please put the $O on the $R",
    "Put $O onto $R.",
    "place the $O onto the $R surface",
    "Make sure $O is on $R.",
    "on the $R, put the $O",
    "put the $O where the $R is",
    "Move the $O from the table to the $R",
    "Move $O so it's on $R.",
    "Can you put $O on $R?",
    "$O on the $R, please.",
    "the $O should be placed on the $R.",
};

void add_template_words(Vocabulary& v, const std::string& tpl) {
  for (const auto& w : tokenize_words(tpl)) {
    if (w != "$O" && w != "$R") v.add(w);
  }
}

TableAppearance make_table(int id, Rng& rng) {
  TableAppearance t{};
  t.asset_id = id;
  for (int c = 0; c < 2; ++c) {
    t.base[c] = rng.uniform(0.05, 0.3);
    t.amplitude[c] = rng.uniform(0.05, 0.2);
    t.freq_x[c] = rng.uniform(0.3, 2.0);
    t.freq_y[c] = rng.uniform(0.3, 2.0);
    t.phase[c] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  return t;
}

AssetCatalog build_catalog() {
  AssetCatalog cat;
  Rng rng(0x5eedca7a109ULL);
  cat.vocab.add("<pad>");
  cat.vocab.add("<act>");
  cat.default_template = kDefaultTemplate;
  add_template_words(cat.vocab, cat.default_template);
  for (const char* t : kHeldoutTemplates) {
    cat.heldout_templates.emplace_back(t);
    add_template_words(cat.vocab, t);
  }

  int asset_id = 0;
  for (const char* name : kTrainObjectNames) {
    ObjectAsset a{asset_id++, {cat.vocab.add(name)}, {rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0)}};
    cat.train_objects.push_back(a);
  }
  cat.train_receptacles.push_back({asset_id++, {cat.vocab.add("yellow"), cat.vocab.add("plate")}, 1.0});

  cat.heldout_name_begin = cat.vocab.size();
  for (const char* name : kHeldoutObjectNames) {
    ObjectAsset a{asset_id++, {cat.vocab.add(name)}, {rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0)}};
    cat.heldout_objects.push_back(a);
  }
  for (const char* name : kHeldoutReceptacleNames) {
    cat.heldout_receptacles.push_back({asset_id++, {cat.vocab.add(name)}, rng.uniform(0.3, 0.9)});
  }

  for (int i = 0; i < 16; ++i) cat.train_tables.push_back(make_table(asset_id++, rng));
  for (int i = 0; i < 5; ++i) cat.heldout_tables.push_back(make_table(asset_id++, rng));

  for (int i = 0; i < 16; ++i) {
    Texture tex{};
    tex.texture_id = i;
    for (int c = 0; c < 6; ++c) {
      tex.freq_x[c] = rng.uniform(0.8, 3.0);
      tex.freq_y[c] = rng.uniform(0.8, 3.0);
      tex.phase[c] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    cat.textures.push_back(tex);
  }
  return cat;
}

}  // namespace

const AssetCatalog& catalog() {
  static const AssetCatalog cat = build_catalog();
  return cat;
}

}  // namespace gridvla::env
