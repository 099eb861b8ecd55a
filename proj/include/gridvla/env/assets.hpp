#pragma once

#include <array>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gridvla::env {

inline constexpr int kPadToken = 0;
inline constexpr int kActionStartToken = 1;

// Word-level vocabulary for instructions. Punctuation and capitalized forms
// are distinct tokens.
class Vocabulary {
 public:
  int add(std::string word);
  int id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(words_.size()); }
  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& tokens) const;
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
};

// Splits on whitespace and detaches sentence punctuation (. , ?).
std::vector<std::string> tokenize_words(std::string_view text);

struct ObjectAsset {
  int asset_id;
  std::vector<int> name_tokens;
  std::array<double, 2> feature;  // object channels
};

struct ReceptacleAsset {
  int asset_id;
  std::vector<int> name_tokens;
  double feature;  // receptacle channel intensity
};

// Table appearance: per-channel base level plus a periodic stripe pattern.
struct TableAppearance {
  int asset_id;
  std::array<double, 2> base;
  std::array<double, 2> amplitude;
  std::array<double, 2> freq_x;
  std::array<double, 2> freq_y;
  std::array<double, 2> phase;
  double at(int channel, double x, double y) const;
};

// Procedural distractor texture, evaluated at continuous coordinates.
struct Texture {
  int texture_id;
  std::array<double, 6> freq_x;
  std::array<double, 6> freq_y;
  std::array<double, 6> phase;
  double at(int channel, double u, double v) const;  // in [0, 1]
};

struct AssetCatalog {
  Vocabulary vocab;
  std::vector<ObjectAsset> train_objects;         // 16
  std::vector<ObjectAsset> heldout_objects;       // 9
  std::vector<ReceptacleAsset> train_receptacles; // the yellow plate
  std::vector<ReceptacleAsset> heldout_receptacles;  // 16
  std::vector<TableAppearance> train_tables;      // 16
  std::vector<TableAppearance> heldout_tables;    // 5
  std::vector<Texture> textures;                  // 16
  std::string default_template;                   // "put $O on $R"
  std::vector<std::string> heldout_templates;     // 16
  // First vocabulary id reserved for held-out asset names.
  int heldout_name_begin = 0;
};

// Process-wide catalog generated from a fixed seed.
const AssetCatalog& catalog();

}  // namespace gridvla::env
