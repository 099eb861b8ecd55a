#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gridvla/common/rng.hpp"
#include "gridvla/nn/tensor.hpp"

namespace gridvla::nn {

// Low-rank additive update for a linear weight W (out_dim x in_dim):
// W_eff = W + (scale / rank) * up * down.
struct LowRankAdapter {
  std::size_t rank = 0;
  double scale = 1.0;
  Tensor down;  // rank x in_dim
  Tensor up;    // out_dim x rank

  // up starts at zero so the adapted layer initially equals the base layer.
  static LowRankAdapter create(std::size_t out_dim, std::size_t in_dim, std::size_t rank, double scale,
                               Rng& rng);
  double factor() const { return scale / static_cast<double>(rank); }
};

struct ParameterEntry {
  Tensor value;
  bool trainable = true;
  std::optional<LowRankAdapter> adapter;
};

// A tensor the optimizer may update: either an entry's value or one of its
// adapter factors. `key` is stable across runs.
struct ParameterSlot {
  std::string key;
  Tensor* tensor;
  bool trainable;
};

// Named parameters of a model. Iteration order is lexicographic by name.
class ParameterSet {
 public:
  ParameterEntry& add(const std::string& name, Tensor value, bool trainable = true);
  bool contains(std::string_view name) const;
  ParameterEntry& entry(std::string_view name);
  const ParameterEntry& entry(std::string_view name) const;
  Tensor& value(std::string_view name) { return entry(name).value; }
  const Tensor& value(std::string_view name) const { return entry(name).value; }

  const std::map<std::string, ParameterEntry, std::less<>>& entries() const { return entries_; }
  std::map<std::string, ParameterEntry, std::less<>>& entries() { return entries_; }

  std::vector<ParameterSlot> slots();
  std::size_t size() const { return entries_.size(); }
  // Total scalar count including adapter factors.
  std::size_t parameter_count() const;
  std::size_t parameter_count(std::string_view prefix) const;

  void zero_grad();
  void drop_grads();
  void set_trainable(const std::function<bool(const std::string&)>& predicate, bool trainable);

 private:
  std::map<std::string, ParameterEntry, std::less<>> entries_;
};

inline std::string adapter_down_key(std::string_view name) { return std::string(name) + "#lora_down"; }
inline std::string adapter_up_key(std::string_view name) { return std::string(name) + "#lora_up"; }

}  // namespace gridvla::nn
