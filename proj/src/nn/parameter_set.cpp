#include "gridvla/nn/parameter_set.hpp"

#include <cmath>

#include "gridvla/common/error.hpp"

namespace gridvla::nn {

LowRankAdapter LowRankAdapter::create(std::size_t out_dim, std::size_t in_dim, std::size_t rank, double scale,
                                      Rng& rng) {
  if (rank == 0) throw ConfigError("adapter rank must be positive");
  LowRankAdapter a;
  a.rank = rank;
  a.scale = scale;
  a.down = Tensor(Shape{rank, in_dim});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (auto& v : a.down.data()) v = rng.uniform(-bound, bound);
  a.up = Tensor(Shape{out_dim, rank}, 0.0);
  return a;
}

ParameterEntry& ParameterSet::add(const std::string& name, Tensor value, bool trainable) {
  auto [it, inserted] = entries_.try_emplace(name);
  if (!inserted) throw ContractError("duplicate parameter name '" + name + "'");
  it->second.value = std::move(value);
  it->second.trainable = trainable;
  return it->second;
}

bool ParameterSet::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

ParameterEntry& ParameterSet::entry(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const ParameterEntry& ParameterSet::entry(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

std::vector<ParameterSlot> ParameterSet::slots() {
  std::vector<ParameterSlot> out;
  for (auto& [name, e] : entries_) {
    out.push_back({name, &e.value, e.trainable});
    if (e.adapter) {
      out.push_back({adapter_down_key(name), &e.adapter->down, true});
      out.push_back({adapter_up_key(name), &e.adapter->up, true});
    }
  }
  return out;
}

std::size_t ParameterSet::parameter_count() const { return parameter_count(""); }

std::size_t ParameterSet::parameter_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) {
    if (!name.starts_with(prefix)) continue;
    n += e.value.size();
    if (e.adapter) n += e.adapter->down.size() + e.adapter->up.size();
  }
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& slot : slots()) {
    if (slot.trainable) slot.tensor->zero_grad();
  }
}

void ParameterSet::drop_grads() {
  for (auto& slot : slots()) slot.tensor->drop_grad();
}

void ParameterSet::set_trainable(const std::function<bool(const std::string&)>& predicate, bool trainable) {
  for (auto& [name, e] : entries_) {
    if (predicate(name)) e.trainable = trainable;
  }
}

}  // namespace gridvla::nn
