#pragma once

#include <vector>

#include "gridvla/env/gridpick.hpp"

namespace gridvla::policy {

inline constexpr int kActionDims = 3;

// Uniform binning of each action dimension between fixed bounds.
struct ActionCodec {
  int n_bins = 16;
  std::vector<double> lo = {-1.0, -1.0, -1.0};
  std::vector<double> hi = {1.0, 1.0, 1.0};

  int encode_dim(double a, int dim) const;
  double decode_dim(int bin, int dim) const;

  // One token per dimension, in (dx, dy, gripper) order.
  std::vector<int> encode(const env::Action& a) const;
  env::Action decode(const int* tokens) const;
  env::Action decode(const std::vector<int>& tokens) const { return decode(tokens.data()); }

  void validate() const;
};

}  // namespace gridvla::policy
