#include "gridvla/policy/codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gridvla/common/error.hpp"

namespace gridvla::policy {

void ActionCodec::validate() const {
  if (n_bins < 2) throw ConfigError("n_bins must be at least 2, got " + std::to_string(n_bins));
  if (lo.size() != kActionDims || hi.size() != kActionDims) {
    throw ConfigError("action bounds need one entry per action dimension");
  }
  for (int d = 0; d < kActionDims; ++d) {
    if (!(lo[d] < hi[d])) throw ConfigError("action bound lo must be below hi in dimension " + std::to_string(d));
  }
}

int ActionCodec::encode_dim(double a, int dim) const {
  if (std::isnan(a)) throw NumericError("cannot encode a NaN action component");
  const double l = lo[dim];
  const double h = hi[dim];
  const double c = std::clamp(a, l, h);
  const int bin = static_cast<int>(std::floor((c - l) / (h - l) * n_bins));
  return std::min(n_bins - 1, bin);
}

double ActionCodec::decode_dim(int bin, int dim) const {
  if (bin < 0 || bin >= n_bins) {
    throw ContractError("action token " + std::to_string(bin) + " outside [0, " + std::to_string(n_bins) + ")");
  }
  return lo[dim] + (bin + 0.5) / n_bins * (hi[dim] - lo[dim]);
}

std::vector<int> ActionCodec::encode(const env::Action& a) const {
  return {encode_dim(a.dx, 0), encode_dim(a.dy, 1), encode_dim(a.gripper, 2)};
}

env::Action ActionCodec::decode(const int* tokens) const {
  return {decode_dim(tokens[0], 0), decode_dim(tokens[1], 1), decode_dim(tokens[2], 2)};
}

}  // namespace gridvla::policy
