#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gridvla/nn/graph.hpp"

namespace gridvla::nn {

// Matrix products. Matrices are rank-2; vectors are rank-1.
Var matmul(Var a, Var b);
// x[m,in] * w[out,in]^T + b[out]
Var linear(Var x, Var w, std::optional<Var> bias = std::nullopt);

struct AdapterVars {
  Var down;
  Var up;
  double factor = 1.0;  // scale / rank
};

// Linear layer with an optional low-rank additive path:
// x W^T + b + factor * (x down^T) up^T.
Var forward_linear(Var x, Var w, std::optional<Var> bias, const std::optional<AdapterVars>& adapter);

// Elementwise arithmetic (identical shapes).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var minimum(Var a, Var b);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var neg(Var x);

Var square(Var x);
Var exp(Var x);
Var tanh(Var x);
Var gelu(Var x);
Var sigmoid(Var x);
Var log_sigmoid(Var x);
// Gradient passes only where lo < x < hi.
Var clamp(Var x, double lo, double hi);

// Reductions.
Var sum(Var x);
Var mean(Var x);
Var row_sum(Var x);                     // [m,n] -> [m]
Var segment_sum(Var x, std::size_t k);  // [m*k] -> [m]

// Structure.
Var reshape(Var x, Shape shape);
Var gather_rows(Var x, const std::vector<std::size_t>& rows);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
// out[i] = x[i, cols[i]]
Var pick(Var x, const std::vector<std::size_t>& cols);

// Row-wise normalizations.
Var log_softmax_rows(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// Multi-head causal scaled dot-product attention over `batch` sequences of
// `seq_len` rows each. qkv is [batch*seq_len, 3*d]; key_valid (optional,
// batch*seq_len entries) masks padding keys. Returns [batch*seq_len, d].
Var causal_attention(Var qkv, std::size_t batch, std::size_t seq_len, std::size_t heads,
                     const std::vector<std::uint8_t>& key_valid);

// Mean negative log-likelihood of integer targets under row-wise softmax.
Var cross_entropy(Var logits, const std::vector<std::size_t>& targets);

}  // namespace gridvla::nn
