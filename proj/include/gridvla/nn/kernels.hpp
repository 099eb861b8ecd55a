#pragma once

// Raw numeric kernels shared by the differentiable ops and the tape-free
// inference path, so both produce the same arithmetic.

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace gridvla::nn::kernels {

// y[m,out] = x[m,in] * w[out,in]^T (+ b[out]).
void linear(const double* x, std::size_t m, std::size_t in, const double* w, std::size_t out, const double* b,
            double* y);

// y = (x - mean) * rstd * gamma + beta per row; writes mean/rstd when non-null.
void layer_norm(const double* x, std::size_t m, std::size_t n, const double* gamma, const double* beta, double eps,
                double* y, double* mean, double* rstd);

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

inline double gelu(double x) {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad(double x) {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// One attention query against keys 0..n_keys-1. k/v rows are `stride` apart.
// Writes normalized probabilities into p (zero for masked keys) and the
// weighted value sum into out[dh].
void attend_row(const double* q, const double* k, const double* v, std::size_t stride, std::size_t n_keys,
                const std::uint8_t* key_valid, std::size_t dh, double* p, double* out);

// Numerically stable log-softmax of one row.
void log_softmax_row(const double* x, std::size_t n, double* y);

}  // namespace gridvla::nn::kernels
