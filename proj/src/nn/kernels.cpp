#include "gridvla/nn/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <limits>

namespace gridvla::nn::kernels {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void linear(const double* x, std::size_t m, std::size_t in, const double* w, std::size_t out, const double* b,
            double* y) {
  Eigen::Map<const RowMat> X(x, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(in));
  Eigen::Map<const RowMat> W(w, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  Eigen::Map<RowMat> Y(y, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(out));
  Y.noalias() = X * W.transpose();
  if (b != nullptr) {
    Eigen::Map<const Eigen::RowVectorXd> B(b, static_cast<Eigen::Index>(out));
    Y.rowwise() += B;
  }
}

void layer_norm(const double* x, std::size_t m, std::size_t n, const double* gamma, const double* beta, double eps,
                double* y, double* mean, double* rstd) {
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < m; ++r) {
    const double* xr = x + r * n;
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += xr[c];
    mu *= inv_n;
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var *= inv_n;
    const double rs = 1.0 / std::sqrt(var + eps);
    double* yr = y + r * n;
    for (std::size_t c = 0; c < n; ++c) yr[c] = (xr[c] - mu) * rs * gamma[c] + beta[c];
    if (mean) mean[r] = mu;
    if (rstd) rstd[r] = rs;
  }
}

void attend_row(const double* q, const double* k, const double* v, std::size_t stride, std::size_t n_keys,
                const std::uint8_t* key_valid, std::size_t dh, double* p, double* out) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  double max_score = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n_keys; ++j) {
    if (key_valid && !key_valid[j]) {
      p[j] = 0.0;
      continue;
    }
    const double* kj = k + j * stride;
    double s = 0.0;
    for (std::size_t c = 0; c < dh; ++c) s += q[c] * kj[c];
    s *= scale;
    p[j] = s;
    max_score = std::max(max_score, s);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < n_keys; ++j) {
    if (key_valid && !key_valid[j]) continue;
    p[j] = std::exp(p[j] - max_score);
    total += p[j];
  }
  const double inv = 1.0 / total;
  std::fill(out, out + dh, 0.0);
  for (std::size_t j = 0; j < n_keys; ++j) {
    if (key_valid && !key_valid[j]) continue;
    p[j] *= inv;
    const double* vj = v + j * stride;
    for (std::size_t c = 0; c < dh; ++c) out[c] += p[j] * vj[c];
  }
}

void log_softmax_row(const double* x, std::size_t n, double* y) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::exp(x[i] - mx);
  const double lse = mx + std::log(total);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - lse;
}

}  // namespace gridvla::nn::kernels
