#include "gridvla/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "gridvla/common/error.hpp"
#include "gridvla/nn/kernels.hpp"

namespace gridvla::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

Eigen::Index ix(std::size_t n) { return static_cast<Eigen::Index>(n); }

void require_rank(Var v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(v.shape()));
  }
}

void require_same(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

Graph& same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
  return a.graph();
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary(Var x, F f, D df) {
  Graph& g = x.graph();
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id();
  return g.emit(std::move(out), {x}, [xid, df](Graph& gr, std::size_t self) {
    const auto& xv = gr.value(xid);
    const auto& yv = gr.value(self);
    auto dy = gr.grad(self);
    auto dx = gr.grad(xid);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out(Shape{m, n});
  MapM(out.data().data(), ix(m), ix(n)).noalias() =
      MapC(a.value().data().data(), ix(m), ix(k)) * MapC(b.value().data().data(), ix(k), ix(n));
  const std::size_t aid = a.id(), bid = b.id();
  return g.emit(std::move(out), {a, b}, [aid, bid, m, k, n](Graph& gr, std::size_t self) {
    MapC dy(gr.grad(self).data(), ix(m), ix(n));
    if (gr.requires_grad(aid)) {
      MapM(gr.grad(aid).data(), ix(m), ix(k)).noalias() +=
          dy * MapC(gr.value(bid).data().data(), ix(k), ix(n)).transpose();
    }
    if (gr.requires_grad(bid)) {
      MapM(gr.grad(bid).data(), ix(k), ix(n)).noalias() +=
          MapC(gr.value(aid).data().data(), ix(m), ix(k)).transpose() * dy;
    }
  });
}

Var linear(Var x, Var w, std::optional<Var> bias) {
  Graph& g = same_graph(x, w);
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t m = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[0];
  if (w.shape()[1] != in) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(w.shape()));
  }
  if (bias && bias->shape() != Shape{out_dim}) {
    throw DimensionError("linear: bias " + shape_string(bias->shape()) + " incompatible with weight " +
                         shape_string(w.shape()));
  }
  Tensor out(Shape{m, out_dim});
  kernels::linear(x.value().data().data(), m, in, w.value().data().data(), out_dim,
                  bias ? bias->value().data().data() : nullptr, out.data().data());
  const std::size_t xid = x.id(), wid = w.id();
  const std::optional<std::size_t> bid = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  auto backward = [xid, wid, bid, m, in, out_dim](Graph& gr, std::size_t self) {
    MapC dy(gr.grad(self).data(), ix(m), ix(out_dim));
    if (gr.requires_grad(xid)) {
      MapM(gr.grad(xid).data(), ix(m), ix(in)).noalias() +=
          dy * MapC(gr.value(wid).data().data(), ix(out_dim), ix(in));
    }
    if (gr.requires_grad(wid)) {
      MapM(gr.grad(wid).data(), ix(out_dim), ix(in)).noalias() +=
          dy.transpose() * MapC(gr.value(xid).data().data(), ix(m), ix(in));
    }
    if (bid && gr.requires_grad(*bid)) {
      auto db = gr.grad(*bid);
      Eigen::Map<Eigen::RowVectorXd>(db.data(), ix(out_dim)) += dy.colwise().sum();
    }
  };
  if (bias) return g.emit(std::move(out), {x, w, *bias}, backward);
  return g.emit(std::move(out), {x, w}, backward);
}

Var forward_linear(Var x, Var w, std::optional<Var> bias, const std::optional<AdapterVars>& adapter) {
  if (adapter) {
    require_rank(adapter->down, 2, "forward_linear");
    require_rank(adapter->up, 2, "forward_linear");
    const auto& ds = adapter->down.shape();
    const auto& us = adapter->up.shape();
    if (ds[1] != w.shape().at(1) || us[0] != w.shape().at(0) || us[1] != ds[0]) {
      throw DimensionError("forward_linear: adapter down " + shape_string(ds) + " / up " + shape_string(us) +
                           " incompatible with weight " + shape_string(w.shape()));
    }
  }
  Var base = linear(x, w, bias);
  if (!adapter) return base;
  Var low = linear(linear(x, adapter->down), adapter->up);
  return add(base, scale(low, adapter->factor));
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  const std::size_t aid = a.id(), bid = b.id();
  return g.emit(std::move(out), {a, b}, [aid, bid](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    for (auto id : {aid, bid}) {
      if (!gr.requires_grad(id)) continue;
      auto d = gr.grad(id);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  const std::size_t aid = a.id(), bid = b.id();
  return g.emit(std::move(out), {a, b}, [aid, bid](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    if (gr.requires_grad(aid)) {
      auto d = gr.grad(aid);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
    if (gr.requires_grad(bid)) {
      auto d = gr.grad(bid);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= dy[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const std::size_t aid = a.id(), bid = b.id();
  return g.emit(std::move(out), {a, b}, [aid, bid](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    const auto& av = gr.value(aid);
    const auto& bv = gr.value(bid);
    if (gr.requires_grad(aid)) {
      auto d = gr.grad(aid);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * bv[i];
    }
    if (gr.requires_grad(bid)) {
      auto d = gr.grad(bid);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * av[i];
    }
  });
}

Var minimum(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same(a, b, "minimum");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.value()[i], b.value()[i]);
  const std::size_t aid = a.id(), bid = b.id();
  // Ties route the gradient to the first operand.
  return g.emit(std::move(out), {a, b}, [aid, bid](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    const auto& av = gr.value(aid);
    const auto& bv = gr.value(bid);
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const std::size_t target = av[i] <= bv[i] ? aid : bid;
      if (gr.requires_grad(target)) gr.grad(target)[i] += dy[i];
    }
  });
}

Var scale(Var x, double s) {
  return unary(x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Var add_scalar(Var x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var neg(Var x) { return scale(x, -1.0); }

Var square(Var x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var gelu(Var x) {
  return unary(x, kernels::gelu, [](double v, double) { return kernels::gelu_grad(v); });
}

Var sigmoid(Var x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Var x) {
  // log sigma(v) = -softplus(-v), evaluated stably for both signs.
  return unary(
      x, [](double v) { return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v)); },
      [](double v, double) { return v >= 0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v)); });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Var sum(Var x) {
  Graph& g = x.graph();
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t xid = x.id();
  return g.emit(Tensor::scalar(s), {x}, [xid](Graph& gr, std::size_t self) {
    const double dy = gr.grad(self)[0];
    for (auto& d : gr.grad(xid)) d += dy;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var row_sum(Var x) {
  require_rank(x, 2, "row_sum");
  Graph& g = x.graph();
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  Tensor out(Shape{m});
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += x.value()[r * n + c];
    out[r] = s;
  }
  const std::size_t xid = x.id();
  return g.emit(std::move(out), {x}, [xid, m, n](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    auto dx = gr.grad(xid);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += dy[r];
    }
  });
}

Var segment_sum(Var x, std::size_t k) {
  if (k == 0 || x.size() % k != 0) {
    throw DimensionError("segment_sum: " + std::to_string(x.size()) + " values not divisible into segments of " +
                         std::to_string(k));
  }
  const std::size_t m = x.size() / k;
  return row_sum(reshape(x, Shape{m, k}));
}

Var reshape(Var x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  Graph& g = x.graph();
  Tensor out(std::move(shape), std::vector<double>(x.value().data().begin(), x.value().data().end()));
  const std::size_t xid = x.id();
  return g.emit(std::move(out), {x}, [xid](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    auto dx = gr.grad(xid);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
  });
}

Var gather_rows(Var x, const std::vector<std::size_t>& rows) {
  Graph& g = x.graph();
  const bool vec = x.value().rank() == 1;
  if (!vec) require_rank(x, 2, "gather_rows");
  const std::size_t m = vec ? x.size() : x.shape()[0];
  const std::size_t n = vec ? 1 : x.shape()[1];
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  Tensor out(vec ? Shape{rows.size()} : Shape{rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " out of range for " +
                           shape_string(x.shape()));
    }
    std::copy_n(x.value().data().data() + rows[r] * n, n, out.data().data() + r * n);
  }
  const std::size_t xid = x.id();
  return g.emit(std::move(out), {x}, [xid, rows, n](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    auto dx = gr.grad(xid);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < n; ++c) dx[rows[r] * n + c] += dy[r * n + c];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Graph& g = parts.front().graph();
  const bool vec = parts.front().value().rank() == 1;
  const std::size_t n = vec ? 1 : parts.front().shape().at(1);
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (&p.graph() != &g) throw ContractError("operands belong to different graphs");
    if ((p.value().rank() == 1) != vec || (!vec && p.shape().at(1) != n)) {
      throw DimensionError("concat_rows: incompatible " + shape_string(parts.front().shape()) + " and " +
                           shape_string(p.shape()));
    }
    m += p.size() / n;
  }
  Tensor out(vec ? Shape{m} : Shape{m, n});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<long>(off));
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.size();
  }
  return g.emit(std::move(out), parts, [ids, offsets](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!gr.requires_grad(ids[k])) continue;
      auto dx = gr.grad(ids[k]);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[offsets[k] + i];
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Graph& g = parts.front().graph();
  const std::size_t m = parts.front().shape().at(0);
  std::size_t n = 0;
  std::vector<std::size_t> ids, widths, offsets;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.shape()[0] != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    ids.push_back(p.id());
    widths.push_back(p.shape()[1]);
    offsets.push_back(n);
    n += p.shape()[1];
  }
  Tensor out(Shape{m, n});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(v.data().data() + r * widths[k], widths[k], out.data().data() + r * n + offsets[k]);
    }
  }
  return g.emit(std::move(out), parts, [ids, widths, offsets, m, n](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!gr.requires_grad(ids[k])) continue;
      auto dx = gr.grad(ids[k]);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < widths[k]; ++c) dx[r * widths[k] + c] += dy[r * n + offsets[k] + c];
      }
    }
  });
}

Var pick(Var x, const std::vector<std::size_t>& cols) {
  require_rank(x, 2, "pick");
  Graph& g = x.graph();
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (cols.size() != m) {
    throw DimensionError("pick: " + std::to_string(cols.size()) + " indices for " + shape_string(x.shape()));
  }
  Tensor out(Shape{m});
  for (std::size_t r = 0; r < m; ++r) {
    if (cols[r] >= n) throw DimensionError("pick: column " + std::to_string(cols[r]) + " out of range");
    out[r] = x.value()[r * n + cols[r]];
  }
  const std::size_t xid = x.id();
  return g.emit(std::move(out), {x}, [xid, cols, n](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    auto dx = gr.grad(xid);
    for (std::size_t r = 0; r < cols.size(); ++r) dx[r * n + cols[r]] += dy[r];
  });
}

Var log_softmax_rows(Var x) {
  require_rank(x, 2, "log_softmax_rows");
  Graph& g = x.graph();
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  Tensor out(x.shape());
  for (std::size_t r = 0; r < m; ++r) {
    kernels::log_softmax_row(x.value().data().data() + r * n, n, out.data().data() + r * n);
  }
  const std::size_t xid = x.id();
  return g.emit(std::move(out), {x}, [xid, m, n](Graph& gr, std::size_t self) {
    auto dy = gr.grad(self);
    const auto& y = gr.value(self);
    auto dx = gr.grad(xid);
    for (std::size_t r = 0; r < m; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < n; ++c) total += dy[r * n + c];
      for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += dy[r * n + c] - std::exp(y[r * n + c]) * total;
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  require_rank(x, 2, "layer_norm");
  Graph& g = x.graph();
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw DimensionError("layer_norm: gain " + shape_string(gamma.shape()) + " incompatible with input " +
                         shape_string(x.shape()));
  }
  Tensor out(x.shape());
  std::vector<double> mean(m), rstd(m);
  kernels::layer_norm(x.value().data().data(), m, n, gamma.value().data().data(), beta.value().data().data(), eps,
                      out.data().data(), mean.data(), rstd.data());
  const std::size_t xid = x.id(), gid = gamma.id(), bid = beta.id();
  return g.emit(std::move(out), {x, gamma, beta},
                [xid, gid, bid, m, n, mean = std::move(mean), rstd = std::move(rstd)](Graph& gr, std::size_t self) {
                  auto dy = gr.grad(self);
                  const auto& xv = gr.value(xid);
                  const auto& gv = gr.value(gid);
                  const bool need_x = gr.requires_grad(xid);
                  const bool need_g = gr.requires_grad(gid);
                  const bool need_b = gr.requires_grad(bid);
                  std::span<double> dx, dg, db;
                  if (need_x) dx = gr.grad(xid);
                  if (need_g) dg = gr.grad(gid);
                  if (need_b) db = gr.grad(bid);
                  const double inv_n = 1.0 / static_cast<double>(n);
                  for (std::size_t r = 0; r < m; ++r) {
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                      const std::size_t i = r * n + c;
                      const double xhat = (xv[i] - mean[r]) * rstd[r];
                      const double dxhat = dy[i] * gv[c];
                      sum_dxhat += dxhat;
                      sum_dxhat_xhat += dxhat * xhat;
                      if (need_g) dg[c] += dy[i] * xhat;
                      if (need_b) db[c] += dy[i];
                    }
                    if (!need_x) continue;
                    for (std::size_t c = 0; c < n; ++c) {
                      const std::size_t i = r * n + c;
                      const double xhat = (xv[i] - mean[r]) * rstd[r];
                      const double dxhat = dy[i] * gv[c];
                      dx[i] += rstd[r] * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
                    }
                  }
                });
}

Var causal_attention(Var qkv, std::size_t batch, std::size_t seq_len, std::size_t heads,
                     const std::vector<std::uint8_t>& key_valid) {
  require_rank(qkv, 2, "causal_attention");
  Graph& g = qkv.graph();
  const std::size_t rows = batch * seq_len;
  const std::size_t width = qkv.shape()[1];
  if (qkv.shape()[0] != rows || width % 3 != 0 || (width / 3) % heads != 0) {
    throw DimensionError("causal_attention: qkv " + shape_string(qkv.shape()) + " incompatible with batch " +
                         std::to_string(batch) + " x seq " + std::to_string(seq_len) + " and " +
                         std::to_string(heads) + " heads");
  }
  if (!key_valid.empty() && key_valid.size() != rows) {
    throw DimensionError("causal_attention: key mask has " + std::to_string(key_valid.size()) + " entries, expected " +
                         std::to_string(rows));
  }
  const std::size_t d = width / 3, dh = d / heads;
  Tensor out(Shape{rows, d});
  Buffer probs(batch * heads * seq_len * seq_len, 0.0);
  const double* base = qkv.value().data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const std::uint8_t* mask = key_valid.empty() ? nullptr : key_valid.data() + b * seq_len;
    for (std::size_t h = 0; h < heads; ++h) {
      const double* k = base + b * seq_len * width + d + h * dh;
      const double* v = base + b * seq_len * width + 2 * d + h * dh;
      for (std::size_t i = 0; i < seq_len; ++i) {
        const double* q = base + (b * seq_len + i) * width + h * dh;
        double* p = probs.data() + ((b * heads + h) * seq_len + i) * seq_len;
        kernels::attend_row(q, k, v, width, i + 1, mask, dh, p, out.data().data() + (b * seq_len + i) * d + h * dh);
      }
    }
  }
  const std::size_t qid = qkv.id();
  return g.emit(std::move(out), {qkv},
                [qid, batch, seq_len, heads, d, dh, width, probs = std::move(probs)](Graph& gr, std::size_t self) {
                  auto dy = gr.grad(self);
                  auto dqkv = gr.grad(qid);
                  const double* x = gr.value(qid).data().data();
                  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
                  std::vector<double> dp(seq_len);
                  for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t h = 0; h < heads; ++h) {
                      for (std::size_t i = 0; i < seq_len; ++i) {
                        const std::size_t qi = (b * seq_len + i) * width + h * dh;
                        const double* dout = dy.data() + (b * seq_len + i) * d + h * dh;
                        const double* p = probs.data() + ((b * heads + h) * seq_len + i) * seq_len;
                        double dot = 0.0;
                        for (std::size_t j = 0; j <= i; ++j) {
                          if (p[j] == 0.0) {
                            dp[j] = 0.0;
                            continue;
                          }
                          const std::size_t vj = (b * seq_len + j) * width + 2 * d + h * dh;
                          double s = 0.0;
                          for (std::size_t c = 0; c < dh; ++c) {
                            s += dout[c] * x[vj + c];
                            dqkv[vj + c] += p[j] * dout[c];
                          }
                          dp[j] = s;
                          dot += p[j] * s;
                        }
                        for (std::size_t j = 0; j <= i; ++j) {
                          if (p[j] == 0.0) continue;
                          const double ds = p[j] * (dp[j] - dot) * scale;
                          const std::size_t kj = (b * seq_len + j) * width + d + h * dh;
                          for (std::size_t c = 0; c < dh; ++c) {
                            dqkv[qi + c] += ds * x[kj + c];
                            dqkv[kj + c] += ds * x[qi + c];
                          }
                        }
                      }
                    }
                  }
                });
}

Var cross_entropy(Var logits, const std::vector<std::size_t>& targets) {
  if (targets.empty()) throw ContractError("cross_entropy: empty batch");
  return neg(mean(pick(log_softmax_rows(logits), targets)));
}

}  // namespace gridvla::nn
