#include "gridvla/policy/model.hpp"

#include <algorithm>
#include <cmath>

#include "gridvla/common/error.hpp"
#include "gridvla/nn/checkpoint.hpp"
#include "gridvla/nn/kernels.hpp"
#include "gridvla/nn/ops.hpp"

namespace gridvla::policy {
namespace {

using nn::ParameterSet;
using nn::Shape;
using nn::Tensor;
using nn::Var;

constexpr double kEmbedInit = 0.1;

std::string block_name(const std::string& prefix, int i) { return prefix + "block" + std::to_string(i) + "."; }

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

void add_linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                bool zero = false) {
  const double bound = zero ? 0.0 : 1.0 / std::sqrt(static_cast<double>(in));
  ps.add(name + ".w", zero ? Tensor(Shape{out, in}) : uniform_tensor({out, in}, bound, rng));
  ps.add(name + ".b", Tensor(Shape{out}));
}

void add_norm(ParameterSet& ps, const std::string& name, std::size_t d) {
  ps.add(name + ".g", Tensor(Shape{d}, 1.0));
  ps.add(name + ".b", Tensor(Shape{d}));
}

void add_backbone(ParameterSet& ps, const PolicyConfig& cfg, const std::string& prefix, Rng& rng) {
  const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
  const std::size_t ff = d * static_cast<std::size_t>(cfg.ff_mult);
  const std::size_t vocab = static_cast<std::size_t>(cfg.resolved_vocab() + cfg.n_bins());
  const double u = kEmbedInit * std::sqrt(3.0);
  ps.add(prefix + "tok_emb", uniform_tensor({vocab, d}, u, rng));
  ps.add(prefix + "pos_emb", uniform_tensor({static_cast<std::size_t>(cfg.max_positions()), d}, u, rng));
  add_linear(ps, prefix + "patch", static_cast<std::size_t>(cfg.patch_dim()), d, rng);
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string b = block_name(prefix, i);
    add_norm(ps, b + "ln1", d);
    add_linear(ps, b + "attn.qkv", d, 3 * d, rng);
    add_linear(ps, b + "attn.out", d, d, rng);
    add_norm(ps, b + "ln2", d);
    add_linear(ps, b + "ff.in", d, ff, rng);
    add_linear(ps, b + "ff.out", ff, d, rng);
  }
  add_norm(ps, prefix + "ln_f", d);
}

std::size_t value_input_dim(const PolicyConfig& cfg) {
  const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
  return cfg.value_head == ValueHead::ConcatAll ? d * static_cast<std::size_t>(cfg.tokens_per_decision()) : d;
}

// Token and position layout of a batch of decision points:
// [patches | instruction (padded to the batch max) | <act> | action inputs].
struct Layout {
  std::size_t batch = 0;
  std::size_t n_patches = 0;
  std::size_t instr = 0;
  std::size_t n_actions = 0;
  std::size_t seq = 0;
  nn::Buffer patches;                    // [batch * n_patches, patch_dim]
  std::vector<std::size_t> token_ids;    // [batch * (instr + n_actions)]
  std::vector<std::size_t> positions;    // [batch * seq]
  std::vector<std::uint8_t> key_valid;   // [batch * seq]

  std::size_t act_row(std::size_t b, std::size_t k) const { return b * seq + n_patches + instr + k; }
};

Layout make_layout(const PolicyConfig& cfg, const std::vector<const env::Observation*>& obs,
                   const std::vector<std::vector<int>>* tokens) {
  if (obs.empty()) throw ContractError("policy forward needs at least one observation");
  Layout l;
  l.batch = obs.size();
  l.n_patches = static_cast<std::size_t>(cfg.n_patches());
  l.n_actions = static_cast<std::size_t>(cfg.tokens_per_decision());
  const int vocab = cfg.resolved_vocab();
  for (const auto* o : obs) {
    if (o->height != cfg.grid_h || o->width != cfg.grid_w) {
      throw ContractError("observation grid " + std::to_string(o->width) + "x" + std::to_string(o->height) +
                          " does not match policy grid " + std::to_string(cfg.grid_w) + "x" +
                          std::to_string(cfg.grid_h));
    }
    l.instr = std::max(l.instr, static_cast<std::size_t>(o->instruction_length()));
  }
  l.seq = l.n_patches + l.instr + l.n_actions;
  const std::size_t pd = static_cast<std::size_t>(cfg.patch_dim());
  l.patches.reserve(l.batch * l.n_patches * pd);
  l.token_ids.reserve(l.batch * (l.instr + l.n_actions));
  l.positions.reserve(l.batch * l.seq);
  l.key_valid.reserve(l.batch * l.seq);
  for (std::size_t b = 0; b < l.batch; ++b) {
    const auto& o = *obs[b];
    const auto p = extract_patches(o, cfg);
    l.patches.insert(l.patches.end(), p.begin(), p.end());
    const std::size_t len = static_cast<std::size_t>(o.instruction_length());
    for (std::size_t j = 0; j < l.instr; ++j) {
      const int t = o.instruction[j];
      if (t < 0 || t >= vocab) {
        throw ContractError("instruction token " + std::to_string(t) + " outside the policy vocabulary of " +
                            std::to_string(vocab));
      }
      l.token_ids.push_back(static_cast<std::size_t>(t));
    }
    l.token_ids.push_back(env::kActionStartToken);
    if (tokens) {
      const auto& u = (*tokens)[b];
      if (u.size() != l.n_actions) {
        throw ContractError("expected " + std::to_string(l.n_actions) + " action tokens, got " +
                            std::to_string(u.size()));
      }
      for (int t : u) {
        if (t < 0 || t >= cfg.n_bins()) throw ContractError("action token " + std::to_string(t) + " out of range");
      }
      for (std::size_t k = 0; k + 1 < l.n_actions; ++k) {
        l.token_ids.push_back(static_cast<std::size_t>(vocab + u[k]));
      }
    }
    for (std::size_t p2 = 0; p2 < l.n_patches; ++p2) {
      l.positions.push_back(p2);
      l.key_valid.push_back(1);
    }
    for (std::size_t j = 0; j < l.instr; ++j) {
      l.positions.push_back(l.n_patches + j);
      l.key_valid.push_back(j < len ? 1 : 0);
    }
    for (std::size_t k = 0; k < l.n_actions; ++k) {
      l.positions.push_back(static_cast<std::size_t>(cfg.action_slot()) + k);
      l.key_valid.push_back(1);
    }
  }
  return l;
}

// ---- taped path ----

Var taped_linear(nn::Graph& g, ParameterSet& ps, const std::string& name, Var x) {
  const std::string wn = name + ".w";
  Var w = g.parameter(ps, wn);
  Var b = g.parameter(ps, name + ".b");
  const auto& e = ps.entry(wn);
  std::optional<nn::AdapterVars> ad;
  if (e.adapter) ad = nn::AdapterVars{g.adapter_down(ps, wn), g.adapter_up(ps, wn), e.adapter->factor()};
  return nn::forward_linear(x, w, b, ad);
}

Var taped_norm(nn::Graph& g, ParameterSet& ps, const std::string& name, Var x) {
  return nn::layer_norm(x, g.parameter(ps, name + ".g"), g.parameter(ps, name + ".b"));
}

// Final-layer states for every sequence row, [batch*seq, d].
Var taped_backbone(nn::Graph& g, ParameterSet& ps, const PolicyConfig& cfg, const std::string& prefix,
                   const Layout& l) {
  const std::size_t pd = static_cast<std::size_t>(cfg.patch_dim());
  Var patches = g.constant(Tensor(Shape{l.batch * l.n_patches, pd}, l.patches));
  Var patch_emb = taped_linear(g, ps, prefix + "patch", patches);
  Var tok_emb = nn::gather_rows(g.parameter(ps, prefix + "tok_emb"), l.token_ids);
  const std::size_t per_tok = l.instr + l.n_actions;
  std::vector<std::size_t> order;
  order.reserve(l.batch * l.seq);
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t p = 0; p < l.n_patches; ++p) order.push_back(b * l.n_patches + p);
    for (std::size_t t = 0; t < per_tok; ++t) order.push_back(l.batch * l.n_patches + b * per_tok + t);
  }
  Var x = nn::gather_rows(nn::concat_rows({patch_emb, tok_emb}), order);
  x = nn::add(x, nn::gather_rows(g.parameter(ps, prefix + "pos_emb"), l.positions));
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string bn = block_name(prefix, i);
    Var h = taped_norm(g, ps, bn + "ln1", x);
    Var qkv = taped_linear(g, ps, bn + "attn.qkv", h);
    Var att = nn::causal_attention(qkv, l.batch, l.seq, static_cast<std::size_t>(cfg.n_heads), l.key_valid);
    x = nn::add(x, taped_linear(g, ps, bn + "attn.out", att));
    Var h2 = taped_norm(g, ps, bn + "ln2", x);
    x = nn::add(x, taped_linear(g, ps, bn + "ff.out", nn::gelu(taped_linear(g, ps, bn + "ff.in", h2))));
  }
  return taped_norm(g, ps, prefix + "ln_f", x);
}

Var taped_value_mlp(nn::Graph& g, ParameterSet& ps, Var x) {
  Var h = nn::tanh(taped_linear(g, ps, "value.l1", x));
  h = nn::tanh(taped_linear(g, ps, "value.l2", h));
  Var v = taped_linear(g, ps, "value.l3", h);
  return nn::reshape(v, Shape{v.shape()[0]});
}

// ---- tape-free path ----

struct InferLinear {
  const double* w;
  const double* b;
  std::size_t in;
  std::size_t out;
  const nn::LowRankAdapter* adapter;
};

InferLinear infer_linear(const ParameterSet& ps, const std::string& name) {
  const auto& e = ps.entry(name + ".w");
  return {e.value.data().data(), ps.value(name + ".b").data().data(), e.value.dim(1), e.value.dim(0),
          e.adapter ? &*e.adapter : nullptr};
}

void apply_linear(const InferLinear& f, const double* x, std::size_t m, double* y, nn::Buffer& scratch) {
  nn::kernels::linear(x, m, f.in, f.w, f.out, f.b, y);
  if (!f.adapter) return;
  const std::size_t r = f.adapter->rank;
  scratch.resize(m * r + m * f.out);
  double* mid = scratch.data();
  double* low = mid + m * r;
  nn::kernels::linear(x, m, f.in, f.adapter->down.data().data(), r, nullptr, mid);
  nn::kernels::linear(mid, m, r, f.adapter->up.data().data(), f.out, nullptr, low);
  const double factor = f.adapter->factor();
  for (std::size_t i = 0; i < m * f.out; ++i) y[i] = y[i] + low[i] * factor;
}

struct InferBlock {
  const double* ln1_g;
  const double* ln1_b;
  InferLinear qkv;
  InferLinear out;
  const double* ln2_g;
  const double* ln2_b;
  InferLinear ff_in;
  InferLinear ff_out;
};

struct InferBackbone {
  const double* tok_emb;
  const double* pos_emb;
  InferLinear patch;
  std::vector<InferBlock> blocks;
  const double* lnf_g;
  const double* lnf_b;
};

InferBackbone infer_backbone(const ParameterSet& ps, const PolicyConfig& cfg, const std::string& prefix) {
  InferBackbone bb;
  bb.tok_emb = ps.value(prefix + "tok_emb").data().data();
  bb.pos_emb = ps.value(prefix + "pos_emb").data().data();
  bb.patch = infer_linear(ps, prefix + "patch");
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string bn = block_name(prefix, i);
    bb.blocks.push_back({ps.value(bn + "ln1.g").data().data(), ps.value(bn + "ln1.b").data().data(),
                         infer_linear(ps, bn + "attn.qkv"), infer_linear(ps, bn + "attn.out"),
                         ps.value(bn + "ln2.g").data().data(), ps.value(bn + "ln2.b").data().data(),
                         infer_linear(ps, bn + "ff.in"), infer_linear(ps, bn + "ff.out")});
  }
  bb.lnf_g = ps.value(prefix + "ln_f.g").data().data();
  bb.lnf_b = ps.value(prefix + "ln_f.b").data().data();
  return bb;
}

constexpr double kLayerNormEps = 1e-5;

// Incremental decoder state of one backbone over a batch.
class Decoder {
 public:
  Decoder(const InferBackbone& bb, const PolicyConfig& cfg, const Layout& l)
      : bb_(bb), cfg_(cfg), l_(l), d_(static_cast<std::size_t>(cfg.embed_dim)),
        heads_(static_cast<std::size_t>(cfg.n_heads)) {
    cache_.assign(bb.blocks.size(), nn::Buffer(l.batch * l.seq * 3 * d_, 0.0));
  }

  // Runs rows [0, n_patches + instr) of every sequence through the stack.
  void prefix() {
    const std::size_t B = l_.batch, P = l_.n_patches, I = l_.instr, rows = P + I;
    nn::Buffer x(B * rows * d_);
    nn::Buffer pe(B * P * d_);
    apply_linear(bb_.patch, l_.patches.data(), B * P, pe.data(), scratch_);
    const std::size_t per_tok = l_.token_ids.size() / B;
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* src = r < P ? pe.data() + (b * P + r) * d_
                                  : bb_.tok_emb + l_.token_ids[b * per_tok + (r - P)] * d_;
        const double* pos = bb_.pos_emb + l_.positions[b * l_.seq + r] * d_;
        double* dst = x.data() + (b * rows + r) * d_;
        for (std::size_t c = 0; c < d_; ++c) dst[c] = src[c] + pos[c];
      }
    }
    run(x, 0, rows);
  }

  // Feeds action slot k (0 = <act>) for every sequence; input row k is read
  // from token_ids. Returns final-layer states [batch, d].
  nn::Buffer step(std::size_t k, const std::vector<std::size_t>& token_ids) {
    const std::size_t B = l_.batch;
    nn::Buffer x(B * d_);
    for (std::size_t b = 0; b < B; ++b) {
      const double* src = bb_.tok_emb + token_ids[b] * d_;
      const double* pos = bb_.pos_emb + l_.positions[b * l_.seq + l_.n_patches + l_.instr + k] * d_;
      for (std::size_t c = 0; c < d_; ++c) x[b * d_ + c] = src[c] + pos[c];
    }
    run(x, l_.n_patches + l_.instr + k, 1);
    nn::Buffer h(B * d_);
    nn::kernels::layer_norm(x.data(), B, d_, bb_.lnf_g, bb_.lnf_b, kLayerNormEps, h.data(), nullptr, nullptr);
    return h;
  }

 private:
  // x holds `count` consecutive rows per sequence starting at row `start`.
  void run(nn::Buffer& x, std::size_t start, std::size_t count) {
    const std::size_t B = l_.batch, m = B * count, w3 = 3 * d_, dh = d_ / heads_;
    const std::size_t ff = bb_.blocks.empty() ? 0 : bb_.blocks[0].ff_in.out;
    nn::Buffer h(m * d_), qkv(m * w3), att(m * d_), proj(m * d_), mid(m * ff), p(l_.seq);
    for (std::size_t li = 0; li < bb_.blocks.size(); ++li) {
      const InferBlock& blk = bb_.blocks[li];
      auto& cache = cache_[li];
      nn::kernels::layer_norm(x.data(), m, d_, blk.ln1_g, blk.ln1_b, kLayerNormEps, h.data(), nullptr, nullptr);
      apply_linear(blk.qkv, h.data(), m, qkv.data(), scratch_);
      for (std::size_t b = 0; b < B; ++b) {
        std::copy(qkv.begin() + static_cast<std::ptrdiff_t>(b * count * w3),
                  qkv.begin() + static_cast<std::ptrdiff_t>((b + 1) * count * w3),
                  cache.begin() + static_cast<std::ptrdiff_t>((b * l_.seq + start) * w3));
      }
      for (std::size_t b = 0; b < B; ++b) {
        const double* base = cache.data() + b * l_.seq * w3;
        const std::uint8_t* mask = l_.key_valid.data() + b * l_.seq;
        for (std::size_t hd = 0; hd < heads_; ++hd) {
          for (std::size_t r = 0; r < count; ++r) {
            const std::size_t i = start + r;
            nn::kernels::attend_row(base + i * w3 + hd * dh, base + d_ + hd * dh, base + 2 * d_ + hd * dh, w3,
                                    i + 1, mask, dh, p.data(), att.data() + (b * count + r) * d_ + hd * dh);
          }
        }
      }
      apply_linear(blk.out, att.data(), m, proj.data(), scratch_);
      for (std::size_t i = 0; i < m * d_; ++i) x[i] = x[i] + proj[i];
      nn::kernels::layer_norm(x.data(), m, d_, blk.ln2_g, blk.ln2_b, kLayerNormEps, h.data(), nullptr, nullptr);
      apply_linear(blk.ff_in, h.data(), m, mid.data(), scratch_);
      for (auto& v : mid) v = nn::kernels::gelu(v);
      apply_linear(blk.ff_out, mid.data(), m, proj.data(), scratch_);
      for (std::size_t i = 0; i < m * d_; ++i) x[i] = x[i] + proj[i];
    }
  }

  const InferBackbone& bb_;
  const PolicyConfig& cfg_;
  const Layout& l_;
  std::size_t d_;
  std::size_t heads_;
  std::vector<nn::Buffer> cache_;
  nn::Buffer scratch_;
};

double infer_value_mlp(const ParameterSet& ps, const double* x, std::size_t in_dim, nn::Buffer& scratch) {
  const InferLinear l1 = infer_linear(ps, "value.l1");
  const InferLinear l2 = infer_linear(ps, "value.l2");
  const InferLinear l3 = infer_linear(ps, "value.l3");
  if (l1.in != in_dim) throw ContractError("value head input size mismatch");
  nn::Buffer h1(l1.out), h2(l2.out);
  double v = 0.0;
  apply_linear(l1, x, 1, h1.data(), scratch);
  for (auto& t : h1) t = std::tanh(t);
  apply_linear(l2, h1.data(), 1, h2.data(), scratch);
  for (auto& t : h2) t = std::tanh(t);
  apply_linear(l3, h2.data(), 1, &v, scratch);
  return v;
}

}  // namespace

nn::ParameterSet init_params(const PolicyConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x9017c7));
  ParameterSet ps;
  add_backbone(ps, cfg, "", rng);
  const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
  add_linear(ps, "lm_head", d, static_cast<std::size_t>(cfg.n_bins()), rng);
  if (cfg.value_head == ValueHead::SeparateBackbone) add_backbone(ps, cfg, kCriticPrefix, rng);
  add_linear(ps, "value.l1", value_input_dim(cfg), d, rng);
  add_linear(ps, "value.l2", d, d / 2, rng);
  add_linear(ps, "value.l3", d / 2, 1, rng, /*zero=*/true);
  return ps;
}

void enable_lora(nn::ParameterSet& params, std::size_t rank, double scale, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x10fa));
  for (auto& [name, e] : params.entries()) {
    const bool value_head = name.rfind("value.", 0) == 0;
    if (value_head) continue;
    e.trainable = false;
    const bool linear_weight = e.value.rank() == 2 && name.size() > 2 && name.ends_with(".w");
    if (linear_weight && !e.adapter) {
      e.adapter = nn::LowRankAdapter::create(e.value.dim(0), e.value.dim(1), rank, scale, rng);
    }
  }
}

std::vector<double> extract_patches(const env::Observation& obs, const PolicyConfig& cfg) {
  const int ps = cfg.patch_size;
  const int pw = cfg.grid_w / ps, ph = cfg.grid_h / ps;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(pw * ph * cfg.patch_dim()));
  for (int py = 0; py < ph; ++py) {
    for (int px = 0; px < pw; ++px) {
      for (int dy = 0; dy < ps; ++dy) {
        for (int dx = 0; dx < ps; ++dx) {
          for (int c = 0; c < env::kChannels; ++c) out.push_back(obs.pixel(py * ps + dy, px * ps + dx, c));
        }
      }
    }
  }
  return out;
}

ForwardResult forward(nn::Graph& g, nn::ParameterSet& params, const PolicyConfig& cfg,
                      const std::vector<const env::Observation*>& obs, const std::vector<std::vector<int>>& tokens,
                      bool with_value, double temperature) {
  if (tokens.size() != obs.size()) throw ContractError("forward: one token vector per observation required");
  if (!(temperature > 0.0)) throw ContractError("forward: temperature must be positive");
  const Layout l = make_layout(cfg, obs, &tokens);
  Var hs = taped_backbone(g, params, cfg, "", l);
  std::vector<std::size_t> rows;
  std::vector<std::size_t> targets;
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t k = 0; k < l.n_actions; ++k) {
      rows.push_back(l.act_row(b, k));
      targets.push_back(static_cast<std::size_t>(tokens[b][k]));
    }
  }
  ForwardResult r;
  r.hidden = nn::gather_rows(hs, rows);
  r.logits = taped_linear(g, params, "lm_head", r.hidden);
  Var logp = nn::log_softmax_rows(nn::scale(r.logits, 1.0 / temperature));
  r.token_log_probs = nn::pick(logp, targets);
  r.log_probs = nn::segment_sum(r.token_log_probs, l.n_actions);
  if (with_value) {
    const std::size_t n = l.n_actions;
    std::vector<std::size_t> sel;
    switch (cfg.value_head) {
      case ValueHead::FirstTokenH0:
        for (std::size_t b = 0; b < l.batch; ++b) sel.push_back(b * n);
        r.values = taped_value_mlp(g, params, nn::gather_rows(r.hidden, sel));
        break;
      case ValueHead::LastTokenHn:
        for (std::size_t b = 0; b < l.batch; ++b) sel.push_back(b * n + n - 1);
        r.values = taped_value_mlp(g, params, nn::gather_rows(r.hidden, sel));
        break;
      case ValueHead::ConcatAll:
        r.values = taped_value_mlp(
            g, params, nn::reshape(r.hidden, Shape{l.batch, n * static_cast<std::size_t>(cfg.embed_dim)}));
        break;
      case ValueHead::SeparateBackbone: {
        Var chs = taped_backbone(g, params, cfg, kCriticPrefix, l);
        for (std::size_t b = 0; b < l.batch; ++b) sel.push_back(l.act_row(b, 0));
        r.values = taped_value_mlp(g, params, nn::gather_rows(chs, sel));
        break;
      }
    }
  }
  return r;
}

nn::Var mean_entropy(const ForwardResult& f, double temperature) {
  Var logp = nn::log_softmax_rows(nn::scale(f.logits, 1.0 / temperature));
  return nn::neg(nn::mean(nn::row_sum(nn::mul(nn::exp(logp), logp))));
}

double log_prob(const env::Observation& obs, const std::vector<int>& tokens, nn::ParameterSet& params,
                const PolicyConfig& cfg) {
  nn::Graph g;
  return forward(g, params, cfg, {&obs}, {tokens}, false, cfg.temperature).log_probs.value()[0];
}

double value(const env::Observation& obs, nn::ParameterSet& params, const PolicyConfig& cfg) {
  nn::Graph g;
  const std::vector<int> zeros(static_cast<std::size_t>(cfg.tokens_per_decision()), 0);
  if (cfg.value_head == ValueHead::FirstTokenH0 || cfg.value_head == ValueHead::SeparateBackbone) {
    return forward(g, params, cfg, {&obs}, {zeros}, true, cfg.temperature).values->value()[0];
  }
  // Action-dependent heads read states after the greedy action prefix.
  Snapshot snap(params, cfg);
  ActOptions opt;
  opt.greedy = true;
  return act(snap, {&obs}, nullptr, opt)[0].value;
}

Snapshot::Snapshot(const nn::ParameterSet& params, const PolicyConfig& cfg) : cfg_(cfg), params_(params) {
  cfg_.validate();
  params_.drop_grads();
}

std::vector<ActResult> act(const Snapshot& snap, const std::vector<const env::Observation*>& obs,
                           std::vector<Rng>* rngs, const ActOptions& opt) {
  const PolicyConfig& cfg = snap.config();
  const ParameterSet& ps = snap.params();
  if (!opt.greedy && (!rngs || rngs->size() != obs.size())) {
    throw ContractError("act: sampling needs one PRNG per observation");
  }
  if (!(opt.temperature > 0.0)) throw ContractError("act: temperature must be positive");
  const Layout l = make_layout(cfg, obs, nullptr);
  const std::size_t B = l.batch, n = l.n_actions, d = static_cast<std::size_t>(cfg.embed_dim);
  const std::size_t nb = static_cast<std::size_t>(cfg.n_bins());
  const std::size_t vocab = static_cast<std::size_t>(cfg.resolved_vocab());

  const InferBackbone bb = infer_backbone(ps, cfg, "");
  Decoder dec(bb, cfg, l);
  dec.prefix();
  const InferLinear head = infer_linear(ps, "lm_head");
  std::vector<ActResult> out(B);
  nn::Buffer hidden_all(B * n * d);
  std::vector<std::size_t> inputs(B, env::kActionStartToken);
  nn::Buffer logits(B * nb), logp(nb), scratch;
  const double inv_t = 1.0 / opt.temperature;
  for (std::size_t k = 0; k < n; ++k) {
    const nn::Buffer h = dec.step(k, inputs);
    for (std::size_t b = 0; b < B; ++b) std::copy_n(h.data() + b * d, d, hidden_all.data() + (b * n + k) * d);
    apply_linear(head, h.data(), B, logits.data(), scratch);
    for (std::size_t b = 0; b < B; ++b) {
      double* z = logits.data() + b * nb;
      for (std::size_t i = 0; i < nb; ++i) z[i] = z[i] * inv_t;
      nn::kernels::log_softmax_row(z, nb, logp.data());
      std::size_t choice = 0;
      if (opt.greedy) {
        for (std::size_t i = 1; i < nb; ++i) {
          if (z[i] > z[choice]) choice = i;
        }
      } else {
        const double u = (*rngs)[b].uniform();
        double cum = 0.0;
        choice = nb;
        for (std::size_t i = 0; i < nb; ++i) {
          cum += std::exp(logp[i]);
          if (u < cum) {
            choice = i;
            break;
          }
        }
        if (choice == nb) {
          choice = nb - 1;
          while (choice > 0 && !(logp[choice] > -INFINITY)) --choice;
        }
        out[b].log_prob += logp[choice];
        out[b].token_log_probs.push_back(logp[choice]);
      }
      out[b].tokens.push_back(static_cast<int>(choice));
      inputs[b] = vocab + choice;
    }
  }
  if (opt.with_value) {
    switch (cfg.value_head) {
      case ValueHead::FirstTokenH0:
      case ValueHead::LastTokenHn: {
        const std::size_t k = cfg.value_head == ValueHead::FirstTokenH0 ? 0 : n - 1;
        for (std::size_t b = 0; b < B; ++b) {
          out[b].value = infer_value_mlp(ps, hidden_all.data() + (b * n + k) * d, d, scratch);
        }
        break;
      }
      case ValueHead::ConcatAll:
        for (std::size_t b = 0; b < B; ++b) {
          out[b].value = infer_value_mlp(ps, hidden_all.data() + b * n * d, n * d, scratch);
        }
        break;
      case ValueHead::SeparateBackbone: {
        const InferBackbone cb = infer_backbone(ps, cfg, kCriticPrefix);
        Decoder cdec(cb, cfg, l);
        cdec.prefix();
        const std::vector<std::size_t> start(B, env::kActionStartToken);
        const nn::Buffer h = cdec.step(0, start);
        for (std::size_t b = 0; b < B; ++b) out[b].value = infer_value_mlp(ps, h.data() + b * d, d, scratch);
        break;
      }
    }
  }
  return out;
}

void save_policy(const std::filesystem::path& path, const nn::ParameterSet& params, const PolicyConfig& cfg,
                 const nlohmann::json& extra) {
  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  meta["policy"] = to_json(cfg);
  nn::save_checkpoint(path, params, meta);
}

LoadedPolicy load_policy(const std::filesystem::path& path) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  if (!ck.metadata.contains("policy")) throw IoError("checkpoint " + path.string() + " has no policy config");
  LoadedPolicy out{std::move(ck.params), policy_config_from_json(ck.metadata["policy"]), std::move(ck.metadata)};
  const nn::ParameterSet fresh = init_params(out.config, 0);
  for (const auto& [name, e] : fresh.entries()) {
    if (!out.params.contains(name) || out.params.value(name).shape() != e.value.shape()) {
      throw IoError("checkpoint " + path.string() + " does not match its policy config at '" + name + "'");
    }
  }
  return out;
}

}  // namespace gridvla::policy
