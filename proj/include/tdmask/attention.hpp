#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdmask/features.hpp"
#include "tdmask/tensor.hpp"

namespace tdmask {

struct AttnConfig {
  int d = 16;    // model width
  int m = 8;     // per-head query/key width
  int heads = 2;
  int d_r = 16;  // path embedding width
  int d_s = 4;   // subgraph (bag content) embedding width
  int d_m = 2;   // motif embedding width
  int d_dp = 2;  // depth embedding width
  int d_ff = 32;
  double fill = -1e9;
  double ln_eps = 1e-12;
  bool pre_layernorm = false;  // post-LN by default

  // Paper-scale preset (512 model width, 8 heads, [R,S,M,D]=[512,128,64,64]).
  static AttnConfig paper_scale() {
    return {512, 64, 8, 512, 128, 64, 64, 1024, -1e9, 1e-12, false};
  }
};

/// Relation-path and bag structure of a FeatureBundle, resolved into dense
/// index form for the kernel: a path-label vocabulary, per-pair label id
/// sequences, per-bag sorted vertex lists, and single-hop adjacency.
struct BundleIndex {
  int n = 0;
  std::vector<std::string> vocab;
  std::vector<std::vector<std::vector<int>>> path_ids;  // [i][j] label ids
  std::vector<std::pair<int, std::vector<int>>> bags;   // (group id, vertices)
  std::vector<VertexSet> allowed;
  std::vector<std::vector<int>> motif_ids, group_ids, depths;
  std::vector<VertexSet> adjacent;  // pairs with a length-1 relation path
  int max_motif_id = 0, max_depth = 0;

  explicit BundleIndex(const FeatureBundle& b) : n(b.n) {
    std::set<std::string> labels;
    for (const auto& [key, seq] : b.paths) labels.insert(seq.begin(), seq.end());
    vocab.assign(labels.begin(), labels.end());
    std::map<std::string, int> ids;
    for (std::size_t i = 0; i < vocab.size(); ++i) ids[vocab[i]] = i;
    path_ids.assign(n, std::vector<std::vector<int>>(n));
    adjacent.assign(n, 0);
    for (const auto& [key, seq] : b.paths) {
      auto& out = path_ids[key.first][key.second];
      for (const std::string& l : seq) out.push_back(ids.at(l));
      if (seq.size() == 1) adjacent[key.first] |= bit(key.second);
    }
    std::map<int, std::set<int>> members;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (b.group_ids[i][j] > 0) {
          members[b.group_ids[i][j]].insert(i);
          members[b.group_ids[i][j]].insert(j);
        }
    for (const auto& [gid, verts] : members)
      bags.emplace_back(gid, std::vector<int>(verts.begin(), verts.end()));
    allowed = b.mask.allowed;
    motif_ids = b.motif_ids;
    group_ids = b.group_ids;
    depths = b.relative_depths;
    for (const auto& row : motif_ids)
      for (int m : row) max_motif_id = std::max(max_motif_id, m);
    for (const auto& row : depths)
      for (int d : row) max_depth = std::max(max_depth, d);
  }
};

struct ParamSet {
  AttnConfig cfg;
  int bag_slots = 0;  // smax*(smax-1) relation slots per bag
  std::vector<Tensor> q, k, v;  // per head: d x m, d x m, d x d
  Tensor w1, b1;                // d_s x (bag_slots*d_r), d_s
  Tensor w2, b2;                // d x (d_r+d_m+d_s+d_dp), d
  Tensor path_table;            // |vocab| x d_r
  Tensor motif_table;           // (max motif id + 1) x d_m
  Tensor depth_table;           // (max depth + 1) x d_dp
  Tensor wf1, bf1, wf2, bf2;

  int concat_width() const { return cfg.d_r + cfg.d_m + cfg.d_s + cfg.d_dp; }

  std::vector<std::pair<std::string, Tensor*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (int h = 0; h < cfg.heads; ++h) {
      out.push_back({"q" + std::to_string(h), &q[h]});
      out.push_back({"k" + std::to_string(h), &k[h]});
      out.push_back({"v" + std::to_string(h), &v[h]});
    }
    out.insert(out.end(), {{"w1", &w1},
                           {"b1", &b1},
                           {"w2", &w2},
                           {"b2", &b2},
                           {"path_table", &path_table},
                           {"motif_table", &motif_table},
                           {"depth_table", &depth_table},
                           {"wf1", &wf1},
                           {"bf1", &bf1},
                           {"wf2", &wf2},
                           {"bf2", &bf2}});
    return out;
  }
};

/// Seeded uniform(-0.1, 0.1) initialization; table sizes are taken from
/// the bundle so every emitted index has a row.
inline ParamSet make_params(const AttnConfig& cfg, const BundleIndex& bi,
                            int max_bag_size, std::uint64_t seed) {
  ParamSet p;
  p.cfg = cfg;
  p.bag_slots = max_bag_size * (max_bag_size - 1);
  std::mt19937_64 rng(seed);
  for (int h = 0; h < cfg.heads; ++h) {
    p.q.emplace_back(std::vector<int>{cfg.d, cfg.m});
    p.k.emplace_back(std::vector<int>{cfg.d, cfg.m});
    p.v.emplace_back(std::vector<int>{cfg.d, cfg.d});
  }
  p.w1 = Tensor({cfg.d_s, p.bag_slots * cfg.d_r});
  p.b1 = Tensor({cfg.d_s});
  p.w2 = Tensor({cfg.d, p.concat_width()});
  p.b2 = Tensor({cfg.d});
  p.path_table = Tensor({std::max<int>(1, bi.vocab.size()), cfg.d_r});
  p.motif_table = Tensor({bi.max_motif_id + 1, cfg.d_m});
  p.depth_table = Tensor({bi.max_depth + 1, cfg.d_dp});
  p.wf1 = Tensor({cfg.d_ff, cfg.heads * cfg.d});
  p.bf1 = Tensor({cfg.d_ff});
  p.wf2 = Tensor({cfg.d, cfg.d_ff});
  p.bf2 = Tensor({cfg.d});
  for (auto& [name, t] : p.named_tensors()) t->fill_uniform(rng);
  return p;
}

/// Eq-2 style bag content embedding: rectified affine map of the stacked
/// relation slots. `slots` must hold bag_slots * d_r values.
inline std::vector<double> subgraph_embedding(const std::vector<double>& slots,
                                              const ParamSet& p) {
  if (static_cast<int>(slots.size()) != p.bag_slots * p.cfg.d_r)
    throw ShapeError("subgraph_embedding: wrong slot count");
  std::vector<double> out(p.cfg.d_s);
  for (int i = 0; i < p.cfg.d_s; ++i) {
    double acc = p.b1(i);
    for (std::size_t j = 0; j < slots.size(); ++j)
      acc += p.w1(i, static_cast<int>(j)) * slots[j];
    out[i] = std::max(0.0, acc);
  }
  return out;
}

namespace detail {

struct ForwardCache {
  Tensor path_emb;                      // n x n x d_r  (R~)
  std::vector<std::vector<double>> bag_pre, bag_out;  // per bag, d_s
  Tensor feat;                          // n x n x concat width
  Tensor rel;                           // n x n x d    (R)
  std::vector<Tensor> qv, kv;           // per head, n x n x m
  std::vector<Tensor> attn;             // per head, n x n
  std::vector<Tensor> xv;               // per head, n x d
  Tensor y;                             // n x (H*d)
  Tensor ff_pre, ff_act;                // n x d_ff
  Tensor z_pre;                         // n x d
  std::vector<double> ln_mu, ln_sigma;  // per row
  Tensor out;                           // n x d
};

/// Relation slot vector of one bag: entry (a, b) of the row-major off-
/// diagonal grid over the bag's sorted vertices, filled with the pair's
/// path embedding when a single-hop relation exists, zero otherwise.
inline std::vector<std::pair<int, std::pair<int, int>>> bag_slot_pairs(
    const BundleIndex& bi, const std::vector<int>& verts, int bag_slots) {
  std::vector<std::pair<int, std::pair<int, int>>> filled;
  const int s = static_cast<int>(verts.size());
  int slot = 0;
  for (int a = 0; a < s; ++a)
    for (int b = 0; b < s; ++b) {
      if (a == b) continue;
      if (slot < bag_slots && contains(bi.adjacent[verts[a]], verts[b]))
        filled.push_back({slot, {verts[a], verts[b]}});
      ++slot;
    }
  return filled;
}

}  // namespace detail

/// Full encoder sub-layer forward pass. The cache keeps every intermediate
/// needed by the reverse pass.
inline Tensor encoder_forward(const ParamSet& p, const BundleIndex& bi,
                              const Tensor& x, detail::ForwardCache& c) {
  const AttnConfig& cfg = p.cfg;
  const int n = bi.n;
  if (x.shape != std::vector<int>{n, cfg.d})
    throw ShapeError("encoder_forward: X must be n x d");

  // Path embeddings R~: mean of label rows along the relation path.
  c.path_emb = Tensor({n, n, cfg.d_r});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto& ids = bi.path_ids[i][j];
      if (ids.empty()) continue;
      for (int l : ids)
        for (int t = 0; t < cfg.d_r; ++t)
          c.path_emb(i, j, t) += p.path_table(l, t) / ids.size();
    }

  // Bag content embeddings (Eq-2 path).
  c.bag_pre.assign(bi.bags.size(), std::vector<double>(cfg.d_s));
  c.bag_out = c.bag_pre;
  std::map<int, int> bag_of_gid;
  for (std::size_t s = 0; s < bi.bags.size(); ++s) {
    bag_of_gid[bi.bags[s].first] = static_cast<int>(s);
    std::vector<double> slots(p.bag_slots * cfg.d_r, 0.0);
    for (auto [slot, pair] : detail::bag_slot_pairs(bi, bi.bags[s].second,
                                                    p.bag_slots))
      for (int t = 0; t < cfg.d_r; ++t)
        slots[slot * cfg.d_r + t] = c.path_emb(pair.first, pair.second, t);
    for (int i = 0; i < cfg.d_s; ++i) {
      double acc = p.b1(i);
      for (std::size_t j = 0; j < slots.size(); ++j)
        acc += p.w1(i, static_cast<int>(j)) * slots[j];
      c.bag_pre[s][i] = acc;
      c.bag_out[s][i] = std::max(0.0, acc);
    }
  }

  // Relation embeddings R (Eq-4 path); masked pairs stay zero.
  const int cw = p.concat_width();
  c.feat = Tensor({n, n, cw});
  c.rel = Tensor({n, n, cfg.d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (!contains(bi.allowed[i], j)) continue;
      int off = 0;
      for (int t = 0; t < cfg.d_r; ++t) c.feat(i, j, off++) = c.path_emb(i, j, t);
      for (int t = 0; t < cfg.d_m; ++t)
        c.feat(i, j, off++) = p.motif_table(bi.motif_ids[i][j], t);
      int gid = bi.group_ids[i][j];
      for (int t = 0; t < cfg.d_s; ++t)
        c.feat(i, j, off++) = gid > 0 ? c.bag_out[bag_of_gid.at(gid)][t] : 0.0;
      for (int t = 0; t < cfg.d_dp; ++t)
        c.feat(i, j, off++) = p.depth_table(bi.depths[i][j], t);
      for (int r = 0; r < cfg.d; ++r) {
        double acc = p.b2(r);
        for (int t = 0; t < cw; ++t) acc += p.w2(r, t) * c.feat(i, j, t);
        c.rel(i, j, r) = acc;
      }
    }

  // Masked multi-head attention.
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.m));
  c.qv.assign(cfg.heads, Tensor({n, n, cfg.m}));
  c.kv.assign(cfg.heads, Tensor({n, n, cfg.m}));
  c.attn.assign(cfg.heads, Tensor({n, n}));
  c.xv.assign(cfg.heads, Tensor({n, cfg.d}));
  c.y = Tensor({n, cfg.heads * cfg.d});
  for (int h = 0; h < cfg.heads; ++h) {
    for (int i = 0; i < n; ++i)
      for (int r = 0; r < cfg.d; ++r) {
        double acc = 0;
        for (int t = 0; t < cfg.d; ++t) acc += x(i, t) * p.v[h](t, r);
        c.xv[h](i, r) = acc;
      }
    Tensor scores({n, n});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (!contains(bi.allowed[i], j)) {
          scores(i, j) = cfg.fill;
          continue;
        }
        for (int t = 0; t < cfg.m; ++t) {
          double qa = 0, kb = 0;
          for (int r = 0; r < cfg.d; ++r) {
            qa += (x(i, r) + c.rel(i, j, r)) * p.q[h](r, t);
            kb += (x(j, r) + c.rel(j, i, r)) * p.k[h](r, t);
          }
          c.qv[h](i, j, t) = qa;
          c.kv[h](i, j, t) = kb;
        }
        double dot = 0;
        for (int t = 0; t < cfg.m; ++t) dot += c.qv[h](i, j, t) * c.kv[h](i, j, t);
        scores(i, j) = dot * scale;
      }
    for (int i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j) mx = std::max(mx, scores(i, j));
      double z = 0;
      for (int j = 0; j < n; ++j) z += std::exp(scores(i, j) - mx);
      for (int j = 0; j < n; ++j) c.attn[h](i, j) = std::exp(scores(i, j) - mx) / z;
    }
    for (int i = 0; i < n; ++i)
      for (int r = 0; r < cfg.d; ++r) {
        double acc = 0;
        for (int j = 0; j < n; ++j) acc += c.attn[h](i, j) * c.xv[h](j, r);
        c.y(i, h * cfg.d + r) = acc;
      }
  }

  // Position-wise feed-forward, residual, layer norm.
  c.ff_pre = Tensor({n, cfg.d_ff});
  c.ff_act = Tensor({n, cfg.d_ff});
  c.z_pre = Tensor({n, cfg.d});
  c.ln_mu.assign(n, 0.0);
  c.ln_sigma.assign(n, 0.0);
  c.out = Tensor({n, cfg.d});
  for (int i = 0; i < n; ++i) {
    for (int u = 0; u < cfg.d_ff; ++u) {
      double acc = p.bf1(u);
      for (int t = 0; t < cfg.heads * cfg.d; ++t) acc += p.wf1(u, t) * c.y(i, t);
      c.ff_pre(i, u) = acc;
      c.ff_act(i, u) = std::max(0.0, acc);
    }
    for (int r = 0; r < cfg.d; ++r) {
      double acc = p.bf2(r);
      for (int u = 0; u < cfg.d_ff; ++u) acc += p.wf2(r, u) * c.ff_act(i, u);
      c.z_pre(i, r) = x(i, r) + acc;
    }
    double mu = 0;
    for (int r = 0; r < cfg.d; ++r) mu += c.z_pre(i, r) / cfg.d;
    double var = 0;
    for (int r = 0; r < cfg.d; ++r) {
      double dlt = c.z_pre(i, r) - mu;
      var += dlt * dlt / cfg.d;
    }
    c.ln_mu[i] = mu;
    c.ln_sigma[i] = std::sqrt(var + cfg.ln_eps);
    for (int r = 0; r < cfg.d; ++r)
      c.out(i, r) = (c.z_pre(i, r) - mu) / c.ln_sigma[i];
  }
  return c.out;
}

inline Tensor encoder_layer(const ParamSet& p, const BundleIndex& bi,
                            const Tensor& x) {
  detail::ForwardCache c;
  return encoder_forward(p, bi, x, c);
}

/// Relation embeddings alone (Eq-4 output as an n x n x d tensor).
inline Tensor assemble_relation_embeddings(const ParamSet& p,
                                           const BundleIndex& bi) {
  detail::ForwardCache c;
  Tensor x({bi.n, p.cfg.d});
  encoder_forward(p, bi, x, c);
  return c.rel;
}

/// Standalone masked attention over caller-supplied relation embeddings.
/// rel_t(i, j, :) must equal rel(j, i, :) for a coherent key side.
inline Tensor masked_attention(const ParamSet& p, const Tensor& x,
                               const Tensor& rel, const Tensor& rel_t,
                               const AttentionMask& mask) {
  const AttnConfig& cfg = p.cfg;
  const int n = x.shape.at(0);
  if (x.shape != std::vector<int>{n, cfg.d} ||
      rel.shape != std::vector<int>{n, n, cfg.d} || rel_t.shape != rel.shape)
    throw ShapeError("masked_attention: inconsistent shapes");
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.m));
  Tensor y({n, cfg.heads * cfg.d});
  for (int h = 0; h < cfg.heads; ++h) {
    Tensor scores({n, n});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (!mask(i, j)) {
          scores(i, j) = cfg.fill;
          continue;
        }
        double dot = 0;
        for (int t = 0; t < cfg.m; ++t) {
          double qa = 0, kb = 0;
          for (int r = 0; r < cfg.d; ++r) {
            qa += (x(i, r) + rel(i, j, r)) * p.q[h](r, t);
            kb += (x(j, r) + rel_t(i, j, r)) * p.k[h](r, t);
          }
          dot += qa * kb;
        }
        scores(i, j) = dot * scale;
      }
    for (int i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j) mx = std::max(mx, scores(i, j));
      double z = 0;
      for (int j = 0; j < n; ++j) z += std::exp(scores(i, j) - mx);
      for (int r = 0; r < cfg.d; ++r) {
        double acc = 0;
        for (int j = 0; j < n; ++j) {
          double xv = 0;
          for (int t = 0; t < cfg.d; ++t) xv += x(j, t) * p.v[h](t, r);
          acc += std::exp(scores(i, j) - mx) / z * xv;
        }
        y(i, h * cfg.d + r) = acc;
      }
    }
  }
  return y;
}

struct Gradients {
  std::map<std::string, Tensor> tensors;
  Tensor x;
};

/// Fixed probe weights for the scalar check loss. A plain sum of squares
/// would be useless here: layer norm pins every output row's squared norm
/// to d, so that loss is constant and all gradients vanish.
inline double loss_weight(int i, int r, int d) {
  return std::sin(0.7 * (i * d + r) + 0.3);
}

/// Reverse-mode gradients of the probe loss (fixed-weight linear functional
/// of the encoder output) with respect to X and every parameter tensor.
inline Gradients encoder_backward(ParamSet& p, const BundleIndex& bi,
                                  const Tensor& x,
                                  const detail::ForwardCache& c) {
  const AttnConfig& cfg = p.cfg;
  const int n = bi.n;
  Gradients g;
  for (auto& [name, t] : p.named_tensors()) g.tensors[name] = Tensor(t->shape);
  g.x = Tensor(x.shape);

  Tensor d_y({n, cfg.heads * cfg.d});
  Tensor d_rel({n, n, cfg.d});

  // Loss, layer norm, residual, feed-forward.
  for (int i = 0; i < n; ++i) {
    std::vector<double> dy(cfg.d);
    for (int r = 0; r < cfg.d; ++r) dy[r] = loss_weight(i, r, cfg.d);
    double mean_dy = 0, mean_dyy = 0;
    for (int r = 0; r < cfg.d; ++r) {
      mean_dy += dy[r] / cfg.d;
      mean_dyy += dy[r] * c.out(i, r) / cfg.d;
    }
    std::vector<double> dz(cfg.d);
    for (int r = 0; r < cfg.d; ++r)
      dz[r] = (dy[r] - mean_dy - c.out(i, r) * mean_dyy) / c.ln_sigma[i];
    for (int r = 0; r < cfg.d; ++r) g.x(i, r) += dz[r];
    // dz is also dF (the feed-forward output delta).
    std::vector<double> dact(cfg.d_ff, 0.0);
    for (int r = 0; r < cfg.d; ++r) {
      g.tensors["bf2"](r) += dz[r];
      for (int u = 0; u < cfg.d_ff; ++u) {
        g.tensors["wf2"](r, u) += dz[r] * c.ff_act(i, u);
        dact[u] += p.wf2(r, u) * dz[r];
      }
    }
    for (int u = 0; u < cfg.d_ff; ++u) {
      if (c.ff_pre(i, u) <= 0) continue;
      g.tensors["bf1"](u) += dact[u];
      for (int t = 0; t < cfg.heads * cfg.d; ++t) {
        g.tensors["wf1"](u, t) += dact[u] * c.y(i, t);
        d_y(i, t) += p.wf1(u, t) * dact[u];
      }
    }
  }

  // Attention heads.
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.m));
  for (int h = 0; h < cfg.heads; ++h) {
    Tensor d_attn({n, n});
    Tensor d_xv({n, cfg.d});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0;
        for (int r = 0; r < cfg.d; ++r)
          acc += d_y(i, h * cfg.d + r) * c.xv[h](j, r);
        d_attn(i, j) = acc;
        for (int r = 0; r < cfg.d; ++r)
          d_xv(j, r) += c.attn[h](i, j) * d_y(i, h * cfg.d + r);
      }
    for (int j = 0; j < n; ++j)
      for (int r = 0; r < cfg.d; ++r)
        for (int t = 0; t < cfg.d; ++t) {
          g.tensors["v" + std::to_string(h)](t, r) += x(j, t) * d_xv(j, r);
          g.x(j, t) += d_xv(j, r) * p.v[h](t, r);
        }
    for (int i = 0; i < n; ++i) {
      double row_dot = 0;
      for (int j = 0; j < n; ++j) row_dot += c.attn[h](i, j) * d_attn(i, j);
      for (int j = 0; j < n; ++j) {
        if (!contains(bi.allowed[i], j)) continue;
        double ds = c.attn[h](i, j) * (d_attn(i, j) - row_dot) * scale;
        if (ds == 0) continue;
        auto& gq = g.tensors["q" + std::to_string(h)];
        auto& gk = g.tensors["k" + std::to_string(h)];
        for (int t = 0; t < cfg.m; ++t) {
          double dqa = ds * c.kv[h](i, j, t);
          double dkb = ds * c.qv[h](i, j, t);
          for (int r = 0; r < cfg.d; ++r) {
            gq(r, t) += (x(i, r) + c.rel(i, j, r)) * dqa;
            gk(r, t) += (x(j, r) + c.rel(j, i, r)) * dkb;
            g.x(i, r) += p.q[h](r, t) * dqa;
            g.x(j, r) += p.k[h](r, t) * dkb;
            d_rel(i, j, r) += p.q[h](r, t) * dqa;
            d_rel(j, i, r) += p.k[h](r, t) * dkb;
          }
        }
      }
    }
  }

  // Eq-4 relation assembly.
  const int cw = p.concat_width();
  Tensor d_path_emb({n, n, cfg.d_r});
  std::vector<std::vector<double>> d_bag(bi.bags.size(),
                                         std::vector<double>(cfg.d_s, 0.0));
  std::map<int, int> bag_of_gid;
  for (std::size_t s = 0; s < bi.bags.size(); ++s)
    bag_of_gid[bi.bags[s].first] = static_cast<int>(s);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (!contains(bi.allowed[i], j)) continue;
      std::vector<double> dfeat(cw, 0.0);
      for (int r = 0; r < cfg.d; ++r) {
        double dr = d_rel(i, j, r);
        if (dr == 0) continue;
        g.tensors["b2"](r) += dr;
        for (int t = 0; t < cw; ++t) {
          g.tensors["w2"](r, t) += dr * c.feat(i, j, t);
          dfeat[t] += p.w2(r, t) * dr;
        }
      }
      int off = 0;
      for (int t = 0; t < cfg.d_r; ++t) d_path_emb(i, j, t) += dfeat[off++];
      for (int t = 0; t < cfg.d_m; ++t)
        g.tensors["motif_table"](bi.motif_ids[i][j], t) += dfeat[off++];
      int gid = bi.group_ids[i][j];
      for (int t = 0; t < cfg.d_s; ++t) {
        if (gid > 0) d_bag[bag_of_gid.at(gid)][t] += dfeat[off];
        ++off;
      }
      for (int t = 0; t < cfg.d_dp; ++t)
        g.tensors["depth_table"](bi.depths[i][j], t) += dfeat[off++];
    }

  // Eq-2 bag embeddings back into the slot path embeddings.
  for (std::size_t s = 0; s < bi.bags.size(); ++s) {
    auto filled = detail::bag_slot_pairs(bi, bi.bags[s].second, p.bag_slots);
    for (int i = 0; i < cfg.d_s; ++i) {
      if (c.bag_pre[s][i] <= 0 || d_bag[s][i] == 0) continue;
      double dpre = d_bag[s][i];
      g.tensors["b1"](i) += dpre;
      for (auto [slot, pair] : filled)
        for (int t = 0; t < cfg.d_r; ++t) {
          int col = slot * cfg.d_r + t;
          g.tensors["w1"](i, col) +=
              dpre * c.path_emb(pair.first, pair.second, t);
          d_path_emb(pair.first, pair.second, t) += p.w1(i, col) * dpre;
        }
      // Zero slots still contribute to the W1 gradient only through their
      // (zero) activations, so nothing further to add.
    }
  }

  // Path means into the label table.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto& ids = bi.path_ids[i][j];
      if (ids.empty()) continue;
      for (int l : ids)
        for (int t = 0; t < cfg.d_r; ++t)
          g.tensors["path_table"](l, t) += d_path_emb(i, j, t) / ids.size();
    }
  return g;
}

inline double encoder_loss(const ParamSet& p, const BundleIndex& bi,
                           const Tensor& x) {
  detail::ForwardCache c;
  Tensor out = encoder_forward(p, bi, x, c);
  double loss = 0;
  for (int i = 0; i < out.shape[0]; ++i)
    for (int r = 0; r < out.shape[1]; ++r)
      loss += loss_weight(i, r, out.shape[1]) * out(i, r);
  if (!std::isfinite(loss)) throw ShapeError("encoder loss is not finite");
  return loss;
}

struct GradCheckReport {
  std::uint64_t seed = 0;
  double max_rel_err = 0;
  std::map<std::string, double> per_tensor;
};

/// Analytic gradients vs central finite differences over up to
/// `coords_per_tensor` sampled coordinates of every tensor (and X).
/// `inject_fault` doubles one large analytic partial of bf2 to prove the
/// checker can see a broken gradient.
inline GradCheckReport grad_check(ParamSet& p, const BundleIndex& bi,
                                  const Tensor& x0, double eps = 1e-5,
                                  std::uint64_t seed = 1,
                                  int coords_per_tensor = 200,
                                  bool inject_fault = false) {
  detail::ForwardCache c;
  Tensor x = x0;
  encoder_forward(p, bi, x, c);
  Gradients g = encoder_backward(p, bi, x, c);

  if (inject_fault) {
    // bf2 has O(1)-magnitude partials and few enough coordinates that every
    // one is always checked, so the doubled entry shows up as ~0.5 error.
    Tensor& gbf2 = g.tensors.at("bf2");
    std::size_t arg = 0;
    for (std::size_t i = 0; i < gbf2.data.size(); ++i)
      if (std::abs(gbf2.data[i]) > std::abs(gbf2.data[arg])) arg = i;
    gbf2.data[arg] *= 2.0;
  }

  GradCheckReport report;
  report.seed = seed;
  std::mt19937_64 rng(seed);
  auto check_tensor = [&](const std::string& name, Tensor& param,
                          const Tensor& grad) {
    double worst = 0;
    std::vector<std::size_t> coords(param.data.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (static_cast<int>(coords.size()) > coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(coords_per_tensor);
    }
    for (std::size_t idx : coords) {
      double saved = param.data[idx];
      param.data[idx] = saved + eps;
      double up = encoder_loss(p, bi, x);
      param.data[idx] = saved - eps;
      double down = encoder_loss(p, bi, x);
      param.data[idx] = saved;
      double fd = (up - down) / (2 * eps);
      double a = grad.data[idx];
      double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
      worst = std::max(worst, rel);
    }
    report.per_tensor[name] = worst;
    report.max_rel_err = std::max(report.max_rel_err, worst);
  };
  for (auto& [name, t] : p.named_tensors())
    check_tensor(name, *t, g.tensors.at(name));
  check_tensor("x", x, g.x);
  return report;
}

inline nlohmann::ordered_json gradcheck_report_json(const GradCheckReport& r) {
  nlohmann::ordered_json j;
  j["seed"] = r.seed;
  j["max_rel_err"] = r.max_rel_err;
  j["per_tensor"] = nlohmann::ordered_json::object();
  for (const auto& [name, err] : r.per_tensor) j["per_tensor"][name] = err;
  return j;
}

/// Copy-mechanism output mixture between vocabulary generation and copied
/// source concepts.
inline std::vector<double> copy_mixture(
    const std::vector<double>& p_hat, double p_cp,
    const std::vector<double>& attn_row,
    const std::vector<std::vector<int>>& concept_sets) {
  auto sums_to_one = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return std::abs(s - 1.0) <= 1e-9;
  };
  if (p_cp < 0 || p_cp > 1)
    throw std::invalid_argument("p_cp must lie in [0, 1]");
  if (!sums_to_one(p_hat) || !sums_to_one(attn_row))
    throw std::invalid_argument("copy_mixture inputs must be normalized");
  std::vector<int> owner(attn_row.size(), -1);
  for (std::size_t w = 0; w < concept_sets.size(); ++w)
    for (int s : concept_sets[w]) {
      if (s < 0 || s >= static_cast<int>(attn_row.size()) || owner[s] != -1)
        throw std::invalid_argument(
            "concept_sets must partition the concept indices");
      owner[s] = static_cast<int>(w);
    }
  for (int o : owner)
    if (o < 0)
      throw std::invalid_argument(
          "concept_sets must partition the concept indices");
  std::vector<double> out(p_hat.size());
  for (std::size_t w = 0; w < p_hat.size(); ++w) {
    double copied = 0;
    if (w < concept_sets.size())
      for (int s : concept_sets[w]) copied += attn_row[s];
    out[w] = (1 - p_cp) * p_hat[w] + p_cp * copied;
  }
  return out;
}

}  // namespace tdmask
