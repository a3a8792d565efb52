#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dhvo/common.hpp"
#include "dhvo/envsim.hpp"
#include "dhvo/nncore.hpp"

namespace dhvo::gatenc {

struct GatConfig {
  int in_features = env::FeatureMatrix::kWidth;  // F
  int heads = 2;                                 // K
  int feat_per_head = 6;                         // F'
  double leaky_slope = 0.2;

  int out_width() const { return heads * feat_per_head; }
  void validate() const {
    if (in_features < 1 || heads < 1 || feat_per_head < 1)
      throw config_error("gat: dimensions must be >= 1");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
      throw config_error("gat: leaky_slope must lie in (0,1)");
  }
};

// Per head k: a linear map W^k (F x F') and an attention vector a^k (2F')
// scoring concatenated transformed feature pairs.
struct GatParams {
  GatConfig cfg;
  std::vector<nn::ParamBlock> W;  // heads x (F x F')
  std::vector<nn::ParamBlock> a;  // heads x (2F' x 1)

  explicit GatParams(GatConfig c = {}) : cfg(c) {
    cfg.validate();
    for (int k = 0; k < cfg.heads; ++k) {
      W.emplace_back("gat.W." + std::to_string(k), cfg.in_features, cfg.feat_per_head);
      a.emplace_back("gat.a." + std::to_string(k), 2 * cfg.feat_per_head, 1);
    }
  }

  void init(Rng& rng) {
    for (int k = 0; k < cfg.heads; ++k) {
      W[k].init_glorot(rng, cfg.in_features, cfg.feat_per_head);
      a[k].init_glorot(rng, 2 * cfg.feat_per_head, 1);
    }
  }

  std::vector<nn::ParamBlock*> blocks() {
    std::vector<nn::ParamBlock*> out;
    for (auto& b : W) out.push_back(&b);
    for (auto& b : a) out.push_back(&b);
    return out;
  }
  std::vector<const nn::ParamBlock*> blocks() const {
    std::vector<const nn::ParamBlock*> out;
    for (auto& b : W) out.push_back(&b);
    for (auto& b : a) out.push_back(&b);
    return out;
  }

  void copy_values_from(const GatParams& other) {
    for (std::size_t k = 0; k < W.size(); ++k) {
      W[k].value = other.W[k].value;
      a[k].value = other.a[k].value;
    }
  }
};

// Undirected neighbor lists (predecessors plus successors, no self entry);
// the attention itself always includes the self loop.
inline std::vector<std::vector<int>> neighbor_lists(const graph::TaskDag& dag) {
  const int n = dag.size();
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& ni = nbrs[static_cast<std::size_t>(i)];
    ni = dag.predecessors(i);
    const auto& succ = dag.successors(i);
    ni.insert(ni.end(), succ.begin(), succ.end());
    std::sort(ni.begin(), ni.end());
    ni.erase(std::unique(ni.begin(), ni.end()), ni.end());
  }
  return nbrs;
}

// Everything the backward pass needs from a forward evaluation.
struct GatCache {
  int n = 0;
  std::vector<std::vector<int>> attend;             // per node: neighbors + self, sorted
  // Per head, per node: transformed rows, raw pre-activation scores, weights,
  // pre-ReLU aggregates.
  std::vector<nn::Matrix> wh;                       // heads x (n x F')
  std::vector<std::vector<std::vector<double>>> score_pre;  // [k][i][j-index]
  std::vector<std::vector<std::vector<double>>> weight;     // [k][i][j-index]
  std::vector<nn::Matrix> agg_pre;                  // heads x (n x F')
};

// Raw attention logits of node i against `targets` for head k:
// LeakyReLU(a^k . [W^k h_i || W^k h_j]).
inline std::vector<double> attention_scores(const nn::Matrix& wh, const std::vector<int>& targets,
                                            int i, const nn::ParamBlock& a_vec, double slope) {
  const int fp = wh.cols;
  std::vector<double> scores(targets.size());
  double self_part = 0.0;
  for (int c = 0; c < fp; ++c) self_part += a_vec.value(c, 0) * wh(i, c);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const int j = targets[t];
    double s = self_part;
    for (int c = 0; c < fp; ++c) s += a_vec.value(fp + c, 0) * wh(j, c);
    scores[t] = nn::leaky_relu(s, slope);
  }
  return scores;
}

// Multi-head attention encoding flattened row-major and zero-padded to
// n_max rows of width K*F'.
inline std::vector<double> encode(const env::FeatureMatrix& features,
                                  const std::vector<std::vector<int>>& neighbors,
                                  const GatParams& params, int n_max, GatCache* cache = nullptr) {
  const GatConfig& cfg = params.cfg;
  const int n = features.n;
  const int fp = cfg.feat_per_head;
  if (n > n_max) throw config_error("gat encode: N exceeds n_max");
  if (static_cast<int>(neighbors.size()) != n)
    throw config_error("gat encode: neighbor list size mismatch");

  std::vector<std::vector<int>> attend(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& t = attend[static_cast<std::size_t>(i)];
    t = neighbors[static_cast<std::size_t>(i)];
    t.push_back(i);
    std::sort(t.begin(), t.end());
  }

  std::vector<double> out(static_cast<std::size_t>(n_max) * cfg.out_width(), 0.0);
  if (cache) {
    cache->n = n;
    cache->attend = attend;
    cache->wh.assign(static_cast<std::size_t>(cfg.heads), {});
    cache->score_pre.assign(static_cast<std::size_t>(cfg.heads), {});
    cache->weight.assign(static_cast<std::size_t>(cfg.heads), {});
    cache->agg_pre.assign(static_cast<std::size_t>(cfg.heads), {});
  }

  for (int k = 0; k < cfg.heads; ++k) {
    const nn::ParamBlock& Wk = params.W[static_cast<std::size_t>(k)];
    const nn::ParamBlock& ak = params.a[static_cast<std::size_t>(k)];
    // wh = h W  (n x F')
    nn::Matrix wh(n, fp);
    for (int i = 0; i < n; ++i) {
      const double* hi = &features.values[static_cast<std::size_t>(i) * env::FeatureMatrix::kWidth];
      for (int f = 0; f < cfg.in_features; ++f) {
        const double hv = hi[f];
        if (hv == 0.0) continue;
        const double* wrow = &Wk.value.data[static_cast<std::size_t>(f) * fp];
        double* whrow = &wh.data[static_cast<std::size_t>(i) * fp];
        for (int c = 0; c < fp; ++c) whrow[c] += hv * wrow[c];
      }
    }

    std::vector<std::vector<double>> head_scores(static_cast<std::size_t>(n));
    std::vector<std::vector<double>> head_weights(static_cast<std::size_t>(n));
    nn::Matrix agg_pre(n, fp);
    for (int i = 0; i < n; ++i) {
      const auto& targets = attend[static_cast<std::size_t>(i)];
      // raw pre-activation scores kept for the backward pass
      std::vector<double> pre(targets.size());
      double self_part = 0.0;
      for (int c = 0; c < fp; ++c) self_part += ak.value(c, 0) * wh(i, c);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        double s = self_part;
        const int j = targets[t];
        for (int c = 0; c < fp; ++c) s += ak.value(fp + c, 0) * wh(j, c);
        pre[t] = s;
      }
      std::vector<double> act(targets.size());
      for (std::size_t t = 0; t < targets.size(); ++t)
        act[t] = nn::leaky_relu(pre[t], cfg.leaky_slope);
      std::vector<std::uint8_t> all(targets.size(), 1);
      std::vector<double> w = nn::masked_softmax(act, all);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const int j = targets[t];
        for (int c = 0; c < fp; ++c) agg_pre(i, c) += w[t] * wh(j, c);
      }
      head_scores[static_cast<std::size_t>(i)] = std::move(pre);
      head_weights[static_cast<std::size_t>(i)] = std::move(w);
    }

    for (int i = 0; i < n; ++i) {
      double* row = &out[static_cast<std::size_t>(i) * cfg.out_width() + k * fp];
      for (int c = 0; c < fp; ++c) row[c] = std::max(0.0, agg_pre(i, c));
    }
    if (cache) {
      cache->wh[static_cast<std::size_t>(k)] = std::move(wh);
      cache->score_pre[static_cast<std::size_t>(k)] = std::move(head_scores);
      cache->weight[static_cast<std::size_t>(k)] = std::move(head_weights);
      cache->agg_pre[static_cast<std::size_t>(k)] = std::move(agg_pre);
    }
  }
  return out;
}

// Accumulates parameter gradients for one encoded sample; optionally also
// returns gradients w.r.t. the input features (used by the gradient audit,
// not by training).
inline void encode_backward(const std::vector<double>& grad_out, const GatCache& cache,
                            const env::FeatureMatrix& features, GatParams& params,
                            nn::Matrix* grad_features = nullptr) {
  const GatConfig& cfg = params.cfg;
  const int n = cache.n;
  const int fp = cfg.feat_per_head;
  if (grad_features) *grad_features = nn::Matrix(n, cfg.in_features);

  for (int k = 0; k < cfg.heads; ++k) {
    const nn::Matrix& wh = cache.wh[static_cast<std::size_t>(k)];
    const nn::Matrix& agg_pre = cache.agg_pre[static_cast<std::size_t>(k)];
    nn::ParamBlock& Wk = params.W[static_cast<std::size_t>(k)];
    nn::ParamBlock& ak = params.a[static_cast<std::size_t>(k)];

    nn::Matrix grad_wh(n, fp);
    for (int i = 0; i < n; ++i) {
      const auto& targets = cache.attend[static_cast<std::size_t>(i)];
      const auto& w = cache.weight[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
      const auto& pre = cache.score_pre[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];

      // through the output ReLU
      std::vector<double> g_agg(static_cast<std::size_t>(fp));
      const double* go = &grad_out[static_cast<std::size_t>(i) * cfg.out_width() + k * fp];
      for (int c = 0; c < fp; ++c)
        g_agg[static_cast<std::size_t>(c)] = agg_pre(i, c) > 0.0 ? go[c] : 0.0;

      // agg_i = sum_j w_ij wh_j
      std::vector<double> g_w(targets.size(), 0.0);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const int j = targets[t];
        double acc = 0.0;
        for (int c = 0; c < fp; ++c) {
          acc += g_agg[static_cast<std::size_t>(c)] * wh(j, c);
          grad_wh(j, c) += w[t] * g_agg[static_cast<std::size_t>(c)];
        }
        g_w[t] = acc;
      }

      // softmax and LeakyReLU
      std::vector<std::uint8_t> all(targets.size(), 1);
      std::vector<double> g_act = nn::masked_softmax_backward(w, all, g_w);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const double g_pre = g_act[t] * nn::leaky_relu_grad(pre[t], cfg.leaky_slope);
        if (g_pre == 0.0) continue;
        const int j = targets[t];
        // pre = a[0:fp] . wh_i + a[fp:2fp] . wh_j
        for (int c = 0; c < fp; ++c) {
          ak.gradient(c, 0) += g_pre * wh(i, c);
          ak.gradient(fp + c, 0) += g_pre * wh(j, c);
          grad_wh(i, c) += g_pre * ak.value(c, 0);
          grad_wh(j, c) += g_pre * ak.value(fp + c, 0);
        }
      }
    }

    // wh = h W
    for (int j = 0; j < n; ++j) {
      const double* hj = &features.values[static_cast<std::size_t>(j) * env::FeatureMatrix::kWidth];
      const double* gw = &grad_wh.data[static_cast<std::size_t>(j) * fp];
      for (int f = 0; f < cfg.in_features; ++f) {
        const double hv = hj[f];
        double* wgrow = &Wk.gradient.data[static_cast<std::size_t>(f) * fp];
        const double* wvrow = &Wk.value.data[static_cast<std::size_t>(f) * fp];
        double acc = 0.0;
        for (int c = 0; c < fp; ++c) {
          wgrow[c] += hv * gw[c];
          acc += wvrow[c] * gw[c];
        }
        if (grad_features) (*grad_features)(j, f) += acc;
      }
    }
  }
}

}  // namespace dhvo::gatenc
