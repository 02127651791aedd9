// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "stgp/decoder.hpp"

#include <cmath>
#include <stdexcept>

namespace stgp {

void init_decoder(ParamStore& s, const ModelConfig& cfg, std::mt19937_64& rng) {
  if (cfg.kernel % 2 == 0) throw std::invalid_argument("decoder kernel must be odd");
  const int d = cfg.d_dec;
  s.add("decoder.mask_token", init_normal(1, cfg.d_h, 0.02, rng));
  s.add("decoder.pos", init_normal(cfg.max_patches, cfg.d_h, 0.02, rng));
  s.add("decoder.tod", init_normal(24, cfg.d_h, 0.02, rng));
  s.add("decoder.dow", init_normal(7, cfg.d_h, 0.02, rng));
  s.add("decoder.entry.weight", init_linear(cfg.d_h, d, rng));
  s.add("decoder.entry.bias", Mat::Zero(1, d));
  for (int l = 0; l < cfg.layers_d; ++l) {
    const std::string p = "decoder.layer." + std::to_string(l) + ".";
    for (int j = 0; j < cfg.kernel; ++j)
      s.add(p + "tcn.w" + std::to_string(j), init_linear(d, d, rng) / std::sqrt(static_cast<double>(cfg.kernel)));
    s.add(p + "tcn.b", Mat::Zero(1, d));
    s.add(p + "gcn.w_g", init_linear(d, d, rng));
    s.add(p + "gcn.w_self", init_linear(d, d, rng));
    s.add(p + "gate.w1", init_linear(d, d, rng));
    s.add(p + "gate.w2", init_linear(d, d, rng));
    s.add(p + "gate.b", Mat::Zero(1, d));
    s.add(p + "skip.w", init_linear(d, d, rng));
    s.add(p + "skip.b", Mat::Zero(1, d));
  }
}

void init_head(ParamStore& s, const ModelConfig& cfg, std::mt19937_64& rng) {
  const int out = cfg.patch_len * cfg.channels;
  s.add("head.fc1.weight", init_linear(cfg.d_dec, cfg.head_hidden1, rng));
  s.add("head.fc1.bias", Mat::Zero(1, cfg.head_hidden1));
  s.add("head.fc2.weight", init_linear(cfg.head_hidden1, cfg.head_hidden2, rng));
  s.add("head.fc2.bias", Mat::Zero(1, cfg.head_hidden2));
  s.add("head.fc3.weight", init_linear(cfg.head_hidden2, out, rng));
  s.add("head.fc3.bias", Mat::Zero(1, out));
}

ad::Var recover_full(ad::Tape& tape, ad::Var compact, const MaskSpec& mask, ad::Var token) {
  const std::vector<int> rows = unmasked_rows(mask);
  if (static_cast<Eigen::Index>(rows.size()) != tape.value(compact).rows()) {
    throw std::invalid_argument("recover_full: compact block does not match mask");
  }
  std::vector<int> src(static_cast<std::size_t>(mask.nodes) * mask.patches, -1);
  for (std::size_t r = 0; r < rows.size(); ++r) src[rows[r]] = static_cast<int>(r);
  return tape.fill_rows(compact, std::move(src), token);
}

namespace {
ad::Var linear(Binder& b, ad::Var x, const std::string& w, const std::string& bias) {
  return b.tape().add_row(b.tape().matmul(x, b(w)), b(bias));
}
}  // namespace

LayerOutput gated_st_layer(Binder& b, ad::Var h, const Mat& adjacency, int steps,
                           const std::string& p, int kernel) {
  ad::Tape& t = b.tape();
  const int rows = static_cast<int>(t.value(h).rows());
  const int nodes = rows / steps;
  const int half = kernel / 2;

  ad::Var tcn{};
  for (int j = 0; j < kernel; ++j) {
    const int off = j - half;
    std::vector<int> idx(rows);
    for (int i = 0; i < nodes; ++i)
      for (int k = 0; k < steps; ++k) {
        const int src = k + off;
        idx[i * steps + k] = (src >= 0 && src < steps) ? i * steps + src : -1;
      }
    ad::Var term = t.matmul(off == 0 ? h : t.gather_rows(h, std::move(idx)),
                            b(p + "tcn.w" + std::to_string(j)));
    tcn = tcn.valid() ? t.add(tcn, term) : term;
  }
  tcn = t.add_row(tcn, b(p + "tcn.b"));

  ad::Var gcn = t.add(t.matmul(t.node_mix(adjacency, h), b(p + "gcn.w_g")),
                      t.matmul(h, b(p + "gcn.w_self")));
  ad::Var z = t.sigmoid(t.add_row(
      t.add(t.matmul(tcn, b(p + "gate.w1")), t.matmul(gcn, b(p + "gate.w2"))), b(p + "gate.b")));
  ad::Var g = t.gate_mix(z, tcn, gcn);
  return {t.add(g, h), g};
}

ad::Var prediction_head(Binder& b, ad::Var x) {
  ad::Tape& t = b.tape();
  x = t.gelu(linear(b, x, "head.fc1.weight", "head.fc1.bias"));
  x = t.gelu(linear(b, x, "head.fc2.weight", "head.fc2.bias"));
  return linear(b, x, "head.fc3.weight", "head.fc3.bias");
}

ad::Var decode(Binder& b, ad::Var h_star, const Mat& adjacency, const std::vector<int>& tod,
               const std::vector<int>& dow, bool add_pos, const ModelConfig& cfg) {
  ad::Tape& t = b.tape();
  const int steps = static_cast<int>(tod.size());
  const int rows = static_cast<int>(t.value(h_star).rows());
  if (steps == 0 || rows % steps != 0 || rows / steps != adjacency.rows()) {
    throw std::invalid_argument("decode: input does not match graph and steps");
  }
  if (steps > cfg.max_patches) throw std::out_of_range("step index outside positional table");
  const int nodes = rows / steps;
  std::vector<int> ti(rows), di(rows), pi(rows);
  for (int i = 0; i < nodes; ++i)
    for (int k = 0; k < steps; ++k) {
      ti[i * steps + k] = tod[k];
      di[i * steps + k] = dow[k];
      pi[i * steps + k] = k;
    }
  ad::Var x = h_star;
  if (add_pos) x = t.add(x, t.gather_rows(b("decoder.pos"), std::move(pi)));
  x = t.add(x, t.gather_rows(b("decoder.tod"), std::move(ti)));
  x = t.add(x, t.gather_rows(b("decoder.dow"), std::move(di)));
  x = linear(b, x, "decoder.entry.weight", "decoder.entry.bias");

  ad::Var skip{};
  for (int l = 0; l < cfg.layers_d; ++l) {
    const std::string p = "decoder.layer." + std::to_string(l) + ".";
    LayerOutput lo = gated_st_layer(b, x, adjacency, steps, p, cfg.kernel);
    ad::Var s = linear(b, lo.gated, p + "skip.w", p + "skip.b");
    skip = skip.valid() ? t.add(skip, s) : s;
    x = lo.out;
  }
  return prediction_head(b, skip.valid() ? skip : x);
}

Mat eval_weights(const MaskSpec& mask, int width) {
  Mat w = Mat::Zero(static_cast<Eigen::Index>(mask.nodes) * mask.patches, width);
  for (const Cell& c : mask.effective_eval_cells())
    w.row(static_cast<Eigen::Index>(c.node) * mask.patches + c.step).setOnes();
  return w;
}

ad::Var masked_mae(ad::Tape& tape, ad::Var pred, const Mat& target, const MaskSpec& mask) {
  const Mat w = eval_weights(mask, static_cast<int>(target.cols()));
  if (w.sum() == 0.0) throw std::invalid_argument("masked_mae: empty eval cells");
  return tape.masked_l1(pred, target, w);
}

}  // namespace stgp
