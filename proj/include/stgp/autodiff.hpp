// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// Every op records its output on a Tape together with a closure that
// propagates the output gradient back to its inputs. Rows index tokens
// (node-major patches, i * T + t), columns index features.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace stgp {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IntMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter;

namespace ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Records the score matrix shapes seen by each attention call, plus the raw
/// logits of the first group for inspection.
struct AttentionProbe {
  struct Call {
    int group_size = 0;
    int num_groups = 0;
    int heads = 0;
    Mat first_group_logits;  // head 0, group 0
  };
  std::vector<Call> calls;
};

/// Additive per-head logit bias for grouped attention. `buckets` is
/// group_size x group_size; `table` is (num_buckets x heads).
struct AttentionBias {
  IntMat buckets;
  Var table;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  /// Leaf that always requires a gradient; read it back with grad().
  Var variable(Mat value);
  /// Leaf bound to a model parameter. Gradients are accumulated into
  /// `p.grad` by backward() iff `p.trainable`.
  Var param(Parameter& p);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  Mat grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  /// Smallest |sigmoid(h . p) - phi| seen by prompt() on this tape.
  double prompt_margin() const { return prompt_margin_; }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and runs the tape backwards.
  void backward(Var out);

  // Elementwise and linear algebra.
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_row(Var a, Var row);  // a + broadcast 1 x d row
  Var sigmoid(Var a);
  Var gelu(Var a);
  Var sum(Var a);                       // 1 x 1
  Var weighted_sum(Var a, const Mat& w);  // sum(a .* w), 1 x 1

  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

  /// out.row(r) = x.row(idx[r]), or zeros when idx[r] < 0.
  Var gather_rows(Var x, std::vector<int> idx);
  /// Rows of a followed by rows of b.
  Var concat_rows(Var a, Var b);
  /// out.row(r) = x.row(src[r]) when src[r] >= 0, else the 1 x d token.
  Var fill_rows(Var x, std::vector<int> src, Var token);
  /// out[i, t] = sum_j A[i, j] x[j, t] for node-major rows (i * steps + t);
  /// the step count is rows(x) / rows(A).
  Var node_mix(const Mat& adjacency, Var x);

  /// Multi-head self-attention inside contiguous row groups.
  Var attention(Var q, Var k, Var v, int group_size, int heads,
                const AttentionBias* bias = nullptr, AttentionProbe* probe = nullptr);

  /// Thresholded prompt bank: out = h + sum_j alpha_j p_j with
  /// alpha_j = sigmoid(h . p_j) when that exceeds phi, else 0.
  Var prompt(Var h, Var bank, double phi);

  /// z .* a + (1 - z) .* b, clamped into the closed interval spanned by a and b.
  Var gate_mix(Var z, Var a, Var b);

  /// Mean absolute error over entries where `weight` is nonzero.
  Var masked_l1(Var pred, const Mat& target, const Mat& weight);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void()> backward;
  };

  Var push(Mat value, bool requires_grad, std::function<void()> backward = {});
  Mat& g(int id);
  bool rg(Var v) const { return nodes_[v.id].requires_grad; }
  const Mat& val(int id) const { return nodes_[id].value; }

  std::vector<Node> nodes_;
  double prompt_margin_ = std::numeric_limits<double>::infinity();
};

double sigmoid(double x);

}  // namespace ad
}  // namespace stgp
