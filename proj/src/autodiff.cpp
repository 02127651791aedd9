// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "stgp/autodiff.hpp"

#include "stgp/params.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace stgp::ad {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var Tape::push(Mat value, bool requires_grad, std::function<void()> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::g(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::constant(Mat value) { return push(std::move(value), false); }

Var Tape::variable(Mat value) { return push(std::move(value), true, [] {}); }

Var Tape::param(Parameter& p) {
  Var v = push(p.value, p.trainable, [] {});
  nodes_[v.id].param = &p;
  return v;
}

void Tape::backward(Var out) {
  if (val(out.id).size() != 1) throw std::invalid_argument("backward: output must be 1x1");
  if (!rg(out)) return;
  g(out.id)(0, 0) += 1.0;
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward();
  }
  for (Node& n : nodes_) {
    if (n.param && n.requires_grad && n.grad.size() != 0) {
      Parameter& p = *n.param;
      if (p.grad.size() == 0) p.grad = Mat::Zero(p.value.rows(), p.value.cols());
      p.grad += n.grad;
    }
  }
}

Var Tape::matmul(Var a, Var b) {
  if (val(a.id).cols() != val(b.id).rows()) throw std::invalid_argument("matmul: inner dims");
  Mat out = val(a.id) * val(b.id);
  const bool r = rg(a) || rg(b);
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), r, [this, a, b, o] {
    const Mat& go = nodes_[o.id].grad;
    if (rg(a)) g(a.id).noalias() += go * val(b.id).transpose();
    if (rg(b)) g(b.id).noalias() += val(a.id).transpose() * go;
  });
}

Var Tape::add(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "add");
  Var o{static_cast<int>(nodes_.size())};
  return push(val(a.id) + val(b.id), rg(a) || rg(b), [this, a, b, o] {
    const Mat& go = nodes_[o.id].grad;
    if (rg(a)) g(a.id) += go;
    if (rg(b)) g(b.id) += go;
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "sub");
  Var o{static_cast<int>(nodes_.size())};
  return push(val(a.id) - val(b.id), rg(a) || rg(b), [this, a, b, o] {
    const Mat& go = nodes_[o.id].grad;
    if (rg(a)) g(a.id) += go;
    if (rg(b)) g(b.id) -= go;
  });
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "mul");
  Var o{static_cast<int>(nodes_.size())};
  return push(val(a.id).cwiseProduct(val(b.id)), rg(a) || rg(b), [this, a, b, o] {
    const Mat& go = nodes_[o.id].grad;
    if (rg(a)) g(a.id) += go.cwiseProduct(val(b.id));
    if (rg(b)) g(b.id) += go.cwiseProduct(val(a.id));
  });
}

Var Tape::scale(Var a, double s) {
  Var o{static_cast<int>(nodes_.size())};
  return push(val(a.id) * s, rg(a), [this, a, s, o] { g(a.id) += nodes_[o.id].grad * s; });
}

Var Tape::add_row(Var a, Var row) {
  const Mat& r = val(row.id);
  if (r.rows() != 1 || r.cols() != val(a.id).cols()) throw std::invalid_argument("add_row: shape");
  Mat out = val(a.id);
  out.rowwise() += r.row(0);
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a) || rg(row), [this, a, row, o] {
    const Mat& go = nodes_[o.id].grad;
    if (rg(a)) g(a.id) += go;
    if (rg(row)) g(row.id) += go.colwise().sum();
  });
}

Var Tape::sigmoid(Var a) {
  Mat out = val(a.id).unaryExpr([](double x) { return ad::sigmoid(x); });
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [this, a, o] {
    const Mat& y = val(o.id);
    g(a.id).array() += nodes_[o.id].grad.array() * y.array() * (1.0 - y.array());
  });
}

Var Tape::gelu(Var a) {
  Mat out = val(a.id).unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  });
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [this, a, o] {
    const Mat& x = val(a.id);
    const Mat& go = nodes_[o.id].grad;
    Mat& ga = g(a.id);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double xi = x.data()[i];
      const double th = std::tanh(kGeluC * (xi + kGeluA * xi * xi * xi));
      const double d = 0.5 * (1.0 + th) +
                       0.5 * xi * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * xi * xi);
      ga.data()[i] += go.data()[i] * d;
    }
  });
}

Var Tape::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = val(a.id).sum();
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [this, a, o] {
    g(a.id).array() += nodes_[o.id].grad(0, 0);
  });
}

Var Tape::weighted_sum(Var a, const Mat& w) {
  check_same_shape(val(a.id), w, "weighted_sum");
  Mat out(1, 1);
  out(0, 0) = val(a.id).cwiseProduct(w).sum();
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a), [this, a, w, o] { g(a.id) += w * nodes_[o.id].grad(0, 0); });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Mat& xv = val(x.id);
  const Eigen::Index n = xv.rows(), d = xv.cols();
  if (val(gamma.id).cols() != d || val(beta.id).cols() != d) {
    throw std::invalid_argument("layer_norm: parameter width");
  }
  auto xhat = std::make_shared<Mat>(n, d);
  auto inv = std::make_shared<Eigen::VectorXd>(n);
  Mat out(n, d);
  const auto gm = val(gamma.id).row(0);
  const auto bt = val(beta.id).row(0);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    const double iv = 1.0 / std::sqrt(var + eps);
    (*inv)(r) = iv;
    xhat->row(r) = (xv.row(r).array() - mu) * iv;
    out.row(r) = xhat->row(r).cwiseProduct(gm) + bt;
  }
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(x) || rg(gamma) || rg(beta), [this, x, gamma, beta, o, xhat, inv] {
    const Mat& go = nodes_[o.id].grad;
    if (rg(gamma)) g(gamma.id) += go.cwiseProduct(*xhat).colwise().sum();
    if (rg(beta)) g(beta.id) += go.colwise().sum();
    if (rg(x)) {
      const auto gm = val(gamma.id).row(0);
      const double d = static_cast<double>(go.cols());
      Mat& gx = g(x.id);
      for (Eigen::Index r = 0; r < go.rows(); ++r) {
        Eigen::RowVectorXd dxhat = go.row(r).cwiseProduct(gm);
        const double s1 = dxhat.sum();
        const double s2 = dxhat.dot(xhat->row(r));
        gx.row(r) += ((*inv)(r) / d) *
                     (d * dxhat.array() - s1 - xhat->row(r).array() * s2).matrix();
      }
    }
  });
}

Var Tape::gather_rows(Var x, std::vector<int> idx) {
  const Mat& xv = val(x.id);
  Mat out = Mat::Zero(static_cast<Eigen::Index>(idx.size()), xv.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= xv.rows()) throw std::out_of_range("gather_rows: index");
    if (idx[r] >= 0) out.row(r) = xv.row(idx[r]);
  }
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(x), [this, x, o, idx = std::move(idx)] {
    const Mat& go = nodes_[o.id].grad;
    Mat& gx = g(x.id);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= 0) gx.row(idx[r]) += go.row(r);
    }
  });
}

Var Tape::concat_rows(Var a, Var b) {
  const Mat& av = val(a.id);
  const Mat& bv = val(b.id);
  if (av.cols() != bv.cols()) throw std::invalid_argument("concat_rows: width mismatch");
  Mat out(av.rows() + bv.rows(), av.cols());
  out.topRows(av.rows()) = av;
  out.bottomRows(bv.rows()) = bv;
  const Eigen::Index na = av.rows();
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(a) || rg(b), [this, a, b, o, na] {
    const Mat& go = nodes_[o.id].grad;
    if (rg(a)) g(a.id) += go.topRows(na);
    if (rg(b)) g(b.id) += go.bottomRows(go.rows() - na);
  });
}

Var Tape::fill_rows(Var x, std::vector<int> src, Var token) {
  const Mat& xv = val(x.id);
  const Mat& tv = val(token.id);
  if (tv.rows() != 1 || tv.cols() != xv.cols()) throw std::invalid_argument("fill_rows: token");
  Mat out(static_cast<Eigen::Index>(src.size()), xv.cols());
  for (std::size_t r = 0; r < src.size(); ++r) {
    if (src[r] >= xv.rows()) throw std::out_of_range("fill_rows: index");
    out.row(r) = src[r] >= 0 ? xv.row(src[r]) : tv.row(0);
  }
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(x) || rg(token), [this, x, token, o, src = std::move(src)] {
    const Mat& go = nodes_[o.id].grad;
    for (std::size_t r = 0; r < src.size(); ++r) {
      if (src[r] >= 0) {
        if (rg(x)) g(x.id).row(src[r]) += go.row(r);
      } else if (rg(token)) {
        g(token.id).row(0) += go.row(r);
      }
    }
  });
}

Var Tape::node_mix(const Mat& adjacency, Var x) {
  const Mat& xv = val(x.id);
  const Eigen::Index n = adjacency.rows();
  if (adjacency.cols() != n || n == 0 || xv.rows() % n != 0) {
    throw std::invalid_argument("node_mix: adjacency does not match rows");
  }
  const Eigen::Index width = (xv.rows() / n) * xv.cols();
  using Flat = Eigen::Map<const Mat>;
  Mat out(xv.rows(), xv.cols());
  Eigen::Map<Mat>(out.data(), n, width).noalias() = adjacency * Flat(xv.data(), n, width);
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(x), [this, x, o, adjacency, n, width] {
    const Mat& go = nodes_[o.id].grad;
    Mat& gx = g(x.id);
    Eigen::Map<Mat>(gx.data(), n, width).noalias() +=
        adjacency.transpose() * Eigen::Map<const Mat>(go.data(), n, width);
  });
}

Var Tape::attention(Var q, Var k, Var v, int group_size, int heads, const AttentionBias* bias,
                    AttentionProbe* probe) {
  const Mat& qv = val(q.id);
  const Mat& kv = val(k.id);
  const Mat& vv = val(v.id);
  check_same_shape(qv, kv, "attention");
  check_same_shape(qv, vv, "attention");
  const Eigen::Index rows = qv.rows(), width = qv.cols();
  if (group_size <= 0 || rows % group_size != 0) throw std::invalid_argument("attention: group");
  if (heads <= 0 || width % heads != 0) throw std::invalid_argument("attention: heads");
  const int groups = static_cast<int>(rows / group_size);
  const int dk = static_cast<int>(width / heads);
  const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
  if (bias) {
    if (bias->buckets.rows() != group_size || bias->buckets.cols() != group_size) {
      throw std::invalid_argument("attention: bias bucket shape");
    }
    if (val(bias->table.id).cols() != heads) throw std::invalid_argument("attention: bias heads");
  }

  auto probs = std::make_shared<std::vector<Mat>>(static_cast<std::size_t>(groups) * heads);
  Mat out(rows, width);
  for (int gi = 0; gi < groups; ++gi) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(gi) * group_size;
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dk;
      Mat s = (qv.block(r0, c0, group_size, dk) * kv.block(r0, c0, group_size, dk).transpose()) * sc;
      if (bias) {
        const Mat& table = val(bias->table.id);
        for (int a = 0; a < group_size; ++a)
          for (int b = 0; b < group_size; ++b) s(a, b) += table(bias->buckets(a, b), h);
      }
      if (probe && gi == 0 && h == 0) {
        probe->calls.push_back({group_size, groups, heads, s});
      }
      for (int a = 0; a < group_size; ++a) {
        const double mx = s.row(a).maxCoeff();
        s.row(a) = (s.row(a).array() - mx).exp();
        s.row(a) /= s.row(a).sum();
      }
      out.block(r0, c0, group_size, dk).noalias() = s * vv.block(r0, c0, group_size, dk);
      (*probs)[static_cast<std::size_t>(gi) * heads + h] = std::move(s);
    }
  }

  const bool bias_rg = bias && rg(bias->table);
  const bool r = rg(q) || rg(k) || rg(v) || bias_rg;
  IntMat buckets = bias ? bias->buckets : IntMat();
  Var table = bias ? bias->table : Var{};
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), r, [=, this] {
    const Mat& go = nodes_[o.id].grad;
    const Mat& qv = val(q.id);
    const Mat& kv = val(k.id);
    const Mat& vv = val(v.id);
    for (int gi = 0; gi < groups; ++gi) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(gi) * group_size;
      for (int h = 0; h < heads; ++h) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dk;
        const Mat& p = (*probs)[static_cast<std::size_t>(gi) * heads + h];
        const auto dO = go.block(r0, c0, group_size, dk);
        if (rg(v)) g(v.id).block(r0, c0, group_size, dk).noalias() += p.transpose() * dO;
        Mat dp = dO * vv.block(r0, c0, group_size, dk).transpose();
        Eigen::VectorXd rowdot = (dp.cwiseProduct(p)).rowwise().sum();
        Mat ds = p.cwiseProduct((dp.colwise() - rowdot));
        if (bias_rg) {
          Mat& gt = g(table.id);
          for (int a = 0; a < group_size; ++a)
            for (int b = 0; b < group_size; ++b) gt(buckets(a, b), h) += ds(a, b);
        }
        if (rg(q)) g(q.id).block(r0, c0, group_size, dk).noalias() += (ds * kv.block(r0, c0, group_size, dk)) * sc;
        if (rg(k)) g(k.id).block(r0, c0, group_size, dk).noalias() += (ds.transpose() * qv.block(r0, c0, group_size, dk)) * sc;
      }
    }
  });
}

Var Tape::prompt(Var h, Var bank, double phi) {
  const Mat& hv = val(h.id);
  const Mat& pv = val(bank.id);
  if (pv.cols() != hv.cols()) throw std::invalid_argument("prompt: width mismatch");
  Mat sig = (hv * pv.transpose()).unaryExpr([](double x) { return ad::sigmoid(x); });
  if (sig.size() > 0) {
    prompt_margin_ = std::min(prompt_margin_, (sig.array() - phi).abs().minCoeff());
  }
  auto alpha = std::make_shared<Mat>(sig.unaryExpr([phi](double s) { return s > phi ? s : 0.0; }));
  auto sigp = std::make_shared<Mat>(std::move(sig));
  Mat out = hv;
  if (alpha->size() > 0 && alpha->cwiseAbs().maxCoeff() > 0.0) out.noalias() += (*alpha) * pv;
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(h) || rg(bank), [this, h, bank, o, alpha, sigp] {
    const Mat& go = nodes_[o.id].grad;
    const Mat& hv = val(h.id);
    const Mat& pv = val(bank.id);
    Mat dalpha = go * pv.transpose();
    Mat ds = Mat::Zero(dalpha.rows(), dalpha.cols());
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      if (alpha->data()[i] != 0.0) {
        const double s = sigp->data()[i];
        ds.data()[i] = dalpha.data()[i] * s * (1.0 - s);
      }
    }
    if (rg(h)) g(h.id).noalias() += go + ds * pv;
    if (rg(bank)) {
      g(bank.id).noalias() += alpha->transpose() * go;
      g(bank.id).noalias() += ds.transpose() * hv;
    }
  });
}

Var Tape::gate_mix(Var z, Var a, Var b) {
  const Mat& zv = val(z.id);
  const Mat& av = val(a.id);
  const Mat& bv = val(b.id);
  check_same_shape(zv, av, "gate_mix");
  check_same_shape(av, bv, "gate_mix");
  Mat out(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double zi = zv.data()[i], ai = av.data()[i], bi = bv.data()[i];
    const double m = zi * ai + (1.0 - zi) * bi;
    out.data()[i] = std::clamp(m, std::min(ai, bi), std::max(ai, bi));
  }
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(z) || rg(a) || rg(b), [this, z, a, b, o] {
    const Mat& go = nodes_[o.id].grad;
    const Mat& zv = val(z.id);
    if (rg(z)) g(z.id) += go.cwiseProduct(val(a.id) - val(b.id));
    if (rg(a)) g(a.id) += go.cwiseProduct(zv);
    if (rg(b)) g(b.id).array() += go.array() * (1.0 - zv.array());
  });
}

Var Tape::masked_l1(Var pred, const Mat& target, const Mat& weight) {
  const Mat& pv = val(pred.id);
  check_same_shape(pv, target, "masked_l1");
  check_same_shape(pv, weight, "masked_l1");
  const double denom = weight.sum();
  if (!(denom > 0.0)) throw std::invalid_argument("masked_l1: empty eval cells");
  Mat out(1, 1);
  out(0, 0) = (pv - target).cwiseAbs().cwiseProduct(weight).sum() / denom;
  Var o{static_cast<int>(nodes_.size())};
  return push(std::move(out), rg(pred), [this, pred, target, weight, denom, o] {
    const double go = nodes_[o.id].grad(0, 0);
    const Mat& pv = val(pred.id);
    Mat& gp = g(pred.id);
    for (Eigen::Index i = 0; i < pv.size(); ++i) {
      const double w = weight.data()[i];
      if (w == 0.0) continue;
      const double d = pv.data()[i] - target.data()[i];
      const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      gp.data()[i] += go * w * sgn / denom;
    }
  });
}

}  // namespace stgp::ad
