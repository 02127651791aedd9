// Copyright 2026 The STGP Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "gradcheck.hpp"
#include "stgp/autodiff.hpp"
#include "stgp/params.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace stgp;
using stgp::testing::check_gradients;
using stgp::testing::random_mat;

namespace {

// Random projection so every output entry reaches the scalar.
Mat probe_weights(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_mat(rows, cols, rng);
}

void expect_ok(const stgp::testing::GradReport& r) {
  INFO(r.first_failure);
  CHECK(r.checked > 0);
  CHECK(r.failed == 0);
}

}  // namespace

TEST_CASE("elementwise and linear ops") {
  std::mt19937_64 rng(1);
  const Mat w = probe_weights(3, 4, 2);
  expect_ok(check_gradients(
      [&](ad::Tape& t, const std::vector<ad::Var>& v) {
        ad::Var x = t.matmul(v[0], v[1]);            // 3x4
        x = t.add(x, t.mul(x, v[2]));                // 3x4
        x = t.sub(x, t.scale(v[2], 0.3));
        x = t.add_row(x, v[3]);
        return t.weighted_sum(t.add(t.sigmoid(x), t.gelu(x)), w);
      },
      {random_mat(3, 5, rng), random_mat(5, 4, rng), random_mat(3, 4, rng), random_mat(1, 4, rng)}));
}

TEST_CASE("sum and weighted_sum") {
  ad::Tape t;
  ad::Var x = t.variable((Mat(2, 2) << 1, 2, 3, 4).finished());
  CHECK(t.value(t.sum(x))(0, 0) == 10.0);
  Mat w = (Mat(2, 2) << 1, 0, 0, 2).finished();
  ad::Var s = t.weighted_sum(x, w);
  CHECK(t.value(s)(0, 0) == 9.0);
  t.backward(s);
  CHECK(t.grad(x) == w);
}

TEST_CASE("layer norm") {
  std::mt19937_64 rng(3);
  const Mat w = probe_weights(4, 6, 4);
  expect_ok(check_gradients(
      [&](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.weighted_sum(t.layer_norm(v[0], v[1], v[2]), w);
      },
      {random_mat(4, 6, rng), random_mat(1, 6, rng), random_mat(1, 6, rng)}));

  ad::Tape t;
  ad::Var x = t.constant(random_mat(3, 8, rng, 5.0));
  ad::Var y = t.layer_norm(x, t.constant(Mat::Ones(1, 8)), t.constant(Mat::Zero(1, 8)));
  for (int r = 0; r < 3; ++r) {
    CHECK(std::abs(t.value(y).row(r).mean()) < 1e-12);
    CHECK(t.value(y).row(r).squaredNorm() / 8.0 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("row routing ops") {
  std::mt19937_64 rng(5);
  const Mat w1 = probe_weights(5, 3, 6);
  expect_ok(check_gradients(
      [&](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.weighted_sum(t.gather_rows(v[0], {2, -1, 0, 2, 3}), w1);
      },
      {random_mat(4, 3, rng)}));
  const Mat w2 = probe_weights(7, 3, 7);
  expect_ok(check_gradients(
      [&](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.weighted_sum(t.concat_rows(v[0], v[1]), w2);
      },
      {random_mat(3, 3, rng), random_mat(4, 3, rng)}));
  const Mat w3 = probe_weights(5, 3, 8);
  expect_ok(check_gradients(
      [&](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.weighted_sum(t.fill_rows(v[0], {0, -1, 1, -1, 2}, v[1]), w3);
      },
      {random_mat(3, 3, rng), random_mat(1, 3, rng)}));

  ad::Tape t;
  ad::Var x = t.constant((Mat(2, 2) << 1, 2, 3, 4).finished());
  ad::Var tok = t.constant((Mat(1, 2) << 9, 9).finished());
  const Mat f = t.value(t.fill_rows(x, {1, -1, 0}, tok));
  CHECK(f == (Mat(3, 2) << 3, 4, 9, 9, 1, 2).finished());
  const Mat g = t.value(t.gather_rows(x, {-1, 1}));
  CHECK(g == (Mat(2, 2) << 0, 0, 3, 4).finished());
}

TEST_CASE("node mix") {
  std::mt19937_64 rng(9);
  const Mat a = random_mat(3, 3, rng).cwiseAbs();
  const Mat w = probe_weights(6, 2, 10);
  expect_ok(check_gradients(
      [&](ad::Tape& t, const std::vector<ad::Var>& v) { return t.weighted_sum(t.node_mix(a, v[0]), w); },
      {random_mat(6, 2, rng)}));

  // oracle: out[i, t] = sum_j A[i, j] x[j, t], rows i * steps + t
  ad::Tape t;
  const Mat x = random_mat(6, 2, rng);
  const Mat y = t.value(t.node_mix(a, t.constant(x)));
  for (int i = 0; i < 3; ++i)
    for (int s = 0; s < 2; ++s) {
      Eigen::RowVectorXd ref = Eigen::RowVectorXd::Zero(2);
      for (int j = 0; j < 3; ++j) ref += a(i, j) * x.row(j * 2 + s);
      CHECK((y.row(i * 2 + s) - ref).norm() < 1e-12);
    }
}

TEST_CASE("grouped attention with bias") {
  std::mt19937_64 rng(11);
  ad::AttentionBias bias;
  bias.buckets = IntMat(3, 3);
  bias.buckets << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  const Mat w = probe_weights(6, 4, 12);
  expect_ok(check_gradients(
      [&](ad::Tape& t, const std::vector<ad::Var>& v) {
        ad::AttentionBias b = bias;
        b.table = v[3];
        return t.weighted_sum(t.attention(v[0], v[1], v[2], 3, 2, &b), w);
      },
      {random_mat(6, 4, rng), random_mat(6, 4, rng), random_mat(6, 4, rng), random_mat(3, 2, rng)}));

  // one-row groups: softmax over a single key returns v
  ad::Tape t;
  const Mat v = random_mat(4, 4, rng);
  const Mat out = t.value(t.attention(t.constant(random_mat(4, 4, rng)), t.constant(random_mat(4, 4, rng)),
                                      t.constant(v), 1, 2));
  CHECK((out - v).norm() < 1e-12);
}

TEST_CASE("attention probe records score shapes") {
  std::mt19937_64 rng(13);
  ad::Tape t;
  ad::AttentionProbe probe;
  ad::Var x = t.constant(random_mat(12, 4, rng));
  t.attention(x, x, x, 4, 2, nullptr, &probe);
  REQUIRE(probe.calls.size() == 1);
  CHECK(probe.calls[0].group_size == 4);
  CHECK(probe.calls[0].num_groups == 3);
  CHECK(probe.calls[0].first_group_logits.rows() == 4);
  CHECK(probe.calls[0].first_group_logits.cols() == 4);
}

TEST_CASE("prompt op gradient away from the threshold") {
  std::mt19937_64 rng(17);
  const Mat w = probe_weights(5, 4, 18);
  Mat h = random_mat(5, 4, rng);
  Mat bank = random_mat(3, 4, rng);
  // keep every similarity at least 0.05 away from the cutoff
  for (int tries = 0; tries < 1000; ++tries) {
    const Mat s = (h * bank.transpose()).unaryExpr([](double x) { return ad::sigmoid(x); });
    if ((s.array() - 0.5).abs().minCoeff() >= 0.05) break;
    h = random_mat(5, 4, rng);
    bank = random_mat(3, 4, rng);
  }
  expect_ok(check_gradients(
      [&](ad::Tape& t, const std::vector<ad::Var>& v) { return t.weighted_sum(t.prompt(v[0], v[1], 0.5), w); },
      {h, bank}, 1e-4, 1e-8, 1e-7));
}

TEST_CASE("gate mix and masked l1") {
  std::mt19937_64 rng(19);
  const Mat w = probe_weights(3, 3, 20);
  expect_ok(check_gradients(
      [&](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.weighted_sum(t.gate_mix(t.sigmoid(v[0]), v[1], v[2]), w);
      },
      {random_mat(3, 3, rng), random_mat(3, 3, rng), random_mat(3, 3, rng)}));

  const Mat target = random_mat(4, 2, rng);
  Mat weight = Mat::Zero(4, 2);
  weight.row(1).setOnes();
  weight(3, 0) = 1.0;
  Mat pred = target;
  pred.array() += 0.5;  // every error well away from the kink
  expect_ok(check_gradients(
      [&](ad::Tape& t, const std::vector<ad::Var>& v) { return t.masked_l1(v[0], target, weight); }, {pred}));

  ad::Tape t;
  CHECK_THROWS(t.masked_l1(t.constant(pred), target, Mat::Zero(4, 2)));
}

TEST_CASE("parameters accumulate gradients only when trainable") {
  Parameter p;
  p.value = Mat::Ones(2, 2);
  Parameter q;
  q.value = Mat::Ones(2, 2);
  q.trainable = false;
  ad::Tape t;
  ad::Var s = t.sum(t.mul(t.param(p), t.param(q)));
  t.backward(s);
  CHECK(p.grad == Mat::Ones(2, 2));
  CHECK(q.grad.size() == 0);
}

TEST_CASE("AdamW moves trainable parameters only") {
  ParamStore store;
  store.add("a", Mat::Ones(1, 2));
  store.add("b", Mat::Ones(1, 2));
  store.set_trainable([](const std::string& n) { return n == "a"; });
  store.at("a").grad = Mat::Ones(1, 2);
  store.at("b").grad = Mat::Ones(1, 2);
  AdamW opt(0.1, 0.0);
  opt.step(store);
  // the first bias-corrected Adam step is lr * sign(g)
  CHECK(store.at("a").value(0, 0) == doctest::Approx(0.9));
  CHECK(store.at("b").value(0, 0) == 1.0);
}
