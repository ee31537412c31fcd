#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crn/grad_check.hpp"
#include "crn/nn.hpp"
#include "crn/rng.hpp"
#include "crn/tape.hpp"

using crn::Param;
using crn::ParamStore;
using crn::Rng;
using crn::Tape;
using crn::Tensor;
using crn::Var;

namespace {

template <typename Real>
Tensor<Real> random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<Real> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

// Independent matrix-product oracle: plain triple loop, y = x W^T + b.
template <typename Real>
Tensor<Real> naive_affine(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b) {
  const int64_t M = x.rows(), K = x.cols(), N = w.dim(0);
  Tensor<Real> y({M, N});
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) {
      Real acc = b.size() ? b.data[static_cast<size_t>(j)] : Real(0);
      for (int64_t k = 0; k < K; ++k) acc += x.at(i, k) * w.at(j, k);
      y.at(i, j) = acc;
    }
  return y;
}

}  // namespace

TEST_CASE("linear with identity weight and zero bias is the identity") {
  Tape<float> t;
  Tensor<float> w({3, 3});
  for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0f;
  Rng rng(1);
  Tensor<float> x = random_tensor<float>({2, 3}, rng);
  Var y = t.linear(t.constant(x), t.constant(w), Var{});
  REQUIRE(t.value(y).shape == std::vector<int64_t>{2, 3});
  for (int64_t i = 0; i < x.size(); ++i)
    REQUIRE(t.value(y).data[static_cast<size_t>(i)] == x.data[static_cast<size_t>(i)]);
}

TEST_CASE("linear with zero weight broadcasts the bias") {
  Tape<float> t;
  Tensor<float> w({4, 3});
  Tensor<float> b({4}, {0.5f, -1.0f, 2.0f, 0.0f});
  Rng rng(2);
  Var y = t.linear(t.constant(random_tensor<float>({5, 3}, rng)), t.constant(w), t.constant(b));
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 4; ++j) REQUIRE(t.value(y).at(i, j) == b.data[static_cast<size_t>(j)]);
}

TEST_CASE("linear matches the naive matmul oracle") {
  Rng rng(3);
  Tensor<double> x = random_tensor<double>({3, 4}, rng);
  Tensor<double> w = random_tensor<double>({5, 4}, rng);
  Tensor<double> b = random_tensor<double>({5}, rng);
  Tape<double> t;
  Var y = t.linear(t.constant(x), t.constant(w), t.constant(b));
  Tensor<double> expect = naive_affine(x, w, b);
  for (int64_t i = 0; i < expect.size(); ++i)
    REQUIRE(t.value(y).data[static_cast<size_t>(i)] ==
            Catch::Approx(expect.data[static_cast<size_t>(i)]).margin(1e-6));
}

TEST_CASE("linear rejects nonconforming shapes, naming both") {
  Tape<float> t;
  Var x = t.zeros({2, 3});
  Var w = t.zeros({4, 5});
  try {
    t.linear(x, w, Var{});
    FAIL("expected ShapeError");
  } catch (const crn::ShapeError& e) {
    std::string msg = e.what();
    REQUIRE(msg.find("[2,3]") != std::string::npos);
    REQUIRE(msg.find("[4,5]") != std::string::npos);
  }
}

TEST_CASE("elementwise activations hit their fixed points") {
  Tape<float> t;
  Var s = t.sigmoid(t.zeros({3}));
  for (float v : t.value(s).data) REQUIRE(v == 0.5f);
  Tensor<float> x({4}, {-2.0f, -0.5f, 0.5f, 2.0f});
  Var r = t.relu(t.constant(x));
  REQUIRE(t.value(r).data == std::vector<float>{0.0f, 0.0f, 0.5f, 2.0f});
}

TEST_CASE("softmax of a constant vector is uniform and rows sum to one") {
  Tape<double> t;
  Var u = t.softmax(t.constant(Tensor<double>::full({6}, 3.25)), 0);
  for (double v : t.value(u).data) REQUIRE(v == Catch::Approx(1.0 / 6).margin(1e-12));

  Rng rng(4);
  Var s = t.softmax(t.constant(random_tensor<double>({7, 5}, rng, -30, 30)), 1);
  for (int64_t i = 0; i < 7; ++i) {
    double sum = 0;
    for (int64_t j = 0; j < 5; ++j) sum += t.value(s).at(i, j);
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
  }
  // axis 0 on the same data
  Var s0 = t.softmax(t.constant(random_tensor<double>({4, 6}, rng)), 0);
  for (int64_t j = 0; j < 6; ++j) {
    double sum = 0;
    for (int64_t i = 0; i < 4; ++i) sum += t.value(s0).at(i, j);
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("bce_with_logits basics") {
  Tape<double> t;
  const auto ones = Tensor<double>::full({3}, 1.0);

  SECTION("zero logits give log 2 regardless of target") {
    Tensor<double> targets({3}, {0.0, 1.0, 0.0});
    Var loss = t.bce_with_logits(t.zeros({3}), targets, ones);
    REQUIRE(t.scalar(loss) == Catch::Approx(0.6931471805599453).margin(1e-12));
  }

  SECTION("saturated correct logits drive the loss to zero") {
    Var loss = t.bce_with_logits(t.constant(Tensor<double>::full({3}, 40.0)), ones, ones);
    REQUIRE(t.scalar(loss) < 1e-12);
  }

  SECTION("stable for huge logits") {
    Var loss = t.bce_with_logits(t.constant(Tensor<double>::full({3}, 1e4)),
                                 Tensor<double>::zeros({3}), ones);
    REQUIRE(std::isfinite(t.scalar(loss)));
    REQUIRE(t.scalar(loss) == Catch::Approx(1e4).epsilon(1e-9));
  }

  SECTION("matches the direct formula on a random case") {
    Rng rng(5);
    Tensor<double> z = random_tensor<double>({4, 3}, rng, -3, 3);
    Tensor<double> targets({4, 3});
    Tensor<double> mask({4, 3});
    for (auto& v : targets.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    for (auto& v : mask.data) v = rng.bernoulli(0.7) ? 1.0 : 0.0;
    Var loss = t.bce_with_logits(t.constant(z), targets, mask);
    // direct formula: -[t log s + (1-t) log(1-s)]
    double acc = 0, cnt = 0;
    for (int64_t i = 0; i < z.size(); ++i) {
      const size_t k = static_cast<size_t>(i);
      if (mask.data[k] == 0) continue;
      const double s = 1.0 / (1.0 + std::exp(-z.data[k]));
      acc += -(targets.data[k] * std::log(s) + (1 - targets.data[k]) * std::log(1 - s));
      cnt += 1;
    }
    REQUIRE(t.scalar(loss) == Catch::Approx(acc / cnt).margin(1e-9));
  }

  SECTION("all-masked input is zero loss with zero gradient") {
    ParamStore<double> ps;
    Rng rng(6);
    Param<double>& p = ps.create_xavier("z", {2, 2}, rng);
    Tape<double> tp;
    Var loss = tp.bce_with_logits(tp.leaf(p), Tensor<double>::zeros({2, 2}),
                                  Tensor<double>::zeros({2, 2}));
    REQUIRE(tp.scalar(loss) == 0.0);
    tp.backward(loss);
    for (double g : p.grad.data) REQUIRE(g == 0.0);
  }

  SECTION("masked positions contribute nothing") {
    Tensor<double> z1({3}, {0.3, 99.0, -0.7});
    Tensor<double> z2({3}, {0.3, -5.0, -0.7});
    Tensor<double> targets({3}, {1.0, 0.0, 0.0});
    Tensor<double> mask({3}, {1.0, 0.0, 1.0});
    Var l1 = t.bce_with_logits(t.constant(z1), targets, mask);
    Var l2 = t.bce_with_logits(t.constant(z2), targets, mask);
    REQUIRE(t.scalar(l1) == t.scalar(l2));
  }
}

TEST_CASE("stop_gradient passes values and blocks gradients exactly") {
  ParamStore<double> ps;
  Rng rng(7);
  Param<double>& p = ps.create_xavier("w", {3, 3}, rng);
  Tape<double> t;
  Var leaf = t.leaf(p);
  Var blocked = t.stop_gradient(leaf);
  for (int64_t i = 0; i < 9; ++i)
    REQUIRE(t.value(blocked).data[static_cast<size_t>(i)] == p.value.data[static_cast<size_t>(i)]);
  Var loss = t.sum(t.mul(blocked, blocked));
  t.backward(loss);
  for (double g : p.grad.data) REQUIRE(g == 0.0);

  // identical graph without the stop has nonzero grads
  Tape<double> t2;
  Var leaf2 = t2.leaf(p);
  Var loss2 = t2.sum(t2.mul(leaf2, leaf2));
  t2.backward(loss2);
  double norm = 0;
  for (double g : p.grad.data) norm += g * g;
  REQUIRE(norm > 0.0);
}

TEST_CASE("cumsum_steps computes grouped prefix sums") {
  Tape<double> t;
  Tensor<double> x({4, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
  Var y = t.cumsum_steps(t.constant(x), 2, 2);
  REQUIRE(t.value(y).data == std::vector<double>{1, 10, 3, 30, 3, 30, 7, 70});
}

TEST_CASE("select_rows gathers and scatters") {
  ParamStore<double> ps;
  Rng rng(8);
  Param<double>& p = ps.create_xavier("x", {4, 2}, rng);
  Tape<double> t;
  Var sel = t.select_rows(t.leaf(p), {3, 1, 3});
  REQUIRE(t.value(sel).rows() == 3);
  REQUIRE(t.value(sel).at(0, 0) == p.value.at(3, 0));
  Var loss = t.sum(sel);
  t.backward(loss);
  REQUIRE(p.grad.at(0, 0) == 0.0);
  REQUIRE(p.grad.at(1, 0) == 1.0);
  REQUIRE(p.grad.at(3, 0) == 2.0);  // selected twice
}

namespace {

// Runs grad_check on a scalar function of a ParamStore built via `build`.
template <typename Build>
crn::GradCheckReport check_gradients(ParamStore<double>& ps, Build build, double tol = 1e-4) {
  auto run = [&](bool with_backward) -> double {
    Tape<double> t;
    Var loss = build(t);
    if (with_backward) t.backward(loss);
    return t.scalar(loss);
  };
  return crn::grad_check<double>(ps, run, tol, 1e-5);
}

}  // namespace

TEST_CASE("gradient check: linear layer at tight tolerance") {
  ParamStore<double> ps;
  Rng rng(9);
  Param<double>& w = ps.create_xavier("w", {4, 3}, rng);
  Param<double>& b = ps.create("b", {4});
  Tensor<double> x = random_tensor<double>({5, 3}, rng);
  Tensor<double> targets({5, 4});
  for (auto& v : targets.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  auto report = check_gradients(ps, [&](Tape<double>& t) {
    Var y = t.linear(t.constant(x), t.leaf(w), t.leaf(b));
    return t.bce_with_logits(y, targets, Tensor<double>::full({5, 4}, 1.0));
  }, 1e-7);
  INFO(report.summary());
  REQUIRE(report.passed);
}

TEST_CASE("gradient check: softmax attention block") {
  ParamStore<double> ps;
  Rng rng(10);
  Param<double>& w = ps.create_xavier("w", {6, 4}, rng);
  Tensor<double> x = random_tensor<double>({3, 4}, rng);
  Tensor<double> feats = random_tensor<double>({3, 5}, rng);
  auto report = check_gradients(ps, [&](Tape<double>& t) {
    Var scores = t.linear(t.constant(x), t.leaf(w), Var{});
    Var attn = t.softmax(scores, 1);
    Var weighted = t.scale_rows(t.constant(feats), t.slice_cols(attn, 2, 1));
    return t.sum(t.mul(weighted, weighted));
  });
  INFO(report.summary());
  REQUIRE(report.passed);
}

TEST_CASE("gradient check: concat, slice, cumsum, scale_rows, outer_param") {
  ParamStore<double> ps;
  Rng rng(11);
  Param<double>& a = ps.create_xavier("a", {6, 3}, rng);
  Param<double>& b = ps.create_xavier("b", {6, 2}, rng);
  Param<double>& e = ps.create_xavier("e", {4}, rng);
  Tensor<double> col = random_tensor<double>({6}, rng, 0, 1);
  Tensor<double> targets({6, 4});
  for (auto& v : targets.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  auto report = check_gradients(ps, [&](Tape<double>& t) {
    Var cat = t.concat_cols({t.leaf(a), t.leaf(b)});            // [6,5]
    Var cs = t.cumsum_steps(cat, 2, 3);                          // grouped prefix sums
    Var sl = t.slice_cols(cs, 1, 4);                             // [6,4]
    Var sc = t.scale_rows(sl, t.slice_cols(cat, 0, 1));          // row scaling
    Var emb = t.outer_param(col, t.leaf(e));                     // [6,4]
    return t.bce_with_logits(t.add(sc, emb), targets, Tensor<double>::full({6, 4}, 1.0));
  });
  INFO(report.summary());
  REQUIRE(report.passed);
}

TEST_CASE("gradient check: constant function has exactly zero gradient everywhere") {
  ParamStore<double> ps;
  Rng rng(12);
  ps.create_xavier("w", {3, 3}, rng);
  auto run = [&](bool with_backward) -> double {
    Tape<double> t;
    Var c = t.constant(Tensor<double>::full({1}, 2.5));
    if (with_backward) t.backward(c);
    return t.scalar(c);
  };
  auto report = crn::grad_check<double>(ps, run, 1e-12, 1e-5);
  REQUIRE(report.passed);
  REQUIRE(report.max_rel_error == 0.0);
}
