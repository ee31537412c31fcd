#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "crn/adam.hpp"
#include "crn/checkpoint.hpp"
#include "crn/grad_check.hpp"
#include "crn/nn.hpp"

using crn::AdamOpt;
using crn::LstmParams;
using crn::Param;
using crn::ParamStore;
using crn::Rng;
using crn::Tape;
using crn::Tensor;
using crn::Var;

TEST_CASE("lstm cell with all-zero input, state and weights yields h = 0") {
  ParamStore<float> ps;
  Rng rng(1);
  LstmParams<float> lstm = LstmParams<float>::create(ps, "lstm", 4, 8, rng);
  ps.for_each([](Param<float>& p) { std::fill(p.value.data.begin(), p.value.data.end(), 0.0f); });
  Tape<float> t;
  crn::LeafCache<float> lf(t);
  auto [h, c] = crn::lstm_cell(t, lf, t.zeros({2, 4}), t.zeros({2, 8}), t.zeros({2, 8}), lstm);
  for (float v : t.value(h).data) REQUIRE(v == 0.0f);
  for (float v : t.value(c).data) REQUIRE(v == 0.0f);
}

TEST_CASE("lstm cell respects the configured hidden size") {
  ParamStore<float> ps;
  Rng rng(2);
  LstmParams<float> lstm = LstmParams<float>::create(ps, "lstm", 6, 128, rng);
  Tape<float> t;
  crn::LeafCache<float> lf(t);
  auto [h, c] = crn::lstm_cell(t, lf, t.zeros({1, 6}), t.zeros({1, 128}), t.zeros({1, 128}), lstm);
  REQUIRE(t.value(h).cols() == 128);
  REQUIRE(t.value(c).cols() == 128);
}

TEST_CASE("lstm forget-gate bias initializes to one") {
  ParamStore<float> ps;
  Rng rng(3);
  LstmParams<float> lstm = LstmParams<float>::create(ps, "lstm", 4, 8, rng);
  for (int64_t i = 0; i < 8; ++i) {
    REQUIRE(lstm.b_ih->value.data[static_cast<size_t>(i)] == 0.0f);        // input gate
    REQUIRE(lstm.b_ih->value.data[static_cast<size_t>(8 + i)] == 1.0f);    // forget gate
  }
}

TEST_CASE("gradient of a 2-step unrolled lstm matches finite differences") {
  ParamStore<double> ps;
  Rng rng(4);
  LstmParams<double> lstm = LstmParams<double>::create(ps, "lstm", 3, 5, rng);
  Tensor<double> x1({2, 3}), x2({2, 3}), targets({2, 5});
  for (auto& v : x1.data) v = rng.uniform(-1, 1);
  for (auto& v : x2.data) v = rng.uniform(-1, 1);
  for (auto& v : targets.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  auto run = [&](bool with_backward) -> double {
    Tape<double> t;
    crn::LeafCache<double> lf(t);
    auto [h1, c1] = crn::lstm_cell(t, lf, t.constant(x1), t.zeros({2, 5}), t.zeros({2, 5}), lstm);
    auto [h2, c2] = crn::lstm_cell(t, lf, t.constant(x2), h1, c1, lstm);
    (void)c2;
    Var loss = t.bce_with_logits(h2, targets, Tensor<double>::full({2, 5}, 1.0));
    if (with_backward) t.backward(loss);
    return t.scalar(loss);
  };
  auto report = crn::grad_check<double>(ps, run, 1e-4, 1e-5);
  INFO(report.summary());
  REQUIRE(report.passed);
}

TEST_CASE("adam first step moves by -lr * sign(grad) up to eps correction") {
  ParamStore<double> ps;
  Param<double>& p = ps.create("p", {3});
  p.value.data = {1.0, -2.0, 0.5};
  AdamOpt<double> opt(ps, 2e-4);
  REQUIRE(opt.lr() == 2e-4);
  p.grad.data = {0.3, -4.0, 0.0};
  opt.step();
  REQUIRE(p.value.data[0] == Catch::Approx(1.0 - 2e-4).epsilon(1e-4));
  REQUIRE(p.value.data[1] == Catch::Approx(-2.0 + 2e-4).epsilon(1e-4));
  REQUIRE(p.value.data[2] == 0.5);  // zero grad leaves the entry unchanged
  // grads zeroed afterwards
  for (double g : p.grad.data) REQUIRE(g == 0.0);
}

TEST_CASE("adam is deterministic given identical inputs") {
  auto run = [] {
    ParamStore<double> ps;
    Rng rng(5);
    Param<double>& p = ps.create_xavier("p", {4, 4}, rng);
    AdamOpt<double> opt(ps, 1e-3);
    for (int it = 0; it < 10; ++it) {
      for (int64_t i = 0; i < p.grad.size(); ++i)
        p.grad.data[static_cast<size_t>(i)] = std::sin(static_cast<double>(it + i));
      opt.step();
    }
    return p.value.data;
  };
  REQUIRE(run() == run());
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "crn_test_ckpt.bin").string();

  ParamStore<float> ps;
  Rng rng(6);
  ps.create_xavier("a/w", {4, 3}, rng);
  ps.create_xavier("b/w", {2, 2}, rng);
  AdamOpt<float> opt(ps);
  ps.at(0).grad.data[0] = 1.0f;
  opt.step();

  crn::CheckpointMeta meta;
  meta.iteration = 123;
  meta.config_text = "n = 5\nseed = 7\n";
  meta.rng_state = "rngblob";
  crn::save_checkpoint(path, ps, opt, meta);

  ParamStore<float> ps2;
  Rng rng2(99);
  ps2.create_xavier("a/w", {4, 3}, rng2);
  ps2.create_xavier("b/w", {2, 2}, rng2);
  AdamOpt<float> opt2(ps2);
  auto meta2 = crn::load_checkpoint(path, ps2, opt2);

  REQUIRE(meta2.iteration == 123);
  REQUIRE(meta2.config_text == meta.config_text);
  REQUIRE(meta2.rng_state == meta.rng_state);
  REQUIRE(ps2.at(0).value.data == ps.at(0).value.data);
  REQUIRE(ps2.at(1).value.data == ps.at(1).value.data);
  REQUIRE(opt2.state(0).m.data == opt.state(0).m.data);
  REQUIRE(opt2.state(0).v.data == opt.state(0).v.data);
  REQUIRE(opt2.state(0).t == opt.state(0).t);
  fs::remove(path);
}

TEST_CASE("checkpoint rejects mismatched models and truncated files") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "crn_test_ckpt2.bin").string();

  ParamStore<float> ps;
  Rng rng(7);
  ps.create_xavier("a/w", {4, 3}, rng);
  AdamOpt<float> opt(ps);
  crn::CheckpointMeta meta;
  crn::save_checkpoint(path, ps, opt, meta);

  SECTION("different param shape is a config mismatch") {
    ParamStore<float> other;
    other.create_xavier("a/w", {5, 3}, rng);
    AdamOpt<float> opt2(other);
    REQUIRE_THROWS_AS(crn::load_checkpoint(path, other, opt2), crn::ConfigError);
  }

  SECTION("truncated file is detected") {
    auto size = fs::file_size(path);
    fs::resize_file(path, size - 9);
    ParamStore<float> same;
    same.create_xavier("a/w", {4, 3}, rng);
    AdamOpt<float> opt3(same);
    REQUIRE_THROWS_AS(crn::load_checkpoint(path, same, opt3), crn::IoError);
  }

  SECTION("bad magic is rejected") {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "NOTACKPTsomething";
    os.close();
    ParamStore<float> same;
    same.create_xavier("a/w", {4, 3}, rng);
    AdamOpt<float> opt4(same);
    REQUIRE_THROWS_AS(crn::load_checkpoint(path, same, opt4), crn::IoError);
  }
  fs::remove(path);
}
