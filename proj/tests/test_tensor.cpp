#include <doctest.h>

#include <cmath>
#include <limits>

#include "ovmse/checkpoint.hpp"
#include "ovmse/errors.hpp"
#include "ovmse/optimizer.hpp"
#include "ovmse/param_set.hpp"
#include "ovmse/rng.hpp"
#include "ovmse/tensor.hpp"
#include "support.hpp"

using namespace ovmse;
using V = std::vector<std::size_t>;

namespace {

Tensor random_tensor(V shape, Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 2.0 * rng.uniform() - 1.0;
  return t;
}

}  // namespace

TEST_CASE("linear_forward small cases") {
  const Tensor id = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(linear_forward(Tensor::matrix({{1, 0}}), id, Tensor::vector({0, 0})) ==
        Tensor::matrix({{1, 0}}));
  const Tensor out =
      linear_forward(Tensor::matrix({{2, 3}}), Tensor::matrix({{1}, {1}}), Tensor::vector({0.5}));
  CHECK(out.at(0, 0) == 5.5);
}

TEST_CASE("linear_forward matches a naive triple loop") {
  Rng rng(11);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor w = random_tensor({4, 2}, rng);
  const Tensor b = random_tensor({2}, rng);
  const Tensor out = linear_forward(x, w, b);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t j = 0; j < 2; ++j) {
      double ref = b[j];
      for (std::size_t i = 0; i < 4; ++i) ref += x.at(r, i) * w.at(i, j);
      CHECK(out.at(r, j) == doctest::Approx(ref).epsilon(1e-14));
    }
  }
}

TEST_CASE("shape and finiteness checks") {
  CHECK_THROWS_AS(linear_forward(Tensor({2, 3}), Tensor({2, 2}), Tensor({2})), ConfigError);
  CHECK_THROWS_AS(Tensor({2}, std::vector<double>{1.0}), ConfigError);
  CHECK_THROWS_AS(Tensor({1}, std::vector<double>{std::numeric_limits<double>::quiet_NaN()}),
                  ConfigError);
  CHECK_THROWS_AS(Tensor({1}, std::numeric_limits<double>::infinity()), ConfigError);
}

TEST_CASE("gradient of sum(x W) is the outer product with ones") {
  ParamSet ps;
  ps.add("w.weight", Tensor::matrix({{0.3, -0.2}, {0.1, 0.7}, {-0.5, 0.4}}));
  ps.add("w.bias", Tensor::vector({0.0, 0.0}));
  const Tensor x = Tensor::matrix({{1.5, -2.0, 0.25}});
  SequentialTape tape;
  tape.dense(ps, "w", x);
  tape.backward(Tensor({1, 2}, 1.0), ps);
  const Tensor& g = ps.grad("w.weight");
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) CHECK(g.at(i, j) == x.at(0, i));
  }
  CHECK(ps.grad("w.bias") == Tensor::vector({1.0, 1.0}));
}

TEST_CASE("zero upstream gradient leaves parameter gradients at zero") {
  Rng rng(2);
  ParamSet ps;
  add_dense_params(ps, "a", 3, 4, rng);
  add_dense_params(ps, "b", 4, 2, rng);
  SequentialTape tape;
  Tensor h = tape.dense(ps, "a", random_tensor({5, 3}, rng));
  h = tape.elu(h);
  tape.dense(ps, "b", h);
  tape.backward(Tensor({5, 2}), ps);
  for (const auto& e : ps.entries()) {
    for (double v : e.grad.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("two-layer network passes a finite-difference check") {
  Rng rng(5);
  ParamSet ps;
  add_dense_params(ps, "a", 4, 6, rng);
  add_dense_params(ps, "b", 6, 3, rng);
  const Tensor x = random_tensor({7, 4}, rng);
  const Tensor target = random_tensor({7, 3}, rng);
  auto loss_and_grad = [&](bool grad) {
    SequentialTape tape;
    Tensor h = tape.dense(ps, "a", x);
    h = tape.elu(h);
    const Tensor y = tape.dense(ps, "b", h);
    double loss = 0.0;
    Tensor dy(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = y[i] - target[i];
      loss += 0.5 * d * d;
      dy[i] = d;
    }
    if (grad) tape.backward(dy, ps);
    return loss;
  };
  ps.zero_grad();
  loss_and_grad(true);
  auto probes = testing::random_probes({&ps}, 24, rng);
  CHECK(testing::worst_fd_error(probes, [&] { return loss_and_grad(false); }) < 1e-4);
}

TEST_CASE("backward without a recorded forward pass is a usage error") {
  ParamSet ps;
  SequentialTape tape;
  CHECK_THROWS_AS(tape.backward(Tensor({1, 1}), ps), UsageError);
}

TEST_CASE("input gradient matches finite differences and can be skipped") {
  Rng rng(8);
  const Tensor x = random_tensor({2, 3}, rng);
  const Tensor w = random_tensor({3, 2}, rng);
  const Tensor b = random_tensor({2}, rng);
  const Tensor up = random_tensor({2, 2}, rng);
  Tensor wg({3, 2}), bg({2});
  const Tensor dx = linear_backward(x, w, up, wg, bg);
  for (std::size_t k = 0; k < x.size(); ++k) {
    Tensor xp = x, xm = x;
    xp[k] += 1e-6;
    xm[k] -= 1e-6;
    const Tensor yp = linear_forward(xp, w, b), ym = linear_forward(xm, w, b);
    double num = 0.0;
    for (std::size_t i = 0; i < yp.size(); ++i) num += up[i] * (yp[i] - ym[i]) / 2e-6;
    CHECK(dx[k] == doctest::Approx(num).epsilon(1e-7));
  }
  Tensor wg2({3, 2}), bg2({2});
  CHECK(linear_backward(x, w, up, wg2, bg2, false).size() == 0);
  CHECK(wg2 == wg);
  CHECK(bg2 == bg);
}

TEST_CASE("adam: zero gradients leave values unchanged") {
  ParamSet ps;
  ps.add("p", Tensor::vector({1.0, -2.0}));
  AdamOptimizer opt;
  opt.step(ps);
  CHECK(ps.value("p") == Tensor::vector({1.0, -2.0}));
  CHECK(ps.step_count == 1);
}

TEST_CASE("adam: single scalar step matches the closed form") {
  ParamSet ps;
  ps.add("p", Tensor::vector({1.0}));
  ps.grad("p")[0] = 2.0;
  AdamSettings s;
  s.learning_rate = 0.1;
  AdamOptimizer opt(s);
  opt.step(ps);
  // m = 0.1 g, v = 0.001 g^2; bias correction restores g and g^2.
  const double m_hat = (0.1 * 2.0) / (1.0 - 0.9);
  const double v_hat = (0.001 * 4.0) / (1.0 - 0.999);
  CHECK(ps.value("p")[0] == doctest::Approx(1.0 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)));
  CHECK(ps.grad("p")[0] == 0.0);
}

TEST_CASE("adam: constant gradient moves monotonically against its sign") {
  ParamSet ps;
  ps.add("p", Tensor::vector({0.0}));
  AdamOptimizer opt;
  std::vector<double> trail{0.0};
  for (int i = 0; i < 2; ++i) {
    ps.grad("p")[0] = -3.0;
    opt.step(ps);
    trail.push_back(ps.value("p")[0]);
  }
  CHECK(trail[1] > trail[0]);
  CHECK(trail[2] > trail[1]);
}

TEST_CASE("adam: non-finite gradient aborts naming the parameter") {
  ParamSet ps;
  ps.add("layer.weight", Tensor::vector({0.0}));
  ps.grad("layer.weight")[0] = std::numeric_limits<double>::infinity();
  AdamOptimizer opt;
  try {
    opt.step(ps);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("layer.weight") != std::string::npos);
  }
}

TEST_CASE("identical seeds and op sequences give bit-identical parameters") {
  auto run = [] {
    Rng rng(77);
    ParamSet ps;
    add_dense_params(ps, "a", 3, 3, rng);
    AdamOptimizer opt;
    for (int k = 0; k < 5; ++k) {
      SequentialTape tape;
      tape.dense(ps, "a", Tensor({2, 3}, 0.5));
      tape.backward(Tensor({2, 3}, 1.0), ps);
      opt.step(ps);
    }
    return ps;
  };
  CHECK(run().values_equal(run()));
}

TEST_CASE("clip_grad_norm rescales to the limit") {
  ParamSet ps;
  ps.add("p", Tensor::vector({0.0, 0.0}));
  ps.grad("p")[0] = 3.0;
  ps.grad("p")[1] = 4.0;
  CHECK(clip_grad_norm({&ps}, 1.0) == doctest::Approx(5.0));
  CHECK(ps.grad("p")[0] == doctest::Approx(0.6));
  CHECK(ps.grad("p")[1] == doctest::Approx(0.8));
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
  Rng rng(3);
  Checkpoint c;
  c.meta["kind"] = "test";
  c.meta["note"] = "a b c";
  c.add("x", random_tensor({3, 2}, rng));
  c.add("y", Tensor::vector({1e-300, -0.0, 3.141592653589793}));
  const std::string bytes = encode_checkpoint(c);
  CHECK(bytes.rfind(std::string(kCheckpointMagic), 0) == 0);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.get("x") == c.get("x"));
  CHECK(std::signbit(back.get("y")[1]));
  CHECK_THROWS_AS(decode_checkpoint("NOT-A-CHECKPOINT"), ArtifactError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ArtifactError);
  CHECK_THROWS_AS(read_checkpoint("/nonexistent/file.ckpt"), ArtifactError);
}

TEST_CASE("rng state save and restore") {
  Rng a(123);
  a.next_u64();
  const std::string st = a.save_state();
  const auto x = a.next_u64();
  Rng b;
  b.load_state(st);
  CHECK(b.next_u64() == x);
  for (int i = 0; i < 1000; ++i) CHECK(a.index(7) < 7);
}
