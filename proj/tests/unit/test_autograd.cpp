#include <doctest.h>

#include <cmath>
#include <set>

#include "wxadapt/autograd/gradcheck.hpp"
#include "wxadapt/autograd/ops.hpp"
#include "wxadapt/core/rng.hpp"

using namespace wxa;
using namespace wxa::ag;

namespace {

Tensor<double> randn(Rng& rng, Shape shape, bool rg = true) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor<double>(std::move(shape), std::move(v), rg);
}

}  // namespace

TEST_CASE("tensor shape must match data length") {
  CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
  Tensor<float> t({2, 3}, std::vector<float>(6));
  CHECK(t.numel() == 6);
}

TEST_CASE("conv2d closed-form cases") {
  Tape<double> tape;
  auto x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto w = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto b = Tensor<double>::zeros({1});
  auto y = conv2d<double>(tape, x, w, b, 1, 0);
  REQUIRE(y.numel() == 1);
  CHECK(y.item() == 9.0);

  Rng rng(1);
  auto z = randn(rng, {2, 1, 5, 4}, false);
  auto id = Tensor<double>::full({1, 1, 1, 1}, 1.0);
  auto out = conv2d<double>(tape, z, id, b, 1, 0);
  CHECK(out.shape() == z.shape());
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(out.data()[i] == z.data()[i]);
}

TEST_CASE("conv2d output size law and errors") {
  Tape<float> tape;
  auto x = Tensor<float>::zeros({1, 2, 9, 7});
  auto w = Tensor<float>::zeros({4, 2, 3, 3});
  auto b = Tensor<float>::zeros({4});
  auto y = conv2d<float>(tape, x, w, b, 2, 1);
  CHECK(y.shape() == Shape{1, 4, 5, 4});  // floor((9+2-3)/2)+1, floor((7+2-3)/2)+1
  auto wrong = Tensor<float>::zeros({4, 3, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d<float>(tape, x, wrong, b, 1, 1), doctest::Contains("input channels"), ShapeError);
  auto tiny = Tensor<float>::zeros({1, 2, 2, 2});
  CHECK_THROWS_AS(conv2d<float>(tape, tiny, w, b, 1, 0), ShapeError);
}

TEST_CASE("pool2d closed-form cases and divisibility errors") {
  Tape<double> tape;
  Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(pool2d<double>(tape, x, PoolKind::Max, 2, 2).item() == 4.0);
  CHECK(pool2d<double>(tape, x, PoolKind::Avg, 2, 2).item() == 2.5);
  auto odd_h = Tensor<double>::zeros({1, 1, 5, 4});
  CHECK_THROWS_WITH(pool2d<double>(tape, odd_h, PoolKind::Max, 2, 2), doctest::Contains("height"));
  auto odd_w = Tensor<double>::zeros({1, 1, 4, 5});
  CHECK_THROWS_WITH(pool2d<double>(tape, odd_w, PoolKind::Max, 2, 2), doctest::Contains("width"));
}

TEST_CASE("max pool routes the gradient to the first maximum; avg pool spreads it") {
  Tape<double> tape;
  Tensor<double> x({1, 1, 2, 2}, {5, 5, 1, 5}, true);
  auto y = pool2d<double>(tape, x, PoolKind::Max, 2, 2);
  tape.backward(y);
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 0, 0, 0});

  Tape<double> tape2;
  Tensor<double> z({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  auto a = pool2d<double>(tape2, z, PoolKind::Avg, 2, 2);
  tape2.backward(a);
  for (double g : z.grad()) CHECK(g == 0.25);
}

TEST_CASE("activation values and kink subgradient") {
  Tape<double> tape;
  Tensor<double> x({3}, {-1, 0, 2}, true);
  auto r = relu<double>(tape, x);
  CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{0, 0, 2});
  auto s = sum<double>(tape, r);
  tape.backward(s);
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{0, 0, 1});

  Tape<double> t2;
  CHECK(tanh<double>(t2, Tensor<double>::scalar(0.0)).item() == 0.0);
}

TEST_CASE("batchnorm closed-form cases") {
  Tape<double> tape;
  BatchNormStats<double> stats(2);
  auto x = Tensor<double>::full({2, 2, 3, 3}, 0.7);
  auto gamma = Tensor<double>::full({2}, 1.0);
  auto beta = Tensor<double>::zeros({2});
  auto y = batchnorm2d<double>(tape, x, gamma, beta, NormMode::Train, stats);
  for (double v : y.data()) CHECK(v == 0.0);
  CHECK(stats.running_mean[0] == doctest::Approx(0.07));

  Rng rng(4);
  auto z = randn(rng, {3, 2, 2, 2}, false);
  Tensor<double> g0({2}, {0, 0});
  Tensor<double> b0({2}, {0.3, -1.5});
  auto w = batchnorm2d<double>(tape, z, g0, b0, NormMode::Train, stats);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 4; ++i) CHECK(w.data()[(n * 2 + c) * 4 + i] == b0.data()[c]);
}

TEST_CASE("batchnorm train mode rejects a single value per channel") {
  Tape<float> tape;
  BatchNormStats<float> stats(3);
  auto x = Tensor<float>::zeros({1, 3, 1, 1});
  auto g = Tensor<float>::full({3}, 1.0f);
  auto b = Tensor<float>::zeros({3});
  CHECK_THROWS_WITH_AS(batchnorm2d<float>(tape, x, g, b, NormMode::Train, stats), doctest::Contains("larger batch"),
                       ShapeError);
  CHECK_NOTHROW(batchnorm2d<float>(tape, x, g, b, NormMode::Eval, stats));
}

TEST_CASE("grad_reverse: identity forward, sign-flipped backward") {
  Rng rng(8);
  auto x = randn(rng, {2, 3});
  Tape<double> tape;
  auto y = grad_reverse<double>(tape, x, 1.0);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
  auto l = sum<double>(tape, y);
  tape.backward(l);
  for (double g : x.grad()) CHECK(g == -1.0);
}

TEST_CASE("grad_reverse law holds exactly against the same loss without reversal") {
  // loss = sum(x^2) written as weighted_sum(x, x) keeps both routes on the same ops.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const double coeff = seed == 0 ? 0.5 : rng.uniform(0.05, 3.0);
    auto x = randn(rng, {4, 5});
    std::vector<double> r(20);
    for (auto& v : r) v = rng.uniform(-1, 1);

    auto run = [&](bool reverse) {
      x.zero_grad();
      Tape<double> tape;
      // The law is stated for the gradient arriving at the reversal's input.
      auto h = tanh<double>(tape, x);
      auto mid = reverse ? grad_reverse<double>(tape, h, coeff) : affine<double>(tape, h, 1.0, 0.0);
      auto sq = activation<double>(tape, mid, Activation::Tanh);
      auto loss = weighted_sum<double>(tape, sq, r);
      tape.backward(loss);
      return std::vector<double>(h.grad().begin(), h.grad().end());
    };
    const auto plain = run(false);
    const auto reversed = run(true);
    for (std::size_t i = 0; i < plain.size(); ++i) CHECK(reversed[i] == -coeff * plain[i]);
  }

  // The spec'd instance: coeff 0.5, loss = sum(x^2) -> grad = -0.5 * 2x.
  Tensor<double> x({3}, {1.0, -2.0, 0.5}, true);
  Tape<double> tape;
  auto y = grad_reverse<double>(tape, x, 0.5);
  std::vector<double> xs(x.data().begin(), x.data().end());
  auto loss = mse_map_loss<double>(tape, y, Tensor<double>::zeros({3}));
  auto total = affine<double>(tape, loss, 3.0, 0.0);  // mean * 3 = sum of squares
  tape.backward(total);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(-0.5 * 2.0 * xs[i]).epsilon(1e-15));
}

TEST_CASE("mse_map_loss closed forms, gradient and zero law") {
  Tape<double> tape;
  auto p = Tensor<double>::full({2, 1, 3, 3}, 0.25);
  CHECK(mse_map_loss<double>(tape, p, p.clone()).item() == 0.0);
  auto z = Tensor<double>::zeros({2, 1, 3, 3}, true);
  auto c = Tensor<double>::full({2, 1, 3, 3}, 0.5);
  auto l = mse_map_loss<double>(tape, z, c);
  CHECK(l.item() == 0.25);
  tape.backward(l);
  for (double g : z.grad()) CHECK(g == doctest::Approx(2.0 * (0.0 - 0.5) / 18.0));
  CHECK_THROWS_AS(mse_map_loss<double>(tape, z, Tensor<double>::zeros({2, 1, 3, 2})), ShapeError);
}

TEST_CASE("mse_map_loss is nonnegative and zero only for bitwise-equal operands") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto a = randn(rng, {2, 1, 4, 4}, false);
    auto b = a.clone();
    Tape<double> tape;
    CHECK(mse_map_loss<double>(tape, a, b).item() == 0.0);
    const auto k = static_cast<std::size_t>(rng.uniform_int(0, 31));
    b.data()[k] = std::nextafter(b.data()[k], 1e9);
    CHECK(mse_map_loss<double>(tape, a, b).item() > 0.0);
    auto c = randn(rng, {2, 1, 4, 4}, false);
    CHECK(mse_map_loss<double>(tape, a, c).item() >= 0.0);
  }
}

TEST_CASE("l1_penalty closed forms and subgradient") {
  Tape<double> tape;
  CHECK(l1_penalty<double>(tape, Tensor<double>::zeros({2, 3})).item() == 0.0);
  CHECK(l1_penalty<double>(tape, Tensor<double>({1, 3}, {1, -2, 3})).item() == 6.0);
  Tensor<double> x({2, 2}, {0.5, 0.0, -3.0, 2.0}, true);
  auto l = l1_penalty<double>(tape, x);
  CHECK(l.item() == 2.75);
  tape.backward(l);
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{0.5, 0.0, -0.5, 0.5});
}

TEST_CASE("classification and smooth-L1 closed forms") {
  Tape<double> tape;
  auto logits = Tensor<double>::full({3, 4}, 0.3);
  std::vector<int> labels{0, 3, 2};
  CHECK(classification_loss<double>(tape, logits, labels).item() == doctest::Approx(std::log(4.0)));
  std::vector<int> bad{0, 4, 1};
  CHECK_THROWS_AS(classification_loss<double>(tape, logits, bad), UsageError);

  auto p = Tensor<double>({2}, {1.0, -4.0});
  CHECK(smooth_l1<double>(tape, p, p.clone()).item() == 0.0);
  CHECK(smooth_l1<double>(tape, Tensor<double>({1}, {2.0}), Tensor<double>({1}, {0.0}), 1.0).item() == 1.5);
  CHECK(smooth_l1<double>(tape, Tensor<double>({1}, {0.5}), Tensor<double>({1}, {0.0}), 1.0).item() == 0.125);
}

TEST_CASE("concat0 and slice0 invert each other") {
  Rng rng(3);
  Tape<double> tape;
  auto a = randn(rng, {2, 3});
  auto b = randn(rng, {1, 3});
  auto c = concat0(tape, a, b);
  CHECK(c.shape() == Shape{3, 3});
  auto back_a = slice0(tape, c, 0, 2);
  auto back_b = slice0(tape, c, 2, 3);
  CHECK(std::equal(back_a.data().begin(), back_a.data().end(), a.data().begin()));
  CHECK(std::equal(back_b.data().begin(), back_b.data().end(), b.data().begin()));
  auto loss = sum(tape, back_b);
  tape.backward(loss);
  for (double g : a.grad()) CHECK(g == 0.0);
  for (double g : b.grad()) CHECK(g == 1.0);
  Tape<double> t2;
  CHECK_THROWS_AS(concat0(t2, a, randn(rng, {1, 4})), ShapeError);
  CHECK_THROWS_AS(slice0(t2, a, 1, 3), ShapeError);
}

TEST_CASE("tape: backward runs once and replays in reverse record order") {
  Tape<double> tape;
  Tensor<double> x({2}, {1.0, 2.0}, true);
  auto y = affine<double>(tape, x, 2.0, 0.0);
  auto z = relu<double>(tape, y);
  auto l = sum<double>(tape, z);
  CHECK(tape.op_names() == std::vector<std::string>{"affine", "relu", "sum"});
  tape.backward(l);
  CHECK(x.grad()[0] == 2.0);
  CHECK_THROWS_AS(tape.backward(l), UsageError);
  CHECK_THROWS_AS(affine<double>(tape, x, 1.0, 0.0), UsageError);
  tape.clear();
  CHECK(tape.size() == 0);
}

TEST_CASE("nothing is recorded when no input requires a gradient") {
  Tape<float> tape;
  auto x = Tensor<float>::full({1, 1, 4, 4}, 1.0f);
  auto w = Tensor<float>::full({2, 1, 3, 3}, 1.0f);
  auto b = Tensor<float>::zeros({2});
  auto y = conv2d<float>(tape, x, w, b, 1, 1);
  CHECK(!y.requires_grad());
  CHECK(tape.size() == 0);
}

TEST_CASE("backward is bitwise deterministic") {
  auto run = [] {
    Rng rng(42);
    std::vector<float> xv(2 * 3 * 8 * 8), wv(4 * 3 * 3 * 3);
    for (auto& v : xv) v = float(rng.normal());
    for (auto& v : wv) v = float(rng.normal());
    Tensor<float> x({2, 3, 8, 8}, xv, true), w({4, 3, 3, 3}, wv, true);
    auto b = Tensor<float>::zeros({4}, true);
    Tape<float> tape;
    auto y = relu<float>(tape, conv2d<float>(tape, x, w, b, 1, 1));
    auto p = pool2d<float>(tape, y, PoolKind::Max, 2, 2);
    auto l = mse_map_loss<float>(tape, p, Tensor<float>::full(p.shape(), 0.1f));
    tape.backward(l);
    std::vector<float> g(w.grad().begin(), w.grad().end());
    g.insert(g.end(), x.grad().begin(), x.grad().end());
    return g;
  };
  CHECK(run() == run());
}

TEST_CASE("finite-difference checker: exact on linear ops, flags a corrupted gradient") {
  LossFn linear = [](Tape<double>& t, std::vector<Tensor<double>>& in) {
    return sum<double>(t, affine<double>(t, in[0], 3.0, 0.0));
  };
  Rng rng(2);
  auto res = finite_diff_check(linear, {randn(rng, {5})});
  CHECK(res.max_rel_error <= 1e-9);
  CHECK(res.coords_checked == 5);

  auto bad = finite_diff_check(linear, {randn(rng, {5})}, 1e-6, 1.01);
  CHECK(bad.max_rel_error == doctest::Approx(0.01 / 1.01).epsilon(1e-4));
  CHECK(bad.max_rel_error > 1e-4);

  LossFn vector_out = [](Tape<double>& t, std::vector<Tensor<double>>& in) { return affine<double>(t, in[0], 1.0, 0.0); };
  CHECK_THROWS_AS(finite_diff_check(vector_out, {randn(rng, {3})}), ShapeError);
  CHECK_THROWS_AS(finite_diff_check(linear, {randn(rng, {3})}, 1.0), UsageError);
}

TEST_CASE("every registered op passes its finite-difference check on 10 seeds") {
  const auto reports = run_gradcheck(10);
  std::set<std::string> names;
  for (const auto& r : reports) {
    CAPTURE(r.op);
    CAPTURE(r.worst_error);
    CHECK(r.passed());
    names.insert(r.op);
  }
  CHECK(names.size() == reports.size());
  for (const char* op : {"conv2d", "max_pool2d", "avg_pool2d", "relu", "tanh", "batchnorm2d", "grad_reverse",
                         "mse_map_loss", "l1_penalty", "classification_loss", "smooth_l1"}) {
    CHECK(names.count(op) == 1);
  }
}

TEST_CASE("gradcheck mutation: a corrupted op is reported") {
  const auto reports = run_gradcheck(1, "conv2d");
  for (const auto& r : reports) {
    if (r.op == "conv2d") {
      CHECK_FALSE(r.passed());
      CHECK(r.worst_error == doctest::Approx(0.0099).epsilon(0.05));
    } else {
      CHECK(r.passed());
    }
  }
}

TEST_CASE("finite checks reject non-finite op outputs when enabled") {
  set_finite_checks(true);
  Tape<double> tape;
  auto x = Tensor<double>::full({2}, 1e308, true);
  CHECK_THROWS_AS(affine<double>(tape, x, 10.0, 0.0), NumericError);
  set_finite_checks(false);
  CHECK_NOTHROW(affine<double>(tape, x, 10.0, 0.0));
}
