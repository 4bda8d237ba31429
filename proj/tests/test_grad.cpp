// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "oracles.hpp"

#include "nerfin/adam.hpp"
#include "nerfin/grad.hpp"

#include <map>
#include <string>

using namespace nerfin;
using nerfin::testing::check_case;
using nerfin::testing::finite_difference;
using nerfin::testing::primitive_cases;
using nerfin::testing::random_tensor;
using nerfin::testing::relative_error;

namespace {

Tensord row(std::initializer_list<double> v) {
  Tensord t(1, static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) t(0, i++) = x;
  return t;
}

}  // namespace

TEST_CASE("forward ops on small examples") {
  Tape<double> tape;
  auto a = tape.constant(row({1, 2}));
  auto b = tape.constant(row({3, 4}));
  CHECK(add(a, b).value() == row({4, 6}));

  Rng rng(3);
  Tensord v = random_tensor<double>(rng, 3, 1);
  CHECK(matmul(tape.constant(Tensord::Identity(3, 3)), tape.constant(v)).value() == v);

  CHECK(exp(tape.constant(row({0}))).value()(0, 0) == 1.0);
}

TEST_CASE("shape mismatch names the op and both shapes") {
  Tape<double> tape;
  auto a = tape.constant(Tensord::Zero(2, 3));
  auto b = tape.constant(Tensord::Zero(2, 3));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, tape.constant(Tensord::Zero(3, 2))), ShapeError);
  CHECK_THROWS_AS(broadcast(a, 4, 3), ShapeError);
  CHECK_THROWS_AS(slice(a, Axis::cols, 2, 2), ShapeError);
  CHECK_THROWS_AS(reshape(a, 4, 2), ShapeError);
}

TEST_CASE("backward on analytic examples") {
  Tape<double> tape;
  auto x = tape.parameter(row({1, 2, 3}));
  tape.backward(sum(mul(x, x)));
  CHECK(tape.gradient(x) == row({2, 4, 6}));

  Tape<double> t2;
  auto y = t2.parameter(row({1, -2, 5}));
  t2.backward(sum(exp(affine(y, 0.0))));
  CHECK(t2.gradient(y) == Tensord::Zero(1, 3));
}

TEST_CASE("backward rejects a non-scalar root") {
  Tape<double> tape;
  auto x = tape.parameter(row({1, 2}));
  CHECK_THROWS_AS(tape.backward(mul(x, x)), ShapeError);
}

TEST_CASE("constants receive no gradient and are not recorded") {
  Tape<double> tape;
  auto c = tape.constant(row({1, 2}));
  auto p = tape.parameter(row({3, 4}));
  auto y = mul(c, c);
  CHECK_FALSE(y.requires_grad());
  tape.backward(sum(add(y, p)));
  CHECK(tape.gradient(c) == Tensord::Zero(1, 2));
  CHECK(tape.gradient(p) == Tensord::Ones(1, 2));
}

TEST_CASE("every primitive matches central differences (double)") {
  for (const auto& [name, entry] : primitive_cases<double>()) {
    CAPTURE(name);
    for (std::uint64_t seed : {11u, 12u, 13u}) {
      const auto [analytic, numeric] = check_case<double>(entry.first, entry.second, seed, 1e-6);
      CHECK(relative_error(analytic, numeric) < 1e-6);
    }
  }
}

TEST_CASE("every primitive matches central differences (float, rel 1e-3)") {
  for (const auto& [name, entry] : primitive_cases<float>()) {
    CAPTURE(name);
    for (std::uint64_t seed : {21u, 22u, 23u}) {
      const auto [analytic, numeric] = check_case<float>(entry.first, entry.second, seed, 1e-3);
      CHECK(relative_error(analytic, numeric) < 1e-3);
    }
  }
}

namespace {

// Two-layer perceptron loss on a fixed input; parameters packed in one row.
struct Perceptron {
  Tensord input;
  Tensord target;
  Index in = 4, hidden = 6, out = 2;

  Index size() const { return in * hidden + hidden + hidden * out + out; }

  double loss(const Tensord& packed, Tensord* grad) const {
    Tape<double> tape;
    auto p = tape.parameter(packed);
    Index k = 0;
    auto take = [&](Index r, Index c) {
      auto s = reshape(slice(p, Axis::cols, k, r * c), r, c);
      k += r * c;
      return s;
    };
    auto w1 = take(in, hidden);
    auto b1 = take(1, hidden);
    auto w2 = take(hidden, out);
    auto b2 = take(1, out);
    auto x = tape.constant(input);
    auto h = sigmoid(linear(x, w1, b1));
    auto y = linear(relu(h), w2, b2);
    auto diff = sub(y, tape.constant(target));
    auto l = mean(mul(diff, diff));
    if (grad) {
      tape.backward(l);
      *grad = tape.gradient(p);
    }
    return l.value()(0, 0);
  }
};

}  // namespace

TEST_CASE("random perceptron gradient matches finite differences") {
  Rng rng(7);
  Perceptron net;
  net.input = random_tensor<double>(rng, 5, net.in);
  net.target = random_tensor<double>(rng, 5, net.out);
  Tensord packed = random_tensor<double>(rng, 1, net.size());
  Tensord analytic;
  net.loss(packed, &analytic);
  std::function<double(const Tensord&)> f = [&](const Tensord& p) { return net.loss(p, nullptr); };
  CHECK(relative_error(analytic, finite_difference<double>(f, packed, 1e-6)) < 1e-3);
}

TEST_CASE("backward is linear in the root") {
  Rng rng(9);
  const Tensord x0 = random_tensor<double>(rng, 2, 3);
  const Tensord m = random_tensor<double>(rng, 3, 3);
  auto grads = [&](double a, double b) {
    Tape<double> tape;
    auto x = tape.parameter(x0);
    auto f = sum(sin(matmul(x, tape.constant(m))));
    auto g = sum(mul(exp(x), x));
    tape.backward(add(affine(f, a), affine(g, b)));
    return tape.gradient(x);
  };
  const Tensord combined = grads(2.0, -3.0);
  const Tensord expect = 2.0 * grads(1.0, 0.0) - 3.0 * grads(0.0, 1.0);
  CHECK(relative_error(combined, expect) < 1e-12);
}

TEST_CASE("re-running backward is bit-identical") {
  Rng rng(5);
  Tape<float> tape;
  auto x = tape.parameter(random_tensor<float>(rng, 8, 8));
  auto w = tape.constant(random_tensor<float>(rng, 8, 8));
  auto loss = sum(softplus(matmul(relu(matmul(x, w)), w)));
  tape.backward(loss);
  const Tensorf first = tape.gradient(x);
  tape.backward(loss);
  CHECK(tape.gradient(x) == first);
}

TEST_CASE("adam: zero gradient leaves parameters and counts the step") {
  std::vector<Tensord> params{row({1, 2, 3})};
  const std::vector<Tensord> grads{Tensord::Zero(1, 3)};
  auto state = AdamState<double>::like(params);
  CHECK(adam_step<double>(params, grads, state, {0.1}));
  CHECK(params[0] == row({1, 2, 3}));
  CHECK(state.step == 1);
}

TEST_CASE("adam: constant gradient moves monotonically against its sign") {
  std::vector<Tensord> params{row({0, 0})};
  const std::vector<Tensord> grads{row({0.5, -2})};
  auto state = AdamState<double>::like(params);
  Tensord prev = params[0];
  for (int i = 0; i < 50; ++i) {
    adam_step<double>(params, grads, state, {0.01});
    CHECK(params[0](0, 0) < prev(0, 0));
    CHECK(params[0](0, 1) > prev(0, 1));
    prev = params[0];
  }
}

TEST_CASE("adam: quadratic bowl converges") {
  std::vector<Tensord> params{row({5, 5})};
  auto state = AdamState<double>::like(params);
  for (int i = 0; i < 500; ++i) {
    const std::vector<Tensord> grads{2.0 * params[0]};
    adam_step<double>(params, grads, state, {0.1});
  }
  CHECK(params[0].norm() < 1e-3);
}

TEST_CASE("adam: non-finite gradient skips the update and logs") {
  std::vector<std::string> logged;
  auto old = set_log_sink([&](LogLevel, const std::string& m) { logged.push_back(m); });
  std::vector<Tensord> params{row({1, 1})};
  const std::vector<Tensord> grads{row({1, std::numeric_limits<double>::quiet_NaN()})};
  auto state = AdamState<double>::like(params);
  CHECK_FALSE(adam_step<double>(params, grads, state, {0.1}));
  set_log_sink(old);
  CHECK(params[0] == row({1, 1}));
  CHECK(state.step == 0);
  CHECK(state.skipped == 1);
  CHECK(logged.size() == 1);
}

TEST_CASE("adam: mismatched shapes are rejected") {
  std::vector<Tensord> params{row({1, 1})};
  const std::vector<Tensord> grads{row({1, 1, 1})};
  auto state = AdamState<double>::like(params);
  CHECK_THROWS_AS(adam_step<double>(params, grads, state, {0.1}), ShapeError);
}
