#include <cmath>
#include <random>

#include "doctest.h"
#include "fadvlp/optim.hpp"
#include "grad_suite.hpp"

using namespace fadvlp;
using fadvlp::testing::random_tensor;
using fadvlp::testing::TensorD;

namespace {

constexpr int kInstances = 20;
constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("matmul examples") {
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  Tensor<double> b({2, 2}, {3, 4, 5, 6});
  auto c = matmul(eye, b);
  CHECK(c.data()[0] == 3);
  CHECK(c.data()[3] == 6);
  Tensor<double> r({1, 2}, {1, 2});
  Tensor<double> col({2, 1}, {3, 4});
  CHECK(matmul(r, col).item() == 11);
  CHECK_THROWS_AS(matmul(r, r), DimensionError);
}

TEST_CASE("softmax examples") {
  auto s = softmax(Tensor<double>({2}, {0, 0}), 0);
  CHECK(s[0] == doctest::Approx(0.5));
  auto big = softmax(Tensor<double>({2}, {1000, 0}), 0);
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);
  CHECK(std::isfinite(big[1]));
}

TEST_CASE("softmax rows sum to one and ignore shifts") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 30; ++i) {
    TensorD x = random_tensor({3, 7}, rng, -20, 20, false);
    TensorD shifted = add_scalar(x, 123.5);
    auto a = softmax(x, 1);
    auto b = softmax(shifted, 1);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 7; ++c) total += a[r * 7 + c];
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
    for (std::size_t k = 0; k < a.numel(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-6);
  }
}

TEST_CASE("layer_norm examples") {
  Tensor<double> gain({2}, {1, 1});
  Tensor<double> bias({2}, {0, 0});
  auto z = layer_norm(Tensor<double>({2}, {5, 5}), gain, bias, 1e-5);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);
  auto y = layer_norm(Tensor<double>({2}, {1, 3}), gain, bias, 1e-12);
  CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("l2_normalize examples and idempotence") {
  auto n = l2_normalize(Tensor<double>({2}, {3, 4}), 0);
  CHECK(n[0] == doctest::Approx(0.6));
  CHECK(n[1] == doctest::Approx(0.8));
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    TensorD x = random_tensor({4, 6}, rng, -3, 3, false);
    auto once = l2_normalize(x, 1);
    auto twice = l2_normalize(once, 1);
    for (std::size_t k = 0; k < once.numel(); ++k) CHECK(std::abs(once[k] - twice[k]) < 1e-6);
  }
}

TEST_CASE("cross entropy examples") {
  std::vector<int> targets{2};
  auto uniform = cross_entropy_with_logits(Tensor<double>({1, 4}, {0, 0, 0, 0}), std::span<const int>(targets), -1);
  CHECK(uniform.item() == doctest::Approx(std::log(4.0)));
  auto sat = cross_entropy_with_logits(Tensor<double>({1, 4}, {0, 0, 1000, 0}), std::span<const int>(targets), -1);
  CHECK(sat.item() < 1e-9);
  std::vector<int> ignored{0, 0};
  CHECK_THROWS(cross_entropy_with_logits(Tensor<double>({2, 4}, std::vector<double>(8, 0.0)),
                                         std::span<const int>(ignored), 0));
}

TEST_CASE("backward examples") {
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  TensorD x({3}, {4, 5, 6}, true);
  tape.backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  Tape<double> tape2;
  Tape<double>::Scope scope2(tape2);
  TensorD y({2}, {1, 2}, true);
  tape2.backward(sum(mul(y, y)));
  CHECK(y.grad()[0] == 2.0);
  CHECK(y.grad()[1] == 4.0);
  CHECK_THROWS_AS(tape2.backward(mul(y, y)), DimensionError);
}

TEST_CASE("unreachable parameters get zero gradient") {
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  TensorD a({2}, {1, 2}, true);
  TensorD b({2}, {3, 4}, true);
  TensorD unused = mul(b, b);
  tape.backward(sum(a));
  CHECK(b.grad()[0] == 0.0);
  CHECK(b.grad()[1] == 0.0);
}

TEST_CASE("replaying a tape gives bit-identical gradients") {
  std::mt19937_64 rng(3);
  Tape<double> tape;
  Tape<double>::Scope scope(tape);
  TensorD x = random_tensor({4, 5}, rng);
  TensorD w = random_tensor({5, 3}, rng);
  TensorD loss = sum(softmax(matmul(x, w), 1));
  loss = add(loss, mean(gelu(x)));
  tape.backward(loss);
  std::vector<double> first(w.grad().begin(), w.grad().end());
  tape.backward(loss);
  std::vector<double> second(w.grad().begin(), w.grad().end());
  CHECK(first == second);
}

TEST_CASE("finite difference examples") {
  auto g = finite_difference_gradient<double>([](const TensorD& x) { return sum(x).item(); },
                                              TensorD({3}, {0.3, -2, 7}), 1e-5);
  for (double v : g.data()) CHECK(v == doctest::Approx(1.0));
  auto sq = finite_difference_gradient<double>(
      [](const TensorD& x) { return x[0] * x[0]; }, TensorD({1}, {3.0}), 1e-5);
  CHECK(sq[0] == doctest::Approx(6.0).epsilon(1e-8));
}

TEST_CASE("adam examples") {
  Tensor<float> p({1}, {0.5f}, true);
  p.mutable_grad()[0] = 1.0f;
  AdamState<float> state;
  state.hyper.learning_rate = 1e-5;
  std::vector<Tensor<float>> params{p};
  adam_step(params, state);
  CHECK(p[0] - 0.5f == doctest::Approx(-1e-5).epsilon(1e-3));
  CHECK(state.step == 1);

  Tensor<float> q({2}, {0.25f, -1.5f}, true);
  q.zero_grad();
  AdamState<float> state2;
  std::vector<Tensor<float>> qs{q};
  adam_step(qs, state2);
  CHECK(q[0] == 0.25f);
  CHECK(q[1] == -1.5f);

  q.mutable_grad()[0] = NAN;
  CHECK_THROWS_AS(adam_step(qs, state2), NumericError);
}

TEST_CASE("adam is deterministic") {
  auto run = [] {
    std::mt19937_64 rng(42);
    Tensor<float> p({8}, std::vector<float>(8, 0.1f), true);
    AdamState<float> state;
    std::vector<Tensor<float>> params{p};
    std::normal_distribution<float> dist;
    for (int step = 0; step < 25; ++step) {
      for (float& g : p.mutable_grad()) g = dist(rng);
      adam_step(params, state);
    }
    return std::vector<float>(p.data().begin(), p.data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite forward values are rejected") {
  TensorD x({2}, {1e308, 1e308});
  CHECK_THROWS_AS(add(x, x), NumericError);
}

// Gradient checks for each primitive on 20 random instances.
TEST_CASE("primitive gradients") {
  for (const auto& c : fadvlp::testing::primitive_grad_cases()) {
    const double err = fadvlp::testing::worst_error(c, kInstances);
    CHECK_MESSAGE(err < kTol, c.name << " relative error " << err);
  }
}
