#include <doctest.h>

#include <cmath>

#include "vidsum/errors.hpp"
#include "vidsum/losses.hpp"
#include "vidsum/tensor.hpp"

using namespace vidsum;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  return Tensor::uniform(std::move(shape), lo, hi, rng);
}

// Naive O(mnk) reference product.
std::vector<double> matmul_reference(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += a.at(i, p) * b.at(p, j);
  return out;
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from_data({2, 3}, {1.0, 2.0}), dimension_error);
  Tensor s = Tensor::scalar(4.5);
  CHECK(s.shape().empty());
  CHECK(s.numel() == 1);
  CHECK(s.value() == 4.5);
}

TEST_CASE("rng is deterministic and restorable") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  const std::uint64_t snapshot = a.state();
  const double next = a.uniform();
  Rng c(0);
  c.set_state(snapshot);
  CHECK(c.uniform() == next);
}

TEST_CASE("matmul identity and zero") {
  Rng rng(1);
  Tensor m = random_tensor({3, 3}, rng);
  Tensor eye = Tensor::zeros({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.data()[i * 3 + i] = 1.0;
  Tensor prod = matmul(eye, m);
  for (std::size_t i = 0; i < 9; ++i) CHECK(prod.data()[i] == m.data()[i]);

  Tensor zero = Tensor::zeros({3, 4});
  Tensor z = matmul(m, Tensor::zeros({3, 4}));
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul matches the naive reference") {
  Rng rng(2);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor c = matmul(a, b);
  const auto ref = matmul_reference(a, b);
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(std::abs(c.data()[i] - ref[i]) < 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({3, 4});
  Tensor b = Tensor::zeros({5, 2});
  try {
    matmul(a, b);
    FAIL("expected dimension_error");
  } catch (const dimension_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[3x4]") != std::string::npos);
    CHECK(msg.find("[5x2]") != std::string::npos);
  }
}

TEST_CASE("softmax basics") {
  Tensor x = Tensor::from_data({2}, {0.0, 0.0});
  Tensor s = softmax(x, 0);
  CHECK(s.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.data()[1] == doctest::Approx(0.5).epsilon(1e-12));

  Tensor extreme = softmax(Tensor::from_data({2}, {0.0, 1000.0}), 0);
  for (double v : extreme.data()) CHECK(std::isfinite(v));
  CHECK(extreme.data()[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(extreme.data()[1] == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(softmax(Tensor::zeros({3}), 1), dimension_error);
}

TEST_CASE("softmax rows sum to one and shift invariance holds") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x = random_tensor({4, 6}, rng, -5.0, 5.0);
    Tensor s = softmax(x, 1);
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(s.at(i, j) > 0.0);
        total += s.at(i, j);
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
    const double c = rng.uniform(-3.0, 3.0);
    Tensor shifted = x.detached();
    for (auto& v : shifted.data()) v += c;
    Tensor s2 = softmax(shifted, 1);
    for (std::size_t i = 0; i < s.numel(); ++i)
      CHECK(std::abs(s.data()[i] - s2.data()[i]) <= 1e-12);
  }
}

TEST_CASE("activations") {
  Tensor r = activation(Tensor::from_data({3}, {-1.0, 0.0, 2.0}), Activation::Relu);
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 0.0);
  CHECK(r.data()[2] == 2.0);

  CHECK(activation(Tensor::scalar(0.0), Activation::Gelu).value() == 0.0);
  CHECK(activation(Tensor::scalar(0.0), Activation::GeluExact).value() == 0.0);

  // High-precision scalar oracle for the exact-erf form.
  const double gelu3 = activation(Tensor::scalar(3.0), Activation::GeluExact).value();
  CHECK(std::abs(gelu3 - 2.9959503059051097) < 1e-6);
  const double gelu_neg = activation(Tensor::scalar(-1.25), Activation::GeluExact).value();
  CHECK(std::abs(gelu_neg - (-0.13206221708356907)) < 1e-6);
}

TEST_CASE("layer_norm statistics") {
  Tensor gamma = Tensor::full({4}, 1.0);
  Tensor beta = Tensor::zeros({4});
  Tensor constant = Tensor::full({2, 4}, 3.7);
  Tensor out = layer_norm(constant, gamma, beta);
  for (double v : out.data()) CHECK(std::abs(v) < 1e-6);

  Rng rng(4);
  Tensor x = random_tensor({4, 8}, rng, -2.0, 2.0);
  Tensor g8 = Tensor::full({8}, 1.0);
  Tensor b8 = Tensor::zeros({8});
  Tensor normed = layer_norm(x, g8, b8);
  for (std::size_t i = 0; i < 4; ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mean += normed.at(i, j);
    mean /= 8.0;
    for (std::size_t j = 0; j < 8; ++j) {
      const double c = normed.at(i, j) - mean;
      var += c * c;
    }
    var /= 8.0;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-5);  // eps shifts variance slightly below 1
  }

  // Constant gamma/beta scale and shift the row statistics.
  Tensor g_const = Tensor::full({8}, 2.0);
  Tensor b_const = Tensor::full({8}, 0.7);
  Tensor affine = layer_norm(x, g_const, b_const);
  for (std::size_t i = 0; i < 4; ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mean += affine.at(i, j);
    mean /= 8.0;
    for (std::size_t j = 0; j < 8; ++j) {
      const double c = affine.at(i, j) - mean;
      var += c * c;
    }
    var /= 8.0;
    CHECK(mean == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(var == doctest::Approx(4.0).epsilon(1e-4));
  }

  CHECK_THROWS_AS(layer_norm(x, g8, b8, -1.0), config_error);
}

TEST_CASE("dropout contract") {
  Rng rng(5);
  Tensor x = random_tensor({10, 10}, rng);

  Rng r1(9);
  Tensor eval_out = dropout(x, 0.5, false, r1);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(eval_out.data()[i] == x.data()[i]);

  Tensor p0 = dropout(x, 0.0, true, r1);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(p0.data()[i] == x.data()[i]);

  CHECK_THROWS_AS(dropout(x, 1.0, true, r1), config_error);
  CHECK_THROWS_AS(dropout(x, -0.1, true, r1), config_error);

  // Binomial concentration at p = 0.5 over 1e5 elements.
  Tensor big = Tensor::full({100000}, 1.0);
  Rng r2(42);
  Tensor dropped = dropout(big, 0.5, true, r2);
  std::size_t zeros = 0;
  for (double v : dropped.data())
    if (v == 0.0) ++zeros;
  const double frac = static_cast<double>(zeros) / 100000.0;
  CHECK(frac >= 0.49);
  CHECK(frac <= 0.51);
  for (double v : dropped.data()) CHECK((v == 0.0 || v == 2.0));

  // Identical seed, identical mask.
  Rng r3(7), r4(7);
  Tensor d1 = dropout(x, 0.3, true, r3);
  Tensor d2 = dropout(x, 0.3, true, r4);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(d1.data()[i] == d2.data()[i]);
}

TEST_CASE("backward fills gradients") {
  Rng rng(6);
  Tensor x = random_tensor({3, 4}, rng);
  x.set_requires_grad(true);

  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  x.zero_grad();
  backward(scale(sum(mul(x, x)), 0.5));  // 0.5 * ||x||^2
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(x.data()[i]).epsilon(1e-12));

  CHECK_THROWS_AS(backward(x), contract_error);
}

TEST_CASE("repeated backward accumulates") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor loss = sum(mul(x, x));
  backward(loss);
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(4.0));  // 2 * dx of x^2 at 1
  CHECK(x.grad()[1] == doctest::Approx(8.0));
}

TEST_CASE("composite graph gradients match central differences") {
  Rng rng(7);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({4, 3}, rng);
  Tensor target = softmax(random_tensor({3, 3}, rng, -1.0, 1.0), 1).detached();
  x.set_requires_grad(true);
  w.set_requires_grad(true);

  auto build = [&](const Tensor& xin, const Tensor& win) {
    Tensor probs = softmax(matmul(xin, win), 1);
    return scale(sum(mul(target, log_clamped(probs))), -1.0);
  };

  backward(build(x, w));
  for (auto [input, which] : {std::pair{&x, 0}, std::pair{&w, 1}}) {
    auto f = [&](const Tensor& probe) {
      return (which == 0 ? build(probe, w) : build(x, probe)).value();
    };
    Tensor fd = finite_diff_grad(f, input->detached(), 1e-5);
    for (std::size_t i = 0; i < fd.numel(); ++i) {
      const double ad = input->grad()[i];
      const double rel = std::abs(ad - fd.data()[i]) /
                         std::max({std::abs(ad), std::abs(fd.data()[i]), 1e-8});
      CHECK(rel < 1e-4);
    }
  }
}

TEST_CASE("a tensor used on two paths sums both contributions") {
  Rng rng(8);
  Tensor x = random_tensor({3, 3}, rng);
  x.set_requires_grad(true);
  auto build = [](const Tensor& t) { return add(sum(matmul(t, t)), mean(mul(t, t))); };
  backward(build(x));
  Tensor fd = finite_diff_grad([&](const Tensor& probe) { return build(probe).value(); },
                               x.detached(), 1e-5);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double rel = std::abs(x.grad()[i] - fd.data()[i]) /
                       std::max({std::abs(x.grad()[i]), std::abs(fd.data()[i]), 1e-8});
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("finite differences on simple functions") {
  Tensor x = Tensor::from_data({4}, {1.0, -2.0, 0.5, 3.0});
  Tensor ones = finite_diff_grad([](const Tensor& t) { return sum(t).value(); }, x);
  for (double g : ones.data()) CHECK(std::abs(g - 1.0) < 1e-9);

  Tensor three = Tensor::scalar(3.0);
  Tensor deriv = finite_diff_grad(
      [](const Tensor& t) { return t.value() * t.value(); }, three, 1e-5);
  CHECK(std::abs(deriv.value() - 6.0) < 1e-6);

  CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return 0.0; }, x, 0.0), config_error);
}

TEST_CASE("log_clamped floors and zeroes clamped gradients") {
  Tensor x = Tensor::from_data({3}, {1.0, 1e-20, 0.5}, true);
  Tensor y = log_clamped(x);
  CHECK(y.data()[1] == doctest::Approx(std::log(1e-12)));
  backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(1.0));
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == doctest::Approx(2.0));
}
