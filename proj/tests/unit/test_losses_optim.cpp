#include <doctest.h>

#include <cmath>

#include "vidsum/errors.hpp"
#include "vidsum/losses.hpp"
#include "vidsum/optim.hpp"

using namespace vidsum;

namespace {

std::vector<double> random_distribution(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  double total = 0.0;
  for (auto& x : v) {
    x = rng.uniform(0.05, 1.0);
    total += x;
  }
  for (auto& x : v) x /= total;
  return v;
}

}  // namespace

TEST_CASE("distillation loss equals entropy for matching inputs") {
  // Identical zero vectors soften to uniform 1/4 each: CE = ln 4.
  Tensor z = Tensor::zeros({4});
  Tensor loss = distillation_loss(z, Tensor::zeros({4}));
  CHECK(loss.value() == doctest::Approx(1.3862943611198906).epsilon(1e-12));

  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor v = Tensor::uniform({8}, -2.0, 2.0, rng);
    Tensor same = v.detached();
    const double ce = distillation_loss(v, same).value();
    // CE(a, a) = H(a)
    std::vector<double> a = v.data();
    double mx = a[0];
    for (double x : a) mx = std::max(mx, x);
    double denom = 0.0;
    for (auto& x : a) {
      x = std::exp(x - mx);
      denom += x;
    }
    for (auto& x : a) x /= denom;
    double h = 0.0;
    for (double x : a) h -= x * std::log(x);
    CHECK(std::abs(ce - h) < 1e-10);
  }

  CHECK_THROWS_AS(distillation_loss(Tensor::zeros({4}), Tensor::zeros({5})), dimension_error);
  CHECK_THROWS_AS(distillation_loss(z, Tensor::zeros({4}), 0.0), config_error);
}

TEST_CASE("distillation loss equals H + KL from the decomposition") {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor student = Tensor::uniform({10}, -3.0, 3.0, rng);
    Tensor teacher = Tensor::uniform({10}, -3.0, 3.0, rng);
    const double temperature = rng.uniform(0.5, 2.0);
    const double loss = distillation_loss(student, teacher, temperature).value();

    auto soften = [&](const Tensor& t) {
      std::vector<double> v = t.data();
      double mx = v[0];
      for (double x : v) mx = std::max(mx, x);
      double denom = 0.0;
      for (auto& x : v) {
        x = std::exp((x - mx) / temperature);
        denom += x;
      }
      // softmax(x / T) computed as exp((x - mx)/T): same up to normalization
      double total = 0.0;
      for (auto& x : v) total += x;
      for (auto& x : v) x /= total;
      (void)denom;
      return v;
    };
    const auto a = soften(teacher);
    const auto b = soften(student);
    const Decomposition d = entropy_kl_decompose(a, b);
    CHECK(std::abs(loss - (d.entropy + d.kl)) < 1e-10);
    CHECK(d.kl >= -1e-12);
  }
}

TEST_CASE("distillation treats the teacher as a constant") {
  Rng rng(33);
  Tensor student = Tensor::uniform({6}, -1.0, 1.0, rng);
  Tensor teacher = Tensor::uniform({6}, -1.0, 1.0, rng);
  student.set_requires_grad(true);
  Tensor loss = distillation_loss(student, teacher);
  backward(loss);
  CHECK(student.has_grad());
  CHECK_FALSE(teacher.has_grad());
  CHECK_FALSE(teacher.requires_grad());
}

TEST_CASE("entropy/KL decomposition") {
  const Decomposition uniform2 = entropy_kl_decompose(std::vector<double>{0.5, 0.5},
                                                      std::vector<double>{0.5, 0.5});
  CHECK(uniform2.entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(uniform2.cross_entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(uniform2.kl == doctest::Approx(0.0));

  // Degenerate a = [1, 0] with 0 log 0 := 0.
  const Decomposition degenerate = entropy_kl_decompose(std::vector<double>{1.0, 0.0},
                                                        std::vector<double>{0.5, 0.5});
  CHECK(degenerate.entropy == doctest::Approx(0.0));
  CHECK(degenerate.cross_entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(degenerate.kl == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Gibbs inequality over random pairs.
  Rng rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_distribution(12, rng);
    const auto b = random_distribution(12, rng);
    const Decomposition d = entropy_kl_decompose(a, b);
    CHECK(std::abs(d.cross_entropy - (d.entropy + d.kl)) < 1e-10);
    CHECK(d.kl >= 0.0);
  }

  CHECK_THROWS_AS(entropy_kl_decompose(std::vector<double>{0.3, 0.3},
                                       std::vector<double>{0.5, 0.5}),
                  contract_error);
}

TEST_CASE("mse loss") {
  Tensor a = Tensor::from_data({5}, {0.1, 0.4, 0.9, 0.2, 0.7});
  CHECK(mse_loss(a, a.detached()).value() == 0.0);

  Tensor shifted = a.detached();
  for (auto& v : shifted.data()) v += 1.0;
  CHECK(mse_loss(shifted, a).value() == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(35);
  Tensor pred = Tensor::uniform({10}, -1.0, 1.0, rng);
  Tensor target = Tensor::uniform({10}, -1.0, 1.0, rng);
  double expect = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    const double d = pred.data()[i] - target.data()[i];
    expect += d * d;
  }
  expect /= 10.0;
  CHECK(std::abs(mse_loss(pred, target).value() - expect) < 1e-12);

  CHECK_THROWS_AS(mse_loss(pred, Tensor::zeros({4})), dimension_error);
}

TEST_CASE("adam zero gradient is a no-op without weight decay") {
  Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  backward(scale(sum(p), 0.0));  // gradients exist and are zero
  std::vector<Tensor> params{p};
  AdamState state = AdamState::init_like(params);
  adam_step(params, state, 0.01);
  CHECK(p.data()[0] == 1.0);
  CHECK(p.data()[1] == -2.0);
  CHECK(p.data()[2] == 0.5);
  CHECK(state.t == 1);
}

TEST_CASE("adam first step matches the hand-evaluated update") {
  Tensor p = Tensor::scalar(0.0, true);
  backward(p);  // d(p)/dp = 1
  std::vector<Tensor> params{p};
  AdamState state = AdamState::init_like(params);
  adam_step(params, state, 0.001, 0.9, 0.999, 1e-8, 0.0);
  // m_hat = 1, v_hat = 1 -> delta = -lr / (1 + eps)
  CHECK(p.value() == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("adam is deterministic across identical models") {
  Rng r1(36), r2(36);
  Tensor a = Tensor::uniform({4, 4}, -1.0, 1.0, r1, true);
  Tensor b = Tensor::uniform({4, 4}, -1.0, 1.0, r2, true);
  backward(sum(mul(a, a)));
  backward(sum(mul(b, b)));
  std::vector<Tensor> pa{a}, pb{b};
  AdamState sa = AdamState::init_like(pa), sb = AdamState::init_like(pb);
  adam_step(pa, sa, 0.01, 0.9, 0.999, 1e-8, 1e-4);
  adam_step(pb, sb, 0.01, 0.9, 0.999, 1e-8, 1e-4);
  CHECK(a.data() == b.data());

  Tensor no_grad = Tensor::zeros({2}, true);
  std::vector<Tensor> pc{no_grad};
  AdamState sc = AdamState::init_like(pc);
  CHECK_THROWS_AS(adam_step(pc, sc, 0.01), contract_error);
}

TEST_CASE("learning rate schedule") {
  const std::size_t total = 100, warmup = 10;
  const double lr_max = 1e-4;

  CHECK(lr_at(warmup - 1, total, warmup, lr_max) == doctest::Approx(lr_max).epsilon(1e-15));

  // Midpoint of the decay: cos(pi/2) = 0.
  const std::size_t mid = warmup + (total - warmup) / 2;
  CHECK(lr_at(mid, total, warmup, lr_max) == doctest::Approx(0.5 * lr_max).epsilon(1e-12));

  // Final step equals the cosine endpoint for that index.
  const double expect_last =
      0.5 * lr_max *
      (1.0 + std::cos(M_PI * static_cast<double>(total - 1 - warmup) /
                      static_cast<double>(total - warmup)));
  CHECK(std::abs(lr_at(total - 1, total, warmup, lr_max) - expect_last) < 1e-12);

  // Continuity across the warmup/decay boundary.
  const double before = lr_at(warmup - 1, total, warmup, lr_max);
  const double after = lr_at(warmup, total, warmup, lr_max);
  CHECK(std::abs(before - after) <= 1e-12 * lr_max);

  CHECK_THROWS_AS(lr_at(100, total, warmup, lr_max), contract_error);
  CHECK_THROWS_AS(lr_at(0, 10, 10, lr_max), contract_error);
}
