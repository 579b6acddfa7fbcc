#include <doctest.h>

#include <cmath>
#include <random>

#include "lgn/gates.hpp"

using namespace lgn;

namespace {

// Independent oracle: expectation of the boolean gate over Bernoulli inputs, written
// directly from the bit encoding rather than through the library's truth_table().
double bernoulli_oracle(int g, double a, double b) {
  const double pa[2] = {1 - a, a};
  const double pb[2] = {1 - b, b};
  double sum = 0;
  for (int u = 0; u < 2; ++u) {
    for (int v = 0; v < 2; ++v) {
      const int bit = (u == 1 && v == 1) ? 0 : (u == 1 ? 1 : (v == 1 ? 2 : 3));
      sum += ((g >> bit) & 1) * pa[u] * pb[v];
    }
  }
  return sum;
}

// Relative error with a 1e-3 floor on the denominator: near-zero coordinates are dominated
// by finite-difference roundoff.
double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

}  // namespace

TEST_CASE("truth table encoding") {
  CHECK(truth_table(gate::kAnd, true, true));
  CHECK_FALSE(truth_table(gate::kXor, true, true));
  CHECK_FALSE(truth_table(gate::kA, false, true));
  CHECK(truth_table(gate::kA, true, false));
  CHECK(truth_table(gate::kOr, false, true));
  CHECK(truth_table(gate::kTrue, false, false));
  CHECK_FALSE(truth_table(gate::kFalse, true, true));

  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      int ones = 0;
      for (int g = 0; g < kNumGates; ++g) ones += truth_table(g, a, b);
      CHECK(ones == 8);
    }
  }
}

TEST_CASE("input swap and negation helpers") {
  for (int g = 0; g < kNumGates; ++g) {
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        CHECK(truth_table(swap_inputs(g), a, b) == truth_table(g, b, a));
        CHECK(truth_table(negate_first_input(g), a, b) == truth_table(g, !a, b));
        CHECK(truth_table(negate_second_input(g), a, b) == truth_table(g, a, !b));
      }
    }
  }
}

TEST_CASE("relaxed gate values") {
  CHECK(relaxed_gate(gate::kXor, 0.3, 0.7) == doctest::Approx(0.58).epsilon(1e-12));
  CHECK(relaxed_gate(gate::kAnd, 0.5, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(relaxed_gate(gate::kTrue, 0.123, 0.9) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(relaxed_gate(gate::kAnd, 1.1, 0.5), std::domain_error);
  CHECK_THROWS_AS(relaxed_gate(gate::kAnd, 0.5, -0.01), std::domain_error);
  CHECK_NOTHROW(relaxed_gate(gate::kAnd, 1.0 + 1e-10, 0.0));
}

TEST_CASE("relaxations agree with corners, stay bounded and match the Bernoulli expectation") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int g = 0; g < kNumGates; ++g) {
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        CHECK(relaxed_gate(g, a, b) == double(truth_table(g, a, b)));
      }
    }
    const auto c = gate_coeffs<double>(g);
    for (int i = 0; i < 200; ++i) {
      const double a = u(rng);
      const double b = u(rng);
      const double v = relaxed_gate(g, a, b);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(std::abs(v - bernoulli_oracle(g, a, b)) < 1e-12);
      CHECK(std::abs(c(a, b) - v) < 1e-12);
    }
  }
}

TEST_CASE("mixture forward") {
  const auto xor_hot = GateProbabilities<double>::one_hot(gate::kXor);
  CHECK(mixed_gate_forward(xor_hot, 0.3, 0.7) == doctest::Approx(0.58).epsilon(1e-12));

  const GateDistribution<double> uniform{};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 100; ++i) {
    CHECK(std::abs(mixed_gate_forward(uniform.softmax(), u(rng), u(rng)) - 0.5) < 1e-12);
  }

  // Brute-force enumeration: softmax from exp() directly, gates from the Bernoulli oracle.
  const auto res = residual_init<double>(5.0);
  double denom = 0;
  for (double z : res.z) denom += std::exp(z);
  double expected = 0;
  for (int g = 0; g < kNumGates; ++g) {
    expected += std::exp(res.z[static_cast<std::size_t>(g)]) / denom * bernoulli_oracle(g, 1, 0);
  }
  CHECK(expected == doctest::Approx(0.9510443342266072).epsilon(1e-12));
  CHECK(mixed_gate_forward(res.softmax(), 1.0, 0.0) == doctest::Approx(expected).epsilon(1e-12));

  for (int i = 0; i < 200; ++i) {
    GateDistribution<double> d;
    for (auto& z : d.z) z = 6 * u(rng) - 3;
    const double v = mixed_gate_forward(d.softmax(), u(rng), u(rng));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("mixture backward") {
  const GateDistribution<double> uniform{};
  auto g = mixed_gate_backward(uniform.softmax(), 0.5, 0.5, 1.0);
  CHECK(std::abs(g.da) < 1e-15);
  CHECK(std::abs(g.db) < 1e-15);

  g = mixed_gate_backward(GateProbabilities<double>::one_hot(gate::kA), 0.2, 0.9, 1.0);
  CHECK(g.da == 1.0);
  CHECK(g.db == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> n(0, 1);
  const double h = 1e-5;
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    GateDistribution<double> d;
    for (auto& z : d.z) z = n(rng);
    const double a = 0.05 + 0.9 * u(rng);
    const double b = 0.05 + 0.9 * u(rng);
    const double up = n(rng);
    const auto grad = mixed_gate_backward(d.softmax(), a, b, up);
    auto f = [&](const GateDistribution<double>& dd, double aa, double bb) {
      return up * mixed_gate_forward(dd.softmax(), aa, bb);
    };
    for (std::size_t i = 0; i < kNumGates; ++i) {
      auto plus = d, minus = d;
      plus.z[i] += h;
      minus.z[i] -= h;
      const double fd = (f(plus, a, b) - f(minus, a, b)) / (2 * h);
      worst = std::max(worst, rel_err(grad.dz[i], fd));
    }
    const double fda = (f(d, a + h, b) - f(d, a - h, b)) / (2 * h);
    const double fdb = (f(d, a, b + h) - f(d, a, b - h)) / (2 * h);
    worst = std::max(worst, rel_err(grad.da, fda));
    worst = std::max(worst, rel_err(grad.db, fdb));

    // The coefficient route used by the layers must agree with the direct formula.
    std::array<double, kNumGates> dz{};
    const GateCoeffs<double> dcoef{up, up * a, up * b, up * a * b};
    coeff_grad_to_logit_grad<double>(d.softmax(), dcoef, dz);
    for (std::size_t i = 0; i < kNumGates; ++i) CHECK(std::abs(dz[i] - grad.dz[i]) < 1e-12);
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("residual initialization") {
  auto p = residual_init<double>(5.0).softmax();
  CHECK(p.p[gate::kA] == doctest::Approx(0.9082081266748885).epsilon(1e-12));
  CHECK(p.p[0] == doctest::Approx(0.006119458221674099).epsilon(1e-12));
  CHECK(p.argmax() == gate::kA);

  p = residual_init<double>(0.0).softmax();
  for (double v : p.p) CHECK(v == doctest::Approx(1.0 / 16).epsilon(1e-14));

  p = residual_init<double>(2.0).softmax();
  CHECK(p.p[gate::kA] == doctest::Approx(0.33002981752694643).epsilon(1e-12));

  CHECK_THROWS(residual_init<double>(-1.0));
}

TEST_CASE("gaussian initialization") {
  std::mt19937_64 r1(42), r2(42);
  CHECK(gaussian_init<double>(r1).z == gaussian_init<double>(r2).z);

  std::mt19937_64 rng(5);
  double sum = 0;
  std::array<double, kNumGates> prob_sum{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto d = gaussian_init<double>(rng);
    for (double z : d.z) sum += z;
    const auto p = d.softmax();
    double total = 0;
    for (std::size_t g = 0; g < kNumGates; ++g) {
      CHECK(p.p[g] > 0);
      prob_sum[g] += p.p[g];
      total += p.p[g];
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  CHECK(std::abs(sum / (n * kNumGates)) < 0.02);
  for (double s : prob_sum) CHECK(std::abs(s / n - 1.0 / 16) < 0.005);
}
