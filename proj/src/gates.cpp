#include "lgn/gates.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace lgn {

namespace {

constexpr std::array<const char*, kNumGates> kGateNames = {
    "FALSE", "AND", "A_AND_NOT_B", "A",   "NOT_A_AND_B", "B",     "XOR",  "OR",
    "NOR",   "XNOR", "NOT_B",      "A_OR_NOT_B", "NOT_A", "NOT_A_OR_B", "NAND", "TRUE"};

template <typename T>
constexpr std::array<GateCoeffs<T>, kNumGates> make_coeff_table() {
  std::array<GateCoeffs<T>, kNumGates> table{};
  for (int g = 0; g < kNumGates; ++g) table[static_cast<std::size_t>(g)] = gate_coeffs<T>(g);
  return table;
}

template <typename T>
constexpr auto kCoeffTable = make_coeff_table<T>();

void check_unit_interval(double v, const char* what) {
  constexpr double kTol = 1e-9;
  if (!(v >= -kTol && v <= 1.0 + kTol)) {
    throw std::domain_error(std::string("relaxed gate input ") + what + " outside [0,1]: " +
                            std::to_string(v));
  }
}

}  // namespace

const char* gate_name(int g) {
  if (g < 0 || g >= kNumGates) return "?";
  return kGateNames[static_cast<std::size_t>(g)];
}

double relaxed_gate(int g, double a, double b) {
  check_unit_interval(a, "a");
  check_unit_interval(b, "b");
  if (g < 0 || g >= kNumGates) throw std::out_of_range("gate index outside 0..15");
  double sum = 0.0;
  for (int u = 0; u <= 1; ++u) {
    for (int v = 0; v <= 1; ++v) {
      if (!truth_table(g, u != 0, v != 0)) continue;
      sum += (u ? a : 1.0 - a) * (v ? b : 1.0 - b);
    }
  }
  return std::clamp(sum, 0.0, 1.0);
}

template <typename T>
GateCoeffs<T> GateProbabilities<T>::coeffs() const {
  GateCoeffs<T> c{};
  for (std::size_t i = 0; i < kNumGates; ++i) {
    const auto& gc = kCoeffTable<T>[i];
    c.c0 += p[i] * gc.c0;
    c.c1 += p[i] * gc.c1;
    c.c2 += p[i] * gc.c2;
    c.c3 += p[i] * gc.c3;
  }
  return c;
}

template <typename T>
int GateProbabilities<T>::argmax() const {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

template <typename T>
GateProbabilities<T> GateDistribution<T>::softmax() const {
  const T zmax = *std::max_element(z.begin(), z.end());
  GateProbabilities<T> out;
  T sum = 0;
  for (std::size_t i = 0; i < kNumGates; ++i) {
    out.p[i] = std::exp(z[i] - zmax);
    sum += out.p[i];
  }
  for (auto& v : out.p) v /= sum;
  return out;
}

template <typename T>
T mixed_gate_forward(const GateProbabilities<T>& probs, T a, T b) {
  return std::clamp(probs.coeffs()(a, b), T(0), T(1));
}

template <typename T>
MixedGateGrad<T> mixed_gate_backward(const GateProbabilities<T>& probs, T a, T b, T upstream) {
  MixedGateGrad<T> grad;
  const GateCoeffs<T> c = probs.coeffs();
  const T f = c(a, b);
  for (std::size_t i = 0; i < kNumGates; ++i) {
    const T gi = kCoeffTable<T>[i](a, b);
    grad.dz[i] = upstream * probs.p[i] * (gi - f);
  }
  grad.da = upstream * c.d_da(b);
  grad.db = upstream * c.d_db(a);
  return grad;
}

template <typename T>
void coeff_grad_to_logit_grad(const GateProbabilities<T>& probs, const GateCoeffs<T>& dcoef,
                              std::span<T, kNumGates> dz) {
  const GateCoeffs<T> c = probs.coeffs();
  const T base = dcoef.c0 * c.c0 + dcoef.c1 * c.c1 + dcoef.c2 * c.c2 + dcoef.c3 * c.c3;
  for (std::size_t i = 0; i < kNumGates; ++i) {
    const auto& gc = kCoeffTable<T>[i];
    const T dot = dcoef.c0 * gc.c0 + dcoef.c1 * gc.c1 + dcoef.c2 * gc.c2 + dcoef.c3 * gc.c3;
    dz[i] += probs.p[i] * (dot - base);
  }
}

template <typename T>
GateDistribution<T> residual_init(T strength) {
  if (strength < T(0)) throw std::invalid_argument("residual init strength must be >= 0");
  GateDistribution<T> d;
  d.z[gate::kA] = strength;
  return d;
}

template <typename T>
GateDistribution<T> gaussian_init(std::mt19937_64& rng) {
  std::normal_distribution<T> normal(T(0), T(1));
  GateDistribution<T> d;
  for (auto& v : d.z) v = normal(rng);
  return d;
}

#define LGN_INSTANTIATE_GATES(T)                                                              \
  template struct GateProbabilities<T>;                                                       \
  template struct GateDistribution<T>;                                                        \
  template T mixed_gate_forward<T>(const GateProbabilities<T>&, T, T);                        \
  template MixedGateGrad<T> mixed_gate_backward<T>(const GateProbabilities<T>&, T, T, T);     \
  template void coeff_grad_to_logit_grad<T>(const GateProbabilities<T>&, const GateCoeffs<T>&, \
                                            std::span<T, kNumGates>);                         \
  template GateDistribution<T> residual_init<T>(T);                                           \
  template GateDistribution<T> gaussian_init<T>(std::mt19937_64&);

LGN_INSTANTIATE_GATES(float)
LGN_INSTANTIATE_GATES(double)

#undef LGN_INSTANTIATE_GATES

}  // namespace lgn
