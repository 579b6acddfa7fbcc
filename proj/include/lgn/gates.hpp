#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace lgn {

inline constexpr int kNumGates = 16;

// Gate index encoding: bit 0 = g(1,1), bit 1 = g(1,0), bit 2 = g(0,1), bit 3 = g(0,0).
namespace gate {
inline constexpr int kFalse = 0;
inline constexpr int kAnd = 1;
inline constexpr int kAandNotB = 2;
inline constexpr int kA = 3;
inline constexpr int kNotAandB = 4;
inline constexpr int kB = 5;
inline constexpr int kXor = 6;
inline constexpr int kOr = 7;
inline constexpr int kNor = 8;
inline constexpr int kXnor = 9;
inline constexpr int kNotB = 10;
inline constexpr int kAorNotB = 11;
inline constexpr int kNotA = 12;
inline constexpr int kNotAorB = 13;
inline constexpr int kNand = 14;
inline constexpr int kTrue = 15;
}  // namespace gate

constexpr bool truth_table(int g, bool a, bool b) {
  const int bit = 3 - (2 * int(a) + int(b));
  return ((g >> bit) & 1) != 0;
}

/// Gate index of g(b, a), i.e. the same gate with its inputs swapped.
constexpr int swap_inputs(int g) {
  return (g & 0b1001) | ((g & 0b0010) << 1) | ((g & 0b0100) >> 1);
}

/// Gate index of g(!a, b).
constexpr int negate_first_input(int g) {
  return ((g & 0b0011) << 2) | ((g & 0b1100) >> 2);
}

/// Gate index of g(a, !b).
constexpr int negate_second_input(int g) {
  return ((g & 0b0101) << 1) | ((g & 0b1010) >> 1);
}

const char* gate_name(int g);

/// Multilinear coefficients of a relaxed gate: g(a,b) = c0 + c1*a + c2*b + c3*a*b.
template <typename T>
struct GateCoeffs {
  T c0{}, c1{}, c2{}, c3{};

  constexpr T operator()(T a, T b) const { return c0 + c1 * a + c2 * b + c3 * a * b; }
  constexpr T d_da(T b) const { return c1 + c3 * b; }
  constexpr T d_db(T a) const { return c2 + c3 * a; }
};

template <typename T = double>
constexpr GateCoeffs<T> gate_coeffs(int g) {
  const T f00 = truth_table(g, false, false);
  const T f10 = truth_table(g, true, false);
  const T f01 = truth_table(g, false, true);
  const T f11 = truth_table(g, true, true);
  return {f00, f10 - f00, f01 - f00, f11 - f10 - f01 + f00};
}

/// Expected output of gate `g` when its inputs are independent Bernoulli(a), Bernoulli(b).
/// Throws std::domain_error when a or b lies outside [0,1] by more than 1e-9.
double relaxed_gate(int g, double a, double b);

/// Probability vector over the 16 gates. Either the softmax of a GateDistribution
/// or a hard one-hot choice.
template <typename T>
struct GateProbabilities {
  std::array<T, kNumGates> p{};

  static GateProbabilities one_hot(int g) {
    GateProbabilities out;
    out.p[static_cast<std::size_t>(g)] = T(1);
    return out;
  }

  /// Mixture coefficients sum_i p_i * coeffs(g_i).
  GateCoeffs<T> coeffs() const;

  /// Lowest index among the maximal entries.
  int argmax() const;
};

/// Trainable logits z for one gate node.
template <typename T>
struct GateDistribution {
  std::array<T, kNumGates> z{};

  GateProbabilities<T> softmax() const;
};

template <typename T>
T mixed_gate_forward(const GateProbabilities<T>& probs, T a, T b);

template <typename T>
struct MixedGateGrad {
  std::array<T, kNumGates> dz{};
  T da{};
  T db{};
};

/// Gradients of the softmax mixture. `dz` assumes `probs` is the softmax of the logits.
template <typename T>
MixedGateGrad<T> mixed_gate_backward(const GateProbabilities<T>& probs, T a, T b, T upstream);

/// Converts a gradient with respect to the mixture coefficients (c0..c3) into logit
/// gradients: dz_i = p_i * sum_k dcoef_k * (C_ik - c_k).
template <typename T>
void coeff_grad_to_logit_grad(const GateProbabilities<T>& probs, const GateCoeffs<T>& dcoef,
                              std::span<T, kNumGates> dz);

template <typename T>
GateDistribution<T> residual_init(T strength = T(5));

template <typename T>
GateDistribution<T> gaussian_init(std::mt19937_64& rng);

}  // namespace lgn
