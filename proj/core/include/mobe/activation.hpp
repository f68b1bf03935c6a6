#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "mobe/linalg.hpp"

namespace mobe {

/// Elementwise nonlinearity applied to the mixed basis. The numeric values are
/// the on-disk activation tags.
enum class Activation : std::uint32_t {
  kNone = 0,
  kSilu = 1,
  kTanh = 2,
  kGelu = 3,  // exact erf form
  kRelu = 4,
  kSigmoid = 5,
};

std::string_view to_string(Activation act);
/// Accepts "none", "silu", "tanh", "gelu", "relu", "sigmoid".
Activation parse_activation(std::string_view name);
Activation activation_from_tag(std::uint32_t tag);

double activate(Activation act, double x);
/// f'(x). ReLU uses 0 at the kink.
double activate_derivative(Activation act, double x);

Matrix activate(Activation act, const Matrix& z);
Matrix activate_derivative(Activation act, const Matrix& z);

}  // namespace mobe
