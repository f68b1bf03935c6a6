#include "mobe/activation.hpp"

#include <cmath>

#include "mobe/errors.hpp"

namespace mobe {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::kNone: return "none";
    case Activation::kSilu: return "silu";
    case Activation::kTanh: return "tanh";
    case Activation::kGelu: return "gelu";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  for (auto act : {Activation::kNone, Activation::kSilu, Activation::kTanh, Activation::kGelu,
                   Activation::kRelu, Activation::kSigmoid}) {
    if (to_string(act) == name) return act;
  }
  throw ArgumentError("unknown activation '" + std::string(name) + "'");
}

Activation activation_from_tag(std::uint32_t tag) {
  if (tag > static_cast<std::uint32_t>(Activation::kSigmoid)) {
    throw ArgumentError("unknown activation tag " + std::to_string(tag));
  }
  return static_cast<Activation>(tag);
}

double activate(Activation act, double x) {
  switch (act) {
    case Activation::kNone: return x;
    case Activation::kSilu: return x * sigmoid(x);
    case Activation::kTanh: return std::tanh(x);
    case Activation::kGelu: return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kSigmoid: return sigmoid(x);
  }
  return x;
}

double activate_derivative(Activation act, double x) {
  switch (act) {
    case Activation::kNone: return 1.0;
    case Activation::kSilu: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::kGelu:
      return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    case Activation::kRelu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::kSigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

Matrix activate(Activation act, const Matrix& z) {
  Matrix out = z;
  if (act == Activation::kNone) return out;
  for (double& v : out.data()) v = activate(act, v);
  return out;
}

Matrix activate_derivative(Activation act, const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  auto src = z.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = activate_derivative(act, src[i]);
  return out;
}

}  // namespace mobe
