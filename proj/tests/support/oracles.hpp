#pragma once

// Reference implementations the library is checked against. Deliberately
// naive: plain loops, no shared code with the code under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "mobe/linalg.hpp"

namespace mobe::testing {

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = normal(rng);
  return m;
}

inline std::vector<Matrix> random_experts(std::mt19937_64& rng, std::size_t n, std::size_t rows, std::size_t cols,
                                          double stddev = 1.0) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_matrix(rng, rows, cols, stddev));
  return out;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double acc = 0.0L;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(acc);
    }
  return c;
}

inline double naive_frobenius_sq(const Matrix& a) {
  long double acc = 0.0L;
  for (double v : a.data()) acc += static_cast<long double>(v) * v;
  return static_cast<double>(acc);
}

/// Two-pass population mean and std over all entries of all matrices.
inline std::pair<double, double> two_pass_stats(const std::vector<Matrix>& ms) {
  long double sum = 0.0L;
  std::size_t count = 0;
  for (const auto& m : ms)
    for (double v : m.data()) {
      sum += v;
      ++count;
    }
  const long double mean = sum / count;
  long double sq = 0.0L;
  for (const auto& m : ms)
    for (double v : m.data()) sq += (v - mean) * (v - mean);
  return {static_cast<double>(mean), static_cast<double>(std::sqrt(sq / count))};
}

/// Central difference (f(x + h) - f(x - h)) / 2h, restoring x afterwards.
inline double central_difference(double& x, const std::function<double()>& f, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double plus = f();
  x = saved - h;
  const double minus = f();
  x = saved;
  return (plus - minus) / (2.0 * h);
}

/// Squared singular values of `a`, descending, from cyclic Jacobi on aᵀa.
inline std::vector<double> jacobi_singular_energies(const Matrix& a) {
  const std::size_t n = a.cols();
  std::vector<long double> g(n * n, 0.0L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t r = 0; r < a.rows(); ++r) g[i * n + j] += static_cast<long double>(a(r, i)) * a(r, j);
  long double trace = 0.0L;
  for (std::size_t i = 0; i < n; ++i) trace += g[i * n + i];
  for (int sweep = 0; sweep < 60; ++sweep) {
    long double off = 0.0L;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += g[i * n + j] * g[i * n + j];
    if (off <= 1e-36L * trace * trace) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const long double apq = g[p * n + q];
        if (apq == 0.0L) continue;
        const long double theta = (g[q * n + q] - g[p * n + p]) / (2.0L * apq);
        const long double t = (theta >= 0 ? 1.0L : -1.0L) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0L));
        const long double c = 1.0L / std::sqrt(t * t + 1.0L), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const long double gkp = g[k * n + p], gkq = g[k * n + q];
          g[k * n + p] = c * gkp - s * gkq;
          g[k * n + q] = s * gkp + c * gkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const long double gpk = g[p * n + k], gqk = g[q * n + k];
          g[p * n + k] = c * gpk - s * gqk;
          g[q * n + k] = s * gpk + c * gqk;
        }
      }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(0.0, static_cast<double>(g[i * n + i]));
  std::sort(out.begin(), out.end(), std::greater<>());
  out.resize(std::min(a.rows(), a.cols()));
  return out;
}

/// Eckart–Young residual of the best rank-`rank` approximation of `a`.
inline double eckart_young(const Matrix& a, std::size_t rank) {
  const auto e = jacobi_singular_energies(a);
  long double acc = 0.0L;
  for (std::size_t i = rank; i < e.size(); ++i) acc += e[i];
  return static_cast<double>(acc);
}

inline double relative_difference(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace mobe::testing
