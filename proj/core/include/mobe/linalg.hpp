#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mobe {

/// Dense row-major matrix of doubles.
///
/// Every matrix handled by the toolkit (expert weights, transforms, bases,
/// router) is one of these. Storage on disk is single precision; all
/// arithmetic happens in double.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, double fill);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool all_finite() const noexcept;
  std::string shape_string() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scale) noexcept;

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct SvdResult {
  Matrix u;                // rows x q
  std::vector<double> s;   // q = min(rows, cols), non-increasing
  Matrix vt;               // q x cols
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without forming the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);

Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix vstack(std::span<const Matrix> blocks);

double frobenius_sq(const Matrix& a);
double frobenius_dist_sq(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Matrix& b);
/// Frobenius inner product Σ a_ij b_ij.
double inner(const Matrix& a, const Matrix& b);

/// Thin SVD. Throws NumericError (carrying the reconstruction residual) when
/// the decomposition does not converge.
SvdResult svd(const Matrix& a);

/// Best rank-`rank` approximation and its squared Frobenius residual, which is
/// the discarded singular energy Σ_{i>rank} s_i².
std::pair<Matrix, double> truncated_reconstruction(const SvdResult& svd, std::size_t rank);

/// Left factor U_k·diag(s_k) (rows x rank) and right factor Vt_k (rank x cols).
std::pair<Matrix, Matrix> truncated_factors(const SvdResult& svd, std::size_t rank);

/// Squared singular values beyond the leading `rank`: the Eckart–Young
/// residual of a rank-`rank` truncation.
double discarded_energy(std::span<const double> singular_values, std::size_t rank);

}  // namespace mobe
