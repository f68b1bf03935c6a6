#include "mobe/linalg.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mobe/errors.hpp"

namespace mobe {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) { return {m.data().data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())}; }
MutMap view(Matrix& m) { return {m.data().data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())}; }

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(op, a, b);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : Matrix(rows, cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                     shape_string());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape("add", *this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape("subtract", *this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double scale) noexcept {
  for (double& v : data_) v *= scale;
  return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_mismatch("matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_mismatch("matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw ShapeError("matvec: " + a.shape_string() + " times vector of length " + std::to_string(x.size()));
  }
  std::vector<double> y(a.rows());
  Eigen::Map<Eigen::VectorXd>(y.data(), Eigen::Index(y.size())).noalias() =
      view(a) * Eigen::Map<const Eigen::VectorXd>(x.data(), Eigen::Index(x.size()));
  return y;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  view(out) = view(a).transpose();
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape("hadamard", a, b);
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
  return out;
}

Matrix vstack(std::span<const Matrix> blocks) {
  if (blocks.empty()) throw ArgumentError("vstack: no blocks");
  const std::size_t cols = blocks.front().cols();
  std::size_t rows = 0;
  for (const auto& b : blocks) {
    if (b.cols() != cols) shape_mismatch("vstack", blocks.front(), b);
    rows += b.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& b : blocks) data.insert(data.end(), b.data().begin(), b.data().end());
  return Matrix(rows, cols, std::move(data));
}

double frobenius_sq(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return acc;
}

double frobenius_dist_sq(const Matrix& a, const Matrix& b) {
  require_same_shape("frobenius_dist_sq", a, b);
  double acc = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = ad[i] - bd[i];
    acc += d * d;
  }
  return acc;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape("max_abs_diff", a, b);
  double m = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) m = std::max(m, std::abs(ad[i] - bd[i]));
  return m;
}

double inner(const Matrix& a, const Matrix& b) {
  require_same_shape("inner", a, b);
  double acc = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) acc += ad[i] * bd[i];
  return acc;
}

SvdResult svd(const Matrix& a) {
  if (a.empty()) throw ArgumentError("svd: empty matrix");
  if (!a.all_finite()) throw ArgumentError("svd: input contains non-finite values");

  Eigen::BDCSVD<Eigen::MatrixXd> solver(view(a), Eigen::ComputeThinU | Eigen::ComputeThinV);

  const std::size_t q = std::min(a.rows(), a.cols());
  SvdResult out{Matrix(a.rows(), q), std::vector<double>(q), Matrix(q, a.cols())};
  view(out.u) = solver.matrixU();
  view(out.vt) = solver.matrixV().transpose();
  for (std::size_t i = 0; i < q; ++i) out.s[i] = solver.singularValues()(Eigen::Index(i));

  const bool finite = out.u.all_finite() && out.vt.all_finite() &&
                      std::all_of(out.s.begin(), out.s.end(), [](double v) { return std::isfinite(v); });
  if (solver.info() != Eigen::Success || !finite) {
    double residual = std::numeric_limits<double>::infinity();
    if (finite) {
      Matrix us = out.u;
      for (std::size_t r = 0; r < us.rows(); ++r)
        for (std::size_t c = 0; c < q; ++c) us(r, c) *= out.s[c];
      residual = std::sqrt(frobenius_dist_sq(matmul(us, out.vt), a) / std::max(frobenius_sq(a), 1e-300));
    }
    std::ostringstream msg;
    msg << "svd: no convergence for " << a.shape_string() << " input (relative residual " << residual << ")";
    throw NumericError(msg.str(), residual);
  }
  return out;
}

std::pair<Matrix, Matrix> truncated_factors(const SvdResult& svd, std::size_t rank) {
  const std::size_t q = svd.s.size();
  if (rank < 1 || rank > q) {
    throw ArgumentError("truncated rank " + std::to_string(rank) + " outside [1, " + std::to_string(q) + "]");
  }
  Matrix left(svd.u.rows(), rank);
  for (std::size_t r = 0; r < left.rows(); ++r)
    for (std::size_t c = 0; c < rank; ++c) left(r, c) = svd.u(r, c) * svd.s[c];
  Matrix right(rank, svd.vt.cols());
  std::copy_n(svd.vt.data().begin(), rank * svd.vt.cols(), right.data().begin());
  return {std::move(left), std::move(right)};
}

std::pair<Matrix, double> truncated_reconstruction(const SvdResult& svd, std::size_t rank) {
  auto [left, right] = truncated_factors(svd, rank);
  return {matmul(left, right), discarded_energy(svd.s, rank)};
}

double discarded_energy(std::span<const double> singular_values, std::size_t rank) {
  double acc = 0.0;
  for (std::size_t i = rank; i < singular_values.size(); ++i) acc += singular_values[i] * singular_values[i];
  return acc;
}

}  // namespace mobe
