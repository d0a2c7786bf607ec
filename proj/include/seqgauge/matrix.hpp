#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace seqgauge {

// Dense row-major matrix of doubles. Just enough for HMM parameter and
// trellis storage.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0)
      throw std::invalid_argument("Matrix: negative dimensions");
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(static_cast<int>(rows.size()),
             rows.size() ? static_cast<int>(rows.begin()->size()) : 0);
    int r = 0;
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != m.cols_)
        throw std::invalid_argument("Matrix::from_rows: ragged rows");
      int c = 0;
      for (double v : row) m(r, c++) = v;
      ++r;
    }
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  std::span<double> row(int r) { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }
  std::span<const double> row(int r) const { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

inline double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

// Scales each row to sum to one. Rows with non-positive or non-finite mass
// are set to the uniform distribution.
inline void normalize_rows(Matrix& m) {
  for (int r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    double s = sum(row);
    if (!(s > 0.0) || !std::isfinite(s)) {
      for (double& x : row) x = 1.0 / m.cols();
    } else {
      for (double& x : row) x /= s;
    }
  }
}

inline void normalize(std::span<double> v) {
  double s = sum(v);
  if (!(s > 0.0) || !std::isfinite(s)) {
    for (double& x : v) x = 1.0 / v.size();
  } else {
    for (double& x : v) x /= s;
  }
}

inline bool rows_stochastic(const Matrix& m, double tol) {
  for (int r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < m.cols(); ++c) {
      double x = m(r, c);
      if (!(x >= 0.0 && x <= 1.0)) return false;
      s += x;
    }
    if (std::fabs(s - 1.0) > tol) return false;
  }
  return true;
}

}  // namespace seqgauge
