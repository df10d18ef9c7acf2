#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace jumpsae {

using Vector = std::vector<double>;

/// Dense row-major matrix of 64-bit floats.
///
/// Construction from external data validates finiteness; internally produced
/// matrices (products, gradients) are checked at the boundaries that matter
/// (optimizer updates, file I/O) instead of on every write.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Builds from nested rows; throws if rows are ragged or any entry is
  /// non-finite.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Vector column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

  Matrix transposed() const;
  bool all_finite() const noexcept;

  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a * b. For every output element the shared dimension is reduced in
/// ascending index order, so results are bit-identical run to run.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a * b^T without materialising the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double squared_norm(std::span<const double> a) noexcept;

/// Adds `bias` to every row of `m`.
void add_row_bias(Matrix& m, std::span<const double> bias);

}  // namespace jumpsae
