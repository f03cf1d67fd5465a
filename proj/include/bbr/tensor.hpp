#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bbr {

/// Dense row-major array of doubles. Rank-2 tensors are used as (rows x cols)
/// matrices throughout; a batch of samples is one sample per row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);
  static Tensor vector(std::vector<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Matrix view; both require rank 2.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  /// Rows `indices` gathered into a new (indices.size() x cols) matrix.
  Tensor gather_rows(std::span<const std::size_t> indices) const;

  void fill(double value);
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Same shape and same bit patterns in every element.
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;

/// Index of the largest element; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

/// out = x * w + broadcast(b), where x is (n x in), w is (in x out), b has `out` elements.
void affine(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& out);

/// Throws ShapeError with `what` unless `t` is a (rows x cols) matrix.
void expect_matrix(const Tensor& t, std::size_t rows, std::size_t cols, const char* what);

}  // namespace bbr
