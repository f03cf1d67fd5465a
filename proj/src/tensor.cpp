#include "bbr/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <string>

#include "bbr/error.hpp"

namespace bbr {
namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape_) + " cannot hold " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got shape " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got shape " + shape_string(shape_));
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  const std::size_t c = cols();
  Tensor out = matrix(indices.size(), c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= shape_[0]) throw ShapeError("row index out of range");
    std::memcpy(out.data_.data() + i * c, data_.data() + indices[i] * c, c * sizeof(double));
  }
  return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
  if (a.shape() != b.shape()) return false;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(da[i]) != std::bit_cast<std::uint64_t>(db[i])) return false;
  }
  return true;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidInputError("argmax of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void affine(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& out) {
  const std::size_t n = x.rows();
  const std::size_t in = x.cols();
  const std::size_t width = w.cols();
  if (w.rows() != in || b.size() != width) {
    throw ShapeError("affine: input has " + std::to_string(in) + " columns, weight is " +
                     shape_string(w.shape()));
  }
  if (out.shape() != std::vector<std::size_t>{n, width}) out = Tensor::matrix(n, width);
  const double* wp = w.data().data();
  const double* bp = b.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data().data() + i * width;
    std::copy(bp, bp + width, o);
    const double* xi = x.data().data() + i * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double a = xi[k];
      if (a == 0.0) continue;
      const double* wk = wp + k * width;
      for (std::size_t j = 0; j < width; ++j) o[j] += a * wk[j];
    }
  }
}

void expect_matrix(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.shape()[0] != rows || t.shape()[1] != cols) {
    throw ShapeError(std::string(what) + ": expected [" + std::to_string(rows) + "x" +
                     std::to_string(cols) + "], got " + shape_string(t.shape()));
  }
}

}  // namespace bbr
