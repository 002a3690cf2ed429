#include "inalu/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "inalu/errors.hpp"

namespace inalu {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                      " does not match shape " + shape_string());
  }
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ConfigError("ragged tensor literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor(1, values.size(), std::vector<double>(values));
}

Tensor Tensor::column(std::initializer_list<double> values) {
  return Tensor(values.size(), 1, std::vector<double>(values));
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1) throw ConfigError("item() on non-scalar tensor " + shape_string());
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::transposed() const {
  Tensor out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

Tensor Tensor::row_slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows_) throw ConfigError("row slice out of range");
  std::vector<double> part(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                           data_.begin() + static_cast<std::ptrdiff_t>(end * cols_));
  return Tensor(end - begin, cols_, std::move(part));
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

}  // namespace inalu
