#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace d3g {

using Vector = std::vector<double>;

// Dense row-major matrix of 64-bit reals.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
bool all_finite(std::span<const double> v);

// a·b / (‖a‖‖b‖). Throws Error(zero_norm) if either input has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

// out = x·W + b, with x of shape (n × in), W (in × out), b (out).
Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b);
Vector affine(std::span<const double> x, const Matrix& w, std::span<const double> b);

// aᵀ·b accumulated into `out` (shape a.cols × b.cols).
void accumulate_at_b(const Matrix& a, const Matrix& b, Matrix& out);
// a·bᵀ (shape a.rows × b.rows).
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

// (v − min v)/(max v − min v); a constant vector maps to all ones.
Vector minmax_normalize(std::span<const double> v);

// Neumaier-compensated sum.
double compensated_sum(std::span<const double> v);

enum class StepMode {
  absolute, // step h for every coordinate
  relative, // step h·(1 + |x_k|)
};

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central differences, one coordinate at a time. Throws Error(numeric) on a
// non-finite evaluation.
Vector finite_diff_gradient(
    const ScalarFunction& f,
    std::span<const double> x,
    double h,
    StepMode mode = StepMode::absolute);

// Seeded generator with a fixed conversion from raw 64-bit draws to reals, so
// streams are reproducible independent of the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n must be positive.
  std::size_t index(std::size_t n);
  // Standard normal via Box-Muller.
  double normal();
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

} // namespace d3g
