#include "d3g/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "d3g/error.hpp"

namespace d3g {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::zero_norm: return "zero_norm";
    case ErrorKind::index: return "index";
    case ErrorKind::format: return "format";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::missing_file: return "missing_file";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::empty_input: return "empty_input";
  }
  return "unknown";
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw Error(ErrorKind::dimension, "Matrix::from_rows: ragged rows");
    }
    std::copy(row.begin(), row.end(), m.row(i++).begin());
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = 1.0;
  }
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::dimension, "dot: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) {
    acc += x * x;
  }
  return std::sqrt(acc);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::dimension,
                "cosine: length mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw Error(ErrorKind::zero_norm, "cosine: zero-norm input vector");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b) {
  if (x.cols() != w.rows() || b.size() != w.cols()) {
    throw Error(ErrorKind::dimension,
                "affine: shapes (" + std::to_string(x.rows()) + "x" +
                    std::to_string(x.cols()) + ")·(" + std::to_string(w.rows()) + "x" +
                    std::to_string(w.cols()) + ") + " + std::to_string(b.size()));
  }
  Matrix out(x.rows(), w.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(b.begin(), b.end(), dst.begin());
    auto src = x.row(r);
    for (std::size_t k = 0; k < x.cols(); ++k) {
      const double xv = src[k];
      if (xv == 0.0) {
        continue;
      }
      auto wrow = w.row(k);
      for (std::size_t c = 0; c < w.cols(); ++c) {
        dst[c] += xv * wrow[c];
      }
    }
  }
  return out;
}

Vector affine(std::span<const double> x, const Matrix& w, std::span<const double> b) {
  if (x.size() != w.rows() || b.size() != w.cols()) {
    throw Error(ErrorKind::dimension, "affine: vector/matrix shape mismatch");
  }
  Vector out(b.begin(), b.end());
  for (std::size_t k = 0; k < x.size(); ++k) {
    auto wrow = w.row(k);
    for (std::size_t c = 0; c < w.cols(); ++c) {
      out[c] += x[k] * wrow[c];
    }
  }
  return out;
}

void accumulate_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw Error(ErrorKind::dimension, "accumulate_at_b: shape mismatch");
  }
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto arow = a.row(r);
    auto brow = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = arow[i];
      if (av == 0.0) {
        continue;
      }
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) {
        orow[j] += av * brow[j];
      }
    }
  }
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::dimension, "matmul_a_bt: shape mismatch");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      out(i, j) = dot(a.row(i), b.row(j));
    }
  }
  return out;
}

Vector minmax_normalize(std::span<const double> v) {
  if (v.empty()) {
    throw Error(ErrorKind::empty_input, "minmax_normalize: empty vector");
  }
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  Vector out(v.size(), 1.0);
  if (hi == lo) {
    return out;
  }
  const double span = hi - lo;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = (v[i] - lo) / span;
  }
  return out;
}

double compensated_sum(std::span<const double> v) {
  double sum = 0.0;
  double comp = 0.0;
  for (double x : v) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

Vector finite_diff_gradient(
    const ScalarFunction& f,
    std::span<const double> x,
    double h,
    StepMode mode) {
  if (!(h > 0.0)) {
    throw Error(ErrorKind::numeric, "finite_diff_gradient: step must be positive");
  }
  Vector point(x.begin(), x.end());
  Vector grad(x.size(), 0.0);
  for (std::size_t k = 0; k < point.size(); ++k) {
    const double orig = point[k];
    const double step = mode == StepMode::relative ? h * (1.0 + std::abs(orig)) : h;
    point[k] = orig + step;
    const double up = f(point);
    point[k] = orig - step;
    const double down = f(point);
    point[k] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorKind::numeric,
                  "finite_diff_gradient: non-finite evaluation at coordinate " +
                      std::to_string(k));
    }
    grad[k] = (up - down) / (2.0 * step);
  }
  return grad;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) {
    throw Error(ErrorKind::index, "Rng::index: empty range");
  }
  const std::uint64_t range = n;
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % range);
  std::uint64_t draw = engine_();
  while (draw >= limit) {
    draw = engine_();
  }
  return static_cast<std::size_t>(draw % range);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = i;
  }
  for (std::size_t i = n; i > 1; --i) {
    std::swap(out[i - 1], out[index(i)]);
  }
  return out;
}

} // namespace d3g
