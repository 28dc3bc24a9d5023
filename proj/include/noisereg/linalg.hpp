#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include "tolerances.hpp"

namespace noisereg {

template <std::size_t N>
using Matrix = std::array<std::array<double, N>, N>;

template <std::size_t N>
using Vector = std::array<double, N>;

using Matrix3 = Matrix<3>;
using Matrix2 = Matrix<2>;

template <std::size_t N>
constexpr Matrix<N> identity() {
  Matrix<N> id{};
  for (std::size_t i = 0; i < N; ++i) id[i][i] = 1.0;
  return id;
}

template <std::size_t N>
Matrix<N> operator*(const Matrix<N>& a, const Matrix<N>& b) {
  Matrix<N> c{};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < N; ++k)
      for (std::size_t j = 0; j < N; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

template <std::size_t N>
Vector<N> operator*(const Matrix<N>& a, const Vector<N>& x) {
  Vector<N> y{};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) y[i] += a[i][j] * x[j];
  return y;
}

template <std::size_t N>
Matrix<N> scaled(Matrix<N> a, double s) {
  for (auto& row : a)
    for (auto& x : row) x *= s;
  return a;
}

/// Induced 1-norm (maximum absolute column sum).
template <std::size_t N>
double norm1(const Matrix<N>& a) {
  double best = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < N; ++i) col += std::abs(a[i][j]);
    best = std::max(best, col);
  }
  return best;
}

/// exp(A) by scaling and squaring: A is scaled by 2^-s until ||A||_1 <= 0.5,
/// a degree-18 Taylor polynomial is evaluated (truncation < 1e-22 there), and
/// the result is squared s times.
template <std::size_t N>
Matrix<N> expm(const Matrix<N>& a) {
  const double norm = norm1(a);
  int squarings = 0;
  if (norm > tol::expm_norm_threshold) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / tol::expm_norm_threshold)));
    while (std::ldexp(norm, -squarings) > tol::expm_norm_threshold) ++squarings;
  }
  const Matrix<N> b = scaled(a, std::ldexp(1.0, -squarings));

  // Horner form of sum_{k<=18} B^k / k!
  constexpr int degree = 18;
  Matrix<N> result = identity<N>();
  for (int k = degree; k >= 1; --k) {
    result = scaled(b * result, 1.0 / k);
    for (std::size_t i = 0; i < N; ++i) result[i][i] += 1.0;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

}  // namespace noisereg
