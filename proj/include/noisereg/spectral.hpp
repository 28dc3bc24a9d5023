#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "moments.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace noisereg {

/// Periodic box [0, L) sampled at n_points; frequencies xi_k = 2 pi k / L in
/// FFT order (k = 0..n/2-1, then -n/2..-1).
struct SpatialGrid {
  std::size_t n_points = 4096;
  double length = 64.0;

  double dx() const { return length / static_cast<double>(n_points); }
  double dxi() const { return 2.0 * std::numbers::pi / length; }
  double x(std::size_t j) const { return static_cast<double>(j) * dx(); }

  double xi(std::size_t k) const {
    const auto n = static_cast<std::ptrdiff_t>(n_points);
    auto kk = static_cast<std::ptrdiff_t>(k);
    if (kk >= n / 2) kk -= n;
    return static_cast<double>(kk) * dxi();
  }

  std::vector<double> frequencies() const {
    std::vector<double> out(n_points);
    for (std::size_t k = 0; k < n_points; ++k) out[k] = xi(k);
    return out;
  }

  friend bool operator==(const SpatialGrid&, const SpatialGrid&) = default;
};

inline SpatialGrid make_grid(std::size_t n_points, double length) {
  if (n_points < 8 || (n_points & (n_points - 1)) != 0)
    throw error(errc::invalid_argument, "n_points must be a power of two >= 8, got " + std::to_string(n_points));
  if (!(length > 0.0) || !std::isfinite(length))
    throw error(errc::invalid_argument, "grid length must be positive");
  return {n_points, length};
}

/// Smallest power-of-two grid of the given length whose frequencies reach xi_max.
inline SpatialGrid grid_covering(double xi_max, double length) {
  std::size_t n = 8;
  while (static_cast<double>(n / 2 - 1) * (2.0 * std::numbers::pi / length) < xi_max) n *= 2;
  return make_grid(n, length);
}

struct FieldSnapshot {
  SpatialGrid grid;
  std::vector<complex> u;
  std::vector<complex> v;
  double t = 0.0;
};

/// Raw DFT coefficients of (u, v) on the grid's frequency lattice.
struct ModeCoefficients {
  SpatialGrid grid;
  std::vector<complex> u_hat;
  std::vector<complex> v_hat;
};

/// Fourier-side Gevrey profile e^{-c |xi|^{1/s}}.
struct GevreyDatum {
  double s = 2.0;
  double c = 1.0;

  double operator()(double xi) const { return std::exp(-c * std::pow(std::abs(xi), 1.0 / s)); }
};

enum class PhaseRule { zero, random };

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

inline std::vector<complex> dft(std::span<const complex> in, int sign) {
  const int n = static_cast<int>(in.size());
  std::vector<complex> out(in.size());
  if (in.empty()) return out;
  std::vector<complex> work(in.begin(), in.end());
  fftw_plan plan;
  {
    // only fftw_execute is thread safe
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(work.data()),
                            reinterpret_cast<fftw_complex*>(out.data()), sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

inline void require_size(std::size_t size, const SpatialGrid& grid, const char* what) {
  if (size != grid.n_points)
    throw error(errc::invalid_argument, std::string(what) + " has " + std::to_string(size) + " samples, grid has " +
                                            std::to_string(grid.n_points));
}

}  // namespace detail

/// a_k = sum_j u_j e^{-i xi_k x_j}, unnormalized.
inline std::vector<complex> forward_transform(std::span<const complex> samples) {
  return detail::dft(samples, FFTW_FORWARD);
}

/// u_j = (1/n) sum_k a_k e^{i xi_k x_j}; inverse of forward_transform.
inline std::vector<complex> backward_transform(std::span<const complex> coefficients) {
  std::vector<complex> out = detail::dft(coefficients, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(coefficients.size());
  for (auto& x : out) x *= scale;
  return out;
}

inline ModeCoefficients forward_transform(const FieldSnapshot& f) {
  detail::require_size(f.u.size(), f.grid, "u");
  detail::require_size(f.v.size(), f.grid, "v");
  return {f.grid, forward_transform(f.u), forward_transform(f.v)};
}

inline FieldSnapshot backward_transform(const ModeCoefficients& c, double t = 0.0) {
  detail::require_size(c.u_hat.size(), c.grid, "u_hat");
  detail::require_size(c.v_hat.size(), c.grid, "v_hat");
  return {c.grid, backward_transform(c.u_hat), backward_transform(c.v_hat), t};
}

/// Coefficients a_k = e^{-c |xi_k|^{1/s}} times a phase. Random phases are
/// conjugate-symmetric (theta_{-k} = -theta_k, real at k = 0 and Nyquist), so
/// the physical field is real.
inline std::vector<complex> gevrey_coefficients(const GevreyDatum& datum, const SpatialGrid& grid,
                                                PhaseRule phases = PhaseRule::zero,
                                                std::uint64_t seed = default_master_seed) {
  if (!(datum.s >= 1.0)) throw error(errc::invalid_argument, "Gevrey order s must be >= 1");
  if (!(datum.c > 0.0)) throw error(errc::invalid_argument, "Gevrey decay constant c must be positive");
  const std::size_t n = grid.n_points;
  std::vector<complex> a(n);
  for (std::size_t k = 0; k < n; ++k) a[k] = datum(grid.xi(k));
  if (phases == PhaseRule::random) {
    RandomStream rng(SeedPolicy{seed}, 0, 0);
    for (std::size_t k = 1; k < n / 2; ++k) {
      const complex phase = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
      a[k] *= phase;
      a[n - k] *= std::conj(phase);
    }
    if (rng.uniform() < 0.5) a[n / 2] = -a[n / 2];
  }
  return a;
}

/// Physical field with Gevrey coefficients in u and v = 0.
inline FieldSnapshot synthesize_gevrey(const GevreyDatum& datum, const SpatialGrid& grid,
                                       PhaseRule phases = PhaseRule::zero, std::uint64_t seed = default_master_seed) {
  return {grid, backward_transform(gevrey_coefficients(datum, grid, phases, seed)),
          std::vector<complex>(grid.n_points), 0.0};
}

/// sum_k <xi_k>^{2s} |a_k|^2 dxi. For s = 0 this equals (2 pi n / L) sum_j |u_j|^2.
inline double sobolev_norm_sq(std::span<const complex> coefficients, double s, const SpatialGrid& grid) {
  detail::require_size(coefficients.size(), grid, "coefficients");
  double sum = 0.0;
  for (std::size_t k = 0; k < coefficients.size(); ++k)
    sum += std::pow(bracket(grid.xi(k)), 2.0 * s) * std::norm(coefficients[k]);
  return sum * grid.dxi();
}

struct FieldMoments {
  double t = 0.0;
  double norm_u_sq = 0.0;  // E ||U(t)||^2_{H^s}
  double norm_v_sq = 0.0;  // E ||V(t)||^2_{H^{s-1/2}}
};

/// Per-mode exact moment evolution assembled into Sobolev norms. Mode k
/// starts from m(0) = (|a_k|^2, Re(conj(a_k) b_k), |b_k|^2) for u_hat = a,
/// v_hat = b. Modes are evaluated in parallel and summed in index order.
inline std::vector<FieldMoments> evolve_field_moments(const ModeCoefficients& data, const ModelParams& params,
                                                      double s, std::span<const double> t_grid,
                                                      unsigned workers = 1) {
  validate_params(params, run_mode::deterministic);
  detail::require_size(data.u_hat.size(), data.grid, "u_hat");
  detail::require_size(data.v_hat.size(), data.grid, "v_hat");
  for (double t : t_grid)
    if (!(t >= 0.0)) throw error(errc::invalid_argument, "evaluation times must be nonnegative");

  const std::size_t n = data.grid.n_points, nt = t_grid.size();
  std::vector<double> contrib_u(n * nt), contrib_v(n * nt);
  parallel_for(n, workers, [&](std::size_t k) {
    const double xi = data.grid.xi(k);
    const MomentVector m0 = moments_of(data.u_hat[k], data.v_hat[k]);
    const double w = std::pow(bracket(xi), 2.0 * s);
    const double w_v = std::pow(bracket(xi), 2.0 * (s - 0.5));
    if (m0 == MomentVector{}) return;
    const ModePropagator prop(xi, params.sigma);
    for (std::size_t i = 0; i < nt; ++i) {
      const MomentVector m = prop(m0, t_grid[i]);
      contrib_u[i * n + k] = w * m.m1;
      contrib_v[i * n + k] = w_v * m.m3;
    }
  });

  std::vector<FieldMoments> out(nt);
  for (std::size_t i = 0; i < nt; ++i) {
    double su = 0.0, sv = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      su += contrib_u[i * n + k];
      sv += contrib_v[i * n + k];
    }
    out[i] = {t_grid[i], su * data.grid.dxi(), sv * data.grid.dxi()};
  }
  return out;
}

inline std::vector<FieldMoments> evolve_field_moments(const FieldSnapshot& phi0, const FieldSnapshot& phi1,
                                                      const ModelParams& params, double s,
                                                      std::span<const double> t_grid, unsigned workers = 1) {
  if (!(phi0.grid == phi1.grid)) throw error(errc::invalid_argument, "phi0 and phi1 live on different grids");
  detail::require_size(phi0.u.size(), phi0.grid, "phi0");
  detail::require_size(phi1.u.size(), phi1.grid, "phi1");
  return evolve_field_moments(ModeCoefficients{phi0.grid, forward_transform(phi0.u), forward_transform(phi1.u)},
                              params, s, t_grid, workers);
}

}  // namespace noisereg
