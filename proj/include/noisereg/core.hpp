#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "tolerances.hpp"

namespace noisereg {

using complex = std::complex<double>;

enum class errc {
  non_positive_sigma,
  non_positive_horizon,
  degenerate_spectrum,
  zero_frequency,
  numerical_blowup,
  insufficient_resolution,
  certification_failure,
  config_parse,
  unknown_key,
  invalid_argument,
};

inline const char* to_string(errc code) {
  switch (code) {
    case errc::non_positive_sigma: return "NonPositiveSigma";
    case errc::non_positive_horizon: return "NonPositiveHorizon";
    case errc::degenerate_spectrum: return "DegenerateSpectrum";
    case errc::zero_frequency: return "ZeroFrequency";
    case errc::numerical_blowup: return "NumericalBlowup";
    case errc::insufficient_resolution: return "InsufficientResolution";
    case errc::certification_failure: return "CertificationFailure";
    case errc::config_parse: return "ConfigParse";
    case errc::unknown_key: return "UnknownKey";
    case errc::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Base of every error thrown by the library. The code identifies the
/// failure class; the message carries the specifics.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  errc code() const noexcept { return code_; }

  /// The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  errc code_;
  std::string detail_;
};

/// Japanese bracket <xi> = sqrt(1 + xi^2).
inline double bracket(double xi) { return std::hypot(1.0, xi); }

struct ModelParams {
  double sigma = 1.0;
  double horizon = 1.0;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

enum class run_mode { deterministic, stochastic };

inline ModelParams validate_params(const ModelParams& p, run_mode mode) {
  if (!(p.horizon > 0.0) || !std::isfinite(p.horizon))
    throw error(errc::non_positive_horizon, "horizon must be positive, got " + std::to_string(p.horizon));
  if (!std::isfinite(p.sigma) || p.sigma < 0.0)
    throw error(errc::non_positive_sigma, "sigma must be finite and nonnegative, got " + std::to_string(p.sigma));
  if (mode == run_mode::stochastic && !(p.sigma > 0.0))
    throw error(errc::non_positive_sigma, "stochastic runs need sigma > 0, got " + std::to_string(p.sigma));
  return p;
}

/// Second moments of one Fourier mode:
/// m1 = E|U|^2, m2 = E Re(conj(U) V), m3 = E|V|^2.
struct MomentVector {
  double m1 = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;

  double norm_inf() const { return std::max({std::abs(m1), std::abs(m2), std::abs(m3)}); }

  /// Cauchy-Schwarz cone with a tolerance scaled by the vector magnitude.
  bool in_cone(double tolerance = tol::cone) const {
    const double slack = tolerance * std::max(1.0, norm_inf());
    return m1 >= -slack && m3 >= -slack &&
           std::abs(m2) <= std::sqrt(std::max(0.0, m1) * std::max(0.0, m3)) + slack;
  }

  friend bool operator==(const MomentVector&, const MomentVector&) = default;
};

/// Moments of the deterministic pair (U, V).
inline MomentVector moments_of(complex u, complex v) {
  return {std::norm(u), (std::conj(u) * v).real(), std::norm(v)};
}

inline void require_moments(const MomentVector& m) {
  if (!std::isfinite(m.m1) || !std::isfinite(m.m2) || !std::isfinite(m.m3) || !m.in_cone())
    throw error(errc::invalid_argument, "moment vector violates m1,m3 >= 0, |m2| <= sqrt(m1 m3)");
}

struct ModeState {
  complex u_hat{};
  complex v_hat{};
  double xi = 0.0;
  double t = 0.0;

  bool finite() const {
    return std::isfinite(u_hat.real()) && std::isfinite(u_hat.imag()) &&
           std::isfinite(v_hat.real()) && std::isfinite(v_hat.imag());
  }
};

inline constexpr std::uint64_t default_master_seed = 0x5EED;

/// Streams are keyed by master_seed and addressed by (mode_index, path_index);
/// see rng.hpp for the derivation.
struct SeedPolicy {
  std::uint64_t master_seed = default_master_seed;

  static constexpr const char* stream_rule =
      "philox4x32-10; key = master_seed; counter = (draw_lo, draw_hi, path_index, mode_index)";
};

}  // namespace noisereg
