#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

#include "core.hpp"
#include "linalg.hpp"
#include "tolerances.hpp"

namespace noisereg {

/// Generator of the second-moment system m' = A(xi) m for the Ito mode SDE.
inline Matrix3 build_moment_matrix(double xi, double sigma) {
  return {{{0.0, 2.0, 0.0}, {xi, -0.5 * sigma * sigma * xi * xi, 1.0}, {0.0, 2.0 * xi, 0.0}}};
}

using CVector3 = std::array<complex, 3>;

struct ModeEigenData {
  double xi = 0.0;
  double sigma = 0.0;
  double gamma = 0.0;  // sigma^2 xi^2 / 2
  complex delta{};     // principal sqrt(gamma^2 + 16 xi)
  double lambda0 = 0.0;
  complex lambda_plus{};
  complex lambda_minus{};
  CVector3 v0{};
  CVector3 v_plus{};
  CVector3 v_minus{};

  bool degenerate() const { return std::abs(delta) < tol::degeneracy * (1.0 + gamma); }
};

/// Spectrum of A(xi) for any sigma >= 0, without degeneracy checks.
///
/// The roots of l^2 + gamma l - 4 xi are (-gamma +- Delta)/2. With Delta real
/// the "+" root suffers cancellation for large |xi|, so it is recovered from
/// the product of the roots: lambda_+ = -4 xi / lambda_- = 8 xi / (gamma + Delta).
inline ModeEigenData mode_spectrum(double xi, double sigma) {
  ModeEigenData ed;
  ed.xi = xi;
  ed.sigma = sigma;
  ed.gamma = 0.5 * sigma * sigma * xi * xi;
  const double disc = ed.gamma * ed.gamma + 16.0 * xi;
  if (disc >= 0.0) {
    const double delta = std::sqrt(disc);
    ed.delta = delta;
    const double sum = ed.gamma + delta;
    ed.lambda_minus = -0.5 * sum;
    ed.lambda_plus = sum > 0.0 ? 8.0 * xi / sum : 0.0;
  } else {
    ed.delta = complex(0.0, std::sqrt(-disc));
    ed.lambda_plus = 0.5 * (-ed.gamma + ed.delta);
    ed.lambda_minus = 0.5 * (-ed.gamma - ed.delta);
  }
  ed.v0 = {1.0, 0.0, -xi};
  ed.v_plus = {1.0, 0.5 * ed.lambda_plus, xi};
  ed.v_minus = {1.0, 0.5 * ed.lambda_minus, xi};
  return ed;
}

inline ModeEigenData eigen_data(double xi, double sigma) {
  if (!(sigma > 0.0)) throw error(errc::non_positive_sigma, "eigen_data needs sigma > 0");
  ModeEigenData ed = mode_spectrum(xi, sigma);
  if (ed.degenerate())
    throw error(errc::degenerate_spectrum,
                "|Delta| = " + std::to_string(std::abs(ed.delta)) + " at xi = " + std::to_string(xi));
  return ed;
}

/// Coordinates of m(0) in the eigenbasis {v0, v+, v-}.
struct EigenCoefficients {
  complex q0{};
  complex q_plus{};
  complex q_minus{};
};

namespace detail {

inline EigenCoefficients coefficients(const MomentVector& m0, const ModeEigenData& ed) {
  const double xi = ed.xi;
  const complex& d = ed.delta;
  const complex& lp = ed.lambda_plus;
  const complex& lm = ed.lambda_minus;
  EigenCoefficients q;
  q.q0 = 0.5 * m0.m1 - m0.m3 / (2.0 * xi);
  q.q_plus = -lm / (2.0 * d) * m0.m1 + 2.0 / d * m0.m2 - lm / (2.0 * xi * d) * m0.m3;
  q.q_minus = lp / (2.0 * d) * m0.m1 - 2.0 / d * m0.m2 + lp / (2.0 * xi * d) * m0.m3;
  return q;
}

inline bool eigenbasis_usable(const ModeEigenData& ed) {
  return std::abs(ed.xi) >= tol::zero_frequency && !ed.degenerate();
}

}  // namespace detail

inline EigenCoefficients decompose_initial(const MomentVector& m0, const ModeEigenData& ed) {
  if (std::abs(ed.xi) < tol::zero_frequency)
    throw error(errc::zero_frequency, "eigen coordinates divide by xi; got xi = " + std::to_string(ed.xi));
  if (ed.degenerate()) throw error(errc::degenerate_spectrum, "eigen coordinates divide by Delta");
  return detail::coefficients(m0, ed);
}

/// e^{tA(xi)} m0 through the matrix exponential; valid for every xi and sigma.
inline MomentVector evolve_moments_expm(const MomentVector& m0, double xi, double sigma, double t) {
  if (t == 0.0) return m0;
  const Vector<3> m = expm(scaled(build_moment_matrix(xi, sigma), t)) * Vector<3>{m0.m1, m0.m2, m0.m3};
  return {m[0], m[1], m[2]};
}

namespace detail {

/// Reconstruction m(t) = q0 v0 + e^{l+ t} q+ v+ + e^{l- t} q- v-. Returns
/// false when the imaginary residue exceeds tolerance.
inline bool reconstruct(const EigenCoefficients& q, const ModeEigenData& ed, double t, MomentVector& out) {
  const complex qp = std::exp(ed.lambda_plus * t) * q.q_plus;
  const complex qm = std::exp(ed.lambda_minus * t) * q.q_minus;
  const complex m1 = q.q0 + qp + qm;
  const complex m2 = 0.5 * (ed.lambda_plus * qp + ed.lambda_minus * qm);
  const complex m3 = ed.xi * (qp + qm - q.q0);
  out = {m1.real(), m2.real(), m3.real()};
  const double residue = std::max({std::abs(m1.imag()), std::abs(m2.imag()), std::abs(m3.imag())});
  return std::isfinite(out.norm_inf()) && residue <= tol::imag_residue * out.norm_inf();
}

}  // namespace detail

/// Closed-form propagation in eigen coordinates. Zero frequency, degenerate
/// spectra and reconstruction failures fall back to the matrix exponential.
inline MomentVector evolve_moments_exact(const MomentVector& m0, double xi, double sigma, double t) {
  if (!(t >= 0.0)) throw error(errc::invalid_argument, "evolution time must be nonnegative");
  if (t == 0.0) return m0;
  const ModeEigenData ed = mode_spectrum(xi, sigma);
  if (detail::eigenbasis_usable(ed)) {
    MomentVector out;
    if (detail::reconstruct(detail::coefficients(m0, ed), ed, t, out)) return out;
  }
  return evolve_moments_expm(m0, xi, sigma, t);
}

/// Linear map m(0) -> m(t) for one (xi, sigma), for repeated evaluation.
class ModePropagator {
 public:
  ModePropagator(double xi, double sigma)
      : xi_(xi), sigma_(sigma), ed_(mode_spectrum(xi, sigma)), eigen_(detail::eigenbasis_usable(ed_)) {
    if (eigen_) {
      q_[0] = detail::coefficients({1.0, 0.0, 0.0}, ed_);
      q_[1] = detail::coefficients({0.0, 1.0, 0.0}, ed_);
      q_[2] = detail::coefficients({0.0, 0.0, 1.0}, ed_);
    }
  }

  const ModeEigenData& spectrum() const { return ed_; }
  bool uses_eigenbasis() const { return eigen_; }

  /// Transition matrix e^{tA(xi)}.
  Matrix3 transition(double t) const {
    if (t == 0.0) return identity<3>();
    if (eigen_) {
      Matrix3 p{};
      bool ok = true;
      for (int j = 0; j < 3 && ok; ++j) {
        MomentVector col;
        ok = detail::reconstruct(q_[j], ed_, t, col);
        p[0][j] = col.m1;
        p[1][j] = col.m2;
        p[2][j] = col.m3;
      }
      if (ok) return p;
    }
    return expm(scaled(build_moment_matrix(xi_, sigma_), t));
  }

  MomentVector operator()(const MomentVector& m0, double t) const { return apply(transition(t), m0); }

  static MomentVector apply(const Matrix3& p, const MomentVector& m0) {
    const Vector<3> m = p * Vector<3>{m0.m1, m0.m2, m0.m3};
    return {m[0], m[1], m[2]};
  }

 private:
  double xi_;
  double sigma_;
  ModeEigenData ed_;
  bool eigen_;
  std::array<EigenCoefficients, 3> q_{};
};

/// F = m1 + m3 / <xi>.
inline double weighted_energy(const MomentVector& m, double xi) { return m.m1 + m.m3 / bracket(xi); }

struct AbscissaBound {
  double bound = 0.0;
  double argmax_xi = 0.0;
};

/// sup_xi Re lambda_+(xi) = 2 sigma^{-2/3}, attained at xi = 2 sigma^{-4/3}.
inline AbscissaBound spectral_abscissa_bound(double sigma) {
  if (!(sigma > 0.0)) throw error(errc::non_positive_sigma, "abscissa bound needs sigma > 0");
  return {2.0 * std::pow(sigma, -2.0 / 3.0), 2.0 * std::pow(sigma, -4.0 / 3.0)};
}

}  // namespace noisereg
