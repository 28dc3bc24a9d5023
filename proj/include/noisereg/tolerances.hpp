#pragma once

// Every numeric tolerance used by the library lives here.

namespace noisereg::tol {

/// Cone check |m2| <= sqrt(m1*m3) + cone * max(1, |m|_inf).
inline constexpr double cone = 1e-9;

/// |Delta| below degeneracy * (1 + gamma) counts as a double eigenvalue.
inline constexpr double degeneracy = 1e-8;

/// |xi| below this is treated as the zero mode.
inline constexpr double zero_frequency = 1e-12;

/// Allowed imaginary residue of the reconstructed moments, relative to |m|.
inline constexpr double imag_residue = 1e-9;

/// Scaling-and-squaring reduces ||tA||_1 below this before the Taylor kernel.
inline constexpr double expm_norm_threshold = 0.5;

/// Overflow guard for path simulation.
inline constexpr double blowup = 1e300;

/// Explicit-scheme budget dt*max(sigma^2 xi^2, sqrt|xi|, 1).
inline constexpr double stability_budget = 0.25;

/// Record times must land on a step boundary to this relative accuracy.
inline constexpr double time_alignment = 1e-9;

/// Vieta identities, relative.
inline constexpr double vieta = 1e-12;

/// Eigenpair residual, scaled by (1 + |lambda|) * |v|_inf.
inline constexpr double eigen_residual = 1e-10;

/// Abscissa bound check, absolute.
inline constexpr double abscissa = 1e-12;

/// Large-xi coefficient limits: relative deviation at the grid end.
inline constexpr double coefficient_limit = 1e-2;

/// qF constant stability under grid refinement, relative.
inline constexpr double qf_refinement = 0.05;

/// Certified inequality F(t) <= C1 exp(C2 t) F(0), relative slack.
inline constexpr double certification = 1e-12;

/// Gevrey demo verdicts.
inline constexpr double divergence_factor = 10.0;
inline constexpr double stability_change = 1e-2;

/// Monte Carlo agreement band, in standard errors.
inline constexpr double mc_band = 5.0;

/// Weak order fit: bias must exceed this many standard errors at the largest dt.
inline constexpr double weak_order_resolution = 3.0;

}  // namespace noisereg::tol
