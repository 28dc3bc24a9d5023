#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include <noisereg/moments.hpp>

#include "oracles.hpp"

using namespace noisereg;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

void require_matrix(const Matrix3& a, const Matrix3& expected) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) REQUIRE_THAT(a[i][j], WithinAbs(expected[i][j], 1e-15));
}

/// Eigen-coordinates by a dense complex solve against the eigenbasis.
EigenCoefficients solve_coefficients(const MomentVector& m0, const ModeEigenData& ed) {
  Eigen::Matrix3cd basis;
  for (int i = 0; i < 3; ++i) {
    basis(i, 0) = ed.v0[i];
    basis(i, 1) = ed.v_plus[i];
    basis(i, 2) = ed.v_minus[i];
  }
  const Eigen::Vector3cd rhs(m0.m1, m0.m2, m0.m3);
  const Eigen::Vector3cd q = basis.fullPivLu().solve(rhs);
  return {q(0), q(1), q(2)};
}

}  // namespace

TEST_CASE("moment matrix by substitution", "[moments]") {
  require_matrix(build_moment_matrix(1.0, std::sqrt(2.0)), {{{0, 2, 0}, {1, -1, 1}, {0, 2, 0}}});
  require_matrix(build_moment_matrix(0.0, 1.0), {{{0, 2, 0}, {0, 0, 1}, {0, 0, 0}}});
  require_matrix(build_moment_matrix(2.0, 1.0), {{{0, 2, 0}, {2, -2, 1}, {0, 4, 0}}});
}

TEST_CASE("eigen data at xi = 2, sigma = 1", "[moments]") {
  const auto ed = eigen_data(2.0, 1.0);
  CHECK(ed.gamma == 2.0);
  CHECK(ed.delta == complex(6.0, 0.0));
  CHECK(ed.lambda_plus == complex(2.0, 0.0));
  CHECK(ed.lambda_minus == complex(-4.0, 0.0));
  CHECK(ed.lambda0 == 0.0);
}

TEST_CASE("degenerate spectra are rejected", "[moments]") {
  auto code_of = [](double xi, double sigma) {
    try {
      (void)eigen_data(xi, sigma);
    } catch (const error& e) {
      return e.code();
    }
    return errc::invalid_argument;
  };
  CHECK(code_of(0.0, 1.0) == errc::degenerate_spectrum);
  CHECK(code_of(-4.0, 1.0) == errc::degenerate_spectrum);
  CHECK(code_of(1.0, 0.0) == errc::non_positive_sigma);
}

TEST_CASE("complex branch for negative xi", "[moments]") {
  const auto ed = eigen_data(-1.0, 1.0);
  CHECK(ed.gamma == 0.5);
  CHECK(ed.delta.real() == 0.0);
  CHECK_THAT(ed.delta.imag(), WithinRel(std::sqrt(15.75), 1e-15));
  CHECK_THAT(ed.lambda_plus.real(), WithinRel(-0.25, 1e-15));
  CHECK_THAT(ed.lambda_plus.imag(), WithinRel(0.5 * std::sqrt(15.75), 1e-15));
}

TEST_CASE("spectrum properties on sampled frequencies", "[moments][property]") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> log_mag(-3.0, 3.0), sig(0.1, 4.0), coin(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double xi = (coin(gen) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, log_mag(gen));
    const double sigma = sig(gen);
    const ModeEigenData ed = mode_spectrum(xi, sigma);
    if (ed.degenerate()) continue;
    const double scale = std::max({std::abs(ed.lambda_plus), std::abs(ed.lambda_minus), ed.gamma});
    CHECK(std::abs(ed.lambda_plus + ed.lambda_minus + ed.gamma) <= tol::vieta * scale);
    CHECK(std::abs(ed.lambda_plus * ed.lambda_minus + 4.0 * xi) <= tol::vieta * std::max(4.0 * std::abs(xi), 1e-300));
    if (xi > 0.0) {
      CHECK(ed.delta.imag() == 0.0);
      CHECK(ed.delta.real() > 0.0);
    }
    if (xi <= 0.0) CHECK(ed.lambda_plus.real() <= 0.0);

    const Matrix3 a = build_moment_matrix(xi, sigma);
    for (auto [lambda, v] : {std::pair{complex(0.0), ed.v0}, std::pair{ed.lambda_plus, ed.v_plus},
                             std::pair{ed.lambda_minus, ed.v_minus}}) {
      double residual = 0.0, vnorm = 0.0;
      for (int r = 0; r < 3; ++r) {
        complex av = 0.0;
        for (int c = 0; c < 3; ++c) av += a[r][c] * v[c];
        residual = std::max(residual, std::abs(av - lambda * v[r]));
        vnorm = std::max(vnorm, std::abs(v[r]));
      }
      CHECK(residual <= tol::eigen_residual * (1.0 + std::abs(lambda)) * vnorm);
    }
  }
}

TEST_CASE("decomposition of initial moments", "[moments]") {
  const auto ed = eigen_data(2.0, 1.0);

  SECTION("eigenvector input") {
    const auto q = decompose_initial({1.0, 1.0, 2.0}, ed);
    CHECK_THAT(std::abs(q.q0), WithinAbs(0.0, 1e-15));
    CHECK_THAT(std::abs(q.q_plus - 1.0), WithinAbs(0.0, 1e-15));
    CHECK_THAT(std::abs(q.q_minus), WithinAbs(0.0, 1e-15));
  }
  SECTION("physical initial datum against a dense solve") {
    const MomentVector m0{1.0, 0.0, 0.0};
    const auto q = decompose_initial(m0, ed);
    const auto ref = solve_coefficients(m0, ed);
    CHECK_THAT(q.q0.real(), WithinRel(0.5, 1e-15));
    CHECK_THAT(q.q_plus.real(), WithinRel(1.0 / 3.0, 1e-15));
    CHECK_THAT(q.q_minus.real(), WithinRel(1.0 / 6.0, 1e-15));
    CHECK(std::abs(q.q0 - ref.q0) < 1e-14);
    CHECK(std::abs(q.q_plus - ref.q_plus) < 1e-14);
    CHECK(std::abs(q.q_minus - ref.q_minus) < 1e-14);
  }
  SECTION("zero frequency") {
    try {
      (void)decompose_initial({1.0, 0.0, 0.0}, mode_spectrum(0.0, 1.0));
      FAIL("expected ZeroFrequency");
    } catch (const error& e) {
      CHECK(e.code() == errc::zero_frequency);
    }
  }
}

TEST_CASE("reconstruction invariant", "[moments][property]") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> xs(-50.0, 50.0), sig(0.1, 4.0);
  for (int i = 0; i < 500; ++i) {
    const double xi = xs(gen);
    const double sigma = sig(gen);
    const ModeEigenData ed = mode_spectrum(xi, sigma);
    if (ed.degenerate() || std::abs(xi) < 1e-3) continue;
    const MomentVector m0 = oracle::random_cone_moments(gen);
    const auto q = decompose_initial(m0, ed);
    const auto ref = solve_coefficients(m0, ed);
    for (int r = 0; r < 3; ++r) {
      const complex rec = q.q0 * ed.v0[r] + q.q_plus * ed.v_plus[r] + q.q_minus * ed.v_minus[r];
      const double target = r == 0 ? m0.m1 : r == 1 ? m0.m2 : m0.m3;
      CHECK(std::abs(rec - target) <= 1e-10 * std::max(1.0, m0.norm_inf()) * std::max(1.0, std::abs(xi)));
    }
    CHECK(std::abs(q.q_plus - ref.q_plus) <= 1e-9 * std::max(1.0, std::abs(ref.q_plus)));
  }
}

TEST_CASE("exact evolution examples", "[moments]") {
  SECTION("zero moments stay zero") {
    const auto m = evolve_moments_exact({0, 0, 0}, 3.7, 0.8, 1.3);
    CHECK(m == MomentVector{0, 0, 0});
  }
  SECTION("pure lambda_+ eigenmode") {
    const auto m = evolve_moments_exact({1.0, 1.0, 2.0}, 2.0, 1.0, 1.0);
    const double e2 = std::exp(2.0);
    CHECK_THAT(m.m1, WithinRel(e2, 1e-13));
    CHECK_THAT(m.m2, WithinRel(e2, 1e-13));
    CHECK_THAT(m.m3, WithinRel(2.0 * e2, 1e-13));
    CHECK(oracle::rel_inf(m, oracle::rk4_moments({1.0, 1.0, 2.0}, 2.0, 1.0, 1.0)) < 1e-10);
  }
  SECTION("m3 - xi m1 is conserved") {
    for (double t : {0.0, 0.1, 0.5, 1.0, 2.0, 3.0}) {
      const auto m = evolve_moments_exact({1.0, 0.0, 0.0}, 2.0, 1.0, t);
      CHECK_THAT(m.m3 - 2.0 * m.m1, WithinAbs(-2.0, 1e-10 * std::max(1.0, m.norm_inf())));
      const auto r = oracle::rk4_moments({1.0, 0.0, 0.0}, 2.0, 1.0, t);
      CHECK_THAT(r.m3 - 2.0 * r.m1, WithinAbs(-2.0, 1e-9 * std::max(1.0, r.norm_inf())));
    }
  }
  SECTION("analytical value used by the Monte Carlo checks") {
    const auto m = evolve_moments_exact({1.0, 0.0, 0.0}, 2.0, 1.0, 1.0);
    const double expected = 0.5 + std::exp(2.0) / 3.0 + std::exp(-4.0) / 6.0;
    CHECK_THAT(m.m1, WithinRel(expected, 1e-14));
    CHECK_THAT(m.m1, WithinAbs(2.96607, 5e-6));
  }
  SECTION("degenerate and zero frequency fall back silently") {
    const MomentVector m0{0.3, 0.1, 0.7};
    for (double xi : {0.0, -4.0}) {
      const auto m = evolve_moments_exact(m0, xi, 1.0, 0.9);
      CHECK(oracle::rel_inf(m, oracle::rk4_moments(m0, xi, 1.0, 0.9)) < 1e-10);
    }
  }
  SECTION("double root that is not representable stays accurate") {
    // -(64/sigma^4)^{1/3}: rounding leaves |Delta| ~ 1e-8 gamma, near the threshold
    const double xi = -4.0 * std::pow(2.0, -4.0 / 3.0);
    const MomentVector m0{0.3, 0.1, 0.7};
    const auto m = evolve_moments_exact(m0, xi, 2.0, 0.9);
    CHECK(oracle::rel_inf(m, oracle::rk4_moments(m0, xi, 2.0, 0.9)) < 1e-6);
  }
}

TEST_CASE("matrix exponential route", "[moments]") {
  SECTION("nilpotent generator at xi = 0") {
    const MomentVector m0{0.4, -0.2, 0.9};
    for (double t : {0.3, 1.0, 2.5}) {
      const auto m = evolve_moments_expm(m0, 0.0, 1.0, t);
      CHECK_THAT(m.m1, WithinAbs(m0.m1 + 2.0 * t * m0.m2 + t * t * m0.m3, 1e-14));
      CHECK_THAT(m.m2, WithinAbs(m0.m2 + t * m0.m3, 1e-14));
      CHECK_THAT(m.m3, WithinAbs(m0.m3, 1e-14));
    }
  }
  SECTION("t = 0 is the identity") {
    const MomentVector m0{0.4, -0.2, 0.9};
    CHECK(evolve_moments_expm(m0, 7.0, 2.0, 0.0) == m0);
  }
  SECTION("deterministic growth rate 2 sqrt(xi)") {
    const auto a = oracle::rk4_moments({1, 0, 0}, 4.0, 0.0, 2.0);
    const auto b = oracle::rk4_moments({1, 0, 0}, 4.0, 0.0, 3.0);
    const double slope_oracle = std::log(b.m1 / a.m1);
    const double slope = std::log(evolve_moments_expm({1, 0, 0}, 4.0, 0.0, 3.0).m1 /
                                  evolve_moments_expm({1, 0, 0}, 4.0, 0.0, 2.0).m1);
    CHECK_THAT(slope_oracle, WithinAbs(4.0, 1e-3));
    CHECK_THAT(slope, WithinRel(slope_oracle, 1e-9));
  }
  SECTION("agrees with RK4 on well-conditioned cases") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> xs(-5.0, 5.0), sig(0.0, 2.0), ts(0.0, 2.0);
    for (int i = 0; i < 50; ++i) {
      const double xi = xs(gen), sigma = sig(gen), t = ts(gen);
      const MomentVector m0 = oracle::random_cone_moments(gen);
      CHECK(oracle::rel_inf(evolve_moments_expm(m0, xi, sigma, t), oracle::rk4_moments(m0, xi, sigma, t)) < 1e-12);
    }
  }
}

TEST_CASE("exact evolution matches RK4 and preserves structure", "[moments][property]") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> xs(-50.0, 50.0), sig(0.1, 4.0), ts(0.0, 2.0);
  for (int i = 0; i < 150; ++i) {
    const double xi = xs(gen), sigma = sig(gen), t = ts(gen);
    const MomentVector m0 = oracle::random_cone_moments(gen);
    const MomentVector m = evolve_moments_exact(m0, xi, sigma, t);
    INFO("xi=" << xi << " sigma=" << sigma << " t=" << t);
    CHECK(oracle::rel_inf(m, oracle::rk4_moments(m0, xi, sigma, t)) < 1e-6);
    CHECK(m.in_cone());
    const double c0 = m0.m3 - xi * m0.m1;
    const double scale = std::max({std::abs(m.m3), std::abs(xi * m.m1), std::abs(c0)});
    CHECK(std::abs((m.m3 - xi * m.m1) - c0) <= 1e-10 * scale);

    const ModePropagator prop(xi, sigma);
    CHECK(oracle::rel_inf(prop(m0, t), m) < 1e-9);
  }
}

TEST_CASE("weighted energy", "[moments]") {
  CHECK(weighted_energy({0, 0, 0}, 12.0) == 0.0);
  CHECK(weighted_energy({1, 0, 1}, 0.0) == 2.0);
  CHECK_THAT(weighted_energy({1, 0, 2}, std::sqrt(3.0)), WithinRel(2.0, 1e-15));
}

TEST_CASE("spectral abscissa bound", "[moments]") {
  const auto b1 = spectral_abscissa_bound(1.0);
  CHECK(b1.bound == 2.0);
  CHECK(b1.argmax_xi == 2.0);

  const auto b8 = spectral_abscissa_bound(8.0);
  CHECK_THAT(b8.bound, WithinRel(0.5, 1e-15));
  CHECK_THAT(b8.argmax_xi, WithinRel(0.125, 1e-15));
  CHECK_THAT(mode_spectrum(b8.argmax_xi, 8.0).lambda_plus.real(), WithinRel(b8.bound, 1e-12));

  // brute-force grid maximization
  double best = -1e300, arg = 0.0;
  for (long k = -100000; k <= 100000; ++k) {
    const double xi = 1e-3 * static_cast<double>(k);
    const double re = mode_spectrum(xi, 1.0).lambda_plus.real();
    if (re > best) {
      best = re;
      arg = xi;
    }
  }
  CHECK(best <= 2.0 + 1e-12);
  CHECK(std::abs(arg - 2.0) <= 1e-3);

  CHECK_THROWS_AS(spectral_abscissa_bound(0.0), error);
}
