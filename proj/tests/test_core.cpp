#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <noisereg/core.hpp>
#include <noisereg/parallel.hpp>
#include <noisereg/rng.hpp>

using namespace noisereg;

namespace {

errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const error& e) {
    return e.code();
  }
  return errc::invalid_argument;
}

std::vector<std::uint64_t> first_draws(const SeedPolicy& p, std::uint64_t mode, std::uint64_t path, int n) {
  RandomStream s = derive_stream(p, mode, path);
  std::vector<std::uint64_t> out(n);
  for (auto& x : out) x = s.next_u64();
  return out;
}

}  // namespace

TEST_CASE("parameter validation", "[core]") {
  CHECK(validate_params({1.0, 1.0}, run_mode::stochastic).sigma == 1.0);
  CHECK(code_of([] { (void)validate_params({0.0, 1.0}, run_mode::stochastic); }) == errc::non_positive_sigma);
  CHECK(validate_params({0.0, 1.0}, run_mode::deterministic).sigma == 0.0);
  CHECK(code_of([] { (void)validate_params({-1.0, 1.0}, run_mode::deterministic); }) == errc::non_positive_sigma);
  CHECK(code_of([] { (void)validate_params({1.0, 0.0}, run_mode::stochastic); }) == errc::non_positive_horizon);
  CHECK(code_of([] { (void)validate_params({1.0, NAN}, run_mode::stochastic); }) == errc::non_positive_horizon);
}

TEST_CASE("moment cone", "[core]") {
  CHECK(MomentVector{1.0, 1.0, 1.0}.in_cone());
  CHECK(MomentVector{4.0, -2.0, 1.0}.in_cone());
  CHECK_FALSE(MomentVector{1.0, 1.1, 1.0}.in_cone());
  CHECK_FALSE(MomentVector{-1.0, 0.0, 1.0}.in_cone());
  CHECK(moments_of(complex(1.0, 2.0), complex(3.0, -1.0)) == MomentVector{5.0, 1.0, 10.0});
  CHECK(bracket(std::sqrt(3.0)) == Catch::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("Philox4x32-10 known-answer vectors", "[core][rng]") {
  using P = Philox4x32;
  CHECK(P::block({0, 0, 0, 0}, {0, 0}) == P::counter_type{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(P::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        P::counter_type{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(P::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        P::counter_type{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("stream derivation", "[core][rng]") {
  const SeedPolicy p{0x5EED};

  SECTION("determinism") { CHECK(first_draws(p, 3, 7, 64) == first_draws(p, 3, 7, 64)); }

  SECTION("distinct paths, modes and seeds") {
    const auto base = first_draws(p, 0, 0, 4);
    CHECK(base[0] != first_draws(p, 0, 1, 4)[0]);
    CHECK(base[0] != first_draws(p, 1, 0, 4)[0]);
    CHECK(base[0] != first_draws(SeedPolicy{0x5EEE}, 0, 0, 4)[0]);
    CHECK(base[0] != first_draws(SeedPolicy{0x5EED + (1ull << 32)}, 0, 0, 4)[0]);
  }

  SECTION("permuted evaluation order") {
    constexpr int n = 100;
    std::vector<std::vector<double>> in_order(n), shuffled(n);
    auto run = [&](std::size_t id, std::vector<std::vector<double>>& out) {
      RandomStream s = derive_stream(p, id % 10, id / 10);
      out[id].resize(32);
      for (auto& x : out[id]) x = s.normal();
    };
    for (std::size_t i = 0; i < n; ++i) run(i, in_order);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), std::mt19937(99));
    for (std::size_t i : order) run(i, shuffled);
    CHECK(in_order == shuffled);

    std::vector<std::vector<double>> threaded(n);
    parallel_for(n, 7, [&](std::size_t i) { run(order[i], threaded); });
    CHECK(in_order == threaded);
  }

  SECTION("index range") {
    CHECK(code_of([&] { (void)derive_stream(p, 1ull << 32, 0); }) == errc::invalid_argument);
    CHECK(code_of([&] { (void)derive_stream(p, 0, 1ull << 32); }) == errc::invalid_argument);
  }
}

TEST_CASE("normal draws have unit moments", "[core][rng]") {
  RandomStream s = derive_stream(SeedPolicy{}, 0, 0);
  constexpr int n = 200000;
  double sum = 0.0, sum_sq = 0.0, sum_4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sum_sq += z * z;
    sum_4 += z * z * z * z;
  }
  CHECK(std::abs(sum / n) < 5.0 / std::sqrt(n));
  CHECK(std::abs(sum_sq / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(sum_4 / n - 3.0) < 5.0 * std::sqrt(96.0 / n));

  RandomStream u = derive_stream(SeedPolicy{}, 1, 0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
  }
}

TEST_CASE("worker resolution", "[core][parallel]") {
  CHECK(resolve_workers(3u) == 3u);
  ::setenv("NOISE_REG_WORKERS", "5", 1);
  CHECK(resolve_workers() == 5u);
  CHECK(resolve_workers(2u) == 2u);
  ::setenv("NOISE_REG_WORKERS", "many", 1);
  CHECK(code_of([] { (void)resolve_workers(); }) == errc::invalid_argument);
  ::unsetenv("NOISE_REG_WORKERS");
  CHECK(resolve_workers() >= 1u);
}

TEST_CASE("parallel_for", "[core][parallel]") {
  SECTION("every index runs once") {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i].fetch_add(1); });
    CHECK(std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.load() == 1; }));
  }
  SECTION("lowest failing index wins") {
    for (unsigned workers : {1u, 3u, 16u}) {
      try {
        parallel_for(200, workers, [](std::size_t i) {
          if (i == 57 || i == 150) throw std::runtime_error("task " + std::to_string(i));
        });
        FAIL("expected a rethrow");
      } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "task 57");
      }
    }
  }
}
