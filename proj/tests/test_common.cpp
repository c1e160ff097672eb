// SPDX-License-Identifier: Apache-2.0
#include "isac/common.hpp"

#include <doctest.h>

#include <set>

using namespace isac;

TEST_CASE("mix_seed separates streams and is a pure function") {
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  std::set<std::uint64_t> seen;
  for (std::uint64_t base = 0; base < 20; ++base)
    for (std::uint64_t stream = 0; stream < 20; ++stream) seen.insert(mix_seed(base, stream));
  CHECK(seen.size() == 400);
}

TEST_CASE("Rng streams are reproducible") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    CHECK(x == b.normal());
    (void)c.normal();
  }
  CHECK(a == b);
  CHECK_FALSE(a == c);
}

TEST_CASE("complex_normal has the requested variance") {
  Rng rng(7);
  const int n = 200000;
  double power = 0.0;
  Complex mean{0.0, 0.0};
  for (int i = 0; i < n; ++i) {
    const Complex z = rng.complex_normal(2.5);
    power += std::norm(z);
    mean += z;
  }
  CHECK(power / n == doctest::Approx(2.5).epsilon(0.02));
  CHECK(std::abs(mean / static_cast<double>(n)) < 0.02);
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(3.0 * kPi / 2.0) == doctest::Approx(-kPi / 2.0));
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-50.0, 50.0);
    const double w = wrap_angle(x);
    CHECK(w > -kPi);
    CHECK(w <= kPi);
    CHECK(std::remainder(x - w, 2.0 * kPi) == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("degree conversion round trip") {
  CHECK(deg_to_rad(180.0) == doctest::Approx(kPi));
  CHECK(rad_to_deg(deg_to_rad(37.5)) == doctest::Approx(37.5));
}
