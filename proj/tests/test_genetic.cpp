// SPDX-License-Identifier: Apache-2.0
#include "isac/genetic.hpp"

#include <doctest.h>

using namespace isac;

namespace {

double sphere(const RVector& x, const RVector& centre) { return (x - centre).squaredNorm(); }

}  // namespace

TEST_CASE("genetic minimiser finds the minimum of a shifted bowl") {
  const RVector centre = (RVector(3) << 0.3, -0.7, 1.1).finished();
  const RVector lower = RVector::Constant(3, -2.0), upper = RVector::Constant(3, 2.0);
  GeneticConfig cfg;
  cfg.population = 40;
  cfg.generations = 120;
  Rng rng(5);
  const auto res = minimize_genetic([&](const RVector& x) { return sphere(x, centre); }, lower, upper,
                                    RVector::Zero(3), cfg, rng);
  CHECK((res.best - centre).norm() < 0.05);
  CHECK(res.best_value == doctest::Approx(sphere(res.best, centre)));
  CHECK(res.evaluations == cfg.population * (cfg.generations + 1) - cfg.elites * cfg.generations);
}

TEST_CASE("best-so-far is monotone and never worse than the start") {
  for (int trial = 0; trial < 30; ++trial) {
    const RVector centre = RVector::Random(4);
    const RVector start = RVector::Random(4);
    Rng rng(static_cast<std::uint64_t>(trial));
    auto f = [&](const RVector& x) { return sphere(x, centre) + 0.3 * std::sin(9.0 * x.sum()); };
    GeneticConfig cfg;
    cfg.generations = 20;
    const auto res = minimize_genetic(f, RVector::Constant(4, -1.0), RVector::Constant(4, 1.0), start, cfg, rng);
    REQUIRE(res.best_history.size() == 21);
    for (std::size_t i = 1; i < res.best_history.size(); ++i) CHECK(res.best_history[i] <= res.best_history[i - 1]);
    CHECK(res.best_value <= f(start));
    CHECK(res.best_value == res.best_history.back());
  }
}

TEST_CASE("candidates stay inside the box") {
  const RVector lower = (RVector(2) << -0.1, 5.0).finished(), upper = (RVector(2) << 0.1, 6.0).finished();
  Rng rng(3);
  bool inside = true;
  auto f = [&](const RVector& x) {
    inside = inside && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
    return -x.sum();  // pushes toward the upper corner
  };
  GeneticConfig cfg;
  cfg.mutation_scale = 2.0;
  const auto res = minimize_genetic(f, lower, upper, RVector::Zero(2), cfg, rng);
  CHECK(inside);
  CHECK(res.best(0) == doctest::Approx(0.1).epsilon(1e-3));
  CHECK(res.best(1) == doctest::Approx(6.0).epsilon(1e-3));
}

TEST_CASE("collapsed bounds return the start exactly") {
  const RVector start = (RVector(2) << 0.25, -0.5).finished();
  Rng rng(1);
  const auto res = minimize_genetic([](const RVector& x) { return x.squaredNorm(); }, start, start, start, {}, rng);
  CHECK(res.best == start);
}

TEST_CASE("same seed, same result") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    return minimize_genetic([](const RVector& x) { return std::cos(3 * x(0)) + x(1) * x(1); },
                            RVector::Constant(2, -2), RVector::Constant(2, 2), RVector::Zero(2), {}, rng);
  };
  const auto a = run(77), b = run(77);
  CHECK(a.best == b.best);
  CHECK(a.best_history == b.best_history);
}

TEST_CASE("invalid settings are rejected") {
  Rng rng(1);
  GeneticConfig cfg;
  cfg.elites = cfg.population;
  auto f = [](const RVector& x) { return x.sum(); };
  CHECK_THROWS(minimize_genetic(f, RVector::Zero(1), RVector::Ones(1), RVector::Zero(1), cfg, rng));
  CHECK_THROWS(minimize_genetic(f, RVector::Zero(2), RVector::Ones(1), RVector::Zero(1), {}, rng));
}
