// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

namespace isac {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s, exact
inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Wraps an angle to (-pi, pi].
double wrap_angle(double rad);

/// splitmix64 finaliser; used to derive independent per-trial / per-purpose streams.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

/// Seeded random source. All randomness in the library flows through explicit Rng objects.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  double phase() { return uniform(-kPi, kPi); }

  /// Circularly-symmetric complex Gaussian CN(0, variance).
  Complex complex_normal(double variance) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal();
    const double im = normal();
    return {s * re, s * im};
  }

  std::mt19937_64& engine() { return engine_; }

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace isac
