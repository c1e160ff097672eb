// SPDX-License-Identifier: Apache-2.0
#include "isac/common.hpp"

#include <cmath>

namespace isac {

double wrap_angle(double rad) {
  double w = std::remainder(rad, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace isac
