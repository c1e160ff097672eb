// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "isac/channels.hpp"
#include "isac/common.hpp"
#include "isac/scenario.hpp"

#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace isac {

class SensingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when no peak survives detection, so there is no LoS candidate.
class NoLosError : public SensingError {
 public:
  NoLosError() : SensingError("no LoS candidate in range-angle map") {}
};

enum class Taper { rectangular, hann };

/// Evaluation grid of the range-angle compression. Delays are monostatic (two-way).
struct RangeAngleGrid {
  std::vector<double> delays;  // seconds
  std::vector<double> angles;  // radians
  Taper taper = Taper::hann;

  /// Delay bins of 1/(2B) out to 2 * diagonal / c, angle bins of `angle_step` over [-pi/2, pi/2].
  static RangeAngleGrid for_room(const RoomGeometry& room, const OfdmConfig& ofdm, double angle_step = kPi / 180.0,
                                 Taper taper = Taper::hann);
};

struct RangeAngleMap {
  RMatrix values;  // delay bin x angle bin, squared magnitude
  std::vector<double> delay_axis;
  std::vector<double> angle_axis;

  void write_csv(std::ostream& os) const;
};

struct SensedMode {
  double theta_hat = 0.0;  // radians
  double tau_hat = 0.0;    // seconds, two-way
  double strength = 0.0;
};

struct SensedModes {
  SensedMode los;
  std::vector<SensedMode> nlos;

  std::size_t size() const { return 1 + nlos.size(); }
};

/// Initial communication modes: index 0 is LoS, then the NLoS modes in sensing order.
struct CommModesInit {
  std::vector<double> angles;  // radians
  std::vector<double> delays;  // seconds, one-way bistatic
  bool radicand_clamped = false;

  std::size_t mode_count() const { return angles.size(); }
};

/// Two-way matched filter over the grid:
/// |sum_k w_k conj(a(theta)^H x[k]) (a(theta)^H W r[k]) exp(+j 2 pi k tau B / K)|^2.
RangeAngleMap range_angle_compress(const CMatrix& rx, const SensingWaveform& waveform, const OfdmConfig& ofdm,
                                   const ArrayConfig& array, const RangeAngleGrid& grid);

/// Up to `q_expected` interior local maxima (3x3 neighbourhood) above `detection_threshold` times the global maximum,
/// strongest first, refined by 3-point parabolic interpolation per axis. The shortest-delay peak is LoS.
SensedModes extract_modes(const RangeAngleMap& map, int q_expected, double detection_threshold);

/// Cosine-law mapping of monostatic sensing delays to bistatic AP -> scatterer -> UE delays.
CommModesInit map_to_bistatic(const SensedModes& modes);

/// The cosine-law radicand and result for one mode; exposed for direct testing.
double bistatic_delay(double tau_los, double tau_q, double theta_los, double theta_q, bool* clamped = nullptr);

}  // namespace isac
