// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "isac/common.hpp"
#include "isac/scenario.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace isac {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ArrayConfig {
  int n_antennas = 8;
  double element_spacing = 0.5;  // wavelengths

  void validate() const;
};

struct OfdmConfig {
  int n_subcarriers = 256;            // K
  double subcarrier_spacing = 1.25e6;  // Hz
  double carrier_freq = 60e9;       // Hz
  double pilot_ratio = 0.2;         // eta = K_p / K
  double symbol_power = 1.0;        // sigma_s^2

  double bandwidth() const { return n_subcarriers * subcarrier_spacing; }
  double wavelength() const { return kSpeedOfLight / carrier_freq; }
  int pilot_count() const;
  /// K_p indices spread evenly over [0, K), starting at 0.
  std::vector<int> pilot_indices() const;
  void validate() const;
};

/// Per-subcarrier phase of a delay: exp(-j 2 pi k tau B / K), tau in seconds.
Complex delay_phase(int k, double tau, const OfdmConfig& ofdm);

/// Uplink channel h_u[k] as an N x K matrix; column k is h_u[k]. The downlink is its transpose.
struct CommChannel {
  CMatrix h;

  int antennas() const { return static_cast<int>(h.rows()); }
  int subcarriers() const { return static_cast<int>(h.cols()); }
  Eigen::RowVectorXcd downlink(int k) const { return h.col(k).transpose(); }
};

/// Monostatic sensing channel H_s[k], one N x N matrix per subcarrier.
struct SensingChannel {
  std::vector<CMatrix> h;

  int subcarriers() const { return static_cast<int>(h.size()); }
};

/// ULA response; element n is exp(j 2 pi d n sin(theta)).
CVector steering_vector(double theta, const ArrayConfig& array);

/// h_u[k] = sqrt(N/P) sum_p alpha_p a(theta_p) exp(-j 2 pi k tau_p B / K).
/// `prefactor_paths` overrides P in the prefactor (to superpose partial path sets).
CommChannel assemble_comm_channel(const PathSet& paths, const ArrayConfig& array, const OfdmConfig& ofdm,
                                  std::optional<int> prefactor_paths = std::nullopt);

SensingChannel assemble_sensing_channel(const PathSet& paths, const ArrayConfig& array, const OfdmConfig& ofdm);

enum class SensingPrecoder { omni, boresight, sweep };

/// Downlink probing signal x[k] = f[k] s_d[k] used during sensing.
struct SensingWaveform {
  CMatrix precoders;  // N x K, column k is f[k]
  CVector symbols;    // K, s_d[k]

  CVector transmitted(int k) const { return precoders.col(k) * symbols(k); }
};

SensingWaveform make_sensing_waveform(SensingPrecoder kind, const ArrayConfig& array, const OfdmConfig& ofdm,
                                      std::uint64_t seed);

/// r[k] = H_s[k] x[k] + n_s[k], returned as N x K.
CMatrix simulate_sensing_rx(const SensingChannel& hs, const SensingWaveform& waveform, double noise_var,
                            std::uint64_t seed);

struct PilotFrame {
  std::vector<int> pilot_indices;
  CVector tx_symbols;  // s_u at the pilots, length K_p
  CMatrix rx_signal;   // N x K_p
  double noise_var = 0.0;
  double rx_power = 1.0;

  /// Pilots including the sqrt(rho_u) receive amplitude, length K_p.
  CVector effective_pilots() const { return std::sqrt(rx_power) * tx_symbols; }
  /// y-bar: received pilots stacked subcarrier-major, length N K_p.
  CVector stacked_rx() const;
  /// s-bar: effective pilots repeated per antenna (s_u kron 1_N), length N K_p.
  CVector stacked_pilots() const;
};

enum class Constellation { qpsk, qam16 };

/// Unit-average-power constellation points.
std::vector<Complex> constellation_points(Constellation c);
Complex random_symbol(Constellation c, double power, Rng& rng);

/// y_u[k] = sqrt(rho_u) h_u[k] s_u[k] + n_u[k] on the pilot subcarriers, QPSK pilots of power sigma_s^2.
PilotFrame simulate_uplink_pilots(const CommChannel& hu, const OfdmConfig& ofdm, double rx_power, double noise_var,
                                  std::uint64_t seed);

/// Noise variance giving gamma_0 = sigma_s^2 rho_u / sigma_n^2.
inline double noise_var_for_snr(double gamma0_db, double symbol_power, double rx_power) {
  return symbol_power * rx_power / std::pow(10.0, gamma0_db / 10.0);
}

}  // namespace isac
