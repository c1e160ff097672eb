// SPDX-License-Identifier: Apache-2.0
#include "isac/channels.hpp"

#include <cmath>

namespace isac {

namespace {

constexpr std::uint64_t kPilotStream = 11;
constexpr std::uint64_t kNoiseStream = 12;

}  // namespace

void ArrayConfig::validate() const {
  if (n_antennas < 1) throw ConfigError("n_antennas must be >= 1");
  if (!(element_spacing > 0.0)) throw ConfigError("element spacing must be positive");
}

int OfdmConfig::pilot_count() const {
  return static_cast<int>(std::lround(pilot_ratio * n_subcarriers));
}

std::vector<int> OfdmConfig::pilot_indices() const {
  const int kp = pilot_count();
  std::vector<int> idx(static_cast<std::size_t>(kp));
  for (int i = 0; i < kp; ++i)
    idx[static_cast<std::size_t>(i)] = static_cast<int>((static_cast<long>(i) * n_subcarriers) / kp);
  return idx;
}

void OfdmConfig::validate() const {
  if (n_subcarriers < 2) throw ConfigError("need at least 2 subcarriers");
  if (!(subcarrier_spacing > 0.0) || !(carrier_freq > 0.0)) throw ConfigError("frequencies must be positive");
  if (!(pilot_ratio > 0.0 && pilot_ratio <= 1.0)) throw ConfigError("pilot ratio must be in (0, 1]");
  const int kp = pilot_count();
  if (kp < 1 || kp > n_subcarriers) throw ConfigError("pilot ratio yields no pilots");
  if (!(symbol_power > 0.0)) throw ConfigError("symbol power must be positive");
}

Complex delay_phase(int k, double tau, const OfdmConfig& ofdm) {
  const double samples = tau * ofdm.bandwidth();
  return std::polar(1.0, -2.0 * kPi * k * samples / ofdm.n_subcarriers);
}

CVector steering_vector(double theta, const ArrayConfig& array) {
  CVector a(array.n_antennas);
  const double step = 2.0 * kPi * array.element_spacing * std::sin(theta);
  for (int n = 0; n < array.n_antennas; ++n) a(n) = std::polar(1.0, step * n);
  return a;
}

CommChannel assemble_comm_channel(const PathSet& paths, const ArrayConfig& array, const OfdmConfig& ofdm,
                                  std::optional<int> prefactor_paths) {
  if (paths.empty()) throw ConfigError("communication channel needs at least one path");
  const int n = array.n_antennas;
  const int k_total = ofdm.n_subcarriers;
  const double p = prefactor_paths.value_or(static_cast<int>(paths.size()));
  const double prefactor = std::sqrt(static_cast<double>(n) / p);

  CommChannel ch{CMatrix::Zero(n, k_total)};
  for (const auto& path : paths.paths) {
    const CVector a = prefactor * path.gain * steering_vector(path.angle, array);
    for (int k = 0; k < k_total; ++k) ch.h.col(k) += a * delay_phase(k, path.delay, ofdm);
  }
  return ch;
}

SensingChannel assemble_sensing_channel(const PathSet& paths, const ArrayConfig& array, const OfdmConfig& ofdm) {
  if (paths.empty()) throw ConfigError("sensing channel needs at least one target");
  const int n = array.n_antennas;
  SensingChannel ch;
  ch.h.assign(static_cast<std::size_t>(ofdm.n_subcarriers), CMatrix::Zero(n, n));
  for (const auto& path : paths.paths) {
    const CVector a = steering_vector(path.angle, array);
    const CMatrix outer = path.gain * (a * a.adjoint());
    for (int k = 0; k < ofdm.n_subcarriers; ++k)
      ch.h[static_cast<std::size_t>(k)] += outer * delay_phase(k, path.delay, ofdm);
  }
  return ch;
}

SensingWaveform make_sensing_waveform(SensingPrecoder kind, const ArrayConfig& array, const OfdmConfig& ofdm,
                                      std::uint64_t seed) {
  const int n = array.n_antennas;
  const int k_total = ofdm.n_subcarriers;
  SensingWaveform w{CMatrix::Zero(n, k_total), CVector(k_total)};
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (int k = 0; k < k_total; ++k) {
    switch (kind) {
      case SensingPrecoder::omni:
        w.precoders(0, k) = 1.0;
        break;
      case SensingPrecoder::boresight:
        w.precoders.col(k) = norm * steering_vector(0.0, array);
        break;
      case SensingPrecoder::sweep: {
        // Cycle through N beams uniformly spaced in sin(theta).
        const double u = -1.0 + (2.0 * (k % n) + 1.0) / n;
        w.precoders.col(k) = norm * steering_vector(std::asin(u), array);
        break;
      }
    }
  }
  Rng rng(seed);
  for (int k = 0; k < k_total; ++k) w.symbols(k) = random_symbol(Constellation::qpsk, ofdm.symbol_power, rng);
  return w;
}

CMatrix simulate_sensing_rx(const SensingChannel& hs, const SensingWaveform& waveform, double noise_var,
                            std::uint64_t seed) {
  const int k_total = hs.subcarriers();
  if (waveform.precoders.cols() != k_total || waveform.symbols.size() != k_total)
    throw ConfigError("sensing waveform does not match the channel");
  const auto n = waveform.precoders.rows();
  CMatrix r(n, k_total);
  Rng rng(seed);
  for (int k = 0; k < k_total; ++k) {
    r.col(k) = hs.h[static_cast<std::size_t>(k)] * waveform.transmitted(k);
    if (noise_var > 0.0)
      for (Eigen::Index i = 0; i < n; ++i) r(i, k) += rng.complex_normal(noise_var);
  }
  return r;
}

CVector PilotFrame::stacked_rx() const {
  return Eigen::Map<const CVector>(rx_signal.data(), rx_signal.size());
}

CVector PilotFrame::stacked_pilots() const {
  const auto n = rx_signal.rows();
  const CVector eff = effective_pilots();
  CVector s(rx_signal.size());
  for (Eigen::Index p = 0; p < eff.size(); ++p) s.segment(p * n, n).setConstant(eff(p));
  return s;
}

std::vector<Complex> constellation_points(Constellation c) {
  std::vector<Complex> pts;
  if (c == Constellation::qpsk) {
    const double a = 1.0 / std::sqrt(2.0);
    for (double im : {a, -a})
      for (double re : {a, -a}) pts.emplace_back(re, im);
  } else {
    const double a = 1.0 / std::sqrt(10.0);
    for (int im : {3, 1, -1, -3})
      for (int re : {-3, -1, 1, 3}) pts.emplace_back(re * a, im * a);
  }
  return pts;
}

Complex random_symbol(Constellation c, double power, Rng& rng) {
  const int m = c == Constellation::qpsk ? 4 : 16;
  const int i = rng.uniform_int(0, m - 1);
  return std::sqrt(power) * constellation_points(c)[static_cast<std::size_t>(i)];
}

PilotFrame simulate_uplink_pilots(const CommChannel& hu, const OfdmConfig& ofdm, double rx_power, double noise_var,
                                  std::uint64_t seed) {
  PilotFrame f;
  f.pilot_indices = ofdm.pilot_indices();
  f.noise_var = noise_var;
  f.rx_power = rx_power;
  const int kp = static_cast<int>(f.pilot_indices.size());
  const auto n = hu.h.rows();
  f.tx_symbols.resize(kp);
  f.rx_signal.resize(n, kp);

  Rng pilot_rng(mix_seed(seed, kPilotStream));
  Rng noise_rng(mix_seed(seed, kNoiseStream));
  const double amp = std::sqrt(rx_power);
  for (int p = 0; p < kp; ++p) {
    const Complex s = random_symbol(Constellation::qpsk, ofdm.symbol_power, pilot_rng);
    f.tx_symbols(p) = s;
    f.rx_signal.col(p) = amp * s * hu.h.col(f.pilot_indices[static_cast<std::size_t>(p)]);
    if (noise_var > 0.0)
      for (Eigen::Index i = 0; i < n; ++i) f.rx_signal(i, p) += noise_rng.complex_normal(noise_var);
  }
  return f;
}

}  // namespace isac
