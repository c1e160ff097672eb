// SPDX-License-Identifier: Apache-2.0
#include "isac/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace isac {

namespace {

constexpr double kRadicandClampFloor = -1e-24;  // s^2

std::vector<double> taper_weights(int length, Taper taper) {
  std::vector<double> w(static_cast<std::size_t>(length), 1.0);
  if (taper == Taper::hann)
    for (int i = 0; i < length; ++i)
      w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * (i + 1) / (length + 1));
  return w;
}

// Vertex offset of the parabola through (-1, l), (0, c), (1, r); in [-0.5, 0.5] for a true peak.
double parabolic_offset(double l, double c, double r) {
  const double den = l - 2.0 * c + r;
  if (den >= 0.0) return 0.0;
  return std::clamp(0.5 * (l - r) / den, -0.5, 0.5);
}

double interpolate_axis(const std::vector<double>& axis, double fractional_index) {
  const auto last = static_cast<double>(axis.size() - 1);
  const double idx = std::clamp(fractional_index, 0.0, last);
  const auto lo = static_cast<std::size_t>(std::floor(idx));
  const std::size_t hi = std::min(lo + 1, axis.size() - 1);
  const double t = idx - static_cast<double>(lo);
  return axis[lo] + t * (axis[hi] - axis[lo]);
}

}  // namespace

RangeAngleGrid RangeAngleGrid::for_room(const RoomGeometry& room, const OfdmConfig& ofdm, double angle_step,
                                        Taper taper) {
  RangeAngleGrid g;
  g.taper = taper;
  const double step = 1.0 / (2.0 * ofdm.bandwidth());
  const double span = 2.0 * room.diagonal() / kSpeedOfLight;
  const int nd = static_cast<int>(std::ceil(span / step)) + 2;
  for (int i = 0; i < nd; ++i) g.delays.push_back(i * step);
  const int half = static_cast<int>(std::floor(kPi / 2.0 / angle_step + 1e-9));
  for (int i = -half; i <= half; ++i) g.angles.push_back(i * angle_step);
  return g;
}

void RangeAngleMap::write_csv(std::ostream& os) const {
  os << "delay_bin,angle_bin,value\n";
  for (Eigen::Index d = 0; d < values.rows(); ++d)
    for (Eigen::Index a = 0; a < values.cols(); ++a) os << d << ',' << a << ',' << values(d, a) << '\n';
}

RangeAngleMap range_angle_compress(const CMatrix& rx, const SensingWaveform& waveform, const OfdmConfig& ofdm,
                                   const ArrayConfig& array, const RangeAngleGrid& grid) {
  if (grid.delays.size() <= 1 || grid.angles.size() <= 1) throw SensingError("degenerate range-angle grid");
  const int n = array.n_antennas;
  const int k_total = ofdm.n_subcarriers;
  if (rx.rows() != n || rx.cols() != k_total) throw SensingError("rx dimensions do not match configs");

  const auto w_ant = taper_weights(n, grid.taper);
  const auto w_sub = taper_weights(k_total, grid.taper);
  const auto nd = static_cast<Eigen::Index>(grid.delays.size());
  const auto na = static_cast<Eigen::Index>(grid.angles.size());

  // ramps(k, d) = w_k exp(+j 2 pi k tau_d B / K)
  CMatrix ramps(k_total, nd);
  for (Eigen::Index d = 0; d < nd; ++d)
    for (int k = 0; k < k_total; ++k)
      ramps(k, d) = w_sub[static_cast<std::size_t>(k)] * std::conj(delay_phase(k, grid.delays[static_cast<std::size_t>(d)], ofdm));

  RangeAngleMap map;
  map.values.resize(nd, na);
  map.delay_axis = grid.delays;
  map.angle_axis = grid.angles;

  CVector tapered_a(n);
  Eigen::RowVectorXcd per_subcarrier(k_total);
  for (Eigen::Index ai = 0; ai < na; ++ai) {
    const CVector a = steering_vector(grid.angles[static_cast<std::size_t>(ai)], array);
    for (int i = 0; i < n; ++i) tapered_a(i) = w_ant[static_cast<std::size_t>(i)] * a(i);
    for (int k = 0; k < k_total; ++k) {
      const Complex tx_gain = a.dot(waveform.transmitted(k));  // a^H x[k]
      per_subcarrier(k) = std::conj(tx_gain) * tapered_a.dot(rx.col(k));
    }
    const Eigen::RowVectorXcd profile = per_subcarrier * ramps;
    map.values.col(ai) = profile.cwiseAbs2().transpose();
  }
  return map;
}

SensedModes extract_modes(const RangeAngleMap& map, int q_expected, double detection_threshold) {
  if (q_expected < 1) throw SensingError("q_expected must be >= 1");
  const auto& v = map.values;
  const double global_max = v.size() > 0 ? v.maxCoeff() : 0.0;
  const double floor = detection_threshold * global_max;

  struct Peak {
    Eigen::Index d, a;
    double value;
  };
  std::vector<Peak> peaks;
  for (Eigen::Index d = 0; d < v.rows(); ++d) {
    for (Eigen::Index a = 0; a < v.cols(); ++a) {
      const double c = v(d, a);
      if (!(c > floor) || c <= 0.0) continue;
      // Cells on the map edge only see half a neighbourhood; at endfire they also pick up the grating
      // image of main lobes near +-90 degrees.
      if (d == 0 || a == 0 || d + 1 == v.rows() || a + 1 == v.cols()) continue;
      bool is_max = true;
      for (Eigen::Index dd = -1; dd <= 1 && is_max; ++dd) {
        for (Eigen::Index da = -1; da <= 1; ++da) {
          if (dd == 0 && da == 0) continue;
          const Eigen::Index r = d + dd, col = a + da;
          if (r < 0 || r >= v.rows() || col < 0 || col >= v.cols()) continue;
          // Ties resolve toward the lower index so plateaus give exactly one peak.
          const bool earlier = dd < 0 || (dd == 0 && da < 0);
          if (v(r, col) > c || (earlier && v(r, col) == c)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) peaks.push_back({d, a, c});
    }
  }
  if (peaks.empty()) throw NoLosError();

  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& x, const Peak& y) { return x.value > y.value; });
  if (peaks.size() > static_cast<std::size_t>(q_expected)) peaks.resize(static_cast<std::size_t>(q_expected));

  std::vector<SensedMode> modes;
  for (const auto& p : peaks) {
    double fd = static_cast<double>(p.d), fa = static_cast<double>(p.a);
    if (p.d > 0 && p.d + 1 < v.rows()) fd += parabolic_offset(v(p.d - 1, p.a), p.value, v(p.d + 1, p.a));
    if (p.a > 0 && p.a + 1 < v.cols()) fa += parabolic_offset(v(p.d, p.a - 1), p.value, v(p.d, p.a + 1));
    modes.push_back({interpolate_axis(map.angle_axis, fa), interpolate_axis(map.delay_axis, fd), p.value});
  }

  const auto los_it = std::min_element(modes.begin(), modes.end(),
                                       [](const SensedMode& x, const SensedMode& y) { return x.tau_hat < y.tau_hat; });
  SensedModes out;
  out.los = *los_it;
  for (auto it = modes.begin(); it != modes.end(); ++it)
    if (it != los_it) out.nlos.push_back(*it);
  return out;
}

double bistatic_delay(double tau_los, double tau_q, double theta_los, double theta_q, bool* clamped) {
  if (!std::isfinite(tau_los) || !std::isfinite(tau_q) || !std::isfinite(theta_los) || !std::isfinite(theta_q))
    throw SensingError("non-finite sensing mode");
  double radicand =
      tau_los * tau_los / 4.0 + tau_q * tau_q / 4.0 - tau_los * tau_q / 2.0 * std::cos(theta_q - theta_los);
  if (radicand < 0.0) {
    if (radicand < kRadicandClampFloor) throw SensingError("negative cosine-law radicand: corrupted sensing modes");
    radicand = 0.0;
    if (clamped) *clamped = true;
  }
  return tau_q / 2.0 + std::sqrt(radicand);
}

CommModesInit map_to_bistatic(const SensedModes& modes) {
  CommModesInit init;
  const auto& los = modes.los;
  if (!(los.tau_hat > 0.0)) throw SensingError("LoS mode needs a positive delay");
  init.angles.push_back(los.theta_hat);
  init.delays.push_back(los.tau_hat / 2.0);
  for (const auto& m : modes.nlos) {
    bool clamped = false;
    init.delays.push_back(bistatic_delay(los.tau_hat, m.tau_hat, los.theta_hat, m.theta_hat, &clamped));
    init.angles.push_back(m.theta_hat);
    init.radicand_clamped = init.radicand_clamped || clamped;
  }
  return init;
}

}  // namespace isac
