// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "isac/channels.hpp"
#include "isac/common.hpp"
#include "isac/genetic.hpp"
#include "isac/scenario.hpp"
#include "isac/sensing.hpp"

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace isac {

class EstimatorError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One (angle, delay) pair defining a dictionary column.
struct SpaceTimeMode {
  double theta = 0.0;  // radians
  double tau = 0.0;    // seconds

  friend bool operator==(const SpaceTimeMode&, const SpaceTimeMode&) = default;
};

/// Angle/delay corrections, one column per mode: row 0 holds delta_theta, row 1 delta_tau.
class MismatchVector {
 public:
  MismatchVector() = default;
  explicit MismatchVector(int modes) : values_(Eigen::Matrix2Xd::Zero(2, modes)) {}

  int modes() const { return static_cast<int>(values_.cols()); }
  /// Total number of scalar corrections (2 Q).
  int size() const { return 2 * modes(); }
  double theta(int q) const { return values_(0, q); }
  double tau(int q) const { return values_(1, q); }
  double& theta(int q) { return values_(0, q); }
  double& tau(int q) { return values_(1, q); }
  void append_zero_mode();
  /// [delta_theta^T, delta_tau^T]^T
  RVector stacked() const;

  friend bool operator==(const MismatchVector& a, const MismatchVector& b) { return a.values_ == b.values_; }

 private:
  Eigen::Matrix2Xd values_;
};

/// Column of the stacked dictionary for one mode: entry (p N + n) is
/// scale * a_n(theta) * exp(-j 2 pi k_p tau B / K) over the given subcarriers k_p.
CVector mode_column(const SpaceTimeMode& mode, double scale, const std::vector<int>& subcarriers,
                    const ArrayConfig& array, const OfdmConfig& ofdm);

/// Stacked space-time dictionary Phi-bar over the pilot subcarriers, with prefactor sqrt(N / Q_cur).
class ModeMatrix {
 public:
  ModeMatrix(std::vector<SpaceTimeMode> base, MismatchVector delta, std::vector<int> subcarriers,
             const ArrayConfig& array, const OfdmConfig& ofdm);

  int columns() const { return static_cast<int>(base_.size()); }
  const CMatrix& matrix() const { return matrix_; }
  const std::vector<SpaceTimeMode>& base_modes() const { return base_; }
  const MismatchVector& delta() const { return delta_; }
  const std::vector<int>& subcarriers() const { return subcarriers_; }
  const ArrayConfig& array() const { return array_; }
  const OfdmConfig& ofdm() const { return ofdm_; }
  double prefactor() const;
  /// base + delta, angle clamped to [-pi/2, pi/2].
  SpaceTimeMode effective_mode(int q) const;
  bool angle_clamped() const { return clamped_; }

  void set_delta(const MismatchVector& delta);
  /// Appends a mode with zero correction. Existing columns are rescaled by the new prefactor.
  void append(const SpaceTimeMode& mode);

  /// Column q evaluated at base + (dtheta, dtau) without touching the stored state.
  CVector trial_column(int q, double dtheta, double dtau) const;
  /// Evaluates the modes with coefficients alpha on all K subcarriers.
  CommChannel extend(const CVector& alpha) const;

 private:
  void rebuild();
  SpaceTimeMode clamp_mode(SpaceTimeMode m, bool* clamped) const;

  std::vector<SpaceTimeMode> base_;
  MismatchVector delta_;
  std::vector<int> subcarriers_;
  ArrayConfig array_;
  OfdmConfig ofdm_;
  CMatrix matrix_;
  bool clamped_ = false;
};

ModeMatrix build_mode_matrix(const CommModesInit& init, const MismatchVector& delta,
                             const std::vector<int>& pilot_indices, const ArrayConfig& array, const OfdmConfig& ofdm);

struct CodebookSpec {
  int angle_oversampling = 2;
  double delay_step_factor = 0.5;  // delay step in units of 1/B
};

/// Geometry-driven dictionary of candidate modes, stacked over the pilot subcarriers.
struct Codebook {
  std::vector<double> angle_grid;
  std::vector<double> delay_grid;
  double angle_step = 0.0;
  double delay_step = 0.0;
  std::vector<SpaceTimeMode> atoms;  // angle-major enumeration of the grid product
  CMatrix columns;                   // unit Euclidean norm

  bool empty() const { return atoms.empty(); }
  std::size_t size() const { return atoms.size(); }
};

/// Angles over [-pi/2, pi/2] at (2/N)/oversampling rad, delays over [0, 2 diagonal / c] at step/B.
Codebook build_codebook(const RoomGeometry& geometry, const ArrayConfig& array, const OfdmConfig& ofdm,
                        const CodebookSpec& spec = {});

/// How Step 2 scores a candidate correction.
enum class MismatchObjective {
  profiled,     // coefficients on the current support re-fit by least squares for every candidate
  fixed_alpha,  // coefficients frozen at the Step 1 output
};

struct EstimatorConfig {
  double reg_lambda = 8.0;     // noise variances of residual energy an OMP atom or a Step 2 mode correction must remove
  double epsilon_stop = 1e-4;  // relative coefficient change that ends the outer loop
  int max_iterations = 8;
  int omp_max_atoms = 16;
  GeneticConfig genetic;
  double max_delta_theta = 3.0 * kPi / 180.0;  // radians
  double max_delta_tau = 6.25e-9;              // seconds
  bool enable_mismatch = true;                 // Step 2
  bool enable_augmentation = true;             // Step 3
  MismatchObjective objective = MismatchObjective::profiled;
  std::uint64_t seed = 0;
};

struct OmpResult {
  CVector alpha;
  std::vector<int> support;  // selection order
  double residual_norm = 0.0;
  int iterations = 0;
  bool rank_deficient = false;
};

/// Greedy OMP on the pilot-folded dictionary diag(s-bar) Phi-bar. `warm_support` columns are taken as
/// already selected. Unselected coefficients are exactly zero. `noise_var` is the per-entry noise variance
/// of `y_bar`; it sets the energy an atom must explain before it is accepted.
OmpResult omp_estimate(const CVector& y_bar, const CVector& s_bar, const CMatrix& phi, const EstimatorConfig& config,
                       const std::vector<int>& warm_support = {}, double noise_var = 0.0);

struct MismatchResult {
  MismatchVector delta;
  CVector alpha;  // coefficients belonging to `delta` (re-fit when the objective is profiled)
  double objective_before = 0.0;
  double objective_after = 0.0;
  std::vector<double> history;
};

/// Step 2: genetic search over the corrections of the modes with nonzero coefficients; the rest keep
/// their current corrections. Minimises |y - (Phi_delta alpha) .* s|; the result is discarded unless it
/// lowers the residual energy by at least reg_lambda * noise_var per optimised mode.
MismatchResult compensate_mismatch(const CVector& y_bar, const CVector& s_bar, const ModeMatrix& modes,
                                   const CVector& alpha_hat, const EstimatorConfig& config, Rng& rng,
                                   double noise_var = 0.0);

struct EstimatorState {
  int iteration = 0;
  CVector alpha;
  ModeMatrix phi;
  CVector residual;
  std::vector<int> codebook_source;  // per column: codebook atom index, -1 for sensed modes
  int augmented_atom = -1;           // atom appended by the last augmentation, -1 if none
};

/// Step 3: appends the codebook atom best correlated with the residual if it beats every current column.
EstimatorState augment_modes(const EstimatorState& state, const CVector& y_bar, const CVector& s_bar,
                             const Codebook& codebook);

struct IterationRecord {
  int iteration = 0;
  double residual_norm = 0.0;
  RVector delta;  // stacked [theta; tau]
  int augmented_atom = -1;
  std::vector<int> alpha_support;
  double alpha_change = 0.0;
};

struct Diagnostics {
  double initial_residual_norm = 0.0;
  std::vector<IterationRecord> iterations;
  bool converged = false;
  bool rank_deficient = false;
  bool angle_clamped = false;

  nlohmann::json to_json() const;
  /// Count of iterations whose residual exceeds its predecessor by more than `rel_tol` relative.
  int residual_increases(double rel_tol = 1e-9) const;
};

struct ChannelEstimate {
  CommChannel h_hat;
  CVector alpha;
  ModeMatrix modes;
  std::vector<int> codebook_source;
  Diagnostics diagnostics;
};

/// Sensing-aided estimation loop: OMP coefficients, mismatch compensation, mode augmentation, until the
/// relative coefficient change drops below epsilon_stop or max_iterations.
ChannelEstimate estimate_channel(const PilotFrame& frame, const CommModesInit& init, const Codebook& codebook,
                                 const EstimatorConfig& config, const OfdmConfig& ofdm, const ArrayConfig& array);

/// Per-pilot least squares with linear interpolation between pilots and constant extrapolation at the edges.
CommChannel ls_estimate(const PilotFrame& frame, const OfdmConfig& ofdm);

}  // namespace isac
