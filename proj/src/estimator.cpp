// SPDX-License-Identifier: Apache-2.0
#include "isac/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace isac {

namespace {

// Residual energy below this fraction of |y|^2 counts as an exact fit.
constexpr double kExactFitEnergy = 1e-24;
// Pilot-domain coherence (and relative residual fit) above which two codebook atoms count as aliases.
constexpr double kAliasCoherence = 0.9;

std::vector<int> all_subcarriers(const OfdmConfig& ofdm) {
  std::vector<int> k(static_cast<std::size_t>(ofdm.n_subcarriers));
  std::iota(k.begin(), k.end(), 0);
  return k;
}

CMatrix select_columns(const CMatrix& m, const std::vector<int>& cols) {
  CMatrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}


}  // namespace

// ---------------------------------------------------------------------------------------------------------
// Mode matrix

void MismatchVector::append_zero_mode() {
  values_.conservativeResize(2, values_.cols() + 1);
  values_.col(values_.cols() - 1).setZero();
}

RVector MismatchVector::stacked() const {
  RVector out(size());
  out << values_.row(0).transpose(), values_.row(1).transpose();
  return out;
}

CVector mode_column(const SpaceTimeMode& mode, double scale, const std::vector<int>& subcarriers,
                    const ArrayConfig& array, const OfdmConfig& ofdm) {
  const int n = array.n_antennas;
  const CVector a = scale * steering_vector(mode.theta, array);
  CVector col(n * static_cast<Eigen::Index>(subcarriers.size()));
  for (std::size_t p = 0; p < subcarriers.size(); ++p) {
    const Complex ramp = delay_phase(subcarriers[p], mode.tau, ofdm);
    col.segment(static_cast<Eigen::Index>(p) * n, n) = a * ramp;
  }
  return col;
}

ModeMatrix::ModeMatrix(std::vector<SpaceTimeMode> base, MismatchVector delta, std::vector<int> subcarriers,
                       const ArrayConfig& array, const OfdmConfig& ofdm)
    : base_(std::move(base)), delta_(std::move(delta)), subcarriers_(std::move(subcarriers)), array_(array),
      ofdm_(ofdm) {
  if (delta_.modes() != static_cast<int>(base_.size()))
    throw EstimatorError("mismatch vector length must be twice the mode count");
  rebuild();
}

double ModeMatrix::prefactor() const {
  return base_.empty() ? 0.0 : std::sqrt(static_cast<double>(array_.n_antennas) / static_cast<double>(base_.size()));
}

SpaceTimeMode ModeMatrix::clamp_mode(SpaceTimeMode m, bool* clamped) const {
  if (std::abs(m.theta) > kPi / 2.0) {
    m.theta = std::copysign(kPi / 2.0, m.theta);
    if (clamped) *clamped = true;
  }
  return m;
}

SpaceTimeMode ModeMatrix::effective_mode(int q) const {
  const auto& b = base_[static_cast<std::size_t>(q)];
  return clamp_mode({b.theta + delta_.theta(q), b.tau + delta_.tau(q)}, nullptr);
}

void ModeMatrix::rebuild() {
  const double scale = prefactor();
  const Eigen::Index rows = array_.n_antennas * static_cast<Eigen::Index>(subcarriers_.size());
  matrix_.resize(rows, columns());
  for (int q = 0; q < columns(); ++q) {
    const auto& b = base_[static_cast<std::size_t>(q)];
    const SpaceTimeMode m = clamp_mode({b.theta + delta_.theta(q), b.tau + delta_.tau(q)}, &clamped_);
    matrix_.col(q) = mode_column(m, scale, subcarriers_, array_, ofdm_);
  }
}

void ModeMatrix::set_delta(const MismatchVector& delta) {
  if (delta.modes() != columns()) throw EstimatorError("mismatch vector length must be twice the mode count");
  delta_ = delta;
  rebuild();
}

void ModeMatrix::append(const SpaceTimeMode& mode) {
  base_.push_back(mode);
  delta_.append_zero_mode();
  rebuild();
}

CVector ModeMatrix::trial_column(int q, double dtheta, double dtau) const {
  const auto& b = base_[static_cast<std::size_t>(q)];
  return mode_column(clamp_mode({b.theta + dtheta, b.tau + dtau}, nullptr), prefactor(), subcarriers_, array_,
                     ofdm_);
}

CommChannel ModeMatrix::extend(const CVector& alpha) const {
  if (alpha.size() != columns()) throw EstimatorError("coefficient count does not match the mode matrix");
  const ModeMatrix full(base_, delta_, all_subcarriers(ofdm_), array_, ofdm_);
  const CVector stacked = full.matrix() * alpha;
  return {Eigen::Map<const CMatrix>(stacked.data(), array_.n_antennas, ofdm_.n_subcarriers)};
}

ModeMatrix build_mode_matrix(const CommModesInit& init, const MismatchVector& delta,
                             const std::vector<int>& pilot_indices, const ArrayConfig& array, const OfdmConfig& ofdm) {
  if (init.angles.size() != init.delays.size()) throw EstimatorError("inconsistent initial modes");
  std::vector<SpaceTimeMode> base;
  for (std::size_t q = 0; q < init.angles.size(); ++q) base.push_back({init.angles[q], init.delays[q]});
  return ModeMatrix(std::move(base), delta, pilot_indices, array, ofdm);
}

// ---------------------------------------------------------------------------------------------------------
// Codebook

Codebook build_codebook(const RoomGeometry& geometry, const ArrayConfig& array, const OfdmConfig& ofdm,
                        const CodebookSpec& spec) {
  if (spec.angle_oversampling < 1 || !(spec.delay_step_factor > 0.0)) throw EstimatorError("invalid codebook spec");
  Codebook cb;
  cb.angle_step = (2.0 / array.n_antennas) / spec.angle_oversampling;
  cb.delay_step = spec.delay_step_factor / ofdm.bandwidth();
  const int half = static_cast<int>(std::floor(kPi / 2.0 / cb.angle_step + 1e-9));
  for (int i = -half; i <= half; ++i) cb.angle_grid.push_back(i * cb.angle_step);
  const double tau_max = 2.0 * geometry.diagonal() / kSpeedOfLight;
  const int nd = static_cast<int>(std::floor(tau_max / cb.delay_step + 1e-9)) + 1;
  for (int j = 0; j < nd; ++j) cb.delay_grid.push_back(j * cb.delay_step);
  if (cb.angle_grid.empty() || cb.delay_grid.empty()) throw EstimatorError("empty codebook grid");

  const auto pilots = ofdm.pilot_indices();
  for (double theta : cb.angle_grid)
    for (double tau : cb.delay_grid) cb.atoms.push_back({theta, tau});
  cb.columns.resize(array.n_antennas * static_cast<Eigen::Index>(pilots.size()), static_cast<Eigen::Index>(cb.size()));
  for (std::size_t j = 0; j < cb.size(); ++j) {
    const CVector col = mode_column(cb.atoms[j], 1.0, pilots, array, ofdm);
    cb.columns.col(static_cast<Eigen::Index>(j)) = col / col.norm();
  }
  return cb;
}

// ---------------------------------------------------------------------------------------------------------
// Step 1

OmpResult omp_estimate(const CVector& y_bar, const CVector& s_bar, const CMatrix& phi, const EstimatorConfig& config,
                       const std::vector<int>& warm_support, double noise_var) {
  if (noise_var < 0.0) throw EstimatorError("noise variance must be non-negative");
  if (phi.cols() < 1) throw EstimatorError("OMP needs at least one dictionary column");
  if (y_bar.size() != phi.rows() || s_bar.size() != phi.rows()) throw EstimatorError("OMP dimension mismatch");

  OmpResult res;
  res.alpha = CVector::Zero(phi.cols());
  const double y_energy = y_bar.squaredNorm();
  res.residual_norm = std::sqrt(y_energy);
  if (y_energy == 0.0) return res;

  const CMatrix dict = s_bar.asDiagonal() * phi;
  const RVector col_energy = dict.colwise().squaredNorm().transpose();
  const int max_atoms = std::min<int>(config.omp_max_atoms, static_cast<int>(phi.cols()));

  CVector residual = y_bar;
  CVector coeffs;
  auto solve = [&](const std::vector<int>& support, CVector& x, CVector& r) {
    const CMatrix sub = select_columns(dict, support);
    Eigen::CompleteOrthogonalDecomposition<CMatrix> cod(sub);
    x = cod.solve(y_bar);
    r = y_bar - sub * x;
    return cod.rank() < static_cast<Eigen::Index>(support.size());
  };

  for (int j : warm_support) {
    if (j >= 0 && j < phi.cols() && std::find(res.support.begin(), res.support.end(), j) == res.support.end() &&
        static_cast<int>(res.support.size()) < max_atoms)
      res.support.push_back(j);
  }
  if (!res.support.empty()) res.rank_deficient = solve(res.support, coeffs, residual);

  std::vector<char> used(static_cast<std::size_t>(phi.cols()), 0);
  for (int j : res.support) used[static_cast<std::size_t>(j)] = 1;

  while (static_cast<int>(res.support.size()) < max_atoms) {
    const double r_energy = residual.squaredNorm();
    if (r_energy <= kExactFitEnergy * y_energy) break;
    const CVector corr = dict.adjoint() * residual;
    int best = -1;
    double best_score = 0.0;
    for (Eigen::Index j = 0; j < phi.cols(); ++j) {
      if (used[static_cast<std::size_t>(j)] || col_energy(j) == 0.0) continue;
      const double score = std::norm(corr(j)) / col_energy(j);
      if (score > best_score) {  // strict: lowest index wins ties
        best_score = score;
        best = static_cast<int>(j);
      }
    }
    if (best < 0) break;

    auto candidate = res.support;
    candidate.push_back(best);
    CVector x, r;
    const bool deficient = solve(candidate, x, r);
    // l0-penalised residual: an atom must buy more than lambda noise variances of energy.
    if (r_energy - r.squaredNorm() <= config.reg_lambda * noise_var) break;
    res.support = std::move(candidate);
    used[static_cast<std::size_t>(best)] = 1;
    coeffs = std::move(x);
    residual = std::move(r);
    res.rank_deficient = res.rank_deficient || deficient;
    ++res.iterations;
  }

  for (std::size_t i = 0; i < res.support.size(); ++i)
    res.alpha(res.support[i]) = coeffs(static_cast<Eigen::Index>(i));
  res.residual_norm = residual.norm();
  return res;
}

// ---------------------------------------------------------------------------------------------------------
// Step 2

MismatchResult compensate_mismatch(const CVector& y_bar, const CVector& s_bar, const ModeMatrix& modes,
                                   const CVector& alpha_hat, const EstimatorConfig& config, Rng& rng,
                                   double noise_var) {
  if (noise_var < 0.0) throw EstimatorError("noise variance must be non-negative");
  if (alpha_hat.size() != modes.columns()) throw EstimatorError("coefficient count does not match the mode matrix");
  MismatchResult res{modes.delta(), alpha_hat, 0.0, 0.0, {}};

  std::vector<int> active;
  for (int q = 0; q < modes.columns(); ++q)
    if (alpha_hat(q) != Complex(0.0, 0.0)) active.push_back(q);

  const CVector fit = (modes.matrix() * alpha_hat).cwiseProduct(s_bar);
  res.objective_before = res.objective_after = (y_bar - fit).norm();
  if (active.empty() || (config.max_delta_theta <= 0.0 && config.max_delta_tau <= 0.0)) return res;

  const auto na = static_cast<Eigen::Index>(active.size());
  RVector lower(2 * na), upper(2 * na), start(2 * na);
  for (Eigen::Index i = 0; i < na; ++i) {
    const int q = active[static_cast<std::size_t>(i)];
    lower(i) = -config.max_delta_theta;
    upper(i) = config.max_delta_theta;
    lower(na + i) = -config.max_delta_tau;
    upper(na + i) = config.max_delta_tau;
    start(i) = modes.delta().theta(q);
    start(na + i) = modes.delta().tau(q);
  }

  CVector alpha_active(na);
  for (Eigen::Index i = 0; i < na; ++i) alpha_active(i) = alpha_hat(active[static_cast<std::size_t>(i)]);

  const int n_ant = modes.array().n_antennas;
  const auto& pilots = modes.subcarriers();
  const auto kp = static_cast<Eigen::Index>(pilots.size());
  const double scale = modes.prefactor();
  const OfdmConfig& ofdm = modes.ofdm();

  // Spatial (N x Q) and frequency (K_p x Q) factors of the candidate columns.
  CMatrix spatial(n_ant, na), ramps(kp, na);
  auto factors = [&](const RVector& genes) {
    for (Eigen::Index i = 0; i < na; ++i) {
      const auto& b = modes.base_modes()[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])];
      spatial.col(i) = scale * steering_vector(std::clamp(b.theta + genes(i), -kPi / 2.0, kPi / 2.0), modes.array());
      const double tau = b.tau + genes(na + i);
      for (Eigen::Index p = 0; p < kp; ++p) ramps(p, i) = delay_phase(pilots[static_cast<std::size_t>(p)], tau, ofdm);
    }
  };
  auto build = [&](const RVector& genes) {
    factors(genes);
    CMatrix dict(y_bar.size(), na);
    for (Eigen::Index i = 0; i < na; ++i)
      for (Eigen::Index p = 0; p < kp; ++p)
        dict.col(i).segment(p * n_ant, n_ant) = s_bar.segment(p * n_ant, n_ant).cwiseProduct(spatial.col(i)) * ramps(p, i);
    return dict;
  };
  auto refit = [&](const CMatrix& dict) -> CVector { return dict.householderQr().solve(y_bar); };

  // When every antenna sees the same pilot on a subcarrier, D^H D = (A^H A) .* (R^H W R) and
  // D^H y = rowsum((A^H Z) .* R^T) with Z = conj(s) .* y reshaped N x K_p, so the profiled residual
  // |y|^2 - b^H G^-1 b never needs the full dictionary.
  const Eigen::Map<const CMatrix> s_grid(s_bar.data(), n_ant, kp);
  bool separable = s_bar.size() == n_ant * kp;
  for (Eigen::Index p = 0; separable && p < kp; ++p)
    separable = (s_grid.col(p).array() == s_grid(0, p)).all();
  RVector pilot_weight(kp);
  CMatrix z_grid(n_ant, kp);
  if (separable) {
    for (Eigen::Index p = 0; p < kp; ++p) pilot_weight(p) = std::norm(s_grid(0, p));
    z_grid = Eigen::Map<const CMatrix>(y_bar.data(), n_ant, kp).array() * s_grid.conjugate().array();
  }
  const double y_energy = y_bar.squaredNorm();
  auto profiled_residual = [&](const RVector& genes) {
    if (separable) {
      factors(genes);
      const CMatrix gram = (spatial.adjoint() * spatial).cwiseProduct(ramps.adjoint() * pilot_weight.asDiagonal() * ramps);
      const CVector proj = ((spatial.adjoint() * z_grid).cwiseProduct(ramps.transpose().conjugate())).rowwise().sum();
      const Eigen::LLT<CMatrix> llt(gram);
      if (llt.info() == Eigen::Success) {
        const double r2 = y_energy - proj.dot(llt.solve(proj)).real();
        // Below this the subtraction has lost too many digits; take the QR route.
        if (r2 > 1e-6 * y_energy) return std::sqrt(r2);
      }
    }
    const CMatrix dict = build(genes);
    return (y_bar - dict * refit(dict)).norm();
  };

  const bool profiled = config.objective == MismatchObjective::profiled;
  const Objective objective = [&](const RVector& genes) {
    if (profiled) return profiled_residual(genes);
    return (y_bar - build(genes) * alpha_active).norm();
  };

  const GeneticResult ga = minimize_genetic(objective, lower, upper, start, config.genetic, rng);
  res.history = ga.best_history;

  CVector alpha_new = alpha_active;
  double residual_new = ga.best_value;
  if (profiled) {
    alpha_new = refit(build(ga.best));
    residual_new = (y_bar - build(ga.best) * alpha_new).norm();
  }
  // Like an OMP atom, a correction has to pay for itself: reg_lambda noise variances per moved mode.
  const double required = config.reg_lambda * noise_var * static_cast<double>(na);
  if (!(res.objective_before * res.objective_before - residual_new * residual_new >= required)) return res;

  res.objective_after = residual_new;
  for (Eigen::Index i = 0; i < na; ++i) {
    const int q = active[static_cast<std::size_t>(i)];
    res.delta.theta(q) = ga.best(i);
    res.delta.tau(q) = ga.best(na + i);
    res.alpha(q) = alpha_new(i);
  }
  return res;
}

// ---------------------------------------------------------------------------------------------------------
// Step 3

EstimatorState augment_modes(const EstimatorState& state, const CVector& y_bar, const CVector& s_bar,
                             const Codebook& codebook) {
  EstimatorState next = state;
  next.augmented_atom = -1;
  if (codebook.empty()) return next;
  if (codebook.columns.rows() != y_bar.size()) throw EstimatorError("codebook does not match the pilot layout");

  const CVector folded_residual = s_bar.conjugate().cwiseProduct(state.residual);
  const RVector pilot_energy = s_bar.cwiseAbs2();

  double best_existing = 0.0;
  const CMatrix& phi = state.phi.matrix();
  for (Eigen::Index q = 0; q < phi.cols(); ++q) {
    const double energy = pilot_energy.dot(phi.col(q).cwiseAbs2());
    if (energy > 0.0) best_existing = std::max(best_existing, std::norm(phi.col(q).dot(folded_residual)) / energy);
  }

  std::vector<char> present(codebook.size(), 0);
  for (int src : state.codebook_source)
    if (src >= 0) present[static_cast<std::size_t>(src)] = 1;

  const CVector corr = codebook.columns.adjoint() * folded_residual;
  const RVector energies = (codebook.columns.cwiseAbs2().transpose() * pilot_energy);
  int best = -1;
  double best_score = 0.0;
  for (std::size_t j = 0; j < codebook.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (present[j] || energies(jj) == 0.0) continue;
    const double score = std::norm(corr(jj)) / energies(jj);
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(j);
    }
  }
  if (best < 0 || !(best_score > best_existing)) return next;

  // Sparse pilots alias delays: if an atom a resolution cell or more away looks the same on the pilots and
  // explains the residual about as well, the pilots cannot say which one is real, so add neither.
  const auto jb = static_cast<Eigen::Index>(best);
  const CVector weighted = pilot_energy.cast<Complex>().cwiseProduct(codebook.columns.col(jb));
  const CVector cross = codebook.columns.adjoint() * weighted;
  const double tau_best = codebook.atoms[static_cast<std::size_t>(best)].tau;
  const double resolution = 2.0 * codebook.delay_step;
  for (std::size_t j = 0; j < codebook.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (present[j] || energies(jj) == 0.0) continue;
    if (std::abs(codebook.atoms[j].tau - tau_best) <= resolution * (1.0 + 1e-9)) continue;
    const double coherence = std::norm(cross(jj)) / (energies(jj) * energies(jb));
    if (coherence >= kAliasCoherence && std::norm(corr(jj)) / energies(jj) >= kAliasCoherence * best_score)
      return next;
  }

  // Keep Phi-bar alpha unchanged while the prefactor moves from sqrt(N/Q) to sqrt(N/(Q+1)).
  const double q_old = state.phi.columns();
  const double rescale = std::sqrt((q_old + 1.0) / q_old);
  next.phi.append(codebook.atoms[static_cast<std::size_t>(best)]);
  next.alpha.conservativeResize(state.alpha.size() + 1);
  next.alpha.head(state.alpha.size()) *= rescale;
  next.alpha(state.alpha.size()) = 0.0;
  next.codebook_source.push_back(best);
  next.residual = y_bar - (next.phi.matrix() * next.alpha).cwiseProduct(s_bar);
  next.augmented_atom = best;
  return next;
}

// ---------------------------------------------------------------------------------------------------------
// Full loop

nlohmann::json Diagnostics::to_json() const {
  nlohmann::json j;
  j["initial_residual_norm"] = initial_residual_norm;
  j["converged"] = converged;
  j["rank_deficient"] = rank_deficient;
  j["angle_clamped"] = angle_clamped;
  j["iterations"] = nlohmann::json::array();
  for (const auto& it : iterations) {
    j["iterations"].push_back({{"iteration", it.iteration},
                               {"residual_norm", it.residual_norm},
                               {"delta", std::vector<double>(it.delta.data(), it.delta.data() + it.delta.size())},
                               {"augmented_atom_index", it.augmented_atom},
                               {"alpha_support", it.alpha_support},
                               {"alpha_change", it.alpha_change}});
  }
  return j;
}

int Diagnostics::residual_increases(double rel_tol) const {
  int count = 0;
  double prev = initial_residual_norm;
  for (const auto& it : iterations) {
    if (it.residual_norm > prev + rel_tol * std::max(prev, std::numeric_limits<double>::min())) ++count;
    prev = it.residual_norm;
  }
  return count;
}

ChannelEstimate estimate_channel(const PilotFrame& frame, const CommModesInit& init, const Codebook& codebook,
                                 const EstimatorConfig& config, const OfdmConfig& ofdm, const ArrayConfig& array) {
  if (init.mode_count() == 0) throw EstimatorError("estimator needs at least one initial mode");
  if (config.max_iterations < 1) throw EstimatorError("max_iterations must be >= 1");
  if (!(config.epsilon_stop > 0.0)) throw EstimatorError("epsilon_stop must be positive");

  const CVector y = frame.stacked_rx();
  const CVector s = frame.stacked_pilots();
  const auto q0 = static_cast<int>(init.mode_count());

  EstimatorState state{0, CVector::Zero(q0),
                       build_mode_matrix(init, MismatchVector(q0), frame.pilot_indices, array, ofdm), y,
                       std::vector<int>(static_cast<std::size_t>(q0), -1), -1};
  Diagnostics diag;
  diag.initial_residual_norm = y.norm();
  Rng rng(config.seed);
  // Sensed modes are trusted a priori and always enter the support; lambda gates codebook atoms only.
  std::vector<int> support(static_cast<std::size_t>(q0));
  std::iota(support.begin(), support.end(), 0);
  const double y_norm = y.norm();

  for (int it = 1; it <= config.max_iterations; ++it) {
    state.iteration = it;
    CVector alpha_prev = state.alpha;

    const OmpResult omp = omp_estimate(y, s, state.phi.matrix(), config, support, frame.noise_var);
    diag.rank_deficient = diag.rank_deficient || omp.rank_deficient;
    support = omp.support;
    state.alpha = omp.alpha;

    if (config.enable_mismatch) {
      const MismatchResult mm = compensate_mismatch(y, s, state.phi, state.alpha, config, rng, frame.noise_var);
      state.phi.set_delta(mm.delta);
      state.alpha = mm.alpha;
    }
    state.residual = y - (state.phi.matrix() * state.alpha).cwiseProduct(s);

    if (config.enable_augmentation) {
      const int cols_before = state.phi.columns();
      state = augment_modes(state, y, s, codebook);
      if (state.phi.columns() > cols_before) {
        alpha_prev.conservativeResize(cols_before);
        alpha_prev *= std::sqrt(static_cast<double>(cols_before + 1) / cols_before);
      }
    } else {
      state.augmented_atom = -1;
    }

    CVector padded_prev = CVector::Zero(state.alpha.size());
    padded_prev.head(alpha_prev.size()) = alpha_prev;
    const double alpha_energy = state.alpha.squaredNorm();
    const double residual_norm = state.residual.norm();
    double change = std::numeric_limits<double>::infinity();
    bool converged = false;
    if (alpha_energy > 0.0) {
      change = (state.alpha - padded_prev).squaredNorm() / alpha_energy;
      converged = change <= config.epsilon_stop;
    } else {
      converged = residual_norm <= 1e-12 * y_norm;
    }

    IterationRecord rec;
    rec.iteration = it;
    rec.residual_norm = residual_norm;
    rec.delta = state.phi.delta().stacked();
    rec.augmented_atom = state.augmented_atom;
    for (Eigen::Index q = 0; q < state.alpha.size(); ++q)
      if (state.alpha(q) != Complex(0.0, 0.0)) rec.alpha_support.push_back(static_cast<int>(q));
    rec.alpha_change = change;
    diag.iterations.push_back(std::move(rec));

    if (converged) {
      diag.converged = true;
      break;
    }
  }
  diag.angle_clamped = state.phi.angle_clamped();

  ChannelEstimate out{state.phi.extend(state.alpha), state.alpha, state.phi, state.codebook_source, std::move(diag)};
  return out;
}

// ---------------------------------------------------------------------------------------------------------
// LS baseline

CommChannel ls_estimate(const PilotFrame& frame, const OfdmConfig& ofdm) {
  const auto& pilots = frame.pilot_indices;
  if (pilots.empty()) throw EstimatorError("LS needs at least one pilot");
  const CVector eff = frame.effective_pilots();
  const auto n = frame.rx_signal.rows();
  CMatrix at_pilots(n, static_cast<Eigen::Index>(pilots.size()));
  for (Eigen::Index p = 0; p < eff.size(); ++p) {
    const double energy = std::norm(eff(p));
    if (energy == 0.0) throw EstimatorError("zero pilot symbol");
    at_pilots.col(p) = frame.rx_signal.col(p) * std::conj(eff(p)) / energy;
  }

  CommChannel out{CMatrix(n, ofdm.n_subcarriers)};
  std::size_t right = 0;
  for (int k = 0; k < ofdm.n_subcarriers; ++k) {
    while (right < pilots.size() && pilots[right] < k) ++right;
    if (right == 0) {
      out.h.col(k) = at_pilots.col(0);
    } else if (right == pilots.size()) {
      out.h.col(k) = at_pilots.col(static_cast<Eigen::Index>(pilots.size() - 1));
    } else {
      const auto r = static_cast<Eigen::Index>(right);
      const double t = static_cast<double>(k - pilots[right - 1]) / (pilots[right] - pilots[right - 1]);
      // Linear in real and imaginary parts independently.
      out.h.col(k) = (1.0 - t) * at_pilots.col(r - 1) + t * at_pilots.col(r);
    }
  }
  return out;
}

}  // namespace isac
