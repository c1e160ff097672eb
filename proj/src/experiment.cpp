// SPDX-License-Identifier: Apache-2.0
#include "isac/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace isac {

namespace {

// Stream ids for mix_seed; each purpose gets its own generator.
constexpr std::uint64_t kSceneStream = 1;
constexpr std::uint64_t kSceneSeedStream = 2;
constexpr std::uint64_t kMismatchStream = 3;
constexpr std::uint64_t kWaveformStream = 4;
constexpr std::uint64_t kSensingNoiseStream = 5;
constexpr std::uint64_t kGridStreamBase = 1000;

using nlohmann::json;

void require_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::pair<double, double> read_range(const json& j, const char* key, std::pair<double, double> def) {
  if (!j.contains(key)) return def;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2) throw ConfigError(std::string(key) + " must be [min, max]");
  return {v[0], v[1]};
}

SensingPrecoder precoder_from_string(const std::string& s) {
  if (s == "omni") return SensingPrecoder::omni;
  if (s == "boresight") return SensingPrecoder::boresight;
  if (s == "sweep") return SensingPrecoder::sweep;
  throw ConfigError("unknown precoder '" + s + "'");
}

std::string to_string(SensingPrecoder p) {
  switch (p) {
    case SensingPrecoder::omni: return "omni";
    case SensingPrecoder::boresight: return "boresight";
    default: return "sweep";
  }
}

Taper taper_from_string(const std::string& s) {
  if (s == "hann") return Taper::hann;
  if (s == "rectangular") return Taper::rectangular;
  throw ConfigError("unknown taper '" + s + "'");
}

Constellation constellation_from_string(const std::string& s) {
  if (s == "qpsk") return Constellation::qpsk;
  if (s == "16qam") return Constellation::qam16;
  throw ConfigError("unknown constellation '" + s + "'");
}

MismatchObjective objective_from_string(const std::string& s) {
  if (s == "profiled") return MismatchObjective::profiled;
  if (s == "fixed_alpha") return MismatchObjective::fixed_alpha;
  throw ConfigError("unknown mismatch objective '" + s + "'");
}

Target random_target(const SceneSpec& spec, Rng& rng) {
  const auto& room = spec.room;
  Target t;
  t.position = {rng.uniform(spec.wall_margin, room.width - spec.wall_margin),
                rng.uniform(spec.wall_margin, room.depth - spec.wall_margin)};
  t.random_phase = rng.phase();
  return t;
}

// Rejection-sampled layout: UE nearest to the AP, every target resolvable from every other one in either
// two-way delay (2/B) or sin(angle) (two Hann main-lobe half widths).
std::vector<Target> draw_targets(const SceneSpec& spec, const ArrayConfig& array, const OfdmConfig& ofdm, Rng& rng) {
  const auto& room = spec.room;
  const Point2 ap = room.ap_position;
  const double range_sep = kSpeedOfLight / ofdm.bandwidth();
  const double sine_sep = 2.0 / (array.n_antennas * array.element_spacing);
  constexpr int kMaxAttempts = 100000;

  std::vector<Target> targets;
  int attempts = 0;
  while (targets.empty()) {
    if (++attempts > kMaxAttempts) throw ScenarioError("could not place the UE");
    Target ue = random_target(spec, rng);
    const double d = distance(ap, ue.position);
    if (d < spec.ue_min_distance || d > spec.ue_max_distance) continue;
    if (std::abs(room.angle_from_ap(ue.position)) > spec.max_abs_angle) continue;
    ue.is_ue = true;
    ue.rcs = spec.ue_rcs;
    targets.push_back(ue);
  }
  const double d_ue = distance(ap, targets.front().position);
  while (static_cast<int>(targets.size()) < spec.num_targets) {
    if (++attempts > kMaxAttempts) throw ScenarioError("could not place all targets");
    Target t = random_target(spec, rng);
    t.rcs = rng.uniform(spec.target_rcs_min, spec.target_rcs_max);
    const double d = distance(ap, t.position);
    const double theta = room.angle_from_ap(t.position);
    if (std::abs(theta) > spec.max_abs_angle || d < d_ue + range_sep) continue;
    const bool separated = std::all_of(targets.begin(), targets.end(), [&](const Target& o) {
      const double dd = std::abs(distance(ap, o.position) - d);
      const double du = std::abs(std::sin(room.angle_from_ap(o.position)) - std::sin(theta));
      return dd >= range_sep || du >= sine_sep;
    });
    if (separated) targets.push_back(t);
  }
  return targets;
}

CMatrix block_channel(const CommChannel& h, const std::vector<int>& subcarriers, int repeats) {
  CMatrix out(h.h.rows(), static_cast<Eigen::Index>(subcarriers.size()) * repeats);
  Eigen::Index c = 0;
  for (int r = 0; r < repeats; ++r)
    for (int k : subcarriers) out.col(c++) = h.h.col(k);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------------------------------------
// Metrics

double compute_mse(const CommChannel& h_hat, const CommChannel& h_true) {
  if (h_hat.h.rows() != h_true.h.rows() || h_hat.h.cols() != h_true.h.cols())
    throw std::invalid_argument("channel dimensions differ");
  if (h_true.h.cols() == 0) throw std::invalid_argument("empty channel");
  return (h_hat.h - h_true.h).colwise().squaredNorm().mean();
}

Detection mmse_combine_and_detect(const CMatrix& y, const CommChannel& h_hat, double noise_var, double rx_power,
                                  double symbol_power, Constellation constellation) {
  if (y.rows() != h_hat.h.rows() || y.cols() != h_hat.h.cols())
    throw std::invalid_argument("received block and channel estimate differ in shape");
  const auto points = constellation_points(constellation);
  const double scale = std::sqrt(symbol_power);
  const double amp = std::sqrt(rx_power);

  Detection d{CMatrix(1, y.cols()), CMatrix(1, y.cols())};
  for (Eigen::Index k = 0; k < y.cols(); ++k) {
    const CVector h = h_hat.h.col(k);
    const double h_energy = h.squaredNorm();
    Complex est(0.0, 0.0);
    if (noise_var > 0.0) {
      // (rho s2 h h^H + n0 I)^-1 h = h / (n0 + rho s2 |h|^2) by the matrix inversion lemma.
      const CVector w = amp * symbol_power * h / (noise_var + rx_power * symbol_power * h_energy);
      const Complex gain = amp * w.dot(h);
      if (std::abs(gain) > 0.0) est = w.dot(y.col(k)) / gain;
    } else if (h_energy > 0.0) {
      est = h.dot(y.col(k)) / (amp * h_energy);
    }
    d.soft(0, k) = est;
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double dist = std::norm(est - scale * points[i]);
      if (dist < best_dist) {
        best_dist = dist;
        best = i;
      }
    }
    d.symbols_hat(0, k) = scale * points[best];
  }
  return d;
}

double symbol_error_rate(const CMatrix& detected, const CMatrix& sent) {
  if (detected.size() != sent.size() || sent.size() == 0) throw std::invalid_argument("symbol blocks differ in size");
  Eigen::Index errors = 0;
  for (Eigen::Index i = 0; i < sent.size(); ++i)
    if (std::abs(detected(i) - sent(i)) > 1e-9 * (1.0 + std::abs(sent(i)))) ++errors;
  return static_cast<double>(errors) / static_cast<double>(sent.size());
}

// ---------------------------------------------------------------------------------------------------------
// Configuration

std::string to_string(Method m) {
  switch (m) {
    case Method::proposed: return "proposed";
    case Method::ablation_no_steps23: return "ablation_no_steps23";
    default: return "ls";
  }
}

Method method_from_string(const std::string& s) {
  if (s == "proposed") return Method::proposed;
  if (s == "ablation_no_steps23") return Method::ablation_no_steps23;
  if (s == "ls") return Method::ls;
  throw ConfigError("unknown method '" + s + "'");
}

ResultFormat format_from_string(const std::string& s) {
  if (s == "csv") return ResultFormat::csv;
  if (s == "json") return ResultFormat::json;
  throw ConfigError("unknown format '" + s + "'");
}

void ExperimentConfig::validate() const {
  scene.room.validate();
  array.validate();
  ofdm.validate();
  if (scene.num_targets < 1) throw ConfigError("num_targets must be >= 1");
  if (!(scene.ue_min_distance > 0.0) || scene.ue_max_distance < scene.ue_min_distance)
    throw ConfigError("invalid UE distance range");
  if (!(scene.target_rcs_min > 0.0) || scene.target_rcs_max < scene.target_rcs_min || !(scene.ue_rcs > 0.0))
    throw ConfigError("invalid RCS range");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (gamma0_db.empty() || eta.empty()) throw ConfigError("sweep axes must be non-empty");
  for (double e : eta)
    if (!(e > 0.0 && e <= 1.0)) throw ConfigError("eta values must be in (0, 1]");
  for (double e : eta) {
    OfdmConfig o = ofdm;
    o.pilot_ratio = e;
    o.validate();
  }
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (data_symbols < 1) throw ConfigError("data_symbols must be >= 1");
  if (!(rx_power > 0.0)) throw ConfigError("rx_power must be positive");
  if (estimator.max_iterations < 1 || !(estimator.epsilon_stop > 0.0)) throw ConfigError("invalid estimator loop");
  if (estimator.reg_lambda < 0.0) throw ConfigError("reg_lambda must be non-negative");
  if (mismatch.max_theta < 0.0 || mismatch.max_tau_samples < 0.0 || bound_tau_samples < 0.0 ||
      estimator.max_delta_theta < 0.0)
    throw ConfigError("mismatch magnitudes must be non-negative");
  format_from_string(format);
}

ExperimentConfig config_from_json(const json& j) {
  require_keys(j, "config", {"scene", "array", "ofdm", "sensing", "mismatch", "estimator", "codebook", "sweep",
                             "trials", "seed", "methods", "constellation", "data_symbols", "rx_power", "timing",
                             "workers", "output", "comment"});
  ExperimentConfig c;
  if (j.contains("scene")) {
    const auto& s = j.at("scene");
    require_keys(s, "scene", {"room", "num_targets", "ue_distance", "max_abs_angle_deg", "ue_rcs", "target_rcs",
                              "wall_margin", "rician_k_db", "los_blocked"});
    if (s.contains("room")) {
      const auto& r = s.at("room");
      require_keys(r, "scene.room", {"width", "depth", "ap_position", "ap_boresight_deg", "wall_reflectivity"});
      read(r, "width", c.scene.room.width);
      read(r, "depth", c.scene.room.depth);
      if (r.contains("ap_position")) {
        const auto p = r.at("ap_position").get<std::vector<double>>();
        if (p.size() != 2) throw ConfigError("ap_position must be [x, y]");
        c.scene.room.ap_position = {p[0], p[1]};
      }
      if (r.contains("ap_boresight_deg")) c.scene.room.ap_boresight = deg_to_rad(r.at("ap_boresight_deg").get<double>());
      read(r, "wall_reflectivity", c.scene.room.wall_reflectivity);
    }
    read(s, "num_targets", c.scene.num_targets);
    std::tie(c.scene.ue_min_distance, c.scene.ue_max_distance) =
        read_range(s, "ue_distance", {c.scene.ue_min_distance, c.scene.ue_max_distance});
    if (s.contains("max_abs_angle_deg")) c.scene.max_abs_angle = deg_to_rad(s.at("max_abs_angle_deg").get<double>());
    read(s, "ue_rcs", c.scene.ue_rcs);
    std::tie(c.scene.target_rcs_min, c.scene.target_rcs_max) =
        read_range(s, "target_rcs", {c.scene.target_rcs_min, c.scene.target_rcs_max});
    read(s, "wall_margin", c.scene.wall_margin);
    read(s, "rician_k_db", c.scene.rician_k_db);
    read(s, "los_blocked", c.scene.los_blocked);
  }
  if (j.contains("array")) {
    const auto& a = j.at("array");
    require_keys(a, "array", {"n_antennas", "element_spacing"});
    read(a, "n_antennas", c.array.n_antennas);
    read(a, "element_spacing", c.array.element_spacing);
  }
  if (j.contains("ofdm")) {
    const auto& o = j.at("ofdm");
    require_keys(o, "ofdm", {"n_subcarriers", "subcarrier_spacing_hz", "carrier_freq_hz", "symbol_power"});
    read(o, "n_subcarriers", c.ofdm.n_subcarriers);
    read(o, "subcarrier_spacing_hz", c.ofdm.subcarrier_spacing);
    read(o, "carrier_freq_hz", c.ofdm.carrier_freq);
    read(o, "symbol_power", c.ofdm.symbol_power);
  }
  if (j.contains("sensing")) {
    const auto& s = j.at("sensing");
    require_keys(s, "sensing", {"snr_db", "precoder", "taper", "angle_step_deg", "detection_threshold"});
    read(s, "snr_db", c.sensing.snr_db);
    if (s.contains("precoder")) c.sensing.precoder = precoder_from_string(s.at("precoder").get<std::string>());
    if (s.contains("taper")) c.sensing.taper = taper_from_string(s.at("taper").get<std::string>());
    if (s.contains("angle_step_deg")) c.sensing.angle_step = deg_to_rad(s.at("angle_step_deg").get<double>());
    read(s, "detection_threshold", c.sensing.detection_threshold);
  }
  if (j.contains("mismatch")) {
    const auto& m = j.at("mismatch");
    require_keys(m, "mismatch", {"max_theta_deg", "max_tau_samples"});
    if (m.contains("max_theta_deg")) c.mismatch.max_theta = deg_to_rad(m.at("max_theta_deg").get<double>());
    read(m, "max_tau_samples", c.mismatch.max_tau_samples);
  }
  if (j.contains("estimator")) {
    const auto& e = j.at("estimator");
    require_keys(e, "estimator", {"reg_lambda", "epsilon_stop", "max_iterations", "omp_max_atoms", "objective",
                                  "bound_theta_deg", "bound_tau_samples", "genetic"});
    read(e, "reg_lambda", c.estimator.reg_lambda);
    read(e, "epsilon_stop", c.estimator.epsilon_stop);
    read(e, "max_iterations", c.estimator.max_iterations);
    read(e, "omp_max_atoms", c.estimator.omp_max_atoms);
    if (e.contains("objective")) c.estimator.objective = objective_from_string(e.at("objective").get<std::string>());
    if (e.contains("bound_theta_deg")) c.estimator.max_delta_theta = deg_to_rad(e.at("bound_theta_deg").get<double>());
    read(e, "bound_tau_samples", c.bound_tau_samples);
    if (e.contains("genetic")) {
      const auto& g = e.at("genetic");
      require_keys(g, "estimator.genetic",
                   {"population", "generations", "elites", "mutation_scale", "crossover_rate", "tournament_size"});
      read(g, "population", c.estimator.genetic.population);
      read(g, "generations", c.estimator.genetic.generations);
      read(g, "elites", c.estimator.genetic.elites);
      read(g, "mutation_scale", c.estimator.genetic.mutation_scale);
      read(g, "crossover_rate", c.estimator.genetic.crossover_rate);
      read(g, "tournament_size", c.estimator.genetic.tournament_size);
    }
  }
  if (j.contains("codebook")) {
    const auto& cb = j.at("codebook");
    require_keys(cb, "codebook", {"angle_oversampling", "delay_step_factor"});
    read(cb, "angle_oversampling", c.codebook.angle_oversampling);
    read(cb, "delay_step_factor", c.codebook.delay_step_factor);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    require_keys(s, "sweep", {"gamma0_db", "eta"});
    read(s, "gamma0_db", c.gamma0_db);
    read(s, "eta", c.eta);
  }
  read(j, "trials", c.trials);
  read(j, "seed", c.seed);
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
  }
  if (j.contains("constellation")) c.constellation = constellation_from_string(j.at("constellation").get<std::string>());
  read(j, "data_symbols", c.data_symbols);
  read(j, "rx_power", c.rx_power);
  read(j, "timing", c.timing);
  read(j, "workers", c.workers);
  if (j.contains("output")) {
    const auto& o = j.at("output");
    require_keys(o, "output", {"path", "format"});
    read(o, "path", c.output);
    read(o, "format", c.format);
  }
  c.scene.room.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }
}

json config_to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(to_string(m));
  return {
      {"scene",
       {{"room",
         {{"width", c.scene.room.width},
          {"depth", c.scene.room.depth},
          {"ap_position", {c.scene.room.ap_position.x, c.scene.room.ap_position.y}},
          {"ap_boresight_deg", rad_to_deg(c.scene.room.ap_boresight)},
          {"wall_reflectivity", c.scene.room.wall_reflectivity}}},
        {"num_targets", c.scene.num_targets},
        {"ue_distance", {c.scene.ue_min_distance, c.scene.ue_max_distance}},
        {"max_abs_angle_deg", rad_to_deg(c.scene.max_abs_angle)},
        {"ue_rcs", c.scene.ue_rcs},
        {"target_rcs", {c.scene.target_rcs_min, c.scene.target_rcs_max}},
        {"wall_margin", c.scene.wall_margin},
        {"rician_k_db", c.scene.rician_k_db},
        {"los_blocked", c.scene.los_blocked}}},
      {"array", {{"n_antennas", c.array.n_antennas}, {"element_spacing", c.array.element_spacing}}},
      {"ofdm",
       {{"n_subcarriers", c.ofdm.n_subcarriers},
        {"subcarrier_spacing_hz", c.ofdm.subcarrier_spacing},
        {"carrier_freq_hz", c.ofdm.carrier_freq},
        {"symbol_power", c.ofdm.symbol_power}}},
      {"sensing",
       {{"snr_db", c.sensing.snr_db},
        {"precoder", to_string(c.sensing.precoder)},
        {"taper", c.sensing.taper == Taper::hann ? "hann" : "rectangular"},
        {"angle_step_deg", rad_to_deg(c.sensing.angle_step)},
        {"detection_threshold", c.sensing.detection_threshold}}},
      {"mismatch", {{"max_theta_deg", rad_to_deg(c.mismatch.max_theta)}, {"max_tau_samples", c.mismatch.max_tau_samples}}},
      {"estimator",
       {{"reg_lambda", c.estimator.reg_lambda},
        {"epsilon_stop", c.estimator.epsilon_stop},
        {"max_iterations", c.estimator.max_iterations},
        {"omp_max_atoms", c.estimator.omp_max_atoms},
        {"objective", c.estimator.objective == MismatchObjective::profiled ? "profiled" : "fixed_alpha"},
        {"bound_theta_deg", rad_to_deg(c.estimator.max_delta_theta)},
        {"bound_tau_samples", c.bound_tau_samples},
        {"genetic",
         {{"population", c.estimator.genetic.population},
          {"generations", c.estimator.genetic.generations},
          {"elites", c.estimator.genetic.elites},
          {"mutation_scale", c.estimator.genetic.mutation_scale},
          {"crossover_rate", c.estimator.genetic.crossover_rate},
          {"tournament_size", c.estimator.genetic.tournament_size}}}}},
      {"codebook",
       {{"angle_oversampling", c.codebook.angle_oversampling}, {"delay_step_factor", c.codebook.delay_step_factor}}},
      {"sweep", {{"gamma0_db", c.gamma0_db}, {"eta", c.eta}}},
      {"trials", c.trials},
      {"seed", c.seed},
      {"methods", methods},
      {"constellation", c.constellation == Constellation::qpsk ? "qpsk" : "16qam"},
      {"data_symbols", c.data_symbols},
      {"rx_power", c.rx_power},
      {"timing", c.timing},
      {"workers", c.workers},
      {"output", {{"path", c.output}, {"format", c.format}}},
  };
}

// ---------------------------------------------------------------------------------------------------------
// Trials

TrialScene prepare_trial(const ExperimentConfig& config, int trial) {
  const std::uint64_t trial_seed = mix_seed(config.seed, static_cast<std::uint64_t>(trial));
  Rng scene_rng(mix_seed(trial_seed, kSceneStream));

  PropagationConfig prop;
  prop.carrier_freq = config.ofdm.carrier_freq;
  prop.n_antennas = config.array.n_antennas;
  prop.rician_k_db = config.scene.rician_k_db;
  prop.los_blocked = config.scene.los_blocked;

  TrialScene t;
  t.scene = build_scene(config.scene.room, draw_targets(config.scene, config.array, config.ofdm, scene_rng),
                        mix_seed(trial_seed, kSceneSeedStream), prop);

  const PathSet traced = trace_comm_paths(t.scene);
  Rng mismatch_rng(mix_seed(trial_seed, kMismatchStream));
  t.truth = MismatchTruth::draw(traced.target_nlos_count(), config.mismatch.max_theta,
                                config.mismatch.max_tau_samples / config.ofdm.bandwidth(), mismatch_rng);
  t.comm_paths = inject_mismatch(traced, t.truth);
  t.h_true = assemble_comm_channel(t.comm_paths, config.array, config.ofdm);

  t.sensing_paths = trace_sensing_paths(t.scene);
  const SensingChannel hs = assemble_sensing_channel(t.sensing_paths, config.array, config.ofdm);
  const SensingWaveform wf =
      make_sensing_waveform(config.sensing.precoder, config.array, config.ofdm, mix_seed(trial_seed, kWaveformStream));

  // Noise referenced to the per-element UE echo power, averaged over subcarriers.
  const auto ue_path = std::find_if(t.sensing_paths.paths.begin(), t.sensing_paths.paths.end(),
                                    [](const Path& p) { return p.kind == PathKind::los; });
  double noise_var = 0.0;
  if (ue_path != t.sensing_paths.paths.end()) {
    const CVector a = steering_vector(ue_path->angle, config.array);
    double tx_gain = 0.0;
    for (int k = 0; k < config.ofdm.n_subcarriers; ++k) tx_gain += std::norm(a.dot(wf.transmitted(k)));
    tx_gain /= config.ofdm.n_subcarriers;
    noise_var = std::norm(ue_path->gain) * tx_gain / std::pow(10.0, config.sensing.snr_db / 10.0);
  }
  const CMatrix rx = simulate_sensing_rx(hs, wf, noise_var, mix_seed(trial_seed, kSensingNoiseStream));
  const RangeAngleGrid grid =
      RangeAngleGrid::for_room(config.scene.room, config.ofdm, config.sensing.angle_step, config.sensing.taper);
  const RangeAngleMap map = range_angle_compress(rx, wf, config.ofdm, config.array, grid);
  t.sensed = extract_modes(map, config.scene.num_targets, config.sensing.detection_threshold);
  t.init = map_to_bistatic(t.sensed);
  return t;
}

std::vector<ResultRecord> run_experiment(const ExperimentConfig& config, const DiagnosticsSink& sink) {
  config.validate();

  std::vector<Method> methods = config.methods;
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());

  const double bandwidth = config.ofdm.bandwidth();
  std::vector<OfdmConfig> ofdm_per_eta;
  std::vector<Codebook> codebooks;
  const bool need_codebook = std::find(methods.begin(), methods.end(), Method::proposed) != methods.end();
  for (double eta : config.eta) {
    OfdmConfig o = config.ofdm;
    o.pilot_ratio = eta;
    ofdm_per_eta.push_back(o);
    codebooks.push_back(need_codebook ? build_codebook(config.scene.room, config.array, o, config.codebook) : Codebook{});
  }

  const std::size_t n_gamma = config.gamma0_db.size();
  const std::size_t n_eta = config.eta.size();
  const std::size_t per_trial = methods.size() * n_gamma * n_eta;
  std::vector<std::vector<ResultRecord>> by_trial(static_cast<std::size_t>(config.trials));
  std::mutex sink_mutex;

  auto run_trial = [&](int trial) {
    const std::uint64_t trial_seed = mix_seed(config.seed, static_cast<std::uint64_t>(trial));
    auto& out = by_trial[static_cast<std::size_t>(trial)];
    out.reserve(per_trial);

    std::optional<TrialScene> ts;
    std::string sensing_error;
    try {
      ts = prepare_trial(config, trial);
    } catch (const std::exception& e) {
      sensing_error = e.what();
    }

    for (std::size_t gi = 0; gi < n_gamma; ++gi) {
      for (std::size_t ei = 0; ei < n_eta; ++ei) {
        const OfdmConfig& ofdm = ofdm_per_eta[ei];
        const double gamma0 = config.gamma0_db[gi];
        const double noise_var = noise_var_for_snr(gamma0, ofdm.symbol_power, config.rx_power);
        const std::uint64_t grid_seed = mix_seed(trial_seed, kGridStreamBase + gi * n_eta + ei);

        std::optional<PilotFrame> frame;
        std::vector<int> data_sc;
        CMatrix sent, y_data;
        if (ts) {
          frame = simulate_uplink_pilots(ts->h_true, ofdm, config.rx_power, noise_var, grid_seed);
          const auto pilots = ofdm.pilot_indices();
          for (int k = 0; k < ofdm.n_subcarriers; ++k)
            if (!std::binary_search(pilots.begin(), pilots.end(), k)) data_sc.push_back(k);
          Rng data_rng(mix_seed(grid_seed, 1));
          const CMatrix h_block = block_channel(ts->h_true, data_sc, config.data_symbols);
          sent.resize(1, h_block.cols());
          y_data.resize(h_block.rows(), h_block.cols());
          const double amp = std::sqrt(config.rx_power);
          for (Eigen::Index c = 0; c < h_block.cols(); ++c) {
            sent(0, c) = random_symbol(config.constellation, ofdm.symbol_power, data_rng);
            y_data.col(c) = amp * h_block.col(c) * sent(0, c);
            for (Eigen::Index i = 0; i < y_data.rows(); ++i) y_data(i, c) += data_rng.complex_normal(noise_var);
          }
        }

        for (Method m : methods) {
          ResultRecord rec{m, gamma0, config.eta[ei], trial, 0.0, 0.0, 0, 0.0};
          const auto start = std::chrono::steady_clock::now();
          try {
            if (!ts) throw std::runtime_error(sensing_error);
            CommChannel h_hat;
            std::optional<Diagnostics> diag;
            if (m == Method::ls) {
              h_hat = ls_estimate(*frame, ofdm);
            } else {
              EstimatorConfig ec = config.estimator;
              ec.max_delta_tau = config.bound_tau_samples / bandwidth;
              ec.seed = mix_seed(grid_seed, 2);
              if (m == Method::ablation_no_steps23) {
                ec.enable_mismatch = false;
                ec.enable_augmentation = false;
              }
              ChannelEstimate est = estimate_channel(*frame, ts->init, codebooks[ei], ec, ofdm, config.array);
              rec.iterations = static_cast<int>(est.diagnostics.iterations.size());
              h_hat = std::move(est.h_hat);
              diag = std::move(est.diagnostics);
            }
            const auto stop = std::chrono::steady_clock::now();
            rec.mse = compute_mse(h_hat, ts->h_true);
            const CMatrix h_block = block_channel(h_hat, data_sc, config.data_symbols);
            const Detection det = mmse_combine_and_detect(y_data, CommChannel{h_block}, noise_var, config.rx_power,
                                                          ofdm.symbol_power, config.constellation);
            rec.ser = symbol_error_rate(det.symbols_hat, sent);
            if (config.timing) rec.runtime_ms = std::chrono::duration<double, std::milli>(stop - start).count();
            if (!std::isfinite(rec.mse) || !std::isfinite(rec.ser)) throw std::runtime_error("non-finite metric");
            if (diag && sink) {
              std::lock_guard<std::mutex> lock(sink_mutex);
              sink(rec, *diag);
            }
          } catch (const std::exception&) {
            rec.mse = std::numeric_limits<double>::quiet_NaN();
            rec.ser = std::numeric_limits<double>::quiet_NaN();
            rec.iterations = -1;
          }
          out.push_back(rec);
        }
      }
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers =
      std::min<unsigned>(config.workers > 0 ? static_cast<unsigned>(config.workers) : hw,
                         static_cast<unsigned>(config.trials));
  if (workers <= 1) {
    for (int t = 0; t < config.trials; ++t) run_trial(t);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int t = next++; t < config.trials; t = next++) run_trial(t);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<ResultRecord> records;
  records.reserve(per_trial * static_cast<std::size_t>(config.trials));
  for (auto& v : by_trial) records.insert(records.end(), v.begin(), v.end());

  auto gamma_index = [&](double g) {
    return std::find(config.gamma0_db.begin(), config.gamma0_db.end(), g) - config.gamma0_db.begin();
  };
  auto eta_index = [&](double e) { return std::find(config.eta.begin(), config.eta.end(), e) - config.eta.begin(); };
  std::stable_sort(records.begin(), records.end(), [&](const ResultRecord& a, const ResultRecord& b) {
    return std::make_tuple(a.method, gamma_index(a.gamma0_db), eta_index(a.eta), a.trial) <
           std::make_tuple(b.method, gamma_index(b.gamma0_db), eta_index(b.eta), b.trial);
  });
  return records;
}

// ---------------------------------------------------------------------------------------------------------
// Output

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_results(const std::vector<ResultRecord>& records, ResultFormat format) {
  if (format == ResultFormat::csv) {
    std::ostringstream os;
    os << "method,gamma0_db,eta,trial,mse,ser,iterations,runtime_ms\n";
    for (const auto& r : records)
      os << to_string(r.method) << ',' << format_double(r.gamma0_db) << ',' << format_double(r.eta) << ',' << r.trial
         << ',' << format_double(r.mse) << ',' << format_double(r.ser) << ',' << r.iterations << ','
         << format_double(r.runtime_ms) << '\n';
    return os.str();
  }
  json arr = json::array();
  auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
  for (const auto& r : records)
    arr.push_back({{"method", to_string(r.method)},
                   {"gamma0_db", num(r.gamma0_db)},
                   {"eta", num(r.eta)},
                   {"trial", r.trial},
                   {"mse", num(r.mse)},
                   {"ser", num(r.ser)},
                   {"iterations", r.iterations},
                   {"runtime_ms", num(r.runtime_ms)}});
  return arr.dump(2) + "\n";
}

void emit_results(const std::vector<ResultRecord>& records, ResultFormat format, const std::filesystem::path& path) {
  if (records.empty()) throw std::invalid_argument("no records to emit");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_results(records, format);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace isac
