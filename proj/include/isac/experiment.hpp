// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "isac/channels.hpp"
#include "isac/estimator.hpp"
#include "isac/scenario.hpp"
#include "isac/sensing.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace isac {

// ---------------------------------------------------------------------------------------------------------
// Metrics

/// Mean over subcarriers of |h_hat[k] - h[k]|^2.
double compute_mse(const CommChannel& h_hat, const CommChannel& h_true);

struct Detection {
  CMatrix symbols_hat;  // decided constellation points, same shape as the input block
  CMatrix soft;         // combiner outputs before slicing
};

/// Single-stream MMSE combining w = (rho s2 h h^H + n0 I)^-1 sqrt(rho) s2 h on every column of `y`
/// (column k uses h_hat column k), gain-normalised and sliced to the nearest constellation point.
Detection mmse_combine_and_detect(const CMatrix& y, const CommChannel& h_hat, double noise_var, double rx_power,
                                  double symbol_power, Constellation constellation);

/// Fraction of entries where `detected` differs from `sent`.
double symbol_error_rate(const CMatrix& detected, const CMatrix& sent);

// ---------------------------------------------------------------------------------------------------------
// Experiment configuration

enum class Method { proposed, ablation_no_steps23, ls };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// Random indoor scene layout; all values are artifact defaults, not taken from a measured office.
struct SceneSpec {
  RoomGeometry room;
  int num_targets = 4;  // including the UE
  double ue_min_distance = 1.5;
  double ue_max_distance = 3.0;
  double max_abs_angle = 60.0 * kPi / 180.0;
  double ue_rcs = 0.5;
  double target_rcs_min = 5.0;
  double target_rcs_max = 20.0;
  double wall_margin = 0.3;
  double rician_k_db = 4.0;
  bool los_blocked = false;
};

struct SensingSpec {
  double snr_db = 10.0;  // per-element SNR of the UE echo
  SensingPrecoder precoder = SensingPrecoder::omni;
  Taper taper = Taper::hann;
  double angle_step = kPi / 180.0;
  double detection_threshold = 0.01;
};

struct MismatchSpec {
  double max_theta = 3.0 * kPi / 180.0;  // radians
  double max_tau_samples = 1.0;           // units of 1/B
};

struct ExperimentConfig {
  SceneSpec scene;
  ArrayConfig array;
  OfdmConfig ofdm;
  SensingSpec sensing;
  MismatchSpec mismatch;
  EstimatorConfig estimator;
  CodebookSpec codebook;
  double bound_tau_samples = 2.0;  // Step 2 delay bound in units of 1/B
  std::vector<double> gamma0_db{0, 5, 10, 15, 20};
  std::vector<double> eta{0.05, 0.2};
  int trials = 200;
  std::uint64_t seed = 1;
  std::vector<Method> methods{Method::proposed, Method::ablation_no_steps23, Method::ls};
  Constellation constellation = Constellation::qpsk;
  int data_symbols = 10;  // OFDM data symbols per coherence block
  double rx_power = 1.0;
  bool timing = false;    // record wall-clock runtime (breaks byte-identical output)
  int workers = 0;        // 0 = hardware concurrency
  std::string output;
  std::string format = "csv";

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& c);

// ---------------------------------------------------------------------------------------------------------
// Runs

struct ResultRecord {
  Method method = Method::proposed;
  double gamma0_db = 0.0;
  double eta = 0.0;
  int trial = 0;
  double mse = 0.0;
  double ser = 0.0;
  int iterations = 0;  // -1 marks a failed trial
  double runtime_ms = 0.0;

  bool failed() const { return iterations < 0; }
};

/// Everything one trial shares across grid points and methods.
struct TrialScene {
  Scene scene;
  PathSet comm_paths;     // after mismatch injection
  PathSet sensing_paths;
  MismatchTruth truth;
  CommChannel h_true;
  CommModesInit init;     // sensing-derived initial modes
  SensedModes sensed;
};

/// Draws the random scene of trial `trial` and runs the sensing front end on it.
TrialScene prepare_trial(const ExperimentConfig& config, int trial);

/// Optional per-run hook: receives the estimator diagnostics of every proposed / ablation run.
using DiagnosticsSink = std::function<void(const ResultRecord&, const Diagnostics&)>;

std::vector<ResultRecord> run_experiment(const ExperimentConfig& config, const DiagnosticsSink& sink = {});

enum class ResultFormat { csv, json };
ResultFormat format_from_string(const std::string& s);

std::string format_results(const std::vector<ResultRecord>& records, ResultFormat format);
void emit_results(const std::vector<ResultRecord>& records, ResultFormat format, const std::filesystem::path& path);

/// Shortest decimal representation that round-trips; "nan" / "inf" for non-finite values.
std::string format_double(double v);

}  // namespace isac
