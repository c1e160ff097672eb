// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "isac/common.hpp"

#include <functional>
#include <vector>

namespace isac {

struct GeneticConfig {
  int population = 32;
  int generations = 50;
  int elites = 2;
  double mutation_scale = 0.1;  // Gaussian sigma as a fraction of each gene's half-range
  double crossover_rate = 0.9;
  int tournament_size = 2;
};

struct GeneticResult {
  RVector best;
  double best_value = 0.0;
  std::vector<double> best_history;  // best-so-far after initialisation and after each generation
  int evaluations = 0;
};

using Objective = std::function<double(const RVector&)>;

/// Real-coded elitist genetic minimiser over the box [lower, upper]. `start` is always a member of the
/// initial population, so the result is never worse than it.
GeneticResult minimize_genetic(const Objective& objective, const RVector& lower, const RVector& upper,
                               const RVector& start, const GeneticConfig& config, Rng& rng);

}  // namespace isac
