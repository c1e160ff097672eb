// SPDX-License-Identifier: Apache-2.0
#include "isac/genetic.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace isac {

namespace {

struct Individual {
  RVector genes;
  double fitness;
};

}  // namespace

GeneticResult minimize_genetic(const Objective& objective, const RVector& lower, const RVector& upper,
                               const RVector& start, const GeneticConfig& config, Rng& rng) {
  const auto dim = start.size();
  if (lower.size() != dim || upper.size() != dim) throw std::invalid_argument("bounds do not match start point");
  if (config.population < 2 || config.elites < 1 || config.elites >= config.population)
    throw std::invalid_argument("invalid genetic population settings");

  GeneticResult result;
  auto evaluate = [&](const RVector& g) {
    ++result.evaluations;
    return objective(g);
  };
  const RVector clamped_start = start.cwiseMax(lower).cwiseMin(upper);
  const RVector sigma = config.mutation_scale * (upper - lower) / 2.0;

  std::vector<Individual> pop;
  pop.reserve(static_cast<std::size_t>(config.population));
  pop.push_back({clamped_start, evaluate(clamped_start)});
  while (static_cast<int>(pop.size()) < config.population) {
    RVector g(dim);
    for (Eigen::Index i = 0; i < dim; ++i) g(i) = lower(i) < upper(i) ? rng.uniform(lower(i), upper(i)) : lower(i);
    pop.push_back({g, evaluate(g)});
  }
  auto by_fitness = [](const Individual& a, const Individual& b) { return a.fitness < b.fitness; };
  std::stable_sort(pop.begin(), pop.end(), by_fitness);
  result.best_history.push_back(pop.front().fitness);

  auto tournament = [&]() -> const Individual& {
    int best = rng.uniform_int(0, config.population - 1);
    for (int t = 1; t < config.tournament_size; ++t) best = std::min(best, rng.uniform_int(0, config.population - 1));
    return pop[static_cast<std::size_t>(best)];  // population is sorted, lower index is fitter
  };

  const double gene_mutation_prob = dim > 0 ? std::max(1.0 / static_cast<double>(dim), 0.2) : 0.0;
  std::vector<Individual> next;
  for (int gen = 0; gen < config.generations; ++gen) {
    next.assign(pop.begin(), pop.begin() + config.elites);
    while (static_cast<int>(next.size()) < config.population) {
      const Individual& a = tournament();
      const Individual& b = tournament();
      RVector child = a.genes;
      if (rng.uniform(0.0, 1.0) < config.crossover_rate)
        for (Eigen::Index i = 0; i < dim; ++i)
          if (rng.uniform(0.0, 1.0) < 0.5) child(i) = b.genes(i);
      bool mutated = false;
      for (Eigen::Index i = 0; i < dim; ++i) {
        if (rng.uniform(0.0, 1.0) < gene_mutation_prob) {
          child(i) += sigma(i) * rng.normal();
          mutated = true;
        }
      }
      if (!mutated && dim > 0) {
        const auto i = static_cast<Eigen::Index>(rng.uniform_int(0, static_cast<int>(dim) - 1));
        child(i) += sigma(i) * rng.normal();
      }
      child = child.cwiseMax(lower).cwiseMin(upper);
      next.push_back({child, evaluate(child)});
    }
    pop.swap(next);
    std::stable_sort(pop.begin(), pop.end(), by_fitness);
    result.best_history.push_back(pop.front().fitness);
  }

  result.best = pop.front().genes;
  result.best_value = pop.front().fitness;
  return result;
}

}  // namespace isac
