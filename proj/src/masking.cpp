#include "onadesep/masking.h"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "onadesep/errors.h"

namespace onadesep {

void AnnealConfig::validate() const {
  if (total_steps < 1) throw DomainError("annealing needs at least one step");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("annealing alpha must lie in (0, 1]");
}

MaskVector sample_training_mask(std::size_t num_sources, Rng& rng) {
  if (num_sources == 0) throw DomainError("training mask needs at least one source");
  std::uniform_int_distribution<std::size_t> size_dist(1, num_sources);
  const std::size_t k = size_dist(rng);

  // Partial Fisher-Yates: the first k entries form a uniform k-subset.
  std::vector<std::size_t> order(num_sources);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, num_sources - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  MaskVector mask = MaskVector::all(num_sources, false);
  for (std::size_t i = 0; i < k; ++i) mask.set(order[i], true);
  return mask;
}

double anneal_rho(int step, const AnnealConfig& cfg) {
  cfg.validate();
  if (step < 0 || step > cfg.total_steps) {
    throw DomainError("annealing step " + std::to_string(step) + " outside [0, " +
                      std::to_string(cfg.total_steps) + "]");
  }
  const double rho = 1.0 - static_cast<double>(step) / (cfg.alpha * cfg.total_steps);
  return std::clamp(rho, 0.0, 1.0);
}

MaskVector sample_gibbs_mask(double rho, std::size_t num_sources, Rng& rng) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("masking probability outside [0, 1]");
  std::bernoulli_distribution coin(rho);
  MaskVector mask = MaskVector::all(num_sources, false);
  for (std::size_t i = 0; i < num_sources; ++i) mask.set(i, coin(rng));
  return mask;
}

}  // namespace onadesep
