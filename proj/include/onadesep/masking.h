#pragma once

#include <cstddef>

#include "onadesep/core.h"
#include "onadesep/rng.h"

namespace onadesep {

struct AnnealConfig {
  int total_steps = 1;
  double alpha = 0.95;

  void validate() const;
};

// Training-time subset draw: the masked-set size k is uniform on {1..I},
// then a size-k subset is uniform. Never returns an all-false mask.
MaskVector sample_training_mask(std::size_t num_sources, Rng& rng);

// Linear annealing of the masking probability:
//   rho(n) = max(0, 1 - n / (alpha * N)),  0 <= n <= N.
// rho(0) == 1 and rho(n) == 0 for every n >= alpha * N.
double anneal_rho(int step, const AnnealConfig& cfg);

// Each source masked independently with probability rho. Empty and full
// masks are both possible.
MaskVector sample_gibbs_mask(double rho, std::size_t num_sources, Rng& rng);

}  // namespace onadesep
