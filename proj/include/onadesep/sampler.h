#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <optional>
#include <vector>

#include "onadesep/core.h"
#include "onadesep/masking.h"
#include "onadesep/model.h"

namespace onadesep {

struct GibbsConfig {
  int steps = 64;
  double alpha = 0.95;
  std::uint64_t seed = 0;
  // Keep a copy of the estimates after every step that ran the model.
  bool record_trajectory = false;

  void validate() const;
  AnnealConfig anneal() const { return AnnealConfig{steps, alpha}; }
};

struct GibbsStep {
  int step = 0;
  double rho = 0.0;
  MaskVector mask;
  // True when the drawn mask was empty and no model call was made.
  bool elided = false;
  // Estimates after this step; present only when recording and not elided.
  std::optional<SourceSet> estimates;
};

struct GibbsTrajectory {
  std::vector<GibbsStep> steps;

  int model_calls() const;
};

struct GibbsResult {
  SourceSet estimates;
  GibbsTrajectory trajectory;
};

// Annealed block Gibbs sampling. Estimates start at zero; at step n a mask
// is drawn with rho = anneal_rho(n), the network is run with the current
// estimates on unmasked channels, and only masked sources are overwritten.
GibbsResult gibbs_separate(const SeparatorState& state, const Waveform& mixture,
                           const GibbsConfig& cfg);

// Any conditional separator: maps a (2I+1)-channel input to I estimates.
using SeparatorFn = std::function<SourceSet(const ModelInput&)>;

// Same chain with an arbitrary separator in place of the network.
GibbsResult gibbs_separate(const SeparatorFn& model,
                           const std::vector<std::string>& source_order,
                           const Waveform& mixture, const GibbsConfig& cfg);

// Direct estimation: a single all-masked step.
SourceSet one_step_separate(const SeparatorState& state, const Waveform& mixture);

struct InjectionResult {
  SourceSet estimates;  // injected slot carries the ground truth verbatim
  std::vector<bool> estimated;  // false for the injected source
};

// One step with every source masked except injected_index, whose
// conditioning channel carries the ground truth.
InjectionResult inject_gt_separate(const SeparatorState& state, const Waveform& mixture,
                                   std::size_t injected_index, const Waveform& ground_truth);

// Single forward pass of a mixture-only baseline network.
SourceSet baseline_separate(const SeparatorState& state, const Waveform& mixture);

}  // namespace onadesep
