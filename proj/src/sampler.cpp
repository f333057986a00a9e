#include "onadesep/sampler.h"

#include "onadesep/errors.h"
#include "onadesep/rng.h"

namespace onadesep {

void GibbsConfig::validate() const {
  if (steps < 1) throw ConfigError("gibbs.steps must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("gibbs.alpha must lie in (0, 1]");
}

int GibbsTrajectory::model_calls() const {
  int n = 0;
  for (const auto& s : steps) n += s.elided ? 0 : 1;
  return n;
}

namespace {

void require_conditioned(const SeparatorState& state) {
  if (!state.config().conditioned) {
    throw ConfigError("Gibbs sampling needs a conditioned model; got a mixture-only baseline");
  }
}

SourceSet zero_estimates(const std::vector<std::string>& names, const Waveform& mixture) {
  std::vector<Waveform> zeros(names.size(), Waveform::zeros(mixture.size(), mixture.sample_rate()));
  return SourceSet(names, std::move(zeros));
}

}  // namespace

GibbsResult gibbs_separate(const SeparatorState& state, const Waveform& mixture,
                           const GibbsConfig& cfg) {
  require_conditioned(state);
  return gibbs_separate([&state](const ModelInput& in) { return forward(state, in); },
                        state.source_order(), mixture, cfg);
}

GibbsResult gibbs_separate(const SeparatorFn& model,
                           const std::vector<std::string>& source_order,
                           const Waveform& mixture, const GibbsConfig& cfg) {
  cfg.validate();
  const std::size_t num = source_order.size();
  const AnnealConfig anneal = cfg.anneal();
  Rng rng = make_rng(cfg.seed, "gibbs");

  GibbsResult result{zero_estimates(source_order, mixture), {}};
  result.trajectory.steps.reserve(cfg.steps);
  for (int n = 0; n < cfg.steps; ++n) {
    GibbsStep step;
    step.step = n;
    step.rho = anneal_rho(n, anneal);
    step.mask = sample_gibbs_mask(step.rho, num, rng);
    step.elided = step.mask.none_masked();
    if (!step.elided) {
      const ModelInput input = assemble_model_input(mixture, result.estimates, step.mask);
      const SourceSet out = model(input);
      if (out.count() != num || out.length() != mixture.size()) {
        throw ShapeError("separator returned the wrong number or length of sources");
      }
      for (std::size_t i = 0; i < num; ++i) {
        if (step.mask.masked(i)) result.estimates.set(i, out[i]);
      }
      if (cfg.record_trajectory) step.estimates = result.estimates;
    }
    result.trajectory.steps.push_back(std::move(step));
  }
  return result;
}

SourceSet one_step_separate(const SeparatorState& state, const Waveform& mixture) {
  GibbsConfig cfg;
  cfg.steps = 1;
  return gibbs_separate(state, mixture, cfg).estimates;
}

InjectionResult inject_gt_separate(const SeparatorState& state, const Waveform& mixture,
                                   std::size_t injected_index, const Waveform& ground_truth) {
  require_conditioned(state);
  const std::size_t num = state.source_order().size();
  if (injected_index >= num) {
    throw DomainError("injected source index " + std::to_string(injected_index) +
                      " out of range for " + std::to_string(num) + " sources");
  }
  if (ground_truth.size() != mixture.size() ||
      ground_truth.sample_rate() != mixture.sample_rate()) {
    throw AlignmentError("injected ground truth is not aligned with the mixture");
  }
  SourceSet conditioning = zero_estimates(state.source_order(), mixture);
  conditioning.set(injected_index, ground_truth);
  MaskVector mask = MaskVector::all(num, true);
  mask.set(injected_index, false);
  SourceSet out = forward(state, assemble_model_input(mixture, conditioning, mask));
  out.set(injected_index, ground_truth);
  std::vector<bool> estimated(num, true);
  estimated[injected_index] = false;
  return InjectionResult{std::move(out), std::move(estimated)};
}

SourceSet baseline_separate(const SeparatorState& state, const Waveform& mixture) {
  if (state.config().conditioned) {
    throw ConfigError("baseline evaluation needs a mixture-only model; got a conditioned one");
  }
  return forward(state, assemble_mixture_input(mixture));
}

}  // namespace onadesep
