#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onadesep/core.h"
#include "onadesep/data.h"
#include "onadesep/model.h"
#include "onadesep/rng.h"

namespace onadesep {

enum class TrainMode { kBaseline, kOnade };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);

struct TrainConfig {
  TrainMode mode = TrainMode::kOnade;
  double learning_rate = 3e-4;
  int batch_size = 8;
  int total_steps = 2000;
  std::uint64_t seed = 0;
  int checkpoint_every = 500;
  // Adam moment coefficients and epsilon.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  // Checks the model config matches the mode (baseline needs a mixture-only
  // network, onade a conditioned one).
  void check_model(const SeparatorConfig& model) const;
};

struct TrainRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  // mask_histogram[k] counts batch examples with exactly k masked sources.
  std::vector<int> mask_histogram;
  double wall_time = 0.0;
};

// Mean absolute error over every source and sample. Both losses are the
// negative log-likelihood of a unit-scale Laplacian up to constants.
double l1_loss(const SourceSet& estimates, const SourceSet& targets);

// Mean over masked sources of each source's mean absolute error. Unmasked
// sources are never read.
double onade_loss(const SourceSet& estimates, const SourceSet& targets, const MaskVector& mask);

// Span form of onade_loss for the training path: estimates/targets/grad are
// I x T source-major. Writes scale * dLoss/dEstimates into grad (sign
// subgradient, 0 at ties) and returns the unscaled loss.
double masked_l1_with_grad(std::span<const float> estimates, std::span<const float> targets,
                           std::size_t num_sources, std::size_t length, const MaskVector& mask,
                           std::span<float> grad, double scale = 1.0);

// Observes every network input built during training (teacher-forcing
// instrumentation).
using InputHook =
    std::function<void(const ModelInput&, const MixtureExample&, const MaskVector&)>;

struct TrainingState {
  SeparatorState model;
  OptimizerState optimizer;
};

TrainingState make_training_state(SeparatorState model);

struct StepOptions {
  int jobs = 1;
  const InputHook* hook = nullptr;
};

// One O-NADE update: fresh training mask per example, teacher-forced ground
// truth on unmasked channels, loss on masked sources, batch mean, Adam step.
TrainRecord train_step_onade(TrainingState& ts, const TrainConfig& cfg,
                             std::span<const MixtureExample* const> batch, Rng& rng,
                             const StepOptions& opts = {});

// One baseline update: mixture-only input, L1 over all sources.
TrainRecord train_step_baseline(TrainingState& ts, const TrainConfig& cfg,
                                std::span<const MixtureExample* const> batch, Rng& rng,
                                const StepOptions& opts = {});

// Applies one Adam update with bias correction; increments optimizer.step.
void adam_update(std::span<float> params, std::span<const float> grads, OptimizerState& opt,
                 const TrainConfig& cfg);

struct RunOptions {
  // Checkpoints go to <out_dir>/checkpoints, the log to <out_dir>/train_log.csv.
  std::optional<std::filesystem::path> out_dir;
  // Resume from a training checkpoint written by an earlier run.
  std::optional<std::filesystem::path> resume_from;
  int jobs = 1;
  const InputHook* hook = nullptr;
  std::function<void(const TrainRecord&)> on_record;
};

struct TrainResult {
  SeparatorState state;
  std::vector<TrainRecord> records;
};

// Runs steps 1..total_steps (or resumes after the checkpoint's step). Batch
// b of step s draws dataset position (s-1)*batch_size + b from a sequence
// of seeded per-epoch permutations; per-step masks come from a stream
// derived from (seed, step). Both make resumed runs bit-identical to
// uninterrupted ones.
TrainResult run_training(const TrainConfig& cfg, std::span<const MixtureExample> dataset,
                         const SeparatorConfig& model_cfg,
                         const std::vector<std::string>& source_order,
                         const RunOptions& opts = {});

std::filesystem::path checkpoint_path_for_step(const std::filesystem::path& out_dir,
                                               std::int64_t step);

}  // namespace onadesep
