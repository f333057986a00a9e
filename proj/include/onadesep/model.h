#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onadesep/core.h"

namespace onadesep {

// Separator network hyperparameters.
struct SeparatorConfig {
  int num_sources = 4;
  int depth = 4;
  int base_channels = 16;
  int kernel_size = 8;
  int stride = 4;
  double channel_growth = 2.0;
  int recurrent_layers = 1;
  // true: 2I+1 input channels (mixture, conditioning, flags); false: mixture only.
  bool conditioned = true;

  void validate() const;

  int input_channels() const { return conditioned ? 2 * num_sources + 1 : 1; }
  // Output channel count of each encoder level; the bottleneck width is the last.
  std::vector<int> encoder_channels() const;
  // Input lengths must be multiples of stride^depth after padding.
  std::size_t length_quantum() const;
  std::size_t valid_length(std::size_t length) const;

  // key=value lines, keys prefixed "model.", in a fixed order.
  std::string to_text() const;
  static SeparatorConfig from_map(const std::map<std::string, std::string>& kv);

  friend bool operator==(const SeparatorConfig&, const SeparatorConfig&) = default;
};

struct ParamInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  // Uniform init bound; zero for parameters initialised to zero.
  double init_bound = 0.0;
};

// Deterministic parameter manifest for a config. Offsets index one flat
// buffer; the order is the order of use in the forward pass.
class ParamLayout {
 public:
  explicit ParamLayout(const SeparatorConfig& cfg);

  const std::vector<ParamInfo>& params() const { return params_; }
  std::size_t total_size() const { return total_; }
  const ParamInfo& find(const std::string& name) const;
  bool contains(const std::string& name) const;

 private:
  void add(std::string name, std::vector<std::size_t> shape, double bound);

  std::vector<ParamInfo> params_;
  std::map<std::string, std::size_t> index_;
  std::size_t total_ = 0;
};

// Trainable weights plus the config and source order they belong to.
class SeparatorState {
 public:
  SeparatorState(SeparatorConfig cfg, std::vector<std::string> source_order);

  const SeparatorConfig& config() const { return config_; }
  const std::vector<std::string>& source_order() const { return source_order_; }
  const ParamLayout& layout() const { return layout_; }

  std::span<const float> parameters() const { return params_; }
  std::span<float> mutable_parameters() { return params_; }
  std::span<const float> param(const std::string& name) const;
  std::span<float> mutable_param(const std::string& name);

 private:
  SeparatorConfig config_;
  std::vector<std::string> source_order_;
  ParamLayout layout_;
  std::vector<float> params_;
};

// Fan-in scaled uniform init in manifest order, fully determined by
// (cfg, seed).
SeparatorState init_separator(const SeparatorConfig& cfg,
                              std::vector<std::string> source_order,
                              std::uint64_t seed);

// Runs the network. Inputs of any length are zero-padded symmetrically to
// the next valid length and outputs trimmed back.
SourceSet forward(const SeparatorState& state, const ModelInput& input);

// Loss callback: estimates and grad are I x T, source-major. Must fill grad
// with dLoss/dEstimates and return the loss.
using LossFn = std::function<double(std::span<const float> estimates,
                                    std::span<float> grad, std::size_t num_sources,
                                    std::size_t length)>;

struct GradientResult {
  double loss = 0.0;
  std::vector<float> gradients;  // same layout as parameters
};

GradientResult forward_with_gradients(const SeparatorState& state,
                                      const ModelInput& input, const LossFn& loss_fn);

// Adam moments and step count, stored alongside weights in training
// checkpoints so a run can resume bit-exactly.
struct OptimizerState {
  std::int64_t step = 0;
  std::vector<float> first_moment;
  std::vector<float> second_moment;
};

struct Checkpoint {
  SeparatorState state;
  std::optional<OptimizerState> optimizer;
  // Free-form provenance (training step, seed, mode...).
  std::map<std::string, std::string> metadata;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const SeparatorState& state, const std::filesystem::path& path,
                     const OptimizerState* optimizer = nullptr,
                     const std::map<std::string, std::string>& metadata = {});
Checkpoint load_checkpoint_full(const std::filesystem::path& path);
SeparatorState load_checkpoint(const std::filesystem::path& path);

// Loads and checks the checkpoint's conditioning mode against what the
// caller's pipeline needs.
SeparatorState load_checkpoint_expecting(const std::filesystem::path& path,
                                         bool conditioned);

}  // namespace onadesep
