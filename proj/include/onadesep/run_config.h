#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "onadesep/data.h"
#include "onadesep/model.h"
#include "onadesep/sampler.h"
#include "onadesep/training.h"

namespace onadesep {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSeedEnvVar = "ONADESEP_SEED";
inline constexpr const char* kResolvedConfigFile = "run_config.txt";

enum class DataSplit { kTrain, kEval };
DataSplit parse_data_split(std::string_view s);

// Flat key=value configuration for every command. Subordinate seeds are
// derived from `seed` by purpose string, see the *_seed accessors.
struct RunConfig {
  std::uint64_t seed = 0;
  int sample_rate = 16000;

  SynthConfig synth;  // training split; seed and sample_rate are derived
  int eval_tracks = 10;
  double eval_track_seconds = 8.0;

  WindowSpec window;  // sample_rate is derived
  SeparatorConfig model;
  // Set when model.conditioned appears in the file; otherwise the train mode
  // decides.
  std::optional<bool> model_conditioned;
  TrainConfig train;  // mode and seed come from the command line and `seed`
  GibbsConfig gibbs;  // seed is derived
  std::vector<int> eval_grid;

  RunConfig();

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  // Applies the ONADESEP_SEED override when the variable is set.
  void apply_env();
  void validate() const;

  // Canonical text: every key, sorted, parseable by parse().
  std::string to_text() const;

  SynthConfig synth_for(DataSplit split) const;
  WindowSpec window_spec() const;
  SeparatorConfig model_for(TrainMode mode) const;
  TrainConfig train_for(TrainMode mode) const;
  GibbsConfig gibbs_config() const;
  std::uint64_t eval_seed() const;
};

// Writes the resolved config and tool version into a run directory.
void write_provenance(const RunConfig& cfg, const std::filesystem::path& dir,
                      const std::map<std::string, std::string>& extra = {});

}  // namespace onadesep
