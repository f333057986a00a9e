#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onadesep/core.h"
#include "onadesep/data.h"
#include "onadesep/model.h"
#include "onadesep/sampler.h"

namespace onadesep {

// SI-SDR is clamped to [-kSiSdrCapDb, +kSiSdrCapDb]; a zero residual gives
// the upper cap and a zero projection the lower cap.
inline constexpr double kSiSdrCapDb = 100.0;

// Scale-invariant SDR: with a = <est, ref> / |ref|^2,
// 10 log10(|a ref|^2 / |est - a ref|^2), computed in double precision.
double si_sdr(std::span<const float> estimate, std::span<const float> reference);
double si_sdr(const Waveform& estimate, const Waveform& reference);

// Improvement of the estimate over using the mixture itself.
double si_sdri(const Waveform& estimate, const Waveform& reference, const Waveform& mixture);

inline const std::vector<int> kDefaultStepGrid = {1, 4, 16, 64, 128, 256, 512};
inline constexpr const char* kBaselineCondition = "baseline";

std::string gibbs_condition(int steps);
std::string injection_condition(const std::string& injected_source);
// Steps encoded in a Gibbs condition label, or nullopt for other labels.
std::optional<int> condition_steps(const std::string& condition);

struct MetricResult {
  std::string track_id;  // example id (track@window_start)
  std::string source;
  std::string condition;
  double si_sdr_db = 0.0;
  double si_sdri_db = 0.0;
};

inline constexpr double kEvalActivityThresholdDb = -60.0;

struct SweepOptions {
  std::vector<int> steps_grid = kDefaultStepGrid;
  double alpha = 0.95;
  std::uint64_t seed = 0;
  int jobs = 1;
  // Sources at or below this level in an example are not scored.
  double activity_threshold_db = kEvalActivityThresholdDb;
};

// One Gibbs chain per (example, N); records are ordered by N, then example,
// then source. Only active sources of each example are scored.
std::vector<MetricResult> run_gibbs_sweep(const SeparatorState& state,
                                          std::span<const MixtureExample> eval_set,
                                          const SweepOptions& opts);

std::vector<MetricResult> run_baseline_eval(const SeparatorState& baseline,
                                            std::span<const MixtureExample> eval_set,
                                            int jobs = 1,
                                            double activity_threshold_db = kEvalActivityThresholdDb);

struct InjectionMatrix {
  std::vector<std::string> sources;
  // delta[j][i]: mean over examples where source i is active of
  // SI-SDRi(source i | inject j) minus SI-SDRi(source i | one-step).
  // Diagonal entries are empty.
  std::vector<std::vector<std::optional<double>>> delta;
  // Per-example records: the one-step reference (condition "inject=none")
  // and every injection run.
  std::vector<MetricResult> results;
};

InjectionMatrix run_gt_injection(const SeparatorState& state,
                                 std::span<const MixtureExample> eval_set, int jobs = 1,
                                 double activity_threshold_db = kEvalActivityThresholdDb);

struct SummaryRow {
  std::string condition;
  std::string source;
  std::optional<int> steps;
  std::size_t count = 0;
  double mean_si_sdr_db = 0.0;
  double mean_si_sdri_db = 0.0;
  // 1.96 * sample stddev / sqrt(n) of SI-SDRi; 0 for a single example.
  double ci95_half_width_db = 0.0;
};

// Rows in first-seen order of (condition, source).
std::vector<SummaryRow> summarize(const std::vector<MetricResult>& results);

// Mean SI-SDRi for (condition, source), or nullopt when absent.
std::optional<double> mean_si_sdri(const std::vector<SummaryRow>& summary,
                                   const std::string& condition, const std::string& source);

std::string results_csv(const std::vector<MetricResult>& results);
std::string summary_csv(const std::vector<SummaryRow>& summary);
std::string injection_csv(const InjectionMatrix& matrix);

// Writes results.csv, summary.csv, <source>_sweep.png for every source with
// Gibbs conditions, and injection_matrix.csv when an injection run is given.
void emit_report(const std::vector<MetricResult>& results,
                 const std::optional<InjectionMatrix>& injection,
                 const std::filesystem::path& out_dir);

// Trajectory dump: step,rho,mask_bits,elided,per_source_si_sdri. The metric
// column holds ';'-separated SI-SDRi values when references are given and
// the step recorded estimates; otherwise it is blank.
std::string trajectory_csv(const GibbsTrajectory& trajectory,
                           const std::optional<SourceSet>& references = std::nullopt,
                           const std::optional<Waveform>& mixture = std::nullopt);

}  // namespace onadesep
