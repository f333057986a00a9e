#include "onadesep/eval.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "onadesep/errors.h"
#include "onadesep/parallel.h"
#include "onadesep/plot.h"
#include "onadesep/rng.h"
#include "onadesep/text.h"

namespace onadesep {

double si_sdr(std::span<const float> estimate, std::span<const float> reference) {
  if (estimate.size() != reference.size()) throw AlignmentError("si_sdr: length mismatch");
  if (reference.empty()) throw DomainError("si_sdr: empty signals");
  double ref_energy = 0.0, dot = 0.0;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    ref_energy += static_cast<double>(reference[t]) * reference[t];
    dot += static_cast<double>(estimate[t]) * reference[t];
  }
  if (ref_energy == 0.0) throw DomainError("si_sdr: reference is identically zero");
  const double scale = dot / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    const double proj = scale * reference[t];
    const double err = static_cast<double>(estimate[t]) - proj;
    target += proj * proj;
    residual += err * err;
  }
  if (target == 0.0) return -kSiSdrCapDb;
  if (residual == 0.0) return kSiSdrCapDb;
  return std::clamp(10.0 * std::log10(target / residual), -kSiSdrCapDb, kSiSdrCapDb);
}

double si_sdr(const Waveform& estimate, const Waveform& reference) {
  return si_sdr(estimate.samples(), reference.samples());
}

double si_sdri(const Waveform& estimate, const Waveform& reference, const Waveform& mixture) {
  return si_sdr(estimate, reference) - si_sdr(mixture, reference);
}

std::string gibbs_condition(int steps) { return "onade_N=" + std::to_string(steps); }

std::string injection_condition(const std::string& injected_source) {
  return "inject=" + injected_source;
}

std::optional<int> condition_steps(const std::string& condition) {
  static const std::string prefix = "onade_N=";
  if (condition.rfind(prefix, 0) != 0) return std::nullopt;
  return parse_int("condition", condition.substr(prefix.size()));
}

namespace {

// Per-source SI-SDR of the mixture, the reference point of SI-SDRi. Sources
// whose reference is not active (rms_db at or below the threshold) are not
// scored and hold nullopt.
std::vector<std::optional<double>> mixture_scores(const MixtureExample& ex,
                                                  double activity_threshold_db) {
  std::vector<std::optional<double>> out;
  for (const auto& ref : ex.sources.waveforms()) {
    if (rms_db(ref) > activity_threshold_db) out.push_back(si_sdr(ex.mixture, ref));
    else out.push_back(std::nullopt);
  }
  return out;
}

void append_scores(std::vector<MetricResult>& out, const MixtureExample& ex,
                   const SourceSet& estimates, const std::vector<std::optional<double>>& mix_scores,
                   const std::string& condition, const std::vector<bool>* estimated = nullptr) {
  for (std::size_t i = 0; i < ex.sources.count(); ++i) {
    if ((estimated && !(*estimated)[i]) || !mix_scores[i]) continue;
    const double s = si_sdr(estimates[i], ex.sources[i]);
    out.push_back({ex.example_id(), ex.sources.name(i), condition, s, s - *mix_scores[i]});
  }
}

void check_eval_set(const SeparatorState& state, std::span<const MixtureExample> eval_set) {
  if (eval_set.empty()) throw DataError("evaluation set is empty");
  for (const auto& ex : eval_set) {
    if (ex.sources.names() != state.source_order()) {
      throw ConfigError("example " + ex.example_id() +
                        " does not carry the model's sources in the model's order");
    }
  }
}

std::vector<MetricResult> concat(std::vector<std::vector<MetricResult>>& parts) {
  std::vector<MetricResult> out;
  for (auto& p : parts) {
    out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return out;
}

}  // namespace

std::vector<MetricResult> run_gibbs_sweep(const SeparatorState& state,
                                          std::span<const MixtureExample> eval_set,
                                          const SweepOptions& opts) {
  if (!state.config().conditioned) {
    throw ConfigError("Gibbs sweep needs a conditioned model; got a baseline model");
  }
  check_eval_set(state, eval_set);
  if (opts.steps_grid.empty()) throw ConfigError("Gibbs step grid is empty");

  const std::size_t n_ex = eval_set.size();
  const std::size_t n_grid = opts.steps_grid.size();
  std::vector<std::vector<MetricResult>> parts(n_ex * n_grid);
  parallel_for(n_ex, opts.jobs, [&](std::size_t e) {
    const auto& ex = eval_set[e];
    const auto mix_scores = mixture_scores(ex, opts.activity_threshold_db);
    for (std::size_t g = 0; g < n_grid; ++g) {
      GibbsConfig cfg;
      cfg.steps = opts.steps_grid[g];
      cfg.alpha = opts.alpha;
      cfg.seed = derive_seed(opts.seed, "gibbs-chain:" + ex.example_id(),
                             static_cast<std::uint64_t>(cfg.steps));
      const auto res = gibbs_separate(state, ex.mixture, cfg);
      append_scores(parts[g * n_ex + e], ex, res.estimates, mix_scores,
                    gibbs_condition(cfg.steps));
    }
  });
  return concat(parts);
}

std::vector<MetricResult> run_baseline_eval(const SeparatorState& baseline,
                                            std::span<const MixtureExample> eval_set, int jobs,
                                            double activity_threshold_db) {
  if (baseline.config().conditioned) {
    throw ConfigError("baseline evaluation needs a mixture-only model; got a conditioned one");
  }
  check_eval_set(baseline, eval_set);
  std::vector<std::vector<MetricResult>> parts(eval_set.size());
  parallel_for(eval_set.size(), jobs, [&](std::size_t e) {
    const auto& ex = eval_set[e];
    append_scores(parts[e], ex, baseline_separate(baseline, ex.mixture),
                  mixture_scores(ex, activity_threshold_db), kBaselineCondition);
  });
  return concat(parts);
}

InjectionMatrix run_gt_injection(const SeparatorState& state,
                                 std::span<const MixtureExample> eval_set, int jobs,
                                 double activity_threshold_db) {
  if (!state.config().conditioned) {
    throw ConfigError("ground-truth injection needs a conditioned model");
  }
  check_eval_set(state, eval_set);
  const std::size_t num = state.source_order().size();

  // deltas[e][j][i]: SI-SDRi gain on source i from injecting j, for example e.
  std::vector<std::vector<MetricResult>> parts(eval_set.size());
  std::vector<std::vector<std::vector<std::optional<double>>>> deltas(
      eval_set.size(),
      std::vector<std::vector<std::optional<double>>>(num, std::vector<std::optional<double>>(num)));
  parallel_for(eval_set.size(), jobs, [&](std::size_t e) {
    const auto& ex = eval_set[e];
    const auto mix_scores = mixture_scores(ex, activity_threshold_db);
    const SourceSet direct = one_step_separate(state, ex.mixture);
    append_scores(parts[e], ex, direct, mix_scores, injection_condition("none"));
    for (std::size_t j = 0; j < num; ++j) {
      const auto inj = inject_gt_separate(state, ex.mixture, j, ex.sources[j]);
      append_scores(parts[e], ex, inj.estimates, mix_scores,
                    injection_condition(ex.sources.name(j)), &inj.estimated);
      for (std::size_t i = 0; i < num; ++i) {
        if (i == j || !mix_scores[i]) continue;
        deltas[e][j][i] = si_sdr(inj.estimates[i], ex.sources[i]) - si_sdr(direct[i], ex.sources[i]);
      }
    }
  });

  InjectionMatrix m;
  m.sources = state.source_order();
  m.delta.assign(num, std::vector<std::optional<double>>(num));
  for (std::size_t j = 0; j < num; ++j) {
    for (std::size_t i = 0; i < num; ++i) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& d : deltas) {
        if (d[j][i]) {
          sum += *d[j][i];
          ++count;
        }
      }
      if (count > 0) m.delta[j][i] = sum / static_cast<double>(count);
    }
  }
  m.results = concat(parts);
  return m;
}

std::vector<SummaryRow> summarize(const std::vector<MetricResult>& results) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const MetricResult*>> groups;
  for (const auto& r : results) {
    auto key = std::make_pair(r.condition, r.source);
    auto& g = groups[key];
    if (g.empty()) order.push_back(key);
    g.push_back(&r);
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    SummaryRow row;
    row.condition = key.first;
    row.source = key.second;
    row.steps = condition_steps(key.first);
    row.count = g.size();
    double sdr = 0.0, sdri = 0.0;
    for (const auto* r : g) {
      sdr += r->si_sdr_db;
      sdri += r->si_sdri_db;
    }
    const double n = static_cast<double>(g.size());
    row.mean_si_sdr_db = sdr / n;
    row.mean_si_sdri_db = sdri / n;
    if (g.size() > 1) {
      double var = 0.0;
      for (const auto* r : g) var += (r->si_sdri_db - row.mean_si_sdri_db) *
                                     (r->si_sdri_db - row.mean_si_sdri_db);
      var /= n - 1.0;
      row.ci95_half_width_db = 1.96 * std::sqrt(var) / std::sqrt(n);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::optional<double> mean_si_sdri(const std::vector<SummaryRow>& summary,
                                   const std::string& condition, const std::string& source) {
  for (const auto& r : summary) {
    if (r.condition == condition && r.source == source) return r.mean_si_sdri_db;
  }
  return std::nullopt;
}

std::string results_csv(const std::vector<MetricResult>& results) {
  std::ostringstream os;
  os << "track_id,source,condition,si_sdr_db,si_sdri_db\n";
  for (const auto& r : results) {
    os << r.track_id << ',' << r.source << ',' << r.condition << ','
       << format_fixed(r.si_sdr_db) << ',' << format_fixed(r.si_sdri_db) << '\n';
  }
  return os.str();
}

std::string summary_csv(const std::vector<SummaryRow>& summary) {
  std::ostringstream os;
  os << "condition,source,steps,count,mean_si_sdr_db,mean_si_sdri_db,ci95_low_db,ci95_high_db\n";
  for (const auto& r : summary) {
    os << r.condition << ',' << r.source << ','
       << (r.steps ? std::to_string(*r.steps) : std::string()) << ',' << r.count << ','
       << format_fixed(r.mean_si_sdr_db) << ',' << format_fixed(r.mean_si_sdri_db) << ','
       << format_fixed(r.mean_si_sdri_db - r.ci95_half_width_db) << ','
       << format_fixed(r.mean_si_sdri_db + r.ci95_half_width_db) << '\n';
  }
  return os.str();
}

std::string injection_csv(const InjectionMatrix& matrix) {
  std::ostringstream os;
  os << "injected";
  for (const auto& s : matrix.sources) os << ',' << s;
  os << '\n';
  for (std::size_t j = 0; j < matrix.sources.size(); ++j) {
    os << matrix.sources[j];
    for (std::size_t i = 0; i < matrix.sources.size(); ++i) {
      os << ',';
      if (matrix.delta[j][i]) os << format_fixed(*matrix.delta[j][i]);
    }
    os << '\n';
  }
  return os.str();
}

void emit_report(const std::vector<MetricResult>& results,
                 const std::optional<InjectionMatrix>& injection,
                 const std::filesystem::path& out_dir) {
  if (results.empty() && !injection) throw DataError("nothing to report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create report directory " + out_dir.string() + ": " + ec.message());

  std::vector<MetricResult> all = results;
  if (injection) all.insert(all.end(), injection->results.begin(), injection->results.end());
  const auto summary = summarize(all);
  write_text_file(out_dir / "results.csv", results_csv(all));
  write_text_file(out_dir / "summary.csv", summary_csv(summary));
  if (injection) write_text_file(out_dir / "injection_matrix.csv", injection_csv(*injection));

  // One figure per source from the Gibbs conditions of the main results.
  std::vector<std::string> sources;
  for (const auto& r : results) {
    if (std::find(sources.begin(), sources.end(), r.source) == sources.end()) {
      sources.push_back(r.source);
    }
  }
  const auto main_summary = summarize(results);
  for (const auto& src : sources) {
    SweepCurve curve;
    curve.title = src;
    std::vector<const SummaryRow*> rows;
    for (const auto& r : main_summary) {
      if (r.source == src && r.steps) rows.push_back(&r);
    }
    if (rows.empty()) continue;
    std::sort(rows.begin(), rows.end(),
              [](const SummaryRow* a, const SummaryRow* b) { return *a->steps < *b->steps; });
    for (const auto* r : rows) {
      curve.steps.push_back(*r->steps);
      curve.mean.push_back(r->mean_si_sdri_db);
      curve.ci_low.push_back(r->mean_si_sdri_db - r->ci95_half_width_db);
      curve.ci_high.push_back(r->mean_si_sdri_db + r->ci95_half_width_db);
    }
    curve.baseline = mean_si_sdri(main_summary, kBaselineCondition, src);
    plot_sweep(curve, out_dir / (src + "_sweep.png"));
  }
}

std::string trajectory_csv(const GibbsTrajectory& trajectory,
                           const std::optional<SourceSet>& references,
                           const std::optional<Waveform>& mixture) {
  std::vector<double> mix_scores;
  if (references && mixture) {
    for (const auto& ref : references->waveforms()) mix_scores.push_back(si_sdr(*mixture, ref));
  }
  std::ostringstream os;
  os << "step,rho,mask_bits,elided,per_source_si_sdri\n";
  for (const auto& s : trajectory.steps) {
    os << s.step << ',' << format_double(s.rho) << ',' << s.mask.bits() << ','
       << (s.elided ? 1 : 0) << ',';
    if (!mix_scores.empty() && s.estimates) {
      std::vector<std::string> vals;
      for (std::size_t i = 0; i < references->count(); ++i) {
        vals.push_back(
            format_fixed(si_sdr((*s.estimates)[i], (*references)[i]) - mix_scores[i]));
      }
      os << join(vals, ";");
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace onadesep
