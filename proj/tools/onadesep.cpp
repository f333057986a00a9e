#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "onadesep/data.h"
#include "onadesep/errors.h"
#include "onadesep/eval.h"
#include "onadesep/model.h"
#include "onadesep/run_config.h"
#include "onadesep/sampler.h"
#include "onadesep/text.h"
#include "onadesep/training.h"
#include "onadesep/wav.h"

namespace fs = std::filesystem;
using namespace onadesep;

namespace {

RunConfig resolve_config(const std::optional<fs::path>& path) {
  RunConfig cfg = path ? RunConfig::load(*path) : RunConfig{};
  cfg.apply_env();
  cfg.validate();
  return cfg;
}

void prepare_out_dir(const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_directory(out)) {
    throw IoError(out.string() + " exists and is not a directory");
  }
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw IoError(out.string() + " is not empty (use --force to overwrite)");
    fs::remove_all(out);
  }
  fs::create_directories(out);
}

std::vector<int> parse_grid_flag(const std::string& text) {
  std::vector<int> grid;
  for (const auto& part : split(text, ',')) grid.push_back(parse_int("--grid", trim(part)));
  return grid;
}

struct GenerateArgs {
  std::optional<fs::path> config;
  fs::path out;
  bool force = false;
  std::string split = "train";
};

int cmd_generate(const GenerateArgs& a) {
  const RunConfig cfg = resolve_config(a.config);
  const SynthConfig synth = cfg.synth_for(parse_data_split(a.split));
  prepare_out_dir(a.out, a.force);
  const auto tracks = synth_generate(synth);
  save_stem_dataset(tracks, a.out);
  write_provenance(cfg, a.out, {{"command", "generate"}, {"split", a.split}});
  double seconds = 0.0;
  for (const auto& t : tracks) {
    seconds += static_cast<double>(t.sources.length()) / t.sources.sample_rate();
  }
  std::printf("generated %zu tracks, %.2f s total, in %s\n", tracks.size(), seconds,
              a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::optional<fs::path> config;
  std::string mode;
  fs::path data;
  fs::path out;
  std::optional<fs::path> resume;
  int jobs = 1;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = resolve_config(a.config);
  const TrainMode mode = parse_train_mode(a.mode);
  const SeparatorConfig model = cfg.model_for(mode);
  const TrainConfig train = cfg.train_for(mode);
  train.check_model(model);

  const auto tracks = load_stem_dataset(a.data, cfg.sample_rate);
  const auto examples = window_dataset(tracks, cfg.window_spec());
  if (examples.empty()) throw DataError("no training windows in " + a.data.string());
  const auto names = examples.front().sources.names();
  std::printf("training %s on %zu windows from %zu tracks\n", to_string(mode).c_str(),
              examples.size(), tracks.size());

  fs::create_directories(a.out);
  write_provenance(cfg, a.out, {{"command", "train"}, {"mode", to_string(mode)}});
  RunOptions opts;
  opts.out_dir = a.out;
  opts.resume_from = a.resume;
  opts.jobs = a.jobs;
  const int report_every = std::max(1, train.total_steps / 20);
  opts.on_record = [&](const TrainRecord& r) {
    if (r.step % report_every == 0 || r.step == train.total_steps) {
      std::printf("step %lld loss %.6f (%.1f s)\n", static_cast<long long>(r.step), r.loss,
                  r.wall_time);
      std::fflush(stdout);
    }
  };
  const TrainResult result = run_training(train, examples, model, names, opts);
  const fs::path final_ckpt = a.out / "model.ckpt";
  save_checkpoint(result.state, final_ckpt, nullptr,
                  {{"mode", to_string(mode)},
                   {"seed", std::to_string(train.seed)},
                   {"step", std::to_string(train.total_steps)}});
  std::printf("wrote %s\n", final_ckpt.c_str());
  return 0;
}

struct SeparateArgs {
  std::optional<fs::path> config;
  fs::path checkpoint;
  fs::path input;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> references;
  fs::path out;
};

int cmd_separate(const SeparateArgs& a) {
  const RunConfig cfg = resolve_config(a.config);
  const SeparatorState state = load_checkpoint(a.checkpoint);
  const Waveform mixture = read_wav(a.input);

  GibbsConfig gibbs = cfg.gibbs_config();
  if (a.steps) gibbs.steps = *a.steps;
  if (a.seed) gibbs.seed = *a.seed;
  gibbs.record_trajectory = a.references.has_value();
  gibbs.validate();

  std::optional<SourceSet> refs;
  if (a.references) {
    std::vector<Waveform> waves;
    for (const auto& name : state.source_order()) {
      std::optional<fs::path> found;
      for (const auto& entry : fs::directory_iterator(*a.references)) {
        const std::string stem = entry.path().stem().string();
        const auto us = stem.find('_');
        const std::string base = us == std::string::npos ? stem : stem.substr(us + 1);
        if (entry.path().extension() == ".wav" && (stem == name || base == name)) {
          found = entry.path();
        }
      }
      if (!found) throw DataError("no reference stem for '" + name + "' in " + a.references->string());
      waves.push_back(read_wav(*found));
    }
    refs = SourceSet(state.source_order(), std::move(waves));
  }

  fs::create_directories(a.out);
  write_provenance(cfg, a.out,
                   {{"command", "separate"},
                    {"checkpoint", a.checkpoint.string()},
                    {"input", a.input.string()},
                    {"gibbs.steps", std::to_string(gibbs.steps)},
                    {"gibbs.seed", std::to_string(gibbs.seed)}});

  std::optional<SourceSet> estimates;
  if (state.config().conditioned) {
    GibbsResult result = gibbs_separate(state, mixture, gibbs);
    write_text_file(a.out / "trajectory.csv",
                    trajectory_csv(result.trajectory, refs,
                                   refs ? std::optional<Waveform>(mixture) : std::nullopt));
    estimates = std::move(result.estimates);
  } else {
    estimates = baseline_separate(state, mixture);
  }
  for (std::size_t i = 0; i < estimates->count(); ++i) {
    write_wav(a.out / (estimates->name(i) + ".wav"), (*estimates)[i]);
  }
  std::printf("wrote %zu stems to %s\n", estimates->count(), a.out.c_str());
  return 0;
}

struct SweepArgs {
  std::optional<fs::path> config;
  fs::path checkpoint;
  std::optional<fs::path> baseline_checkpoint;
  fs::path data;
  std::optional<std::string> grid;
  fs::path out;
  int jobs = 1;
};

std::vector<MixtureExample> load_eval_windows(const RunConfig& cfg, const fs::path& data) {
  const auto tracks = load_stem_dataset(data, cfg.sample_rate);
  auto examples = window_dataset(tracks, cfg.window_spec());
  if (examples.empty()) throw DataError("no evaluation windows in " + data.string());
  return examples;
}

int cmd_sweep(const SweepArgs& a) {
  const RunConfig cfg = resolve_config(a.config);
  const SeparatorState onade = load_checkpoint_expecting(a.checkpoint, true);
  const auto examples = load_eval_windows(cfg, a.data);

  SweepOptions opts;
  opts.steps_grid = a.grid ? parse_grid_flag(*a.grid) : cfg.eval_grid;
  opts.alpha = cfg.gibbs.alpha;
  opts.seed = cfg.eval_seed();
  opts.jobs = a.jobs;
  opts.activity_threshold_db = cfg.window.activity_threshold_db;
  fs::create_directories(a.out);
  write_provenance(cfg, a.out, {{"command", "sweep"}, {"checkpoint", a.checkpoint.string()}});

  auto results = run_gibbs_sweep(onade, examples, opts);
  if (a.baseline_checkpoint) {
    const SeparatorState baseline = load_checkpoint_expecting(*a.baseline_checkpoint, false);
    const auto base = run_baseline_eval(baseline, examples, a.jobs,
                                        cfg.window.activity_threshold_db);
    results.insert(results.end(), base.begin(), base.end());
  }
  emit_report(results, std::nullopt, a.out);
  std::printf("evaluated %zu windows; report in %s\n", examples.size(), a.out.c_str());
  return 0;
}

struct InjectArgs {
  std::optional<fs::path> config;
  fs::path checkpoint;
  fs::path data;
  fs::path out;
  int jobs = 1;
};

int cmd_inject(const InjectArgs& a) {
  const RunConfig cfg = resolve_config(a.config);
  const SeparatorState onade = load_checkpoint_expecting(a.checkpoint, true);
  const auto examples = load_eval_windows(cfg, a.data);
  fs::create_directories(a.out);
  write_provenance(cfg, a.out, {{"command", "inject"}, {"checkpoint", a.checkpoint.string()}});
  const InjectionMatrix matrix = run_gt_injection(onade, examples, a.jobs, cfg.window.activity_threshold_db);
  emit_report(matrix.results, matrix, a.out);
  std::fputs(injection_csv(matrix).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orderless-NADE source separation: data, training, sampling, evaluation"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Render a synthetic stem dataset");
  g->add_option("--config", gen.config, "Run config file")->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "Output dataset directory")->required();
  g->add_flag("--force", gen.force, "Overwrite a non-empty output directory");
  g->add_option("--split", gen.split, "train or eval")->check(CLI::IsMember({"train", "eval"}));

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a separator");
  t->add_option("--config", tr.config, "Run config file")->check(CLI::ExistingFile);
  t->add_option("--mode", tr.mode, "baseline or onade")
      ->required()
      ->check(CLI::IsMember({"baseline", "onade"}));
  t->add_option("--data", tr.data, "Stem dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--resume", tr.resume, "Training checkpoint to resume from")->check(CLI::ExistingFile);
  t->add_option("--jobs", tr.jobs, "Worker threads")->check(CLI::PositiveNumber);

  SeparateArgs sep;
  auto* s = app.add_subcommand("separate", "Separate one mixture by Gibbs sampling");
  s->add_option("--config", sep.config, "Run config file")->check(CLI::ExistingFile);
  s->add_option("--checkpoint", sep.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  s->add_option("--input", sep.input, "Mixture WAV")->required()->check(CLI::ExistingFile);
  s->add_option("--steps", sep.steps, "Gibbs steps")->check(CLI::PositiveNumber);
  s->add_option("--seed", sep.seed, "Sampler seed");
  s->add_option("--references", sep.references, "Directory of reference stems for trajectory metrics")
      ->check(CLI::ExistingDirectory);
  s->add_option("--out", sep.out, "Output directory")->required();

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "Evaluate SI-SDRi across Gibbs step counts");
  w->add_option("--config", sw.config, "Run config file")->check(CLI::ExistingFile);
  w->add_option("--checkpoint", sw.checkpoint, "Orderless-NADE checkpoint")->required()->check(CLI::ExistingFile);
  w->add_option("--baseline-checkpoint", sw.baseline_checkpoint, "Baseline checkpoint")
      ->check(CLI::ExistingFile);
  w->add_option("--data", sw.data, "Evaluation stem dataset")->required()->check(CLI::ExistingDirectory);
  w->add_option("--grid", sw.grid, "Comma-separated step counts (default: eval.grid)");
  w->add_option("--out", sw.out, "Report directory")->required();
  w->add_option("--jobs", sw.jobs, "Worker threads")->check(CLI::PositiveNumber);

  InjectArgs inj;
  auto* i = app.add_subcommand("inject", "Ground-truth injection matrix");
  i->add_option("--config", inj.config, "Run config file")->check(CLI::ExistingFile);
  i->add_option("--checkpoint", inj.checkpoint, "Orderless-NADE checkpoint")->required()->check(CLI::ExistingFile);
  i->add_option("--data", inj.data, "Evaluation stem dataset")->required()->check(CLI::ExistingDirectory);
  i->add_option("--out", inj.out, "Report directory")->required();
  i->add_option("--jobs", inj.jobs, "Worker threads")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (g->parsed()) return cmd_generate(gen);
    if (t->parsed()) return cmd_train(tr);
    if (s->parsed()) return cmd_separate(sep);
    if (w->parsed()) return cmd_sweep(sw);
    if (i->parsed()) return cmd_inject(inj);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
