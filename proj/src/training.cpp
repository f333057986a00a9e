#include "onadesep/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "onadesep/errors.h"
#include "onadesep/masking.h"
#include "onadesep/parallel.h"
#include "onadesep/text.h"

namespace onadesep {

std::string to_string(TrainMode mode) {
  return mode == TrainMode::kBaseline ? "baseline" : "onade";
}

TrainMode parse_train_mode(std::string_view text) {
  if (text == "baseline") return TrainMode::kBaseline;
  if (text == "onade") return TrainMode::kOnade;
  throw ConfigError("unknown training mode '" + std::string(text) + "' (baseline|onade)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (total_steps < 1) throw ConfigError("train.total_steps must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw ConfigError("invalid Adam coefficients");
  }
}

void TrainConfig::check_model(const SeparatorConfig& model) const {
  if (mode == TrainMode::kBaseline && model.conditioned) {
    throw ConfigError("baseline training needs a mixture-only (conditioned=false) model");
  }
  if (mode == TrainMode::kOnade && !model.conditioned) {
    throw ConfigError("onade training needs a conditioned model");
  }
}

double masked_l1_with_grad(std::span<const float> estimates, std::span<const float> targets,
                           std::size_t num_sources, std::size_t length, const MaskVector& mask,
                           std::span<float> grad, double scale) {
  if (estimates.size() != num_sources * length || targets.size() != num_sources * length) {
    throw ShapeError("loss inputs do not match I x T");
  }
  if (mask.size() != num_sources) throw ShapeError("mask size does not match source count");
  const std::size_t masked = mask.count_masked();
  if (masked == 0) throw DomainError("loss needs at least one masked source");
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != estimates.size()) throw ShapeError("gradient buffer size");

  double total = 0.0;
  const float g = static_cast<float>(scale / (static_cast<double>(masked) * length));
  for (std::size_t i = 0; i < num_sources; ++i) {
    if (!mask.masked(i)) {
      if (want_grad) std::fill_n(grad.data() + i * length, length, 0.0f);
      continue;
    }
    const float* e = estimates.data() + i * length;
    const float* t = targets.data() + i * length;
    double sum = 0.0;
    for (std::size_t k = 0; k < length; ++k) {
      sum += std::abs(static_cast<double>(e[k]) - static_cast<double>(t[k]));
    }
    total += sum / static_cast<double>(length);
    if (want_grad) {
      float* d = grad.data() + i * length;
      for (std::size_t k = 0; k < length; ++k) {
        d[k] = e[k] > t[k] ? g : (e[k] < t[k] ? -g : 0.0f);
      }
    }
  }
  return total / static_cast<double>(masked);
}

namespace {

void check_aligned(const SourceSet& a, const SourceSet& b) {
  if (a.count() != b.count() || a.length() != b.length()) {
    throw ShapeError("estimates and targets are not aligned");
  }
}

std::vector<float> flatten(const SourceSet& s) {
  std::vector<float> out;
  out.reserve(s.count() * s.length());
  for (const auto& w : s.waveforms()) out.insert(out.end(), w.samples().begin(), w.samples().end());
  return out;
}

// Computes the per-source mean absolute error for masked sources only,
// reading unmasked estimates not at all.
double masked_l1(const SourceSet& est, const SourceSet& tgt, const MaskVector& mask) {
  check_aligned(est, tgt);
  if (mask.size() != est.count()) throw ShapeError("mask size does not match source count");
  const std::size_t masked = mask.count_masked();
  if (masked == 0) throw DomainError("onade_loss needs at least one masked source");
  double total = 0.0;
  const std::size_t len = est.length();
  for (std::size_t i = 0; i < est.count(); ++i) {
    if (!mask.masked(i)) continue;
    const auto e = est[i].samples();
    const auto t = tgt[i].samples();
    double sum = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      sum += std::abs(static_cast<double>(e[k]) - static_cast<double>(t[k]));
    }
    total += sum / static_cast<double>(len);
  }
  return total / static_cast<double>(masked);
}

}  // namespace

double l1_loss(const SourceSet& estimates, const SourceSet& targets) {
  // Equal-length sources make the mean of per-source means the global mean.
  return masked_l1(estimates, targets, MaskVector::all(estimates.count(), true));
}

double onade_loss(const SourceSet& estimates, const SourceSet& targets, const MaskVector& mask) {
  return masked_l1(estimates, targets, mask);
}

TrainingState make_training_state(SeparatorState model) {
  OptimizerState opt;
  opt.first_moment.assign(model.layout().total_size(), 0.0f);
  opt.second_moment.assign(model.layout().total_size(), 0.0f);
  return TrainingState{std::move(model), std::move(opt)};
}

void adam_update(std::span<float> params, std::span<const float> grads, OptimizerState& opt,
                 const TrainConfig& cfg) {
  if (grads.size() != params.size() || opt.first_moment.size() != params.size() ||
      opt.second_moment.size() != params.size()) {
    throw ShapeError("Adam buffers do not match the parameter count");
  }
  opt.step += 1;
  const double t = static_cast<double>(opt.step);
  const float b1 = static_cast<float>(cfg.beta1);
  const float b2 = static_cast<float>(cfg.beta2);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
  const float lr = static_cast<float>(cfg.learning_rate);
  const float eps = static_cast<float>(cfg.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float g = grads[i];
    float& m = opt.first_moment[i];
    float& v = opt.second_moment[i];
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g * g;
    params[i] -= lr * (m * c1) / (std::sqrt(v * c2) + eps);
  }
}

namespace {

struct ExampleWork {
  ModelInput input;
  MaskVector mask;
};

// Runs per-example forward/backward (optionally across threads) and reduces
// gradients in example order so the result does not depend on `jobs`.
TrainRecord run_batch(TrainingState& ts, const TrainConfig& cfg,
                      std::span<const MixtureExample* const> batch,
                      std::vector<ExampleWork> work, const StepOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = batch.size();
  const std::size_t num_sources = ts.model.config().num_sources;
  std::vector<GradientResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  parallel_for(n, opts.jobs, [&](std::size_t b) {
    try {
      const auto targets = flatten(batch[b]->sources);
      const MaskVector& mask = work[b].mask;
      LossFn loss = [&](std::span<const float> est, std::span<float> grad, std::size_t num,
                        std::size_t len) {
        return masked_l1_with_grad(est, targets, num, len, mask, grad,
                                   1.0 / static_cast<double>(n));
      };
      results[b] = forward_with_gradients(ts.model, work[b].input, loss);
    } catch (...) {
      errors[b] = std::current_exception();
    }
  });

  TrainRecord rec;
  rec.step = ts.optimizer.step + 1;
  rec.mask_histogram.assign(num_sources + 1, 0);
  double loss = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    if (errors[b]) {
      try {
        std::rethrow_exception(errors[b]);
      } catch (const NumericalError& e) {
        throw NumericalError("step " + std::to_string(rec.step) + ", example " +
                             batch[b]->example_id() + ", mask " + work[b].mask.bits() + ": " +
                             e.what());
      }
    }
    loss += results[b].loss;
    rec.mask_histogram[work[b].mask.count_masked()] += 1;
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) {
    throw NumericalError("non-finite batch loss at step " + std::to_string(rec.step));
  }

  std::vector<float> grads = std::move(results[0].gradients);
  for (std::size_t b = 1; b < n; ++b) {
    const auto& g = results[b].gradients;
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += g[i];
  }
  adam_update(ts.model.mutable_parameters(), grads, ts.optimizer, cfg);

  rec.loss = loss;
  rec.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

void check_batch(const TrainingState& ts, std::span<const MixtureExample* const> batch) {
  if (batch.empty()) throw DomainError("training batch is empty");
  for (const auto* ex : batch) {
    if (ex->sources.count() != static_cast<std::size_t>(ts.model.config().num_sources)) {
      throw ShapeError("example " + ex->example_id() + " has " +
                       std::to_string(ex->sources.count()) + " sources, model expects " +
                       std::to_string(ts.model.config().num_sources));
    }
  }
}

}  // namespace

TrainRecord train_step_onade(TrainingState& ts, const TrainConfig& cfg,
                             std::span<const MixtureExample* const> batch, Rng& rng,
                             const StepOptions& opts) {
  if (cfg.mode != TrainMode::kOnade) throw ConfigError("train_step_onade needs mode=onade");
  cfg.check_model(ts.model.config());
  check_batch(ts, batch);
  std::vector<ExampleWork> work;
  work.reserve(batch.size());
  for (const auto* ex : batch) {
    MaskVector mask = sample_training_mask(ex->sources.count(), rng);
    // Teacher forcing: unmasked conditioning channels carry ground truth.
    ModelInput input = assemble_model_input(ex->mixture, ex->sources, mask);
    if (opts.hook && *opts.hook) (*opts.hook)(input, *ex, mask);
    work.push_back({std::move(input), std::move(mask)});
  }
  return run_batch(ts, cfg, batch, std::move(work), opts);
}

TrainRecord train_step_baseline(TrainingState& ts, const TrainConfig& cfg,
                                std::span<const MixtureExample* const> batch, Rng& /*rng*/,
                                const StepOptions& opts) {
  if (cfg.mode != TrainMode::kBaseline) {
    throw ConfigError("train_step_baseline needs mode=baseline");
  }
  cfg.check_model(ts.model.config());
  check_batch(ts, batch);
  std::vector<ExampleWork> work;
  work.reserve(batch.size());
  for (const auto* ex : batch) {
    MaskVector mask = MaskVector::all(ex->sources.count(), true);
    ModelInput input = assemble_mixture_input(ex->mixture);
    if (opts.hook && *opts.hook) (*opts.hook)(input, *ex, mask);
    work.push_back({std::move(input), std::move(mask)});
  }
  return run_batch(ts, cfg, batch, std::move(work), opts);
}

std::filesystem::path checkpoint_path_for_step(const std::filesystem::path& out_dir,
                                               std::int64_t step) {
  char name[32];
  std::snprintf(name, sizeof(name), "step_%06lld.ckpt", static_cast<long long>(step));
  return out_dir / "checkpoints" / name;
}

namespace {

class BatchSchedule {
 public:
  BatchSchedule(std::size_t dataset_size, std::uint64_t seed)
      : size_(dataset_size), seed_(seed) {}

  std::size_t at(std::uint64_t position) {
    const std::uint64_t epoch = position / size_;
    if (!perm_ || epoch != epoch_) {
      perm_.emplace(size_);
      std::iota(perm_->begin(), perm_->end(), std::size_t{0});
      Rng rng = make_rng(seed_, "train-epoch", epoch);
      std::shuffle(perm_->begin(), perm_->end(), rng);
      epoch_ = epoch;
    }
    return (*perm_)[position % size_];
  }

 private:
  std::size_t size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::optional<std::vector<std::size_t>> perm_;
};

std::string histogram_text(const std::vector<int>& h) {
  std::vector<std::string> parts;
  for (int c : h) parts.push_back(std::to_string(c));
  return join(parts, ";");
}

}  // namespace

TrainResult run_training(const TrainConfig& cfg, std::span<const MixtureExample> dataset,
                         const SeparatorConfig& model_cfg,
                         const std::vector<std::string>& source_order, const RunOptions& opts) {
  cfg.validate();
  cfg.check_model(model_cfg);
  if (dataset.empty()) throw DataError("training dataset is empty after windowing/filtering");

  std::optional<TrainingState> ts;
  std::int64_t first_step = 1;
  if (opts.resume_from) {
    Checkpoint ck = load_checkpoint_full(*opts.resume_from);
    if (!(ck.state.config() == model_cfg) || ck.state.source_order() != source_order) {
      throw CheckpointError("resume checkpoint " + opts.resume_from->string() +
                            " was written for a different model config or source order");
    }
    if (!ck.optimizer) {
      throw CheckpointError(opts.resume_from->string() + " has no optimizer state to resume");
    }
    first_step = ck.optimizer->step + 1;
    ts = TrainingState{std::move(ck.state), std::move(*ck.optimizer)};
  } else {
    ts = make_training_state(init_separator(model_cfg, source_order, cfg.seed));
  }

  std::ofstream log;
  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir / "checkpoints");
    const auto log_path = *opts.out_dir / "train_log.csv";
    const bool fresh = !std::filesystem::exists(log_path) || !opts.resume_from;
    log.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot open training log " + log_path.string());
    if (fresh) log << "step,loss,masked_size_counts,wall_time_s\n";
  }

  BatchSchedule schedule(dataset.size(), cfg.seed);
  StepOptions step_opts{opts.jobs, opts.hook};
  TrainResult result{ts->model, {}};
  std::vector<const MixtureExample*> batch(cfg.batch_size);
  for (std::int64_t step = first_step; step <= cfg.total_steps; ++step) {
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto pos = static_cast<std::uint64_t>(step - 1) * cfg.batch_size + b;
      batch[b] = &dataset[schedule.at(pos)];
    }
    Rng rng = make_rng(cfg.seed, "train-step", static_cast<std::uint64_t>(step));
    TrainRecord rec = cfg.mode == TrainMode::kOnade
                          ? train_step_onade(*ts, cfg, batch, rng, step_opts)
                          : train_step_baseline(*ts, cfg, batch, rng, step_opts);
    if (log.is_open()) {
      log << rec.step << ',' << format_double(rec.loss) << ',' << histogram_text(rec.mask_histogram)
          << ',' << format_fixed(rec.wall_time, 4) << '\n';
      log.flush();
    }
    if (opts.on_record) opts.on_record(rec);
    result.records.push_back(std::move(rec));
    if (opts.out_dir && (step % cfg.checkpoint_every == 0 || step == cfg.total_steps)) {
      save_checkpoint(ts->model, checkpoint_path_for_step(*opts.out_dir, step), &ts->optimizer,
                      {{"mode", to_string(cfg.mode)},
                       {"seed", std::to_string(cfg.seed)},
                       {"step", std::to_string(step)}});
    }
  }
  result.state = std::move(ts->model);
  return result;
}

}  // namespace onadesep
