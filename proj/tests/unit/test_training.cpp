#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "onadesep/data.h"
#include "onadesep/errors.h"
#include "onadesep/sampler.h"
#include "onadesep/training.h"
#include "test_support.h"

using namespace onadesep;
using onadesep::testing::random_sources;
using onadesep::testing::source_names;
using onadesep::testing::tiny_config;

namespace fs = std::filesystem;

namespace {

SourceSet set_of(std::vector<std::vector<float>> data) {
  std::vector<Waveform> w;
  for (auto& d : data) w.emplace_back(std::move(d), 16000);
  auto names = source_names(w.size());
  return SourceSet(std::move(names), std::move(w));
}

MixtureExample example_of(SourceSet s, const std::string& id = "t", std::size_t start = 0) {
  Waveform m = mix(s);
  return MixtureExample{std::move(m), std::move(s), id, start};
}

std::vector<MixtureExample> random_dataset(std::size_t count, std::size_t num_sources,
                                           std::size_t length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<MixtureExample> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(example_of(random_sources(num_sources, length, rng, 16000, 0.3f),
                             "track" + std::to_string(i)));
  }
  return out;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("onadesep_test_training_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool same_params(const SeparatorState& a, const SeparatorState& b) {
  return std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin(),
                    b.parameters().end());
}

}  // namespace

TEST_CASE("l1 loss examples") {
  const auto a = set_of({{0.1f, 0.2f}, {0.3f, -0.4f}});
  CHECK(l1_loss(a, a) == 0.0);
  CHECK(l1_loss(set_of({{0, 0}}), set_of({{1, -1}})) == 1.0);
  CHECK(l1_loss(set_of({{0, 1}, {0, 0}}), set_of({{1, 1}, {0, 2}})) == 0.75);
}

TEST_CASE("l1 loss rejects misaligned sets") {
  CHECK_THROWS_AS(l1_loss(set_of({{0, 0}}), set_of({{0, 0}, {0, 0}})), ShapeError);
  CHECK_THROWS_AS(l1_loss(set_of({{0, 0}}), set_of({{0, 0, 0}})), ShapeError);
}

TEST_CASE("onade loss examples") {
  const auto tgt = set_of({{1, 1}, {5, -7}});
  CHECK(onade_loss(set_of({{0, 1}, {0, 0}}), tgt, MaskVector({true, false})) == 0.5);
  CHECK(onade_loss(set_of({{0, 1}, {100, 100}}), tgt, MaskVector({true, false})) == 0.5);
  CHECK(onade_loss(set_of({{1, 1}, {0, 0}}), tgt, MaskVector({true, false})) == 0.0);
  CHECK_THROWS_AS(onade_loss(tgt, tgt, MaskVector({false, false})), DomainError);
  CHECK_THROWS_AS(onade_loss(tgt, tgt, MaskVector({true})), ShapeError);
}

TEST_CASE("onade loss with all sources masked equals l1 loss bitwise") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 5;
    const std::size_t len = 1 + rng() % 300;
    const auto est = random_sources(n, len, rng);
    const auto tgt = random_sources(n, len, rng);
    const double a = onade_loss(est, tgt, MaskVector::all(n, true));
    const double b = l1_loss(est, tgt);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  }
}

TEST_CASE("onade loss ignores unmasked estimates bitwise") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 3;
    const std::size_t len = 1 + rng() % 300;
    Rng mrng = make_rng(trial, "mask");
    MaskVector mask = sample_training_mask(n, mrng);
    if (mask.all_masked()) mask.set(0, false);
    const auto tgt = random_sources(n, len, rng);
    const auto est = random_sources(n, len, rng);
    SourceSet perturbed = est;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask.masked(i)) perturbed.set(i, onadesep::testing::random_waveform(len, rng, 16000, 50.0f));
    }
    const double a = onade_loss(est, tgt, mask);
    const double b = onade_loss(perturbed, tgt, mask);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  }
}

TEST_CASE("span loss matches the set loss and leaves unmasked gradients zero") {
  std::mt19937_64 rng(5);
  const auto est = random_sources(3, 100, rng);
  const auto tgt = random_sources(3, 100, rng);
  std::vector<float> e, t, g(300, 99.0f);
  for (std::size_t i = 0; i < 3; ++i) {
    e.insert(e.end(), est[i].samples().begin(), est[i].samples().end());
    t.insert(t.end(), tgt[i].samples().begin(), tgt[i].samples().end());
  }
  const MaskVector mask({true, false, true});
  const double l = masked_l1_with_grad(e, t, 3, 100, mask, g, 2.0);
  CHECK(l == onade_loss(est, tgt, mask));
  for (std::size_t k = 100; k < 200; ++k) CHECK(g[k] == 0.0f);
  for (std::size_t k = 0; k < 100; ++k) {
    const float expect = 2.0f * static_cast<float>((e[k] > t[k]) - (e[k] < t[k])) / 200.0f;
    CHECK(g[k] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("train config validation and mode checks") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.mode = TrainMode::kBaseline;
  CHECK_THROWS_AS(cfg.check_model(tiny_config(2, true)), ConfigError);
  CHECK_NOTHROW(cfg.check_model(tiny_config(2, false)));
  cfg.mode = TrainMode::kOnade;
  CHECK_THROWS_AS(cfg.check_model(tiny_config(2, false)), ConfigError);
  CHECK(parse_train_mode("onade") == TrainMode::kOnade);
  CHECK(parse_train_mode("baseline") == TrainMode::kBaseline);
  CHECK_THROWS_AS(parse_train_mode("nade"), ConfigError);
}

TEST_CASE("onade step is deterministic") {
  const auto data = random_dataset(3, 2, 256, 1);
  std::vector<const MixtureExample*> batch = {&data[0], &data[1], &data[2]};
  TrainConfig cfg;
  auto run = [&](int jobs) {
    auto ts = make_training_state(init_separator(tiny_config(2), source_names(2), 1));
    for (int step = 1; step <= 3; ++step) {
      Rng rng = make_rng(9, "step", step);
      train_step_onade(ts, cfg, batch, rng, StepOptions{jobs, nullptr});
    }
    return ts;
  };
  const auto a = run(1), b = run(1), c = run(3);
  CHECK(same_params(a.model, b.model));
  CHECK(same_params(a.model, c.model));
  CHECK(a.optimizer.step == 3);
}

TEST_CASE("onade step teacher-forces unmasked channels") {
  const auto data = random_dataset(4, 3, 128, 2);
  std::vector<const MixtureExample*> batch;
  for (const auto& ex : data) batch.push_back(&ex);
  auto ts = make_training_state(init_separator(tiny_config(3), source_names(3), 1));
  int seen = 0;
  InputHook hook = [&](const ModelInput& in, const MixtureExample& ex, const MaskVector& mask) {
    ++seen;
    CHECK(mask.count_masked() >= 1);
    for (std::size_t t = 0; t < ex.mixture.size(); ++t) CHECK(in.mixture()[t] == ex.mixture[t]);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t t = 0; t < ex.mixture.size(); ++t) {
        CHECK(in.conditioning(i)[t] == (mask.masked(i) ? 0.0f : ex.sources[i][t]));
        CHECK(in.flag(i)[t] == (mask.masked(i) ? 1.0f : 0.0f));
      }
    }
  };
  Rng rng = make_rng(1, "step", 1);
  train_step_onade(ts, TrainConfig{}, batch, rng, StepOptions{2, &hook});
  CHECK(seen == 4);
}

TEST_CASE("mask histogram over 10^4 steps is uniform over sizes") {
  const auto data = random_dataset(1, 4, 16, 3);
  std::vector<const MixtureExample*> batch = {&data[0]};
  auto ts = make_training_state(init_separator(tiny_config(4), source_names(4), 1));
  std::vector<double> counts(5, 0.0);
  for (int step = 1; step <= 10000; ++step) {
    Rng rng = make_rng(5, "step", step);
    const auto rec = train_step_onade(ts, TrainConfig{}, batch, rng);
    REQUIRE(rec.mask_histogram.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) counts[k] += rec.mask_histogram[k];
  }
  CHECK(counts[0] == 0.0);
  double stat = 0.0;
  for (std::size_t k = 1; k <= 4; ++k) stat += (counts[k] - 2500.0) * (counts[k] - 2500.0) / 2500.0;
  CHECK(boost::math::cdf(boost::math::complement(boost::math::chi_squared(3.0), stat)) > 0.001);
}

TEST_CASE("baseline step uses a one-channel input and starts near mean |target|") {
  const auto data = random_dataset(2, 3, 512, 4);
  std::vector<const MixtureExample*> batch = {&data[0], &data[1]};
  auto state = init_separator(tiny_config(3, false), source_names(3), 1);
  CHECK(state.layout().find("encoder.0.conv.weight").shape.back() == 1);
  std::fill(state.mutable_param("decoder.0.conv_tr.weight").begin(),
            state.mutable_param("decoder.0.conv_tr.weight").end(), 0.0f);
  std::fill(state.mutable_param("decoder.0.conv_tr.bias").begin(),
            state.mutable_param("decoder.0.conv_tr.bias").end(), 0.0f);
  double mean_abs = 0.0;
  for (const auto* ex : batch) {
    double s = 0.0;
    for (const auto& w : ex->sources.waveforms()) {
      for (float v : w.samples()) s += std::abs(v);
    }
    mean_abs += s / (3.0 * 512.0);
  }
  mean_abs /= 2.0;
  int seen = 0;
  InputHook hook = [&](const ModelInput& in, const MixtureExample&, const MaskVector& mask) {
    ++seen;
    CHECK(in.num_channels() == 1);
    CHECK(mask.all_masked());
  };
  auto ts = make_training_state(std::move(state));
  TrainConfig cfg;
  cfg.mode = TrainMode::kBaseline;
  Rng rng = make_rng(1, "step", 1);
  const auto rec = train_step_baseline(ts, cfg, batch, rng, StepOptions{1, &hook});
  CHECK(seen == 2);
  CHECK(rec.loss == doctest::Approx(mean_abs).epsilon(1e-6));
  CHECK_THROWS_AS(train_step_onade(ts, TrainConfig{}, batch, rng), ConfigError);
}

TEST_CASE("adam update matches a hand computation") {
  std::vector<float> p = {1.0f, -2.0f};
  const std::vector<float> g = {0.5f, -0.25f};
  OptimizerState opt{0, {0.0f, 0.0f}, {0.0f, 0.0f}};
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  adam_update(p, g, opt, cfg);
  // After one step the bias-corrected update is lr * g / (|g| + eps').
  CHECK(opt.step == 1);
  CHECK(p[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.1).epsilon(1e-6));
  adam_update(p, g, opt, cfg);
  const double m = 0.9 * 0.1 * 0.5 + 0.1 * 0.5;
  const double v = 0.999 * 0.001 * 0.25 + 0.001 * 0.25;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  CHECK(p[0] == doctest::Approx(0.9 - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-6));
  OptimizerState empty;
  CHECK_THROWS_AS(adam_update(p, g, empty, cfg), ShapeError);
}

TEST_CASE("overfitting a single synthetic window") {
  SynthConfig sc;
  sc.num_tracks = 1;
  sc.track_seconds = 2.0;
  sc.seed = 3;
  const SourceSet s = synth_generate(sc).front().sources.slice(8000, 1024);
  const MixtureExample ex = example_of(s);
  SeparatorConfig mc;
  mc.depth = 3;
  mc.base_channels = 32;
  auto ts = make_training_state(init_separator(mc, s.names(), 1));
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 1;
  const MixtureExample* batch[] = {&ex};
  double tail = 0.0;
  for (int step = 1; step <= 500; ++step) {
    Rng rng = make_rng(1, "overfit", step);
    const double loss = train_step_onade(ts, cfg, batch, rng).loss;
    if (step > 480) tail += loss / 20.0;
  }
  CHECK(tail < 0.01);
  CHECK(l1_loss(one_step_separate(ts.model, ex.mixture), s) < 0.01);
}

TEST_CASE("run_training produces records, checkpoints and a log") {
  const auto dir = temp_dir("run");
  const auto data = random_dataset(5, 2, 128, 6);
  TrainConfig cfg;
  cfg.total_steps = 10;
  cfg.checkpoint_every = 5;
  cfg.batch_size = 2;
  cfg.seed = 4;
  RunOptions opts;
  opts.out_dir = dir;
  int callbacks = 0;
  opts.on_record = [&](const TrainRecord&) { ++callbacks; };
  const auto res = run_training(cfg, data, tiny_config(2), source_names(2), opts);
  CHECK(res.records.size() == 10);
  CHECK(callbacks == 10);
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    CHECK(res.records[i].step == static_cast<std::int64_t>(i + 1));
    CHECK(std::isfinite(res.records[i].loss));
  }
  CHECK(fs::exists(checkpoint_path_for_step(dir, 5)));
  CHECK(fs::exists(checkpoint_path_for_step(dir, 10)));
  std::size_t ckpts = 0;
  for (const auto& e : fs::directory_iterator(dir / "checkpoints")) ckpts += e.is_regular_file();
  CHECK(ckpts == 2);

  std::ifstream log(dir / "train_log.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "step,loss,masked_size_counts,wall_time_s");
  std::size_t rows = 0;
  for (std::string line; std::getline(log, line);) ++rows;
  CHECK(rows == 10);

  const auto last = load_checkpoint_full(checkpoint_path_for_step(dir, 10));
  CHECK(same_params(last.state, res.state));
  REQUIRE(last.optimizer.has_value());
  CHECK(last.optimizer->step == 10);
}

TEST_CASE("resumed training equals uninterrupted training") {
  const auto data = random_dataset(7, 3, 128, 7);
  TrainConfig cfg;
  cfg.total_steps = 10;
  cfg.checkpoint_every = 5;
  cfg.batch_size = 3;
  cfg.seed = 11;

  const auto full_dir = temp_dir("full");
  RunOptions full;
  full.out_dir = full_dir;
  const auto uninterrupted = run_training(cfg, data, tiny_config(3), source_names(3), full);

  const auto half_dir = temp_dir("half");
  TrainConfig half_cfg = cfg;
  half_cfg.total_steps = 5;
  RunOptions first;
  first.out_dir = half_dir;
  run_training(half_cfg, data, tiny_config(3), source_names(3), first);

  RunOptions second;
  second.out_dir = half_dir;
  second.resume_from = checkpoint_path_for_step(half_dir, 5);
  const auto resumed = run_training(cfg, data, tiny_config(3), source_names(3), second);
  CHECK(resumed.records.size() == 5);
  CHECK(resumed.records.front().step == 6);
  CHECK(same_params(resumed.state, uninterrupted.state));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(resumed.records[i].loss == uninterrupted.records[i + 5].loss);
  }
}

TEST_CASE("run_training rejects an empty dataset and mode mismatches") {
  TrainConfig cfg;
  cfg.total_steps = 1;
  CHECK_THROWS_AS(run_training(cfg, {}, tiny_config(2), source_names(2)), DataError);
  const auto data = random_dataset(2, 2, 64, 8);
  cfg.mode = TrainMode::kBaseline;
  CHECK_THROWS_AS(run_training(cfg, data, tiny_config(2, true), source_names(2)), ConfigError);
}
