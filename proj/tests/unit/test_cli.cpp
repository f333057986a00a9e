#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "onadesep/errors.h"
#include "onadesep/eval.h"
#include "onadesep/model.h"
#include "onadesep/run_config.h"
#include "onadesep/text.h"
#include "onadesep/wav.h"

using namespace onadesep;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTinyConfig =
    "seed=7\n"
    "synth.num_tracks=3\n"
    "synth.track_seconds=3\n"
    "synth.eval_tracks=2\n"
    "synth.eval_track_seconds=2\n"
    "window.window_seconds=0.512\n"
    "window.hop_seconds=0.512\n"
    "model.depth=2\n"
    "model.base_channels=4\n"
    "train.total_steps=6\n"
    "train.batch_size=2\n"
    "train.checkpoint_every=3\n"
    "gibbs.steps=3\n"
    "eval.grid=1,2\n";

class EnvGuard {
 public:
  explicit EnvGuard(const char* value) {
    if (const char* old = std::getenv(kSeedEnvVar)) old_ = old;
    if (value) setenv(kSeedEnvVar, value, 1);
    else unsetenv(kSeedEnvVar);
  }
  ~EnvGuard() {
    if (old_) setenv(kSeedEnvVar, old_->c_str(), 1);
    else unsetenv(kSeedEnvVar);
  }

 private:
  std::optional<std::string> old_;
};

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ONADESEP_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("run config parsing") {
  const RunConfig cfg = RunConfig::parse(kTinyConfig);
  CHECK(cfg.seed == 7);
  CHECK(cfg.synth.num_tracks == 3);
  CHECK(cfg.model.depth == 2);
  CHECK(cfg.eval_grid == std::vector<int>{1, 2});
  CHECK_FALSE(cfg.model_conditioned.has_value());
  CHECK(RunConfig::parse(cfg.to_text()).to_text() == cfg.to_text());

  const RunConfig defaults;
  CHECK(defaults.eval_grid == kDefaultStepGrid);
  CHECK(defaults.sample_rate == 16000);

  CHECK_THROWS_AS(RunConfig::parse("seed=1\nbogus.key=3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("seed=1\nseed=2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("model.num_sources=3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("eval.grid=4,1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("train.batch_size=0\n"), ConfigError);
}

TEST_CASE("derived settings follow the run config") {
  const RunConfig cfg = RunConfig::parse(std::string(kTinyConfig) + "sample_rate=8000\n");
  const auto train = cfg.synth_for(DataSplit::kTrain);
  const auto eval = cfg.synth_for(DataSplit::kEval);
  CHECK(train.num_tracks == 3);
  CHECK(eval.num_tracks == 2);
  CHECK(eval.track_seconds == 2.0);
  CHECK(train.sample_rate == 8000);
  CHECK(train.seed != eval.seed);
  CHECK(train.track_prefix != eval.track_prefix);
  CHECK(cfg.window_spec().sample_rate == 8000);
  CHECK(cfg.model_for(TrainMode::kOnade).conditioned);
  CHECK_FALSE(cfg.model_for(TrainMode::kBaseline).conditioned);
  CHECK(cfg.train_for(TrainMode::kBaseline).mode == TrainMode::kBaseline);
  CHECK(cfg.train_for(TrainMode::kOnade).seed != cfg.train_for(TrainMode::kBaseline).seed);

  const RunConfig pinned = RunConfig::parse("model.conditioned=true\n");
  CHECK(pinned.model_for(TrainMode::kOnade).conditioned);
  CHECK_THROWS_AS(pinned.model_for(TrainMode::kBaseline), ConfigError);
  CHECK_THROWS_AS(parse_data_split("test"), ConfigError);
}

TEST_CASE("seed environment override") {
  RunConfig cfg = RunConfig::parse(kTinyConfig);
  {
    EnvGuard env("99");
    cfg.apply_env();
    CHECK(cfg.seed == 99);
  }
  {
    EnvGuard env("not-a-number");
    CHECK_THROWS_AS(cfg.apply_env(), ConfigError);
  }
  {
    EnvGuard env(nullptr);
    cfg.seed = 5;
    cfg.apply_env();
    CHECK(cfg.seed == 5);
  }
}

TEST_CASE("provenance files") {
  const fs::path dir = fs::temp_directory_path() / "onadesep_prov";
  fs::remove_all(dir);
  const RunConfig cfg = RunConfig::parse(kTinyConfig);
  write_provenance(cfg, dir, {{"command", "test"}});
  const std::string text = read_text_file(dir / kResolvedConfigFile);
  CHECK(text.find(std::string("# onadesep ") + kToolVersion) != std::string::npos);
  CHECK(text.find("# command: test") != std::string::npos);
  CHECK(RunConfig::parse(text).to_text() == cfg.to_text());
  CHECK(trim(read_text_file(dir / "VERSION")) == kToolVersion);
  fs::remove_all(dir);
}

TEST_CASE("command line workflow") {
  EnvGuard env(nullptr);
  const fs::path root = fs::temp_directory_path() / "onadesep_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg = root / "tiny.cfg";
  write_text_file(cfg, kTinyConfig);
  const fs::path log = root / "log.txt";
  const std::string c = " --config " + cfg.string();

  REQUIRE(run("generate" + c + " --out " + (root / "train").string(), log) == 0);
  CHECK(read_text_file(log).find("generated 3 tracks") != std::string::npos);
  CHECK(load_stem_dataset(root / "train").size() == 3);
  CHECK(run("generate" + c + " --out " + (root / "train").string(), log) == 1);
  CHECK(read_text_file(log).find("--force") != std::string::npos);
  CHECK(run("generate" + c + " --force --out " + (root / "train").string(), log) == 0);
  REQUIRE(run("generate" + c + " --split eval --out " + (root / "eval").string(), log) == 0);
  CHECK(load_stem_dataset(root / "eval").size() == 2);

  const std::string data = " --data " + (root / "train").string();
  REQUIRE(run("train" + c + " --mode onade" + data + " --out " + (root / "onade").string(), log) == 0);
  REQUIRE(run("train" + c + " --mode baseline" + data + " --out " + (root / "base").string(), log) == 0);
  const auto onade = load_checkpoint_full(root / "onade" / "model.ckpt");
  const auto base = load_checkpoint_full(root / "base" / "model.ckpt");
  CHECK(onade.state.config().input_channels() == 9);
  CHECK(base.state.config().input_channels() == 1);
  CHECK(onade.metadata.at("mode") == "onade");
  CHECK(count_lines(read_text_file(root / "onade" / "train_log.csv")) == 1 + 6);
  CHECK(fs::exists(checkpoint_path_for_step(root / "onade", 3)));
  CHECK(fs::exists(root / "onade" / kResolvedConfigFile));

  // A mixture from the evaluation split.
  const auto tracks = load_stem_dataset(root / "eval");
  const fs::path mixture = root / "mix.wav";
  write_wav(mixture, mix(tracks[0].sources));
  const fs::path refs = root / "eval" / tracks[0].track_id;
  const std::string sep = "separate" + c + " --checkpoint " + (root / "onade" / "model.ckpt").string() +
                          " --input " + mixture.string() + " --seed 4 --references " + refs.string();
  REQUIRE(run(sep + " --out " + (root / "sep1").string(), log) == 0);
  REQUIRE(run(sep + " --out " + (root / "sep2").string(), log) == 0);
  for (const auto& name : onade.state.source_order()) {
    const fs::path a = root / "sep1" / (name + ".wav");
    REQUIRE(fs::exists(a));
    CHECK(read_text_file(a) == read_text_file(root / "sep2" / (name + ".wav")));
  }
  CHECK(count_lines(read_text_file(root / "sep1" / "trajectory.csv")) == 1 + 3);
  REQUIRE(run("separate" + c + " --checkpoint " + (root / "base" / "model.ckpt").string() +
                  " --input " + mixture.string() + " --out " + (root / "sep3").string(),
              log) == 0);
  CHECK(fs::exists(root / "sep3" / "bass.wav"));
  CHECK_FALSE(fs::exists(root / "sep3" / "trajectory.csv"));

  const std::string eval = " --data " + (root / "eval").string();
  REQUIRE(run("sweep" + c + " --checkpoint " + (root / "onade" / "model.ckpt").string() +
                  " --baseline-checkpoint " + (root / "base" / "model.ckpt").string() + eval +
                  " --out " + (root / "sweep").string(),
              log) == 0);
  const std::string results = read_text_file(root / "sweep" / "results.csv");
  CHECK(results.find("onade_N=2") != std::string::npos);
  CHECK(results.find(kBaselineCondition) != std::string::npos);
  CHECK(fs::exists(root / "sweep" / "bass_sweep.png"));
  REQUIRE(run("inject" + c + " --checkpoint " + (root / "onade" / "model.ckpt").string() + eval +
                  " --out " + (root / "inject").string(),
              log) == 0);
  CHECK(fs::exists(root / "inject" / "injection_matrix.csv"));

  SUBCASE("errors exit nonzero with a message") {
    CHECK(run("sweep" + c + " --checkpoint " + (root / "base" / "model.ckpt").string() + eval +
                  " --out " + (root / "bad").string(),
              log) == 1);
    CHECK(read_text_file(log).find("error:") != std::string::npos);
    CHECK(run("train" + c + " --mode sideways" + data + " --out " + (root / "bad").string(), log) != 0);
    CHECK(run("frobnicate", log) != 0);
    write_text_file(root / "bad.cfg", "nonsense.key=1\n");
    CHECK(run("generate --config " + (root / "bad.cfg").string() + " --out " +
                  (root / "bad2").string(),
              log) == 1);
    CHECK(read_text_file(log).find("nonsense.key") != std::string::npos);
  }
  fs::remove_all(root);
}
