#include "onadesep/run_config.h"

#include <cstdlib>
#include <sstream>

#include "onadesep/errors.h"
#include "onadesep/eval.h"
#include "onadesep/rng.h"
#include "onadesep/text.h"

namespace onadesep {
namespace {

std::vector<int> parse_grid(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (const auto& part : split(value, ',')) out.push_back(parse_int(key, trim(part)));
  return out;
}

std::string grid_text(const std::vector<int>& grid) {
  std::vector<std::string> parts;
  for (int n : grid) parts.push_back(std::to_string(n));
  return join(parts, ",");
}

}  // namespace

DataSplit parse_data_split(std::string_view s) {
  if (s == "train") return DataSplit::kTrain;
  if (s == "eval") return DataSplit::kEval;
  throw ConfigError("unknown split '" + std::string(s) + "' (expected train or eval)");
}

RunConfig::RunConfig() : eval_grid(kDefaultStepGrid.begin(), kDefaultStepGrid.end()) {}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::map<std::string, std::string> model_keys;
  for (const auto& [key, value] : parse_key_values(text)) {
    auto& s = cfg.synth;
    auto& w = cfg.window;
    auto& t = cfg.train;
    if (key.rfind("model.", 0) == 0) {
      model_keys[key] = value;
      if (key == "model.conditioned") cfg.model_conditioned = parse_bool(key, value);
    } else if (key == "seed") cfg.seed = parse_uint64(key, value);
    else if (key == "sample_rate") cfg.sample_rate = parse_int(key, value);
    else if (key == "synth.num_tracks") s.num_tracks = parse_int(key, value);
    else if (key == "synth.track_seconds") s.track_seconds = parse_double(key, value);
    else if (key == "synth.eval_tracks") cfg.eval_tracks = parse_int(key, value);
    else if (key == "synth.eval_track_seconds") cfg.eval_track_seconds = parse_double(key, value);
    else if (key == "synth.tempo_min") s.tempo_min = parse_double(key, value);
    else if (key == "synth.tempo_max") s.tempo_max = parse_double(key, value);
    else if (key == "synth.beats_per_chord") s.beats_per_chord = parse_int(key, value);
    else if (key == "synth.bass_overtones") s.bass_overtones = parse_int(key, value);
    else if (key == "synth.chord_overtones") s.chord_overtones = parse_int(key, value);
    else if (key == "synth.lead_overtones") s.lead_overtones = parse_int(key, value);
    else if (key == "synth.dropout_probability") s.dropout_probability = parse_double(key, value);
    else if (key == "synth.lead_rest_probability") s.lead_rest_probability = parse_double(key, value);
    else if (key == "synth.mix_peak") s.mix_peak = parse_double(key, value);
    else if (key == "window.window_seconds") w.window_seconds = parse_double(key, value);
    else if (key == "window.hop_seconds") w.hop_seconds = parse_double(key, value);
    else if (key == "window.activity_threshold_db") w.activity_threshold_db = parse_double(key, value);
    else if (key == "window.min_active_sources") w.min_active_sources = parse_int(key, value);
    else if (key == "train.learning_rate") t.learning_rate = parse_double(key, value);
    else if (key == "train.batch_size") t.batch_size = parse_int(key, value);
    else if (key == "train.total_steps") t.total_steps = parse_int(key, value);
    else if (key == "train.checkpoint_every") t.checkpoint_every = parse_int(key, value);
    else if (key == "train.beta1") t.beta1 = parse_double(key, value);
    else if (key == "train.beta2") t.beta2 = parse_double(key, value);
    else if (key == "train.epsilon") t.epsilon = parse_double(key, value);
    else if (key == "gibbs.steps") cfg.gibbs.steps = parse_int(key, value);
    else if (key == "gibbs.alpha") cfg.gibbs.alpha = parse_double(key, value);
    else if (key == "eval.grid") cfg.eval_grid = parse_grid(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  cfg.model = SeparatorConfig::from_map(model_keys);
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  return parse(read_text_file(path));
}

void RunConfig::apply_env() {
  if (const char* env = std::getenv(kSeedEnvVar); env != nullptr && *env != '\0') {
    seed = parse_uint64(kSeedEnvVar, env);
  }
}

void RunConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (eval_tracks <= 0) throw ConfigError("synth.eval_tracks must be positive");
  if (!(eval_track_seconds > 0.0)) throw ConfigError("synth.eval_track_seconds must be positive");
  synth_for(DataSplit::kTrain).validate();
  synth_for(DataSplit::kEval).validate();
  window_spec().validate();
  if (model.num_sources != static_cast<int>(kSynthRoles.size())) {
    throw ConfigError("model.num_sources must be " + std::to_string(kSynthRoles.size()) +
                      " for the synthetic corpus");
  }
  train.validate();
  gibbs.validate();
  if (eval_grid.empty()) throw ConfigError("eval.grid must not be empty");
  for (std::size_t i = 0; i < eval_grid.size(); ++i) {
    if (eval_grid[i] < 1) throw ConfigError("eval.grid values must be >= 1");
    if (i > 0 && eval_grid[i] <= eval_grid[i - 1]) {
      throw ConfigError("eval.grid must be strictly increasing");
    }
  }
}

std::string RunConfig::to_text() const {
  const auto& s = synth;
  std::map<std::string, std::string> kv = {
      {"seed", std::to_string(seed)},
      {"sample_rate", std::to_string(sample_rate)},
      {"synth.num_tracks", std::to_string(s.num_tracks)},
      {"synth.track_seconds", format_double(s.track_seconds)},
      {"synth.eval_tracks", std::to_string(eval_tracks)},
      {"synth.eval_track_seconds", format_double(eval_track_seconds)},
      {"synth.tempo_min", format_double(s.tempo_min)},
      {"synth.tempo_max", format_double(s.tempo_max)},
      {"synth.beats_per_chord", std::to_string(s.beats_per_chord)},
      {"synth.bass_overtones", std::to_string(s.bass_overtones)},
      {"synth.chord_overtones", std::to_string(s.chord_overtones)},
      {"synth.lead_overtones", std::to_string(s.lead_overtones)},
      {"synth.dropout_probability", format_double(s.dropout_probability)},
      {"synth.lead_rest_probability", format_double(s.lead_rest_probability)},
      {"synth.mix_peak", format_double(s.mix_peak)},
      {"window.window_seconds", format_double(window.window_seconds)},
      {"window.hop_seconds", format_double(window.hop_seconds)},
      {"window.activity_threshold_db", format_double(window.activity_threshold_db)},
      {"window.min_active_sources", std::to_string(window.min_active_sources)},
      {"train.learning_rate", format_double(train.learning_rate)},
      {"train.batch_size", std::to_string(train.batch_size)},
      {"train.total_steps", std::to_string(train.total_steps)},
      {"train.checkpoint_every", std::to_string(train.checkpoint_every)},
      {"train.beta1", format_double(train.beta1)},
      {"train.beta2", format_double(train.beta2)},
      {"train.epsilon", format_double(train.epsilon)},
      {"gibbs.steps", std::to_string(gibbs.steps)},
      {"gibbs.alpha", format_double(gibbs.alpha)},
      {"eval.grid", grid_text(eval_grid)},
  };
  for (const auto& [k, v] : parse_key_values(model.to_text())) {
    if (k != "model.conditioned" || model_conditioned) kv[k] = v;
  }
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
  return os.str();
}

SynthConfig RunConfig::synth_for(DataSplit split) const {
  SynthConfig s = synth;
  s.sample_rate = sample_rate;
  if (split == DataSplit::kTrain) {
    s.seed = derive_seed(seed, "synth:train");
    s.track_prefix = "train";
  } else {
    s.seed = derive_seed(seed, "synth:eval");
    s.track_prefix = "eval";
    s.num_tracks = eval_tracks;
    s.track_seconds = eval_track_seconds;
  }
  return s;
}

WindowSpec RunConfig::window_spec() const {
  WindowSpec w = window;
  w.sample_rate = sample_rate;
  return w;
}

SeparatorConfig RunConfig::model_for(TrainMode mode) const {
  const bool want = mode == TrainMode::kOnade;
  if (model_conditioned && *model_conditioned != want) {
    throw ConfigError("model.conditioned=" + std::string(*model_conditioned ? "true" : "false") +
                      " does not match train mode " + to_string(mode));
  }
  SeparatorConfig m = model;
  m.conditioned = want;
  return m;
}

TrainConfig RunConfig::train_for(TrainMode mode) const {
  TrainConfig t = train;
  t.mode = mode;
  t.seed = derive_seed(seed, "train:" + to_string(mode));
  return t;
}

GibbsConfig RunConfig::gibbs_config() const {
  GibbsConfig g = gibbs;
  g.seed = derive_seed(seed, "gibbs");
  return g;
}

std::uint64_t RunConfig::eval_seed() const { return derive_seed(seed, "eval"); }

void write_provenance(const RunConfig& cfg, const std::filesystem::path& dir,
                      const std::map<std::string, std::string>& extra) {
  std::filesystem::create_directories(dir);
  std::ostringstream os;
  os << "# onadesep " << kToolVersion << '\n';
  for (const auto& [k, v] : extra) os << "# " << k << ": " << v << '\n';
  os << cfg.to_text();
  write_text_file(dir / kResolvedConfigFile, os.str());
  write_text_file(dir / "VERSION", std::string(kToolVersion) + "\n");
}

}  // namespace onadesep
