#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "onadesep/data.h"
#include "onadesep/errors.h"
#include "onadesep/rng.h"

namespace onadesep {
namespace {

enum Role : std::size_t { kBass = 0, kChord = 1, kLead = 2, kPercussion = 3 };
enum Drum : int { kKick = 0, kSnare = 1, kHat = 2 };

constexpr int kVoicingBaseMidi = 48;  // C3

struct RoleTimbre {
  double rolloff;  // partial k has amplitude k^-rolloff
  double decay_s;  // exponential amplitude decay constant
};

constexpr RoleTimbre kTimbre[3] = {{1.0, 0.35}, {1.3, 0.9}, {1.6, 0.25}};

std::string track_name(const SynthConfig& cfg, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", index);
  return cfg.track_prefix + buf;
}

}  // namespace

double midi_to_hz(double midi) { return 440.0 * std::pow(2.0, (midi - 69.0) / 12.0); }

std::vector<ChordShape> SynthConfig::default_chord_pool() {
  // Diatonic major-key chords: I, ii, IV, V, vi, V7, Imaj7.
  return {{0, {0, 4, 7}},  {2, {0, 3, 7}},  {5, {0, 4, 7}},     {7, {0, 4, 7}},
          {9, {0, 3, 7}},  {7, {0, 4, 7, 10}}, {0, {0, 4, 7, 11}}};
}

void SynthConfig::validate() const {
  if (num_tracks < 1) throw ConfigError("synth.num_tracks must be >= 1");
  if (!(track_seconds > 0.0)) throw ConfigError("synth.track_seconds must be > 0");
  if (sample_rate <= 0) throw ConfigError("synth.sample_rate must be > 0");
  if (!(tempo_min > 0.0 && tempo_max >= tempo_min)) throw ConfigError("invalid synth tempo range");
  if (beats_per_chord < 1) throw ConfigError("synth.beats_per_chord must be >= 1");
  if (chord_pool.empty()) throw ConfigError("synth chord pool is empty");
  for (const auto& c : chord_pool) {
    if (c.intervals.empty() || c.intervals.front() != 0) {
      throw ConfigError("every chord shape must start with the root interval 0");
    }
  }
  if (bass_overtones < 1 || chord_overtones < 1 || lead_overtones < 1) {
    throw ConfigError("overtone counts must be >= 1");
  }
  if (!(dropout_probability >= 0.0 && dropout_probability < 1.0) ||
      !(lead_rest_probability >= 0.0 && lead_rest_probability < 1.0)) {
    throw ConfigError("synth probabilities must lie in [0, 1)");
  }
  if (!(mix_peak > 0.0 && mix_peak <= 1.0)) throw ConfigError("synth.mix_peak must be in (0, 1]");
}

TrackScore synth_score(const SynthConfig& cfg, int track_index) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, "synth-score", static_cast<std::uint64_t>(track_index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TrackScore score;
  score.track_id = track_name(cfg, track_index);
  score.tempo_bpm = cfg.tempo_min + (cfg.tempo_max - cfg.tempo_min) * unit(rng);
  score.samples_per_beat =
      static_cast<std::size_t>(std::llround(60.0 / score.tempo_bpm * cfg.sample_rate));
  score.length = static_cast<std::size_t>(std::llround(cfg.track_seconds * cfg.sample_rate));
  score.key = std::uniform_int_distribution<int>(0, 11)(rng);

  const std::size_t spb = score.samples_per_beat;
  const int num_beats = static_cast<int>((score.length + spb - 1) / spb);
  std::uniform_int_distribution<std::size_t> pick_chord(0, cfg.chord_pool.size() - 1);

  for (int beat = 0; beat < num_beats; beat += cfg.beats_per_chord) {
    const ChordShape& shape = cfg.chord_pool[pick_chord(rng)];
    ChordSpan span;
    span.first_beat = beat;
    span.num_beats = std::min(cfg.beats_per_chord, num_beats - beat);
    span.onset = static_cast<std::size_t>(beat) * spb;
    span.duration = static_cast<std::size_t>(span.num_beats) * spb;
    span.root_midi = kVoicingBaseMidi + (score.key + shape.root) % 12;
    for (int iv : shape.intervals) span.voicing_midi.push_back(span.root_midi + iv);
    std::vector<bool> dropped(kSynthRoles.size());
    for (auto&& d : dropped) d = unit(rng) < cfg.dropout_probability;
    score.dropped.push_back(dropped);
    score.chords.push_back(span);

    const double root_hz = midi_to_hz(span.root_midi);
    for (int b = 0; b < span.num_beats; ++b) {
      const int gbeat = beat + b;
      const std::size_t onset = static_cast<std::size_t>(gbeat) * spb;
      // Bass: chord root one octave below the voicing, on every beat.
      if (!dropped[kBass]) {
        score.notes.push_back({kBass, onset, spb * 9 / 10, root_hz / 2.0,
                               0.8 + 0.2 * unit(rng), gbeat, 0});
      }
      // Chord: full voicing, struck on the first beat and half-way.
      if (!dropped[kChord] && (b == 0 || b == span.num_beats / 2)) {
        const int len_beats = b == 0 ? std::max(1, span.num_beats / 2) : span.num_beats - b;
        for (int m : span.voicing_midi) {
          score.notes.push_back({kChord, onset, spb * static_cast<std::size_t>(len_beats),
                                 midi_to_hz(m), 0.5 + 0.1 * unit(rng), gbeat, 0});
        }
      }
      // Lead: eighth notes drawn from the chord tones an octave up.
      if (!dropped[kLead]) {
        std::uniform_int_distribution<std::size_t> tone(0, span.voicing_midi.size() - 1);
        for (int half = 0; half < 2; ++half) {
          const bool rest = unit(rng) < cfg.lead_rest_probability;
          const std::size_t t = tone(rng);
          if (rest) continue;
          score.notes.push_back({kLead, onset + half * (spb / 2), spb / 2,
                                 midi_to_hz(span.voicing_midi[t] + 12), 0.6 + 0.3 * unit(rng),
                                 gbeat, 0});
        }
      }
      // Percussion: kick on even beats, snare on odd beats, hats on eighths.
      if (!dropped[kPercussion]) {
        score.notes.push_back({kPercussion, onset, spb, 0.0, 0.9 + 0.1 * unit(rng), gbeat,
                               gbeat % 2 == 0 ? kKick : kSnare});
        for (int half = 0; half < 2; ++half) {
          score.notes.push_back({kPercussion, onset + half * (spb / 2), spb / 2, 0.0,
                                 0.25 + 0.1 * unit(rng), gbeat, kHat});
        }
      }
    }
  }
  return score;
}

SourceSet render_score(const SynthConfig& cfg, const TrackScore& score, int track_index) {
  Rng rng = make_rng(cfg.seed, "synth-render", static_cast<std::uint64_t>(track_index));
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> role_gain(0.5, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double sr = cfg.sample_rate;
  const double nyquist_guard = 0.45 * sr;
  const int overtones[3] = {cfg.bass_overtones, cfg.chord_overtones, cfg.lead_overtones};
  const std::size_t attack = static_cast<std::size_t>(0.005 * sr);
  const std::size_t release = static_cast<std::size_t>(0.01 * sr);

  std::vector<std::vector<double>> buf(kSynthRoles.size(), std::vector<double>(score.length));
  std::vector<double> gains(kSynthRoles.size());
  for (auto& g : gains) g = role_gain(rng);

  for (const auto& note : score.notes) {
    const std::size_t end = std::min(score.length, note.onset + note.duration);
    if (note.onset >= end) continue;
    const std::size_t len = end - note.onset;
    auto& out = buf[note.role];
    auto envelope = [&](std::size_t i, double decay_s) {
      double e = std::exp(-static_cast<double>(i) / (decay_s * sr));
      if (i < attack) e *= static_cast<double>(i) / attack;
      if (len - i <= release) e *= static_cast<double>(len - i) / release;
      return e;
    };
    if (note.role == kPercussion) {
      // Kick: sine swept from 150 Hz down to 50 Hz plus a noise click.
      // Snare: 190 Hz body plus a noise burst. Hat: differenced noise.
      const double decay = note.voice == kKick ? 0.15 : (note.voice == kSnare ? 0.12 : 0.03);
      const double phase0 = phase_dist(rng);
      double phase = phase0, prev = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double time = static_cast<double>(i) / sr;
        const double n = noise(rng);
        double v;
        if (note.voice == kKick) {
          phase += 2.0 * std::numbers::pi * (50.0 + 100.0 * std::exp(-time / 0.03)) / sr;
          v = std::sin(phase) + 0.3 * n * std::exp(-time / 0.005);
        } else if (note.voice == kSnare) {
          v = 0.6 * std::sin(phase0 + 2.0 * std::numbers::pi * 190.0 * time) *
                  std::exp(-time / 0.08) +
              0.5 * n;
        } else {
          v = 0.5 * (n - prev);
        }
        prev = n;
        out[note.onset + i] += note.gain * v * envelope(i, decay);
      }
      continue;
    }
    const RoleTimbre& timbre = kTimbre[note.role];
    for (int k = 1; k <= overtones[note.role]; ++k) {
      const double f = note.frequency * k;
      if (f >= nyquist_guard) break;
      const double amp = note.gain * std::pow(static_cast<double>(k), -timbre.rolloff);
      const double phase = phase_dist(rng);
      const double w = 2.0 * std::numbers::pi * f / sr;
      for (std::size_t i = 0; i < len; ++i) {
        out[note.onset + i] += amp * std::sin(w * static_cast<double>(i) + phase) *
                               envelope(i, timbre.decay_s);
      }
    }
  }

  double peak = 0.0;
  for (std::size_t t = 0; t < score.length; ++t) {
    double m = 0.0;
    for (std::size_t r = 0; r < buf.size(); ++r) m += gains[r] * buf[r][t];
    peak = std::max(peak, std::abs(m));
  }
  const double norm = peak > 0.0 ? cfg.mix_peak / peak : 1.0;
  std::vector<Waveform> waves;
  for (std::size_t r = 0; r < buf.size(); ++r) {
    std::vector<float> s(score.length);
    for (std::size_t t = 0; t < score.length; ++t) {
      s[t] = static_cast<float>(gains[r] * norm * buf[r][t]);
    }
    waves.emplace_back(std::move(s), cfg.sample_rate);
  }
  return SourceSet(kSynthRoles, std::move(waves));
}

std::vector<Track> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<Track> tracks;
  tracks.reserve(cfg.num_tracks);
  for (int i = 0; i < cfg.num_tracks; ++i) {
    const TrackScore score = synth_score(cfg, i);
    tracks.push_back(Track{score.track_id, render_score(cfg, score, i)});
  }
  return tracks;
}

}  // namespace onadesep
