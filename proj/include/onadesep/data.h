#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "onadesep/core.h"

namespace onadesep {

struct WindowSpec {
  double window_seconds = 4.0;
  double hop_seconds = 2.0;
  int sample_rate = 16000;
  double activity_threshold_db = -60.0;
  int min_active_sources = 2;

  void validate() const;
  std::size_t window_samples() const;
  std::size_t hop_samples() const;
};

struct MixtureExample {
  Waveform mixture;
  SourceSet sources;
  std::string track_id;
  std::size_t window_start = 0;

  // "<track_id>@<window_start>", unique per example within a dataset.
  std::string example_id() const;
};

struct Track {
  std::string track_id;
  SourceSet sources;
};

// Cuts every full window at multiples of the hop and keeps those where at
// least min_active_sources sources have rms_db strictly above the threshold.
std::vector<MixtureExample> window_track(const std::string& track_id, const SourceSet& sources,
                                         const WindowSpec& spec);

// Windows every track in order.
std::vector<MixtureExample> window_dataset(const std::vector<Track>& tracks,
                                           const WindowSpec& spec);

// ----- synthetic coordinated-source generator -----

inline const std::vector<std::string> kSynthRoles = {"bass", "chord", "lead", "percussion"};

// A chord as a root pitch class (relative to the track key) plus intervals
// above the root, in semitones.
struct ChordShape {
  int root = 0;
  std::vector<int> intervals;
};

struct SynthConfig {
  int num_tracks = 20;
  double track_seconds = 8.0;
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  double tempo_min = 90.0;
  double tempo_max = 140.0;
  int beats_per_chord = 4;
  std::vector<ChordShape> chord_pool = default_chord_pool();
  int bass_overtones = 8;
  int chord_overtones = 6;
  int lead_overtones = 4;
  // Probability that a melodic role sits out a whole chord span.
  double dropout_probability = 0.15;
  // Probability that the lead rests on a given eighth note.
  double lead_rest_probability = 0.25;
  // Peak level of the normalised mixture.
  double mix_peak = 0.9;
  std::string track_prefix = "track";

  void validate() const;
  static std::vector<ChordShape> default_chord_pool();
};

struct NoteEvent {
  std::size_t role = 0;  // index into kSynthRoles
  std::size_t onset = 0;  // sample index
  std::size_t duration = 0;  // samples
  double frequency = 0.0;  // Hz; 0 for unpitched percussion
  double gain = 1.0;
  int beat = 0;  // beat index within the track
  int voice = 0;  // percussion: 0 kick, 1 snare, 2 hat
};

struct ChordSpan {
  std::size_t onset = 0;
  std::size_t duration = 0;
  int root_midi = 0;  // voicing root
  std::vector<int> voicing_midi;
  int first_beat = 0;
  int num_beats = 0;
};

// The generator's note tables for one track: tempo grid, chord spans and
// every rendered note.
struct TrackScore {
  std::string track_id;
  double tempo_bpm = 0.0;
  std::size_t samples_per_beat = 0;
  std::size_t length = 0;
  int key = 0;
  std::vector<ChordSpan> chords;
  std::vector<NoteEvent> notes;
  // Roles silenced for a chord span: dropped[span][role].
  std::vector<std::vector<bool>> dropped;
};

double midi_to_hz(double midi);

TrackScore synth_score(const SynthConfig& cfg, int track_index);
SourceSet render_score(const SynthConfig& cfg, const TrackScore& score, int track_index);

// Deterministic in cfg.seed; four mono roles per track; each track scaled so
// its mixture peaks at cfg.mix_peak.
std::vector<Track> synth_generate(const SynthConfig& cfg);

// ----- on-disk stem datasets -----
//
// <root>/<track_id>/<nn>_<source>.wav plus <root>/dataset.meta holding
// sample_rate=<hz> and sources=<comma separated names>.

void save_stem_dataset(const std::vector<Track>& tracks, const std::filesystem::path& root);

// expected_rate, when given, must match every stem; there is no resampling.
std::vector<Track> load_stem_dataset(const std::filesystem::path& root,
                                     std::optional<int> expected_rate = std::nullopt);

}  // namespace onadesep
