#include <cmath>

#include "onadesep/data.h"
#include "onadesep/errors.h"

namespace onadesep {

void WindowSpec::validate() const {
  if (!(window_seconds > 0.0)) throw ConfigError("window.seconds must be > 0");
  if (!(hop_seconds > 0.0 && hop_seconds <= window_seconds)) {
    throw ConfigError("window.hop_seconds must lie in (0, window.seconds]");
  }
  if (sample_rate <= 0) throw ConfigError("window.sample_rate must be > 0");
  if (min_active_sources < 1) throw ConfigError("window.min_active_sources must be >= 1");
  if (window_samples() == 0 || hop_samples() == 0) {
    throw ConfigError("window or hop rounds to zero samples");
  }
}

std::size_t WindowSpec::window_samples() const {
  return static_cast<std::size_t>(std::llround(window_seconds * sample_rate));
}

std::size_t WindowSpec::hop_samples() const {
  return static_cast<std::size_t>(std::llround(hop_seconds * sample_rate));
}

std::string MixtureExample::example_id() const {
  return track_id + "@" + std::to_string(window_start);
}

std::vector<MixtureExample> window_track(const std::string& track_id, const SourceSet& sources,
                                         const WindowSpec& spec) {
  spec.validate();
  if (sources.sample_rate() != spec.sample_rate) {
    throw DataError("track '" + track_id + "' is at " + std::to_string(sources.sample_rate()) +
                    " Hz but the window spec requires " + std::to_string(spec.sample_rate) +
                    " Hz");
  }
  const std::size_t win = spec.window_samples();
  const std::size_t hop = spec.hop_samples();
  std::vector<MixtureExample> out;
  for (std::size_t start = 0; start + win <= sources.length(); start += hop) {
    SourceSet window = sources.slice(start, win);
    int active = 0;
    for (const auto& w : window.waveforms()) {
      if (rms_db(w) > spec.activity_threshold_db) ++active;
    }
    if (active < spec.min_active_sources) continue;
    Waveform m = mix(window);
    out.push_back(MixtureExample{std::move(m), std::move(window), track_id, start});
  }
  return out;
}

std::vector<MixtureExample> window_dataset(const std::vector<Track>& tracks,
                                           const WindowSpec& spec) {
  std::vector<MixtureExample> out;
  for (const auto& t : tracks) {
    auto w = window_track(t.track_id, t.sources, spec);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

}  // namespace onadesep
