#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "onadesep/core.h"
#include "onadesep/model.h"

namespace onadesep::testing {

inline std::vector<float> random_samples(std::size_t n, std::mt19937_64& rng, float scale = 0.5f) {
  std::uniform_real_distribution<float> d(-scale, scale);
  std::vector<float> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

inline Waveform random_waveform(std::size_t n, std::mt19937_64& rng, int rate = 16000,
                                float scale = 0.5f) {
  return Waveform(random_samples(n, rng, scale), rate);
}

inline std::vector<std::string> source_names(std::size_t count) {
  static const std::vector<std::string> base = {"bass", "chord", "lead", "percussion"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(i < base.size() ? base[i] : "src" + std::to_string(i));
  }
  return out;
}

inline SourceSet random_sources(std::size_t count, std::size_t n, std::mt19937_64& rng,
                                int rate = 16000, float scale = 0.5f) {
  std::vector<Waveform> w;
  for (std::size_t i = 0; i < count; ++i) w.push_back(random_waveform(n, rng, rate, scale));
  return SourceSet(source_names(count), std::move(w));
}

inline SeparatorConfig tiny_config(int num_sources = 2, bool conditioned = true) {
  SeparatorConfig cfg;
  cfg.num_sources = num_sources;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.kernel_size = 8;
  cfg.stride = 4;
  cfg.channel_growth = 2.0;
  cfg.recurrent_layers = 1;
  cfg.conditioned = conditioned;
  return cfg;
}

}  // namespace onadesep::testing
