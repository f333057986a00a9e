#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace onadesep {

// Floor returned by rms_db for all-zero input. Anything at or below it is
// treated as silence by threshold comparisons.
inline constexpr double kSilenceDb = -200.0;

// Fill value of a masked conditioning channel and the sentinel-flag levels.
inline constexpr float kMaskedFill = 0.0f;
inline constexpr float kFlagMasked = 1.0f;
inline constexpr float kFlagUnmasked = 0.0f;

// Mono sample sequence. Non-empty, finite, positive sample rate.
class Waveform {
 public:
  Waveform(std::vector<float> samples, int sample_rate);

  static Waveform zeros(std::size_t length, int sample_rate);

  std::size_t size() const { return samples_.size(); }
  int sample_rate() const { return sample_rate_; }
  std::span<const float> samples() const { return samples_; }
  // In-place access for producers that fill a preallocated buffer.
  std::span<float> mutable_samples() { return samples_; }
  float operator[](std::size_t i) const { return samples_[i]; }

  Waveform slice(std::size_t begin, std::size_t length) const;

  friend bool operator==(const Waveform&, const Waveform&) = default;

 private:
  std::vector<float> samples_;
  int sample_rate_;
};

// Ordered, named, length-aligned sources. Order defines channel semantics of
// a trained model and never changes.
class SourceSet {
 public:
  SourceSet(std::vector<std::string> names, std::vector<Waveform> waveforms);

  std::size_t count() const { return waveforms_.size(); }
  std::size_t length() const { return waveforms_.front().size(); }
  int sample_rate() const { return waveforms_.front().sample_rate(); }

  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Waveform& operator[](std::size_t i) const { return waveforms_.at(i); }
  const std::vector<Waveform>& waveforms() const { return waveforms_; }

  // Replaces source i; the new waveform must stay aligned with the rest.
  void set(std::size_t i, Waveform w);

  SourceSet slice(std::size_t begin, std::size_t length) const;
  SourceSet scaled(float gain) const;

  friend bool operator==(const SourceSet&, const SourceSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Waveform> waveforms_;
};

// masked[i] == true puts source i in the predicted set; false means it is
// supplied as conditioning.
class MaskVector {
 public:
  MaskVector() = default;
  explicit MaskVector(std::vector<bool> masked) : masked_(std::move(masked)) {}

  static MaskVector all(std::size_t count, bool masked) {
    return MaskVector(std::vector<bool>(count, masked));
  }

  std::size_t size() const { return masked_.size(); }
  bool masked(std::size_t i) const { return masked_.at(i); }
  void set(std::size_t i, bool m) { masked_.at(i) = m; }
  std::size_t count_masked() const;
  bool none_masked() const { return count_masked() == 0; }
  bool all_masked() const { return count_masked() == size(); }

  // "1" per masked source, "0" per conditioning source, in source order.
  std::string bits() const;

  friend bool operator==(const MaskVector&, const MaskVector&) = default;

 private:
  std::vector<bool> masked_;
};

// (2I+1) x T channel stack, channel-major: [mixture, I conditioning
// channels, I sentinel flags].
class ModelInput {
 public:
  ModelInput(std::size_t num_sources, std::size_t length, int sample_rate);

  std::size_t num_sources() const { return num_sources_; }
  int sample_rate() const { return sample_rate_; }
  std::size_t num_channels() const { return 2 * num_sources_ + 1; }
  std::size_t length() const { return length_; }

  std::span<const float> channel(std::size_t c) const;
  std::span<float> channel(std::size_t c);
  std::span<const float> mixture() const { return channel(0); }
  std::span<const float> conditioning(std::size_t i) const { return channel(1 + i); }
  std::span<const float> flag(std::size_t i) const {
    return channel(1 + num_sources_ + i);
  }
  std::span<const float> data() const { return data_; }

 private:
  std::size_t num_sources_;
  std::size_t length_;
  int sample_rate_;
  std::vector<float> data_;
};

// Sample-wise sum of all sources.
Waveform mix(const SourceSet& sources);

// Builds the conditioned network input. Unmasked conditioning channels carry
// the supplied waveform verbatim; masked ones are zero with flag 1.
ModelInput assemble_model_input(const Waveform& mixture,
                                const SourceSet& conditioning,
                                const MaskVector& mask);

// Single-channel input for the mixture-only baseline network.
ModelInput assemble_mixture_input(const Waveform& mixture);

// 20*log10(rms); kSilenceDb for all-zero input.
double rms_db(const Waveform& w);
double rms_db(std::span<const float> samples);

}  // namespace onadesep
