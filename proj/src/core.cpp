#include "onadesep/core.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "onadesep/errors.h"

namespace onadesep {

Waveform::Waveform(std::vector<float> samples, int sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
  if (samples_.empty()) throw DomainError("waveform must have at least one sample");
  if (sample_rate_ <= 0) throw DomainError("waveform sample rate must be positive");
  for (float s : samples_) {
    if (!std::isfinite(s)) throw DomainError("waveform contains a non-finite sample");
  }
}

Waveform Waveform::zeros(std::size_t length, int sample_rate) {
  return Waveform(std::vector<float>(length, 0.0f), sample_rate);
}

Waveform Waveform::slice(std::size_t begin, std::size_t length) const {
  if (begin + length > samples_.size()) {
    throw AlignmentError("waveform slice out of range");
  }
  return Waveform(std::vector<float>(samples_.begin() + begin,
                                     samples_.begin() + begin + length),
                  sample_rate_);
}

SourceSet::SourceSet(std::vector<std::string> names, std::vector<Waveform> waveforms)
    : names_(std::move(names)), waveforms_(std::move(waveforms)) {
  if (waveforms_.empty()) throw AlignmentError("source set must hold at least one source");
  if (names_.size() != waveforms_.size()) {
    throw AlignmentError("source set has " + std::to_string(names_.size()) +
                         " names for " + std::to_string(waveforms_.size()) + " waveforms");
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (!seen.insert(n).second) throw AlignmentError("duplicate source name '" + n + "'");
  }
  for (const auto& w : waveforms_) {
    if (w.size() != waveforms_.front().size() ||
        w.sample_rate() != waveforms_.front().sample_rate()) {
      throw AlignmentError("source waveforms differ in length or sample rate");
    }
  }
}

void SourceSet::set(std::size_t i, Waveform w) {
  if (w.size() != length() || w.sample_rate() != sample_rate()) {
    throw AlignmentError("replacement waveform for source '" + name(i) +
                         "' is not aligned with the set");
  }
  waveforms_.at(i) = std::move(w);
}

SourceSet SourceSet::slice(std::size_t begin, std::size_t length) const {
  std::vector<Waveform> out;
  out.reserve(count());
  for (const auto& w : waveforms_) out.push_back(w.slice(begin, length));
  return SourceSet(names_, std::move(out));
}

SourceSet SourceSet::scaled(float gain) const {
  std::vector<Waveform> out;
  out.reserve(count());
  for (const auto& w : waveforms_) {
    std::vector<float> s(w.samples().begin(), w.samples().end());
    for (auto& x : s) x *= gain;
    out.emplace_back(std::move(s), w.sample_rate());
  }
  return SourceSet(names_, std::move(out));
}

std::size_t MaskVector::count_masked() const {
  return static_cast<std::size_t>(std::count(masked_.begin(), masked_.end(), true));
}

std::string MaskVector::bits() const {
  std::string out;
  out.reserve(masked_.size());
  for (bool m : masked_) out.push_back(m ? '1' : '0');
  return out;
}

ModelInput::ModelInput(std::size_t num_sources, std::size_t length, int sample_rate)
    : num_sources_(num_sources),
      length_(length),
      sample_rate_(sample_rate),
      data_((2 * num_sources + 1) * length, 0.0f) {}

std::span<const float> ModelInput::channel(std::size_t c) const {
  if (c >= num_channels()) throw ShapeError("model input channel out of range");
  return std::span<const float>(data_).subspan(c * length_, length_);
}

std::span<float> ModelInput::channel(std::size_t c) {
  if (c >= num_channels()) throw ShapeError("model input channel out of range");
  return std::span<float>(data_).subspan(c * length_, length_);
}

Waveform mix(const SourceSet& sources) {
  std::vector<float> out(sources.length(), 0.0f);
  for (const auto& w : sources.waveforms()) {
    const auto s = w.samples();
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += s[t];
  }
  return Waveform(std::move(out), sources.sample_rate());
}

ModelInput assemble_model_input(const Waveform& mixture, const SourceSet& conditioning,
                                const MaskVector& mask) {
  const std::size_t num = conditioning.count();
  if (mask.size() != num) {
    throw AlignmentError("mask has " + std::to_string(mask.size()) + " entries for " +
                         std::to_string(num) + " sources");
  }
  if (mixture.size() != conditioning.length() ||
      mixture.sample_rate() != conditioning.sample_rate()) {
    throw AlignmentError("mixture and conditioning sources are not aligned");
  }
  ModelInput input(num, mixture.size(), mixture.sample_rate());
  std::ranges::copy(mixture.samples(), input.channel(0).begin());
  for (std::size_t i = 0; i < num; ++i) {
    auto cond = input.channel(1 + i);
    auto flag = input.channel(1 + num + i);
    if (mask.masked(i)) {
      std::ranges::fill(cond, kMaskedFill);
      std::ranges::fill(flag, kFlagMasked);
    } else {
      std::ranges::copy(conditioning[i].samples(), cond.begin());
      std::ranges::fill(flag, kFlagUnmasked);
    }
  }
  return input;
}

ModelInput assemble_mixture_input(const Waveform& mixture) {
  ModelInput input(0, mixture.size(), mixture.sample_rate());
  std::ranges::copy(mixture.samples(), input.channel(0).begin());
  return input;
}

double rms_db(std::span<const float> samples) {
  if (samples.empty()) throw DomainError("rms_db of an empty signal");
  double power = 0.0;
  for (float s : samples) power += static_cast<double>(s) * s;
  power /= static_cast<double>(samples.size());
  if (power <= 0.0) return kSilenceDb;
  return std::max(kSilenceDb, 10.0 * std::log10(power));
}

double rms_db(const Waveform& w) { return rms_db(w.samples()); }

}  // namespace onadesep
