#include "onadesep/model.h"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "onadesep/errors.h"
#include "onadesep/network.h"
#include "onadesep/rng.h"
#include "onadesep/text.h"

namespace onadesep {

void SeparatorConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("separator config: " + what); };
  if (num_sources < 1) fail("num_sources must be >= 1");
  if (depth < 1 || depth > 8) fail("depth must be in [1, 8]");
  if (base_channels < 1) fail("base_channels must be >= 1");
  if (stride < 1) fail("stride must be >= 1");
  if (kernel_size < stride) fail("kernel_size must be >= stride");
  if ((kernel_size - stride) % 2 != 0) fail("kernel_size - stride must be even");
  if (!(channel_growth >= 1.0) || !std::isfinite(channel_growth)) {
    fail("channel_growth must be >= 1");
  }
  if (recurrent_layers < 0) fail("recurrent_layers must be >= 0");
}

std::vector<int> SeparatorConfig::encoder_channels() const {
  std::vector<int> out;
  for (int l = 0; l < depth; ++l) {
    out.push_back(static_cast<int>(std::lround(base_channels * std::pow(channel_growth, l))));
  }
  return out;
}

std::size_t SeparatorConfig::length_quantum() const {
  std::size_t q = 1;
  for (int l = 0; l < depth; ++l) q *= static_cast<std::size_t>(stride);
  return q;
}

std::size_t SeparatorConfig::valid_length(std::size_t length) const {
  const std::size_t q = length_quantum();
  return std::max<std::size_t>(1, (length + q - 1) / q) * q;
}

std::string SeparatorConfig::to_text() const {
  std::ostringstream os;
  os << "model.num_sources=" << num_sources << '\n'
     << "model.depth=" << depth << '\n'
     << "model.base_channels=" << base_channels << '\n'
     << "model.kernel_size=" << kernel_size << '\n'
     << "model.stride=" << stride << '\n'
     << "model.channel_growth=" << format_double(channel_growth) << '\n'
     << "model.recurrent_layers=" << recurrent_layers << '\n'
     << "model.conditioned=" << (conditioned ? "true" : "false") << '\n';
  return os.str();
}

SeparatorConfig SeparatorConfig::from_map(const std::map<std::string, std::string>& kv) {
  SeparatorConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key.rfind("model.", 0) != 0) continue;
    const std::string k = key.substr(6);
    if (k == "num_sources") cfg.num_sources = parse_int(key, value);
    else if (k == "depth") cfg.depth = parse_int(key, value);
    else if (k == "base_channels") cfg.base_channels = parse_int(key, value);
    else if (k == "kernel_size") cfg.kernel_size = parse_int(key, value);
    else if (k == "stride") cfg.stride = parse_int(key, value);
    else if (k == "channel_growth") cfg.channel_growth = parse_double(key, value);
    else if (k == "recurrent_layers") cfg.recurrent_layers = parse_int(key, value);
    else if (k == "conditioned") cfg.conditioned = parse_bool(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

ParamLayout::ParamLayout(const SeparatorConfig& cfg) {
  cfg.validate();
  const auto chans = cfg.encoder_channels();
  const auto k = static_cast<std::size_t>(cfg.kernel_size);
  const double stride = cfg.stride;
  for (int l = 0; l < cfg.depth; ++l) {
    const std::string enc = "encoder." + std::to_string(l);
    const auto in = static_cast<std::size_t>(l == 0 ? cfg.input_channels() : chans[l - 1]);
    const auto out = static_cast<std::size_t>(chans[l]);
    const double conv_bound = 1.0 / std::sqrt(static_cast<double>(in * k));
    add(enc + ".conv.weight", {out, k, in}, conv_bound);
    add(enc + ".conv.bias", {out}, conv_bound);
    const double rw_bound = 1.0 / std::sqrt(static_cast<double>(out));
    add(enc + ".rewrite.weight", {2 * out, out}, rw_bound);
    add(enc + ".rewrite.bias", {2 * out}, rw_bound);
  }
  if (cfg.recurrent_layers > 0) {
    const auto h = static_cast<std::size_t>(chans.back());
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    for (int r = 0; r < cfg.recurrent_layers; ++r) {
      const std::size_t input = r == 0 ? h : 2 * h;
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string base = "bottleneck.lstm." + std::to_string(r) + "." + dir;
        add(base + ".weight_ih", {4 * h, input}, bound);
        add(base + ".weight_hh", {4 * h, h}, bound);
        add(base + ".bias", {4 * h}, bound);
      }
    }
    const double lin_bound = 1.0 / std::sqrt(static_cast<double>(2 * h));
    add("bottleneck.linear.weight", {h, 2 * h}, lin_bound);
    add("bottleneck.linear.bias", {h}, lin_bound);
  }
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const std::string dec = "decoder." + std::to_string(l);
    const auto in = static_cast<std::size_t>(chans[l]);
    const auto out = static_cast<std::size_t>(l == 0 ? cfg.num_sources : chans[l - 1]);
    const double rw_bound = 1.0 / std::sqrt(static_cast<double>(in));
    add(dec + ".rewrite.weight", {2 * in, in}, rw_bound);
    add(dec + ".rewrite.bias", {2 * in}, rw_bound);
    // Each transposed-conv output sample receives in * kernel / stride terms.
    const double tr_bound = 1.0 / std::sqrt(static_cast<double>(in) * k / stride);
    add(dec + ".conv_tr.weight", {k, out, in}, tr_bound);
    add(dec + ".conv_tr.bias", {out}, tr_bound);
  }
}

void ParamLayout::add(std::string name, std::vector<std::size_t> shape, double bound) {
  std::size_t size = 1;
  for (auto d : shape) size *= d;
  index_[name] = params_.size();
  params_.push_back({std::move(name), std::move(shape), total_, size, bound});
  total_ += size;
}

const ParamInfo& ParamLayout::find(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("no parameter named '" + name + "'");
  return params_[it->second];
}

bool ParamLayout::contains(const std::string& name) const { return index_.count(name) > 0; }

SeparatorState::SeparatorState(SeparatorConfig cfg, std::vector<std::string> source_order)
    : config_(cfg), source_order_(std::move(source_order)), layout_(config_) {
  if (source_order_.size() != static_cast<std::size_t>(config_.num_sources)) {
    throw ConfigError("source order has " + std::to_string(source_order_.size()) +
                      " names, config expects " + std::to_string(config_.num_sources));
  }
  params_.assign(layout_.total_size(), 0.0f);
}

std::span<const float> SeparatorState::param(const std::string& name) const {
  const auto& info = layout_.find(name);
  return std::span<const float>(params_).subspan(info.offset, info.size);
}

std::span<float> SeparatorState::mutable_param(const std::string& name) {
  const auto& info = layout_.find(name);
  return std::span<float>(params_).subspan(info.offset, info.size);
}

SeparatorState init_separator(const SeparatorConfig& cfg, std::vector<std::string> source_order,
                              std::uint64_t seed) {
  SeparatorState state(cfg, std::move(source_order));
  Rng rng = make_rng(seed, "separator-init");
  auto params = state.mutable_parameters();
  for (const auto& info : state.layout().params()) {
    std::uniform_real_distribution<double> dist(-info.init_bound, info.init_bound);
    for (std::size_t i = 0; i < info.size; ++i) {
      params[info.offset + i] = static_cast<float>(dist(rng));
    }
  }
  return state;
}

namespace {

const SeparatorNet<float>& net_for(const SeparatorConfig& cfg) {
  // Layout construction is cheap but not free; cache per thread by config.
  thread_local std::vector<std::unique_ptr<SeparatorNet<float>>> cache;
  for (const auto& net : cache) {
    if (net->config() == cfg) return *net;
  }
  cache.push_back(std::make_unique<SeparatorNet<float>>(cfg));
  return *cache.back();
}

void check_input(const SeparatorState& state, const ModelInput& input) {
  const auto& cfg = state.config();
  if (static_cast<int>(input.num_channels()) != cfg.input_channels()) {
    throw ShapeError("model expects " + std::to_string(cfg.input_channels()) +
                     " input channels, got " + std::to_string(input.num_channels()));
  }
}

}  // namespace

SourceSet forward(const SeparatorState& state, const ModelInput& input) {
  check_input(state, input);
  const auto& net = net_for(state.config());
  const auto out = net.forward(state.parameters(), input_matrix<float>(input), nullptr);
  std::vector<Waveform> waves;
  waves.reserve(out.rows());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    std::vector<float> s(out.cols());
    for (Eigen::Index t = 0; t < out.cols(); ++t) s[t] = out(i, t);
    waves.emplace_back(std::move(s), input.sample_rate());
  }
  return SourceSet(state.source_order(), std::move(waves));
}

GradientResult forward_with_gradients(const SeparatorState& state, const ModelInput& input,
                                      const LossFn& loss_fn) {
  check_input(state, input);
  const auto& net = net_for(state.config());
  SeparatorNet<float>::Tape tape;
  const auto out = net.forward(state.parameters(), input_matrix<float>(input), &tape);
  const auto num = static_cast<std::size_t>(out.rows());
  const auto len = static_cast<std::size_t>(out.cols());
  std::vector<float> est(num * len);
  for (std::size_t i = 0; i < num; ++i) {
    for (std::size_t t = 0; t < len; ++t) est[i * len + t] = out(i, t);
  }
  std::vector<float> grad_est(num * len, 0.0f);
  GradientResult result;
  result.loss = loss_fn(est, grad_est, num, len);
  if (!std::isfinite(result.loss)) {
    throw NumericalError("non-finite loss " + format_double(result.loss) +
                         " in forward_with_gradients");
  }
  SeparatorNet<float>::Mat d_out(num, len);
  for (std::size_t i = 0; i < num; ++i) {
    for (std::size_t t = 0; t < len; ++t) d_out(i, t) = grad_est[i * len + t];
  }
  result.gradients.assign(state.layout().total_size(), 0.0f);
  net.backward(state.parameters(), tape, d_out, result.gradients);
  return result;
}

}  // namespace onadesep
