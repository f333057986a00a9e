#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "onadesep/core.h"
#include "onadesep/errors.h"
#include "onadesep/model.h"
#include "onadesep/network.h"
#include "onadesep/training.h"
#include "test_support.h"

using namespace onadesep;
using onadesep::testing::random_sources;
using onadesep::testing::source_names;
using onadesep::testing::tiny_config;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("onadesep_test_model_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ModelInput random_input(const SeparatorConfig& cfg, std::size_t length, std::uint64_t seed,
                        const MaskVector& mask) {
  std::mt19937_64 rng(seed);
  const SourceSet s = random_sources(cfg.num_sources, length, rng);
  if (!cfg.conditioned) return assemble_mixture_input(mix(s));
  return assemble_model_input(mix(s), s, mask);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

TEST_CASE("config validation") {
  SeparatorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.kernel_size = 3;  // smaller than stride
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SeparatorConfig{};
  cfg.depth = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SeparatorConfig{};
  cfg.channel_growth = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SeparatorConfig{};
  cfg.num_sources = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(init_separator(cfg, {}, 1), ConfigError);
}

TEST_CASE("config text round trip and unknown keys") {
  SeparatorConfig cfg = tiny_config(3, false);
  cfg.channel_growth = 1.5;
  std::map<std::string, std::string> kv;
  std::istringstream in(cfg.to_text());
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  CHECK(SeparatorConfig::from_map(kv) == cfg);
  kv["model.bogus"] = "1";
  CHECK_THROWS_AS(SeparatorConfig::from_map(kv), ConfigError);
}

TEST_CASE("first layer width follows conditioning") {
  SeparatorConfig cfg;  // I = 4
  const auto cond = init_separator(cfg, source_names(4), 1);
  CHECK(cond.layout().find("encoder.0.conv.weight").shape ==
        std::vector<std::size_t>{16, 8, 9});
  cfg.conditioned = false;
  const auto base = init_separator(cfg, source_names(4), 1);
  CHECK(base.layout().find("encoder.0.conv.weight").shape ==
        std::vector<std::size_t>{16, 8, 1});
}

TEST_CASE("bottleneck recurrent width equals last encoder width") {
  const SeparatorConfig cfg;
  const ParamLayout layout(cfg);
  const std::size_t h = static_cast<std::size_t>(cfg.encoder_channels().back());
  CHECK(layout.find("bottleneck.lstm.0.fwd.weight_hh").shape ==
        std::vector<std::size_t>{4 * h, h});
  CHECK(layout.find("bottleneck.lstm.0.bwd.weight_ih").shape ==
        std::vector<std::size_t>{4 * h, h});
  CHECK(layout.find("bottleneck.linear.weight").shape == std::vector<std::size_t>{h, 2 * h});
}

TEST_CASE("init is deterministic and seed-dependent") {
  const auto cfg = tiny_config();
  const auto a = init_separator(cfg, source_names(2), 5);
  const auto b = init_separator(cfg, source_names(2), 5);
  const auto c = init_separator(cfg, source_names(2), 6);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  CHECK_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
}

TEST_CASE("init respects fan-in bounds") {
  const auto cfg = tiny_config();
  const auto st = init_separator(cfg, source_names(2), 5);
  for (const auto& p : st.layout().params()) {
    const auto v = st.param(p.name);
    for (float x : v) CHECK(std::abs(x) <= p.init_bound + 1e-7);
  }
}

TEST_CASE("init rejects a source order of the wrong length") {
  CHECK_THROWS(init_separator(tiny_config(2), source_names(3), 1));
}

TEST_CASE("forward output is I x T at the default config") {
  const SeparatorConfig cfg;
  const auto st = init_separator(cfg, source_names(4), 3);
  const auto out = forward(st, random_input(cfg, 16384, 1, MaskVector::all(4, true)));
  CHECK(out.count() == 4);
  CHECK(out.length() == 16384);
  CHECK(out.names() == source_names(4));
}

TEST_CASE("forward shape holds for depths 1..6 and odd lengths") {
  for (int depth = 1; depth <= 6; ++depth) {
    for (std::size_t length : {1ul, 777ul, 1024ul}) {
      for (bool conditioned : {true, false}) {
        auto cfg = tiny_config(3, conditioned);
        cfg.depth = depth;
        const auto st = init_separator(cfg, source_names(3), 2);
        const auto out = forward(st, random_input(cfg, length, 4, MaskVector({true, false, true})));
        CHECK(out.count() == 3);
        CHECK(out.length() == length);
      }
    }
  }
}

TEST_CASE("zero parameters give zero output") {
  const auto cfg = tiny_config(3);
  auto st = init_separator(cfg, source_names(3), 2);
  std::fill(st.mutable_parameters().begin(), st.mutable_parameters().end(), 0.0f);
  const auto out = forward(st, random_input(cfg, 500, 5, MaskVector({true, false, true})));
  for (const auto& w : out.waveforms()) {
    for (float v : w.samples()) CHECK(v == 0.0f);
  }
}

TEST_CASE("forward is deterministic") {
  const auto cfg = tiny_config(2);
  const auto st = init_separator(cfg, source_names(2), 8);
  const auto in = random_input(cfg, 1500, 9, MaskVector({false, true}));
  CHECK(forward(st, in) == forward(st, in));
}

TEST_CASE("forward rejects a channel mismatch") {
  const auto cond = init_separator(tiny_config(2, true), source_names(2), 1);
  const auto base = init_separator(tiny_config(2, false), source_names(2), 1);
  const Waveform m = Waveform::zeros(64, 16000);
  CHECK_THROWS_AS(forward(cond, assemble_mixture_input(m)), ShapeError);
  std::mt19937_64 rng(1);
  const auto s = random_sources(2, 64, rng);
  CHECK_THROWS_AS(forward(base, assemble_model_input(mix(s), s, MaskVector::all(2, true))),
                  ShapeError);
  const auto s3 = random_sources(3, 64, rng);
  CHECK_THROWS_AS(forward(cond, assemble_model_input(mix(s3), s3, MaskVector::all(3, true))),
                  ShapeError);
}

TEST_CASE("analytic gradients match central differences") {
  // Double-precision network with an independently coded masked L1 loss.
  const SeparatorConfig cfg = tiny_config(2);
  const auto st = init_separator(cfg, source_names(2), 7);
  constexpr std::size_t kLen = 1024;
  std::mt19937_64 rng(21);
  const SourceSet targets = random_sources(2, kLen, rng, 16000, 0.3f);
  const MaskVector mask({true, false});
  const ModelInput in = assemble_model_input(mix(targets), targets, mask);

  using Net = SeparatorNet<double>;
  const Net net(cfg);
  const Net::Mat x = input_matrix<double>(in);
  std::vector<double> p(st.parameters().begin(), st.parameters().end());

  auto loss = [&](const std::vector<double>& params, Net::Mat* grad, Net::Tape* tape) {
    const Net::Mat y = net.forward(params, x, tape);
    double total = 0.0;
    if (grad) grad->setZero(y.rows(), y.cols());
    for (std::size_t t = 0; t < kLen; ++t) {
      const double d = y(0, static_cast<Eigen::Index>(t)) - targets[0][t];
      total += std::abs(d);
      if (grad) (*grad)(0, static_cast<Eigen::Index>(t)) = (d > 0) - (d < 0);
    }
    if (grad) *grad /= static_cast<double>(kLen);
    return total / kLen;
  };

  Net::Tape tape;
  Net::Mat gy;
  loss(p, &gy, &tape);
  std::vector<double> grads(p.size(), 0.0);
  net.backward(p, tape, gy, grads);

  std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
  constexpr double kStep = 1e-4;
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const std::size_t i = pick(rng);
    auto q = p;
    q[i] = p[i] + kStep;
    const double up = loss(q, nullptr, nullptr);
    q[i] = p[i] - kStep;
    const double down = loss(q, nullptr, nullptr);
    const double fd = (up - down) / (2 * kStep);
    const double denom = std::max({std::abs(fd), std::abs(grads[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - grads[i]) / denom);
  }
  CHECK(worst < 1e-3);

  // The float training path produces the same gradient as the verified one.
  const auto fg = forward_with_gradients(st, in, [&](std::span<const float> est,
                                                     std::span<float> g, std::size_t num,
                                                     std::size_t len) {
    std::vector<float> tgt;
    for (const auto& w : targets.waveforms()) tgt.insert(tgt.end(), w.samples().begin(), w.samples().end());
    return masked_l1_with_grad(est, tgt, num, len, mask, g, 1.0);
  });
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    num += (fg.gradients[i] - grads[i]) * (fg.gradients[i] - grads[i]);
    den += grads[i] * grads[i];
  }
  CHECK(std::sqrt(num / den) < 1e-3);
}

TEST_CASE("matching estimates give zero output gradient") {
  const auto cfg = tiny_config(2);
  const auto st = init_separator(cfg, source_names(2), 3);
  std::mt19937_64 rng(1);
  const auto s = random_sources(2, 256, rng);
  const auto in = assemble_model_input(mix(s), s, MaskVector::all(2, true));
  const SourceSet out = forward(st, in);
  std::vector<float> tgt;
  for (const auto& w : out.waveforms()) tgt.insert(tgt.end(), w.samples().begin(), w.samples().end());
  std::vector<float> seen_grad;
  const auto r = forward_with_gradients(st, in, [&](std::span<const float> est, std::span<float> g,
                                                    std::size_t num, std::size_t len) {
    const double l = masked_l1_with_grad(est, tgt, num, len, MaskVector::all(2, true), g, 1.0);
    seen_grad.assign(g.begin(), g.end());
    return l;
  });
  CHECK(r.loss == 0.0);
  for (float g : seen_grad) CHECK(g == 0.0f);
  for (float g : r.gradients) CHECK(g == 0.0f);
}

TEST_CASE("output-layer slice of an unmasked source does not change the loss") {
  const auto cfg = tiny_config(3);
  auto st = init_separator(cfg, source_names(3), 4);
  std::mt19937_64 rng(2);
  const auto s = random_sources(3, 512, rng);
  const MaskVector mask({true, false, true});
  const auto in = assemble_model_input(mix(s), s, mask);
  const double before = onade_loss(forward(st, in), s, mask);

  const auto& w = st.layout().find("decoder.0.conv_tr.weight");  // [K, I, Cin]
  auto weights = st.mutable_param(w.name);
  const std::size_t k = w.shape[0], outs = w.shape[1], cin = w.shape[2];
  for (std::size_t kk = 0; kk < k; ++kk) {
    for (std::size_t c = 0; c < cin; ++c) weights[(kk * outs + 1) * cin + c] += 0.37f;
  }
  st.mutable_param("decoder.0.conv_tr.bias")[1] -= 0.5f;
  const SourceSet after_out = forward(st, in);
  CHECK(onade_loss(after_out, s, mask) == before);
  // the perturbation did reach the unmasked output
  CHECK_FALSE(after_out[1] == forward(init_separator(cfg, source_names(3), 4), in)[1]);
}

TEST_CASE("non-finite loss raises a numerical error") {
  const auto cfg = tiny_config(2);
  const auto st = init_separator(cfg, source_names(2), 3);
  const auto in = random_input(cfg, 64, 1, MaskVector::all(2, true));
  CHECK_THROWS_AS(forward_with_gradients(st, in,
                                         [](std::span<const float>, std::span<float>,
                                            std::size_t, std::size_t) { return NAN; }),
                  NumericalError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto dir = temp_dir("roundtrip");
  auto cfg = tiny_config(3);
  cfg.channel_growth = 1.5;
  const auto st = init_separator(cfg, {"x", "y", "z"}, 12);
  OptimizerState opt;
  opt.step = 42;
  opt.first_moment.assign(st.parameters().size(), 0.25f);
  opt.second_moment.assign(st.parameters().size(), 0.5f);
  save_checkpoint(st, dir / "a.ckpt", &opt, {{"mode", "onade"}});
  const Checkpoint ck = load_checkpoint_full(dir / "a.ckpt");
  CHECK(ck.state.config() == cfg);
  CHECK(ck.state.source_order() == std::vector<std::string>{"x", "y", "z"});
  CHECK(std::equal(st.parameters().begin(), st.parameters().end(),
                   ck.state.parameters().begin(), ck.state.parameters().end()));
  REQUIRE(ck.optimizer.has_value());
  CHECK(ck.optimizer->step == 42);
  CHECK(ck.optimizer->first_moment == opt.first_moment);
  CHECK(ck.optimizer->second_moment == opt.second_moment);
  CHECK(ck.metadata.at("mode") == "onade");

  save_checkpoint(st, dir / "b.ckpt");
  CHECK_FALSE(load_checkpoint_full(dir / "b.ckpt").optimizer.has_value());
  CHECK(read_file(dir / "b.ckpt") == read_file(dir / "b.ckpt"));
}

TEST_CASE("tampered checkpoints are rejected") {
  const auto dir = temp_dir("tamper");
  const auto st = init_separator(tiny_config(2), source_names(2), 1);
  save_checkpoint(st, dir / "good.ckpt");
  const std::string good = read_file(dir / "good.ckpt");

  auto tampered = [&](const std::string& from, const std::string& to) {
    std::string s = good;
    const auto pos = s.find(from);
    REQUIRE(pos != std::string::npos);
    s.replace(pos, from.size(), to);
    write_file(dir / "bad.ckpt", s);
    return dir / "bad.ckpt";
  };

  SUBCASE("config hash") {
    const auto pos = good.find("config_sha256=") + 14;
    std::string s = good;
    s[pos] = s[pos] == 'a' ? 'b' : 'a';
    write_file(dir / "bad.ckpt", s);
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), CheckpointError);
  }
  SUBCASE("config block") {
    CHECK_THROWS_AS(load_checkpoint(tampered("model.base_channels=4", "model.base_channels=5")),
                    CheckpointError);
  }
  SUBCASE("version") {
    CHECK_THROWS_AS(load_checkpoint(tampered("version=1", "version=2")), CheckpointError);
  }
  SUBCASE("payload byte") {
    std::string s = good;
    s[s.size() - 3] = static_cast<char>(s[s.size() - 3] ^ 0x40);
    write_file(dir / "bad.ckpt", s);
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), CheckpointError);
  }
  SUBCASE("truncated") {
    write_file(dir / "bad.ckpt", good.substr(0, good.size() - 8));
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), CheckpointError);
  }
  SUBCASE("trailing bytes") {
    write_file(dir / "bad.ckpt", good + "x");
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), CheckpointError);
  }
  SUBCASE("not a checkpoint") {
    write_file(dir / "bad.ckpt", "hello\n");
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), CheckpointError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
  }
}

TEST_CASE("baseline checkpoint in a conditioned pipeline is a config error") {
  const auto dir = temp_dir("mode");
  save_checkpoint(init_separator(tiny_config(2, false), source_names(2), 1), dir / "base.ckpt");
  save_checkpoint(init_separator(tiny_config(2, true), source_names(2), 1), dir / "cond.ckpt");
  CHECK_THROWS_AS(load_checkpoint_expecting(dir / "base.ckpt", true), ConfigError);
  CHECK_THROWS_AS(load_checkpoint_expecting(dir / "cond.ckpt", false), ConfigError);
  CHECK_NOTHROW(load_checkpoint_expecting(dir / "base.ckpt", false));
  CHECK_NOTHROW(load_checkpoint_expecting(dir / "cond.ckpt", true));
}
