// Checkpoint container:
//
//   ONADESEP-CHECKPOINT
//   version=1
//   config_sha256=<hex digest of the config block>
//   [config]
//   model.*=... (SeparatorConfig::to_text)
//   [end-config]
//   sources=<comma separated source order>
//   meta.<key>=<value>            (zero or more)
//   adam.step=<n>                 (training checkpoints only)
//   tensor <name> <d0>x<d1>... <offset>
//   payload_floats=<n>
//   payload_sha256=<hex digest of the payload bytes>
//   [payload]
//   <n little-endian float32 values>
//
// Tensor offsets index the payload in floats. Model parameters come first in
// layout order; training checkpoints append "adam.first_moment" and
// "adam.second_moment", each the size of the parameter buffer.

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "onadesep/errors.h"
#include "onadesep/hash.h"
#include "onadesep/model.h"
#include "onadesep/text.h"

namespace onadesep {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in host order and must be little-endian");

constexpr std::string_view kMagic = "ONADESEP-CHECKPOINT";

std::string shape_text(const std::vector<std::size_t>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out.push_back('x');
    out += std::to_string(shape[i]);
  }
  return out;
}

void check_token(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(",\n\r=") != std::string::npos) {
    throw CheckpointError(std::string("invalid ") + what + " '" + s + "' for checkpoint");
  }
}

}  // namespace

void save_checkpoint(const SeparatorState& state, const std::filesystem::path& path,
                     const OptimizerState* optimizer,
                     const std::map<std::string, std::string>& metadata) {
  const std::string config_text = state.config().to_text();
  const auto& layout = state.layout();
  const std::size_t n_params = layout.total_size();
  if (optimizer && (optimizer->first_moment.size() != n_params ||
                    optimizer->second_moment.size() != n_params)) {
    throw CheckpointError("optimizer state does not match the parameter layout");
  }

  std::vector<float> payload(state.parameters().begin(), state.parameters().end());
  if (optimizer) {
    payload.insert(payload.end(), optimizer->first_moment.begin(), optimizer->first_moment.end());
    payload.insert(payload.end(), optimizer->second_moment.begin(),
                   optimizer->second_moment.end());
  }
  const auto bytes = std::as_bytes(std::span<const float>(payload));

  std::ostringstream hdr;
  hdr << kMagic << '\n'
      << "version=" << kCheckpointVersion << '\n'
      << "config_sha256=" << sha256_hex(config_text) << '\n'
      << "[config]\n"
      << config_text << "[end-config]\n";
  for (const auto& name : state.source_order()) check_token(name, "source name");
  hdr << "sources=" << join(state.source_order(), ",") << '\n';
  for (const auto& [k, v] : metadata) {
    check_token(k, "metadata key");
    if (v.find_first_of("\n\r") != std::string::npos) {
      throw CheckpointError("metadata value for '" + k + "' contains a newline");
    }
    hdr << "meta." << k << '=' << v << '\n';
  }
  if (optimizer) hdr << "adam.step=" << optimizer->step << '\n';
  for (const auto& p : layout.params()) {
    hdr << "tensor " << p.name << ' ' << shape_text(p.shape) << ' ' << p.offset << '\n';
  }
  if (optimizer) {
    hdr << "tensor adam.first_moment " << n_params << ' ' << n_params << '\n'
        << "tensor adam.second_moment " << n_params << ' ' << 2 * n_params << '\n';
  }
  hdr << "payload_floats=" << payload.size() << '\n'
      << "payload_sha256=" << sha256_hex(bytes) << '\n'
      << "[payload]\n";

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    const std::string h = hdr.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint_full(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  auto next_line = [&](const char* context) {
    std::string line;
    if (!std::getline(in, line)) {
      throw CheckpointError("truncated checkpoint header while reading " + std::string(context));
    }
    return line;
  };
  auto expect_kv = [&](const std::string& key) {
    const std::string line = next_line(key.c_str());
    if (line.rfind(key + "=", 0) != 0) {
      throw CheckpointError("checkpoint header: expected '" + key + "=', got '" + line + "'");
    }
    return line.substr(key.size() + 1);
  };

  if (next_line("magic") != kMagic) throw CheckpointError(path.string() + " is not a checkpoint");
  const std::string version = expect_kv("version");
  if (version != std::to_string(kCheckpointVersion)) {
    throw CheckpointError("checkpoint format version " + version + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::string config_hash = expect_kv("config_sha256");
  if (next_line("config") != "[config]") throw CheckpointError("missing [config] block");
  std::string config_text;
  for (std::string line = next_line("config"); line != "[end-config]";
       line = next_line("config")) {
    config_text += line + '\n';
  }
  if (sha256_hex(config_text) != config_hash) {
    throw CheckpointError("checkpoint config hash mismatch; the config block was altered");
  }
  SeparatorConfig cfg;
  try {
    cfg = SeparatorConfig::from_map(parse_key_values(config_text));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
  }
  const auto sources = split(expect_kv("sources"), ',');

  std::map<std::string, std::string> metadata;
  std::optional<std::int64_t> adam_step;
  std::vector<std::pair<std::string, std::string>> tensors;  // name, "shape offset"
  std::string line = next_line("manifest");
  while (line.rfind("meta.", 0) == 0) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed metadata line");
    metadata[line.substr(5, eq - 5)] = line.substr(eq + 1);
    line = next_line("manifest");
  }
  if (line.rfind("adam.step=", 0) == 0) {
    adam_step = parse_int64("adam.step", line.substr(10));
    line = next_line("manifest");
  }
  while (line.rfind("tensor ", 0) == 0) {
    const auto parts = split(line.substr(7), ' ');
    if (parts.size() != 3) throw CheckpointError("malformed tensor line '" + line + "'");
    tensors.emplace_back(parts[0], parts[1] + ' ' + parts[2]);
    line = next_line("manifest");
  }
  if (line.rfind("payload_floats=", 0) != 0) throw CheckpointError("missing payload_floats");
  const auto n_floats = parse_uint64("payload_floats", line.substr(15));
  const std::string payload_hash = expect_kv("payload_sha256");
  if (next_line("payload") != "[payload]") throw CheckpointError("missing [payload] marker");

  SeparatorState state(cfg, sources);
  const auto& layout = state.layout();
  const std::size_t n_params = layout.total_size();
  const std::size_t expected_tensors = layout.params().size() + (adam_step ? 2 : 0);
  if (tensors.size() != expected_tensors) {
    throw CheckpointError("checkpoint manifest lists " + std::to_string(tensors.size()) +
                          " tensors, config implies " + std::to_string(expected_tensors));
  }
  for (std::size_t i = 0; i < layout.params().size(); ++i) {
    const auto& p = layout.params()[i];
    const std::string want = shape_text(p.shape) + ' ' + std::to_string(p.offset);
    if (tensors[i].first != p.name || tensors[i].second != want) {
      throw CheckpointError("checkpoint tensor '" + tensors[i].first +
                            "' does not match layout entry '" + p.name + "'");
    }
  }
  const std::size_t want_floats = n_params * (adam_step ? 3 : 1);
  if (n_floats != want_floats) {
    throw CheckpointError("checkpoint payload has " + std::to_string(n_floats) +
                          " floats, expected " + std::to_string(want_floats));
  }

  std::vector<float> payload(n_floats);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(n_floats * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != n_floats * sizeof(float)) {
    throw CheckpointError("checkpoint payload truncated");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("trailing bytes after checkpoint payload");
  }
  if (sha256_hex(std::as_bytes(std::span<const float>(payload))) != payload_hash) {
    throw CheckpointError("checkpoint payload hash mismatch");
  }

  auto params = state.mutable_parameters();
  std::memcpy(params.data(), payload.data(), n_params * sizeof(float));
  Checkpoint ck{std::move(state), std::nullopt, std::move(metadata)};
  if (adam_step) {
    OptimizerState opt;
    opt.step = *adam_step;
    opt.first_moment.assign(payload.begin() + n_params, payload.begin() + 2 * n_params);
    opt.second_moment.assign(payload.begin() + 2 * n_params, payload.end());
    ck.optimizer = std::move(opt);
  }
  return ck;
}

SeparatorState load_checkpoint(const std::filesystem::path& path) {
  return std::move(load_checkpoint_full(path).state);
}

SeparatorState load_checkpoint_expecting(const std::filesystem::path& path, bool conditioned) {
  SeparatorState state = load_checkpoint(path);
  if (state.config().conditioned != conditioned) {
    throw ConfigError(path.string() + " holds a " +
                      (state.config().conditioned ? "conditioned" : "baseline") +
                      " model but a " + (conditioned ? "conditioned" : "baseline") +
                      " model is required");
  }
  return state;
}

}  // namespace onadesep
