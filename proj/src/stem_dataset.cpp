#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <set>

#include "onadesep/data.h"
#include "onadesep/errors.h"
#include "onadesep/text.h"
#include "onadesep/wav.h"

namespace onadesep {
namespace fs = std::filesystem;

namespace {

std::string stem_filename(std::size_t index, const std::string& name) {
  char prefix[16];
  std::snprintf(prefix, sizeof(prefix), "%02zu_", index);
  return prefix + name + ".wav";
}

// "<nn>_<name>.wav" -> name, or empty when the filename does not follow the
// layout.
std::string stem_name(const fs::path& file) {
  const std::string base = file.filename().string();
  if (file.extension() != ".wav" || base.size() < 8 || base[2] != '_' ||
      !std::isdigit(static_cast<unsigned char>(base[0])) ||
      !std::isdigit(static_cast<unsigned char>(base[1]))) {
    return {};
  }
  return base.substr(3, base.size() - 3 - 4);
}

}  // namespace

void save_stem_dataset(const std::vector<Track>& tracks, const fs::path& root) {
  if (tracks.empty()) throw DataError("refusing to save an empty dataset");
  const auto& names = tracks.front().sources.names();
  const int rate = tracks.front().sources.sample_rate();
  if (names.size() > 99) throw DataError("at most 99 stems per track are supported");
  fs::create_directories(root);
  for (const auto& t : tracks) {
    if (t.sources.names() != names || t.sources.sample_rate() != rate) {
      throw DataError("track '" + t.track_id + "' does not share the dataset's stems and rate");
    }
    const fs::path dir = root / t.track_id;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < names.size(); ++i) {
      write_wav(dir / stem_filename(i, names[i]), t.sources[i], WavEncoding::kFloat32);
    }
  }
  write_text_file(root / "dataset.meta", "sample_rate=" + std::to_string(rate) +
                                             "\nsources=" + join(names, ",") + "\n");
}

std::vector<Track> load_stem_dataset(const fs::path& root, std::optional<int> expected_rate) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " not found");

  std::optional<std::vector<std::string>> meta_sources;
  if (fs::exists(root / "dataset.meta")) {
    const auto kv = parse_key_values(read_text_file(root / "dataset.meta"));
    for (const auto& [k, v] : kv) {
      if (k == "sample_rate") {
        const int rate = parse_int(k, v);
        if (expected_rate && *expected_rate != rate) {
          throw DataError(root.string() + " is recorded at " + std::to_string(rate) +
                          " Hz but " + std::to_string(*expected_rate) +
                          " Hz is required; resample the stems beforehand");
        }
        if (!expected_rate) expected_rate = rate;
      } else if (k == "sources") {
        meta_sources = split(v, ',');
      } else {
        throw DataError((root / "dataset.meta").string() + ": unknown key '" + k + "'");
      }
    }
  }

  std::vector<fs::path> track_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) track_dirs.push_back(e.path());
  }
  std::sort(track_dirs.begin(), track_dirs.end());
  if (track_dirs.empty()) throw DataError("dataset " + root.string() + " has no tracks");

  std::vector<Track> tracks;
  std::optional<std::vector<std::string>> names = meta_sources;
  for (const auto& dir : track_dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::string> these;
    for (const auto& f : files) {
      const std::string n = stem_name(f);
      if (n.empty()) throw DataError(f.string() + ": stem filename must be <nn>_<source>.wav");
      these.push_back(n);
    }
    if (!names) names = these;
    for (std::size_t i = 0; i < names->size(); ++i) {
      if (std::find(these.begin(), these.end(), (*names)[i]) == these.end()) {
        throw DataError("missing stem " + (dir / stem_filename(i, (*names)[i])).string());
      }
    }
    if (these != *names) {
      throw DataError("track " + dir.string() + " has stems {" + join(these, ",") +
                      "}, expected {" + join(*names, ",") + "}");
    }

    std::vector<Waveform> waves;
    for (const auto& f : files) {
      Waveform w = read_wav(f);
      if (expected_rate && w.sample_rate() != *expected_rate) {
        throw DataError(f.string() + " is at " + std::to_string(w.sample_rate()) + " Hz but " +
                        std::to_string(*expected_rate) +
                        " Hz is required; resample the stems beforehand");
      }
      if (!waves.empty() && (w.size() != waves.front().size() ||
                             w.sample_rate() != waves.front().sample_rate())) {
        throw DataError(f.string() + " differs in length or rate from the track's other stems");
      }
      waves.push_back(std::move(w));
    }
    if (!expected_rate) expected_rate = waves.front().sample_rate();
    tracks.push_back(Track{dir.filename().string(), SourceSet(*names, std::move(waves))});
  }
  return tracks;
}

}  // namespace onadesep
