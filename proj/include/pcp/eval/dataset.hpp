#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "pcp/eval/csv.hpp"
#include "pcp/synth/generator.hpp"
#include "pcp/trainer/config.hpp"
#include "pcp/trainer/train.hpp"

namespace pcp::eval {

namespace fs = std::filesystem;

struct DatasetConfig {
  int n_train = 20;
  int n_test = 10;
  double hr_lo = 50.0, hr_hi = 110.0;
  int frames = 300;
  int height = 64, width = 64;
  double fps = 30.0;
  double pulse_amplitude = 0.004;
  double sensor_noise_sigma = 0.005;
  std::uint64_t seed = 1;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (n_train < 0 || n_test < 0 || n_train + n_test == 0) fail("dataset needs at least one clip");
    if (!(hr_lo >= 40.0 && hr_hi <= 240.0 && hr_lo < hr_hi)) fail("hr range must satisfy 40 <= lo < hi <= 240");
    if (frames < 128) fail("frames must be at least 128");
    if (height % 64 || width % 64) fail("frame size must be a multiple of 64");
    if (!(fps > 0.0)) fail("fps must be positive");
    if (pulse_amplitude < 0.0 || sensor_noise_sigma < 0.0) fail("amplitudes must be nonnegative");
  }
};

inline void set_key(DatasetConfig& c, const std::string& key, const std::string& v) {
  using namespace trainer::cfg_detail;
  if (key == "n_train") c.n_train = integer(key, v);
  else if (key == "n_test") c.n_test = integer(key, v);
  else if (key == "hr_range") {
    const auto r = range(key, v);
    c.hr_lo = r.lo;
    c.hr_hi = r.hi;
  } else if (key == "frames") c.frames = integer(key, v);
  else if (key == "height") c.height = integer(key, v);
  else if (key == "width") c.width = integer(key, v);
  else if (key == "fps") c.fps = number(key, v);
  else if (key == "pulse_amplitude") c.pulse_amplitude = number(key, v);
  else if (key == "sensor_noise_sigma") c.sensor_noise_sigma = number(key, v);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(integer(key, v));
  else throw ConfigError("unknown dataset key '" + key + "'");
}

inline DatasetConfig parse_dataset_config(std::istream& in, const std::string& origin = "synth.cfg") {
  DatasetConfig c;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trainer::cfg_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected 'key = value'");
    const auto key = trainer::cfg_detail::trim(line.substr(0, eq)), value = trainer::cfg_detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(origin + ":" + std::to_string(n) + ": empty key or value");
    set_key(c, key, value);
  }
  c.validate();
  return c;
}

inline DatasetConfig load_dataset_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_dataset_config(in, path);
}

struct ManifestEntry {
  std::string split;  // train or test
  std::string name;
  std::uint64_t seed = 0, texture_seed = 0;
  double hr_bpm = 0.0;
  std::string clip_file, gt_file;  // relative to the dataset directory
  std::string hash;                // FNV-1a of the clip file
};

inline std::string fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

inline synth::SynthConfig clip_config(const DatasetConfig& c, const ManifestEntry& e) {
  synth::SynthConfig s;
  s.hr_bpm = e.hr_bpm;
  s.seed = e.seed;
  s.base_texture_seed = e.texture_seed;
  s.T = static_cast<std::size_t>(c.frames);
  s.H = static_cast<std::size_t>(c.height);
  s.W = static_cast<std::size_t>(c.width);
  s.fps = c.fps;
  s.pulse_amplitude = c.pulse_amplitude;
  s.sensor_noise_sigma = c.sensor_noise_sigma;
  return s;
}

// Seeds and heart rates for every clip; HRs are uniform over the range.
inline std::vector<ManifestEntry> plan_dataset(const DatasetConfig& c) {
  c.validate();
  std::mt19937_64 rng(c.seed * 0x9E3779B97F4A7C15ULL + 17);
  std::uniform_real_distribution<double> hr(c.hr_lo, c.hr_hi);
  std::vector<ManifestEntry> out;
  for (int i = 0; i < c.n_train + c.n_test; ++i) {
    ManifestEntry e;
    const bool train = i < c.n_train;
    const int k = train ? i : i - c.n_train;
    char name[32];
    std::snprintf(name, sizeof name, "%s_%03d", train ? "train" : "test", k);
    e.split = train ? "train" : "test";
    e.name = name;
    e.seed = c.seed * 100000 + static_cast<std::uint64_t>(i) + 1;
    e.texture_seed = c.seed * 100000 + 50000 + static_cast<std::uint64_t>(i) + 1;
    e.hr_bpm = hr(rng);
    e.clip_file = "clips/" + e.name + ".rpcl";
    e.gt_file = "clips/" + e.name + "_gt.csv";
    out.push_back(e);
  }
  return out;
}

inline void write_manifest(const std::vector<ManifestEntry>& m, const std::string& path) {
  Table t;
  t.header = {"split", "name", "seed", "texture_seed", "hr_bpm", "clip", "gt", "hash"};
  for (const auto& e : m)
    t.rows.push_back({e.split, e.name, std::to_string(e.seed), std::to_string(e.texture_seed), fmt(e.hr_bpm), e.clip_file,
                      e.gt_file, e.hash});
  write_csv(t, path);
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const Table t = read_csv(path);
  for (const char* c : {"split", "name", "seed", "texture_seed", "hr_bpm", "clip", "gt", "hash"})
    if (!t.has_column(c)) throw DataError(path + ": manifest lacks column '" + c + "'");
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    ManifestEntry e;
    e.split = r[t.column("split")];
    if (e.split != "train" && e.split != "test") throw DataError(path + ": unknown split '" + e.split + "'");
    e.name = r[t.column("name")];
    e.seed = static_cast<std::uint64_t>(t.number(i, "seed"));
    e.texture_seed = static_cast<std::uint64_t>(t.number(i, "texture_seed"));
    e.hr_bpm = t.number(i, "hr_bpm");
    e.clip_file = r[t.column("clip")];
    e.gt_file = r[t.column("gt")];
    e.hash = r[t.column("hash")];
    out.push_back(e);
  }
  return out;
}

inline std::string manifest_path(const std::string& dir) { return (fs::path(dir) / "manifest.csv").string(); }

// Renders every clip with its ground-truth sidecar and writes the manifest.
inline std::vector<ManifestEntry> make_dataset(const DatasetConfig& c, const std::string& dir) {
  auto m = plan_dataset(c);
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "clips", ec);
  if (ec) throw DataError("cannot create dataset directory " + dir + ": " + ec.message());
  for (auto& e : m) {
    const auto sc = clip_config(c, e);
    const auto s = synth::synth_pulse(sc);
    const auto clip_path = (fs::path(dir) / e.clip_file).string();
    synth::write_clip(synth::render_clip(s, sc), clip_path);
    signal::write_waveform_csv(s, (fs::path(dir) / e.gt_file).string());
    e.hash = fnv1a_file(clip_path);
  }
  write_manifest(m, manifest_path(dir));
  return m;
}

struct Dataset {
  std::string dir;
  std::vector<ManifestEntry> entries;

  static Dataset open(const std::string& dir) {
    Dataset d;
    d.dir = dir;
    d.entries = read_manifest(manifest_path(dir));
    return d;
  }
  std::vector<ManifestEntry> split(const std::string& which) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.split == which) out.push_back(e);
    return out;
  }
  synth::VideoClip clip(const ManifestEntry& e) const { return synth::read_clip((fs::path(dir) / e.clip_file).string()); }
  signal::Waveform ground_truth(const ManifestEntry& e) const {
    return signal::read_waveform_csv((fs::path(dir) / e.gt_file).string());
  }
  trainer::LabeledClip labeled(const ManifestEntry& e) const {
    trainer::LabeledClip l{clip(e), ground_truth(e)};
    if (l.s_gt.size() != l.clip.T) throw DataError(e.gt_file + ": ground truth length does not match clip");
    return l;
  }
};

}  // namespace pcp::eval
