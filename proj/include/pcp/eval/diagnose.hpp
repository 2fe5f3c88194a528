#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pcp/eval/benchmark.hpp"
#include "pcp/eval/fidelity.hpp"
#include "pcp/eval/plot.hpp"

namespace pcp::eval {

struct FlickerOptions {
  int n_clips = 10;
  double pulse_bpm = 60.0;
  double flicker_bpm = 100.0;
  double flicker_amplitude = 0.02;
  double lock_tolerance = 3.0;
  std::size_t frames = 300;
  std::uint64_t seed = 1;
};

struct FlickerRow {
  std::string method, clip;
  double hr_est = 0.0;
  bool nearer_pulse = false;  // |hr - pulse| < |hr - flicker|
  bool locked = false;        // within tolerance of the flicker rate
};

struct FlickerSummary {
  std::string method;
  double nearer_pulse_fraction = 0.0, locked_fraction = 0.0;
  int n_clips = 0;
};

inline std::vector<BenchItem> flicker_items(const FlickerOptions& o) {
  std::vector<BenchItem> items;
  for (int i = 0; i < o.n_clips; ++i) {
    synth::SynthConfig c;
    c.hr_bpm = o.pulse_bpm;
    c.seed = o.seed * 7000 + static_cast<std::uint64_t>(i) + 1;
    c.base_texture_seed = o.seed * 7000 + 500 + static_cast<std::uint64_t>(i) + 1;
    c.T = o.frames;
    const auto s = synth::synth_pulse(c);
    const double ph = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(o.n_clips);
    auto clip = synth::add_nuisance(synth::render_clip(s, c), synth::NuisanceSpec::flicker(o.flicker_bpm, o.flicker_amplitude, ph));
    char name[32];
    std::snprintf(name, sizeof name, "flicker_%03d", i);
    items.push_back(bench_item(name, c.seed, std::move(clip), s));
  }
  return items;
}

// Pulse plus stronger periodic flicker: does each method follow the pulse
// or lock onto the flicker?
inline std::vector<FlickerRow> flicker_lock(const std::vector<Method>& methods, const FlickerOptions& o) {
  std::vector<FlickerRow> rows;
  for (const auto& it : flicker_items(o))
    for (const auto& m : methods) {
      if (!m.extract) continue;
      FlickerRow r{m.name, it.name, signal::estimate_hr(m.extract(it.clip))};
      r.nearer_pulse = std::fabs(r.hr_est - o.pulse_bpm) < std::fabs(r.hr_est - o.flicker_bpm);
      r.locked = std::fabs(r.hr_est - o.flicker_bpm) <= o.lock_tolerance;
      rows.push_back(r);
    }
  return rows;
}

inline std::vector<FlickerSummary> summarize_flicker(const std::vector<FlickerRow>& rows) {
  std::vector<FlickerSummary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const FlickerSummary& s) { return s.method == r.method; });
    if (it == out.end()) {
      out.push_back({r.method});
      it = out.end() - 1;
    }
    it->nearer_pulse_fraction += r.nearer_pulse;
    it->locked_fraction += r.locked;
    ++it->n_clips;
  }
  for (auto& s : out) {
    s.nearer_pulse_fraction /= s.n_clips;
    s.locked_fraction /= s.n_clips;
  }
  return out;
}

inline void write_flicker_rows(const std::vector<FlickerRow>& rows, const std::string& path) {
  Table t;
  t.header = {"method", "clip", "hr_est", "nearer_pulse", "locked"};
  for (const auto& r : rows) t.rows.push_back({r.method, r.clip, fmt(r.hr_est), r.nearer_pulse ? "1" : "0", r.locked ? "1" : "0"});
  write_csv(t, path);
}

// Waveforms read back from the nulled clip after injecting alpha times the
// hypothesis, one series per alpha. Opposite alphas give opposite phase.
inline std::vector<Series> amplitude_sweep(const synth::VideoClip& clip, const std::vector<double>& s, const std::vector<double>& alphas,
                                           const ExtractFn& extract, const editor::EditorBackend& G, std::size_t top_k = 8) {
  const auto H = trainer::prepare_hypothesis(clip, s, top_k);
  if (H.degenerate) throw DegenerateSignal("amplitude sweep: hypothesis carries no in-band content");
  const auto nr = trainer::nulling_search(clip, H.oriented, G, H.psm, {-2.0, 0.0}, trainer::skin_band_probe(clip.mask));
  const double a = -nr.alpha_star;
  std::vector<Series> out;
  for (double al : alphas) {
    const auto w = extract(G.inject(nr.X_nul, H.psm, H.oriented, al * a));
    Series se{"alpha=" + fmt(al), {}, {}};
    for (std::size_t t = 0; t < w.size(); ++t) {
      se.x.push_back(static_cast<double>(t) / w.fs);
      se.y.push_back(w.samples[t]);
    }
    out.push_back(std::move(se));
  }
  return out;
}

// Series sharing an x axis as one CSV: x column then one column per series.
inline void write_series_csv(const std::vector<Series>& series, const std::string& xname, const std::string& path) {
  if (series.empty()) throw DataError("no series to write");
  Table t;
  t.header.push_back(xname);
  for (const auto& s : series) t.header.push_back(s.name);
  for (std::size_t i = 0; i < series[0].x.size(); ++i) {
    std::vector<std::string> row{fmt(series[0].x[i])};
    for (const auto& s : series) {
      if (s.y.size() != series[0].x.size()) throw DataError("series lengths differ");
      row.push_back(fmt(s.y[i]));
    }
    t.rows.push_back(std::move(row));
  }
  write_csv(t, path);
}

}  // namespace pcp::eval
