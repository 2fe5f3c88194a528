#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pcp/eval/csv.hpp"
#include "pcp/eval/dataset.hpp"
#include "pcp/extractor/classical.hpp"
#include "pcp/extractor/network.hpp"
#include "pcp/signal/spectrum.hpp"

namespace pcp::eval {

using ExtractFn = std::function<signal::Waveform(const synth::VideoClip&)>;

// A named HR method: classical projections by name, networks as
// `name=weights.rpwt`.
struct Method {
  std::string name;
  ExtractFn extract;                  // empty when unavailable
  std::string unavailable;            // reason, when extract is empty
  std::shared_ptr<const extractor::PhysNet> net;
};

inline Method classical_method(extractor::ClassicalMethod m, const std::string& name) {
  return {name, [m](const synth::VideoClip& c) { return extractor::classical_extract(c, m); }, "", nullptr};
}

inline Method network_method(const std::string& name, std::shared_ptr<const extractor::PhysNet> net) {
  const extractor::PhysNet* p = net.get();
  return {name, [p](const synth::VideoClip& c) { return p->extract(c); }, "", std::move(net)};
}

// Parses one method token. A network whose weights are missing or unreadable
// becomes an unavailable method rather than an error.
inline Method parse_method(const std::string& token) {
  const auto eq = token.find('=');
  if (eq == std::string::npos) {
    if (token == "green" || token == "chrom" || token == "pos") return classical_method(extractor::parse_classical(token), token);
    throw ConfigError("unknown method '" + token + "' (expected green, chrom, pos or name=weights)");
  }
  const std::string name = token.substr(0, eq), path = token.substr(eq + 1);
  if (name.empty() || path.empty()) throw ConfigError("method '" + token + "' needs name=weights");
  try {
    return network_method(name, std::make_shared<const extractor::PhysNet>(extractor::PhysNet::load(path)));
  } catch (const DataError& e) {
    return {name, {}, std::string("missing weights: ") + e.what(), nullptr};
  }
}

struct Scenario {
  std::string name;
  std::optional<synth::NuisanceSpec> nuisance;
};

// Clean, +illum (100 bpm flicker) and +motion (80 bpm sway). The nuisance
// phase is fixed per clip from its seed and the run seed.
inline std::vector<Scenario> default_scenarios() {
  return {{"clean", std::nullopt},
          {"+illum", synth::NuisanceSpec::flicker(100.0, 0.02)},
          {"+motion", synth::NuisanceSpec::motion(80.0, 1.5)}};
}

inline synth::VideoClip apply_scenario(const synth::VideoClip& c, const Scenario& s, std::uint64_t clip_seed,
                                       std::uint64_t run_seed = 0) {
  if (!s.nuisance) return c;
  auto spec = *s.nuisance;
  spec.phase = 2.0 * std::numbers::pi * static_cast<double>((clip_seed + 7919 * run_seed) % 1000) / 1000.0;
  return synth::add_nuisance(c, spec);
}

struct DetailRow {
  std::string method, scenario, clip;
  double hr_gt = 0.0, hr_est = 0.0;
  double abs_err() const { return std::fabs(hr_est - hr_gt); }
};

struct MetricsRow {
  std::string method, scenario;
  double mae = 0.0, rmse = 0.0, r = 0.0;
  int n_clips = 0;
  double delta_mae = 0.0;  // versus the same method on clean clips
  std::string status = "ok";
};

inline double hr_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2) return 0.0;
  try {
    return std::clamp(signal::pearson(a, b), -1.0, 1.0);
  } catch (const DegenerateSignal&) {
    return 0.0;
  }
}

// Summary statistics of one method x scenario group of detail rows.
inline MetricsRow aggregate(const std::string& method, const std::string& scenario, const std::vector<DetailRow>& rows) {
  MetricsRow m{method, scenario};
  std::vector<double> gt, est;
  double se = 0.0, sa = 0.0;
  for (const auto& d : rows) {
    if (d.method != method || d.scenario != scenario) continue;
    sa += d.abs_err();
    se += d.abs_err() * d.abs_err();
    gt.push_back(d.hr_gt);
    est.push_back(d.hr_est);
  }
  m.n_clips = static_cast<int>(gt.size());
  if (m.n_clips == 0) return m;
  m.mae = sa / m.n_clips;
  m.rmse = std::sqrt(se / m.n_clips);
  m.r = hr_pearson(est, gt);
  return m;
}

struct BenchmarkResult {
  std::vector<MetricsRow> summary;
  std::vector<DetailRow> details;

  // Mean of delta_mae over the nuisance scenarios of one method.
  double avg_delta_mae(const std::string& method) const {
    double s = 0.0;
    int n = 0;
    for (const auto& r : summary)
      if (r.method == method && r.scenario != "clean" && r.status == "ok") {
        s += r.delta_mae;
        ++n;
      }
    return n ? s / n : 0.0;
  }
  const MetricsRow& row(const std::string& method, const std::string& scenario) const {
    for (const auto& r : summary)
      if (r.method == method && r.scenario == scenario) return r;
    throw std::out_of_range("no benchmark row " + method + "/" + scenario);
  }
};

struct BenchItem {
  std::string name;
  std::uint64_t seed = 0;
  synth::VideoClip clip;
  double hr_gt = 0.0;
};

inline BenchItem bench_item(const std::string& name, std::uint64_t seed, synth::VideoClip clip, const signal::Waveform& s_gt) {
  return {name, seed, std::move(clip), signal::estimate_hr(signal::bandpass(signal::remove_mean(s_gt)))};
}

inline void finish_summary(BenchmarkResult& r) {
  for (auto& m : r.summary) {
    if (m.scenario == "clean" || m.status != "ok") continue;
    for (const auto& c : r.summary)
      if (c.method == m.method && c.scenario == "clean") m.delta_mae = m.mae - c.mae;
  }
}

// Every method on every item under every scenario. Ground-truth HR is the
// spectral peak of the band-passed embedded pulse.
inline BenchmarkResult run_benchmark(const std::vector<BenchItem>& items, const std::vector<Method>& methods,
                                     const std::vector<Scenario>& scenarios = default_scenarios(),
                                     const std::function<void(const std::string&)>& log = {}, std::uint64_t run_seed = 0) {
  BenchmarkResult r;
  for (const auto& s : scenarios) {
    for (const auto& it : items) {
      const auto clip = apply_scenario(it.clip, s, it.seed, run_seed);
      for (const auto& m : methods) {
        if (!m.extract) continue;
        r.details.push_back({m.name, s.name, it.name, it.hr_gt, signal::estimate_hr(m.extract(clip))});
      }
    }
    if (log) log("scenario " + s.name + " done");
  }
  for (const auto& m : methods)
    for (const auto& s : scenarios) {
      if (!m.extract) {
        MetricsRow w{m.name, s.name};
        w.status = "skipped: " + m.unavailable;
        r.summary.push_back(w);
        continue;
      }
      r.summary.push_back(aggregate(m.name, s.name, r.details));
    }
  finish_summary(r);
  return r;
}

inline std::vector<BenchItem> test_items(const Dataset& d) {
  std::vector<BenchItem> out;
  for (const auto& e : d.split("test")) out.push_back(bench_item(e.name, e.seed, d.clip(e), d.ground_truth(e)));
  return out;
}

inline const std::vector<std::string>& metrics_header() {
  static const std::vector<std::string> h = {"method", "scenario", "mae", "rmse", "r", "n_clips", "delta_mae", "status"};
  return h;
}

inline void write_metrics_rows(const std::vector<MetricsRow>& rows, const std::string& path) {
  Table t;
  t.header = metrics_header();
  for (const auto& m : rows)
    t.rows.push_back({m.method, m.scenario, fmt(m.mae), fmt(m.rmse), fmt(m.r), std::to_string(m.n_clips), fmt(m.delta_mae), m.status});
  write_csv(t, path);
}

inline std::vector<MetricsRow> read_metrics_rows(const std::string& path) {
  const Table t = read_csv(path);
  if (t.header != metrics_header()) throw DataError(path + ": not a benchmark metrics file");
  std::vector<MetricsRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    MetricsRow m;
    m.method = t.rows[i][0];
    m.scenario = t.rows[i][1];
    m.mae = t.number(i, "mae");
    m.rmse = t.number(i, "rmse");
    m.r = t.number(i, "r");
    m.n_clips = static_cast<int>(t.number(i, "n_clips"));
    m.delta_mae = t.number(i, "delta_mae");
    m.status = t.rows[i][7];
    out.push_back(m);
  }
  return out;
}

inline void write_detail_rows(const std::vector<DetailRow>& rows, const std::string& path) {
  Table t;
  t.header = {"method", "scenario", "clip", "hr_gt", "hr_est", "abs_err"};
  for (const auto& d : rows) t.rows.push_back({d.method, d.scenario, d.clip, fmt(d.hr_gt), fmt(d.hr_est), fmt(d.abs_err())});
  write_csv(t, path);
}

inline std::vector<DetailRow> read_detail_rows(const std::string& path) {
  const Table t = read_csv(path);
  if (t.header != std::vector<std::string>{"method", "scenario", "clip", "hr_gt", "hr_est", "abs_err"}) {
    throw DataError(path + ": not a benchmark detail file");
  }
  std::vector<DetailRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    out.push_back({t.rows[i][0], t.rows[i][1], t.rows[i][2], t.number(i, "hr_gt"), t.number(i, "hr_est")});
  return out;
}

}  // namespace pcp::eval
