#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pcp/common/errors.hpp"

namespace pcp::signal {

inline constexpr double kBandLowHz = 0.67;
inline constexpr double kBandHighHz = 4.0;

struct Band {
  double low = kBandLowHz;
  double high = kBandHighHz;
};

struct Waveform {
  std::vector<double> samples;
  double fs = 30.0;

  std::size_t size() const { return samples.size(); }
  double operator[](std::size_t i) const { return samples[i]; }
};

inline double mean(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

inline double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

inline double energy(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

// Throws DegenerateSignal when either input has (numerically) zero variance.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("pearson: length mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double scale_a = std::max(1.0, ma * ma) * static_cast<double>(a.size());
  const double scale_b = std::max(1.0, mb * mb) * static_cast<double>(b.size());
  if (saa <= 1e-26 * scale_a || sbb <= 1e-26 * scale_b) {
    throw DegenerateSignal("pearson: zero-variance input");
  }
  const double r = sab / std::sqrt(saa * sbb);
  return std::max(-1.0, std::min(1.0, r));
}

inline double pearson(const Waveform& a, const Waveform& b) { return pearson(a.samples, b.samples); }

// Two-column CSV `t_seconds,value` with a header row.
inline void write_waveform_csv(const Waveform& w, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << "t_seconds,value\n";
  char buf[96];
  for (std::size_t i = 0; i < w.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", static_cast<double>(i) / w.fs, w.samples[i]);
    f << buf;
  }
  if (!f) throw DataError("write failed for " + path);
}

inline Waveform read_waveform_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("t_seconds,value", 0) != 0) {
    throw DataError(path + ": missing 't_seconds,value' header");
  }
  std::vector<double> t, v;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError(path + ":" + std::to_string(lineno) + ": expected two columns");
    try {
      t.push_back(std::stod(line.substr(0, comma)));
      v.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": not a number");
    }
  }
  if (v.size() < 2) throw DataError(path + ": fewer than two samples");
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(dt > 0)) throw DataError(path + ": time column not increasing");
  Waveform w;
  w.samples = std::move(v);
  w.fs = std::round(1e6 / dt) / 1e6;
  return w;
}

}  // namespace pcp::signal
