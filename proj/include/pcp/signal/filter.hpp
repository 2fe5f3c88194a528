#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "pcp/common/errors.hpp"
#include "pcp/signal/waveform.hpp"

namespace pcp::signal {

inline constexpr std::size_t kFirTaps = 127;

// Hamming-windowed sinc band-pass, normalised to unit gain at the band centre.
inline std::vector<double> design_bandpass(double fs, Band band = {}, std::size_t taps = kFirTaps) {
  if (fs < 10.0) throw std::invalid_argument("bandpass: sample rate below 10 Hz");
  if (taps % 2 == 0) throw std::invalid_argument("bandpass: tap count must be odd");
  const double pi = std::numbers::pi;
  const double fl = band.low / fs, fh = band.high / fs;
  const double M = static_cast<double>(taps - 1) / 2.0;
  auto sinc = [&](double f, double n) { return n == 0.0 ? 2.0 * f : std::sin(2.0 * pi * f * n) / (pi * n); };
  std::vector<double> h(taps);
  for (std::size_t i = 0; i < taps; ++i) {
    const double n = std::fabs(static_cast<double>(i) - M);  // symmetric by construction
    const double w = 0.54 + 0.46 * std::cos(pi * n / M);
    h[i] = w * (sinc(fh, n) - sinc(fl, n));
  }
  const double fc = 0.5 * (band.low + band.high);
  std::complex<double> g = 0.0;
  for (std::size_t i = 0; i < taps; ++i) g += h[i] * std::polar(1.0, -2.0 * pi * fc / fs * static_cast<double>(i));
  const double gain = std::abs(g);
  for (double& v : h) v /= gain;
  return h;
}

// Magnitude response of a kernel at frequency f.
inline double kernel_gain(const std::vector<double>& h, double f, double fs) {
  std::complex<double> g = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i)
    g += h[i] * std::polar(1.0, -2.0 * std::numbers::pi * f / fs * static_cast<double>(i));
  return std::abs(g);
}

inline const std::vector<double>& bandpass_kernel(double fs) {
  thread_local std::map<double, std::vector<double>> cache;
  auto it = cache.find(fs);
  if (it == cache.end()) it = cache.emplace(fs, design_bandpass(fs)).first;
  return it->second;
}

// Zero-padded centred convolution, output length equals input length.
inline std::vector<double> fir_same(const std::vector<double>& x, const std::vector<double>& h) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto c = static_cast<std::ptrdiff_t>((h.size() - 1) / 2);
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) {
      const std::ptrdiff_t src = t + c - static_cast<std::ptrdiff_t>(j);
      if (src >= 0 && src < n) s += h[j] * x[static_cast<std::size_t>(src)];
    }
    y[static_cast<std::size_t>(t)] = s;
  }
  return y;
}

inline Waveform bandpass(const Waveform& w) {
  const auto& h = bandpass_kernel(w.fs);
  if (w.size() < h.size()) {
    throw std::invalid_argument("bandpass: signal of " + std::to_string(w.size()) +
                                " samples is shorter than the filter order " + std::to_string(h.size()));
  }
  return {fir_same(w.samples, h), w.fs};
}

inline Waveform remove_mean(Waveform w) {
  const double m = mean(w.samples);
  for (double& v : w.samples) v -= m;
  return w;
}

// Energy of the band-passed, mean-removed signal.
inline double band_energy(const Waveform& w) { return energy(bandpass(remove_mean(w)).samples); }

}  // namespace pcp::signal
