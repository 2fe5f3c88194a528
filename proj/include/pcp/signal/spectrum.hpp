#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "pcp/common/errors.hpp"
#include "pcp/signal/waveform.hpp"

namespace pcp::signal {

inline constexpr double kLogEps = 1e-8;

struct Spectrum {
  std::vector<double> freqs;  // Hz, ascending
  std::vector<double> power;  // sums to 1 over the band
  Band band;
  double total = 0.0;         // unnormalised in-band power
};

inline std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
  return w;
}

// Zero-padding length giving sub-bpm resolution for HR readout.
inline std::size_t default_nfft(std::size_t n) {
  std::size_t p = 1;
  while (p < std::max<std::size_t>(n, 4096)) p <<= 1;
  return p;
}

// Periodogram bins k with f_k = k fs / nfft inside the band.
inline std::vector<std::size_t> band_bins(double fs, std::size_t nfft, Band band) {
  std::vector<std::size_t> k;
  for (std::size_t i = 0; i <= nfft / 2; ++i) {
    const double f = static_cast<double>(i) * fs / static_cast<double>(nfft);
    if (f >= band.low && f <= band.high) k.push_back(i);
  }
  return k;
}

// Hann-windowed periodogram of the mean-removed signal restricted to the band
// and normalised to unit sum. nfft = 0 selects default_nfft.
inline Spectrum psd(const Waveform& w, Band band = {}, std::size_t nfft = 0) {
  if (w.size() < 64) throw std::invalid_argument("psd: need at least 64 samples, got " + std::to_string(w.size()));
  if (nfft == 0) nfft = default_nfft(w.size());
  const auto bins = band_bins(w.fs, nfft, band);
  if (bins.empty()) throw std::invalid_argument("psd: no frequency bins inside the band");
  const double m = mean(w.samples);
  const auto win = hann(w.size());
  std::vector<double> x(w.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (w.samples[i] - m) * win[i];

  Spectrum sp;
  sp.band = band;
  sp.freqs.reserve(bins.size());
  sp.power.reserve(bins.size());
  for (std::size_t k : bins) {
    // Rotating phasor instead of one trig call per sample.
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(nfft);
    const double c1 = std::cos(ang), s1 = std::sin(ang);
    double cr = 1.0, ci = 0.0, re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      re += x[i] * cr;
      im += x[i] * ci;
      const double nr = cr * c1 - ci * s1;
      ci = cr * s1 + ci * c1;
      cr = nr;
    }
    sp.freqs.push_back(static_cast<double>(k) * w.fs / static_cast<double>(nfft));
    sp.power.push_back(re * re + im * im);
  }
  double tot = 0.0;
  for (double p : sp.power) tot += p;
  sp.total = tot;
  if (tot > 0.0)
    for (double& p : sp.power) p /= tot;
  return sp;
}

// Heart rate in bpm from the dominant in-band periodogram peak.
inline double estimate_hr(const Waveform& w, std::size_t nfft = 0) {
  const Spectrum sp = psd(w, Band{}, nfft);
  const double scale = std::max(1e-300, energy(w.samples));
  if (!(sp.total > 1e-20 * scale) || sp.total == 0.0) {
    throw DegenerateSignal("estimate_hr: no spectral peak above the noise floor");
  }
  const auto it = std::max_element(sp.power.begin(), sp.power.end());
  return 60.0 * sp.freqs[static_cast<std::size_t>(it - sp.power.begin())];
}

// Tiling period for frequency transforms: the longest whole number of
// dominant cycles that fits in the signal. 0 when no peak can be found.
inline double cycle_aligned_period(const Waveform& w) {
  double f = 0.0;
  try {
    f = estimate_hr(w) / 60.0;
  } catch (const std::exception&) {
    return 0.0;
  }
  if (!(f > 0.0)) return 0.0;
  const double cycle = w.fs / f;
  const double k = std::floor((static_cast<double>(w.size()) - 1.0) / cycle);
  return k >= 1.0 && k * cycle >= 2.0 ? k * cycle : 0.0;
}

inline double spectral_entropy(const Spectrum& sp) {
  double h = 0.0;
  for (double p : sp.power) h -= p * std::log(p + kLogEps);
  return std::max(0.0, h);
}

inline double js_divergence(const Spectrum& p, const Spectrum& q) {
  if (p.freqs != q.freqs) throw std::invalid_argument("js_divergence: spectra on different bins");
  double js = 0.0;
  for (std::size_t i = 0; i < p.power.size(); ++i) {
    const double a = p.power[i], b = q.power[i], m = 0.5 * (a + b);
    js += 0.5 * a * std::log((a + kLogEps) / (m + kLogEps)) + 0.5 * b * std::log((b + kLogEps) / (m + kLogEps));
  }
  return std::clamp(js, 0.0, std::log(2.0));
}

}  // namespace pcp::signal
