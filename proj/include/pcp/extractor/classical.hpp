#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcp/signal/filter.hpp"
#include "pcp/synth/clip.hpp"

namespace pcp::extractor {

enum class ClassicalMethod { green, chrom, pos };

inline ClassicalMethod parse_classical(const std::string& s) {
  if (s == "green") return ClassicalMethod::green;
  if (s == "chrom") return ClassicalMethod::chrom;
  if (s == "pos") return ClassicalMethod::pos;
  throw std::invalid_argument("unknown classical method '" + s + "'");
}

inline constexpr std::size_t kChromWindow = 48;

namespace detail {

using Rgb = std::vector<std::array<double, 3>>;

inline double stdev(const std::vector<double>& x, std::size_t a, std::size_t b) {
  double m = 0.0;
  for (std::size_t i = a; i < b; ++i) m += x[i];
  m /= static_cast<double>(b - a);
  double s = 0.0;
  for (std::size_t i = a; i < b; ++i) s += (x[i] - m) * (x[i] - m);
  return std::sqrt(s / static_cast<double>(b - a));
}

inline std::size_t window_len(std::size_t T) { return std::min<std::size_t>(kChromWindow, T); }

// Plane-orthogonal-to-skin projection with overlap-add over sliding windows.
inline std::vector<double> pos(const Rgb& c) {
  const std::size_t T = c.size(), l = window_len(T);
  std::vector<double> H(T, 0.0), s1(l), s2(l);
  for (std::size_t m = 0; m + l <= T; ++m) {
    std::array<double, 3> mu = {0, 0, 0};
    for (std::size_t i = 0; i < l; ++i)
      for (int k = 0; k < 3; ++k) mu[static_cast<std::size_t>(k)] += c[m + i][static_cast<std::size_t>(k)];
    for (double& v : mu) v = std::max(v / static_cast<double>(l), 1e-9);
    for (std::size_t i = 0; i < l; ++i) {
      const double r = c[m + i][0] / mu[0], g = c[m + i][1] / mu[1], b = c[m + i][2] / mu[2];
      s1[i] = g - b;
      s2[i] = -2.0 * r + g + b;
    }
    const double sd2 = stdev(s2, 0, l);
    const double ratio = sd2 > 1e-12 ? stdev(s1, 0, l) / sd2 : 0.0;
    double hm = 0.0;
    std::vector<double> h(l);
    for (std::size_t i = 0; i < l; ++i) hm += (h[i] = s1[i] + ratio * s2[i]);
    hm /= static_cast<double>(l);
    for (std::size_t i = 0; i < l; ++i) H[m + i] += h[i] - hm;
  }
  return H;
}

// Chrominance projections on the band-passed signals, combined with a
// per-window ratio and Hann-weighted overlap-add at half-window hops.
inline std::vector<double> chrom(const Rgb& c, double fs) {
  const std::size_t T = c.size();
  std::array<double, 3> mu = {0, 0, 0};
  for (const auto& v : c)
    for (std::size_t k = 0; k < 3; ++k) mu[k] += v[k];
  for (double& v : mu) v = std::max(v / static_cast<double>(T), 1e-9);
  signal::Waveform xs{std::vector<double>(T), fs}, ys{std::vector<double>(T), fs};
  for (std::size_t t = 0; t < T; ++t) {
    const double r = c[t][0] / mu[0], g = c[t][1] / mu[1], b = c[t][2] / mu[2];
    xs.samples[t] = 3.0 * r - 2.0 * g;
    ys.samples[t] = 1.5 * r + g - 1.5 * b;
  }
  const auto xf = signal::bandpass(signal::remove_mean(xs)).samples;
  const auto yf = signal::bandpass(signal::remove_mean(ys)).samples;
  const std::size_t l = window_len(T), hop = l / 2;
  std::vector<double> out(T, 0.0), wsum(T, 0.0);
  std::vector<std::size_t> starts;
  for (std::size_t m = 0; m + l <= T; m += hop) starts.push_back(m);
  if (starts.empty() || starts.back() + l < T) starts.push_back(T - l);
  for (std::size_t m : starts) {
    const double sy = stdev(yf, m, m + l);
    const double a = sy > 1e-12 ? stdev(xf, m, m + l) / sy : 0.0;
    double sm = 0.0;
    for (std::size_t i = m; i < m + l; ++i) sm += xf[i] - a * yf[i];
    sm /= static_cast<double>(l);
    for (std::size_t i = 0; i < l; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(l));
      out[m + i] += w * (xf[m + i] - a * yf[m + i] - sm);
      wsum[m + i] += w;
    }
  }
  for (std::size_t t = 0; t < T; ++t)
    if (wsum[t] > 0) out[t] /= wsum[t];
  return out;
}

}  // namespace detail

// Spatial mean RGB over the mask, method projection, band-pass.
inline signal::Waveform classical_extract(const synth::VideoClip& clip, const std::vector<float>& mask,
                                          ClassicalMethod method) {
  bool any = false;
  for (float m : mask) any = any || m > 0.5f;
  if (!any) throw std::invalid_argument("classical_extract: empty mask");
  const auto rgb = synth::region_mean_rgb(clip, mask);
  signal::Waveform raw{std::vector<double>(clip.T), clip.fps};
  switch (method) {
    case ClassicalMethod::green:
      for (std::size_t t = 0; t < clip.T; ++t) raw.samples[t] = rgb[t][1];
      break;
    case ClassicalMethod::chrom:
      raw.samples = detail::chrom(rgb, clip.fps);
      break;
    case ClassicalMethod::pos:
      raw.samples = detail::pos(rgb);
      break;
  }
  return signal::bandpass(signal::remove_mean(std::move(raw)));
}

inline signal::Waveform classical_extract(const synth::VideoClip& clip, ClassicalMethod method) {
  if (!clip.has_mask()) throw std::invalid_argument("classical_extract: clip carries no skin mask");
  return classical_extract(clip, clip.mask, method);
}

}  // namespace pcp::extractor
