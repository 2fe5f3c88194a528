#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcp/signal/waveform.hpp"

namespace pcp::signal {

enum class TransformKind { amplitude, phase, frequency };

struct TransformSpec {
  TransformKind kind = TransformKind::amplitude;
  double alpha = 1.0;
  int tau = 0;
  double rho = 1.0;
  double period = 0.0;  // frequency tiling period in samples; 0 means the full length

  static TransformSpec amplitude(double a) { return {TransformKind::amplitude, a, 0, 1.0}; }
  static TransformSpec phase(int t) { return {TransformKind::phase, 1.0, t, 1.0}; }
  static TransformSpec frequency(double r, double tile = 0.0) { return {TransformKind::frequency, 1.0, 0, r, tile}; }
};

inline const char* to_string(TransformKind k) {
  switch (k) {
    case TransformKind::amplitude: return "amplitude";
    case TransformKind::phase: return "phase";
    case TransformKind::frequency: return "frequency";
  }
  return "?";
}

inline void validate(const TransformSpec& spec, std::size_t n) {
  if (spec.kind == TransformKind::frequency && !(spec.rho >= 0.5 && spec.rho <= 3.0)) {
    throw std::invalid_argument("frequency factor " + std::to_string(spec.rho) + " outside [0.5, 3]");
  }
  if (spec.kind == TransformKind::phase && static_cast<std::size_t>(std::abs(spec.tau)) >= n) {
    throw std::invalid_argument("phase shift " + std::to_string(spec.tau) + " not shorter than signal");
  }
  if (!std::isfinite(spec.alpha)) throw std::invalid_argument("amplitude factor not finite");
  if (spec.kind == TransformKind::frequency && spec.period != 0.0 &&
      !(spec.period >= 2.0 && spec.period <= static_cast<double>(n) - 1.0)) {
    throw std::invalid_argument("tiling period " + std::to_string(spec.period) + " outside [2, n-1]");
  }
}

// Source position and weight pairs for one output sample of a frequency
// transform: the signal is read on a time axis compressed by rho and
// periodically extended past its end (or past `period` samples when set).
struct InterpTap {
  std::size_t i0, i1;
  double w1;
};

inline InterpTap frequency_tap(std::size_t t, std::size_t n, double rho, double period = 0.0) {
  if (period > 0.0) {
    const double p = std::fmod(static_cast<double>(t) * rho, period);
    const auto i0 = std::min(static_cast<std::size_t>(std::floor(p)), n - 2);
    return {i0, i0 + 1, p - static_cast<double>(i0)};
  }
  double p = std::fmod(static_cast<double>(t) * rho, static_cast<double>(n));
  const auto i0 = static_cast<std::size_t>(std::floor(p));
  return {i0 % n, (i0 + 1) % n, p - std::floor(p)};
}

inline std::size_t phase_source(std::size_t t, std::size_t n, int tau) {
  const auto N = static_cast<long>(n);
  return static_cast<std::size_t>(((static_cast<long>(t) - tau) % N + N) % N);
}

// amplitude: alpha * s; phase: circular delay by tau samples; frequency:
// linear-interpolated resampling at rho times the rate, tiled to length.
inline Waveform transform_signal(const Waveform& s, const TransformSpec& spec) {
  validate(spec, s.size());
  const std::size_t n = s.size();
  Waveform out{std::vector<double>(n), s.fs};
  switch (spec.kind) {
    case TransformKind::amplitude:
      for (std::size_t t = 0; t < n; ++t) out.samples[t] = spec.alpha * s.samples[t];
      break;
    case TransformKind::phase:
      for (std::size_t t = 0; t < n; ++t) out.samples[t] = s.samples[phase_source(t, n, spec.tau)];
      break;
    case TransformKind::frequency:
      for (std::size_t t = 0; t < n; ++t) {
        const auto tap = frequency_tap(t, n, spec.rho, spec.period);
        out.samples[t] = (1.0 - tap.w1) * s.samples[tap.i0] + tap.w1 * s.samples[tap.i1];
      }
      break;
  }
  return out;
}

}  // namespace pcp::signal
