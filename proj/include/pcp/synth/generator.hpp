#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcp/signal/waveform.hpp"
#include "pcp/synth/clip.hpp"

namespace pcp::synth {

// Chrominance direction of the blood-volume pulse, green dominated.
inline constexpr std::array<double, 3> pulse_direction() {
  // normalize(-0.3, 1.0, -0.2)
  constexpr double n = 1.0630145812734649;  // sqrt(0.09 + 1 + 0.04)
  return {-0.3 / n, 1.0 / n, -0.2 / n};
}

struct SynthConfig {
  double hr_bpm = 72.0;
  double pulse_amplitude = 0.004;
  std::uint64_t base_texture_seed = 1;
  std::uint64_t seed = 1;  // pulse jitter, phase and sensor noise
  double sensor_noise_sigma = 0.005;
  double harmonic = 0.3;
  double jitter = 0.02;
  double texture_contrast = 0.15;
  double side_light = 0.3;  // horizontal shading slope across the frame
  std::size_t T = 300, H = 64, W = 64;
  double fps = 30.0;

  void validate() const {
    if (!(hr_bpm >= 40.0 && hr_bpm <= 240.0)) throw std::invalid_argument("hr_bpm outside [40, 240]");
    if (T < 64) throw std::invalid_argument("clip needs at least 64 frames");
    if (H % 8 || W % 8 || H < 16 || W < 16) throw std::invalid_argument("frame size must be a multiple of 8");
    if (!(fps > 0)) throw std::invalid_argument("fps must be positive");
    if (pulse_amplitude < 0 || sensor_noise_sigma < 0 || jitter < 0 || jitter > 0.02) {
      throw std::invalid_argument("negative amplitude/noise or jitter above 2%");
    }
  }
};

enum class NuisanceKind { illumination_flicker, rhythmic_motion };

struct NuisanceSpec {
  NuisanceKind kind = NuisanceKind::illumination_flicker;
  double freq_bpm = 100.0;
  double amplitude = 0.02;  // relative gain for flicker, pixels for motion
  double phase = 0.0;

  static NuisanceSpec flicker(double bpm = 100.0, double amp = 0.02, double ph = 0.0) {
    return {NuisanceKind::illumination_flicker, bpm, amp, ph};
  }
  static NuisanceSpec motion(double bpm = 80.0, double amp = 1.5, double ph = 0.0) {
    return {NuisanceKind::rhythmic_motion, bpm, amp, ph};
  }
};

// Unit-RMS quasi-periodic pulse: fundamental plus a second harmonic, each
// cycle stretched by an independent jitter factor.
inline signal::Waveform synth_pulse(const SynthConfig& cfg) {
  cfg.validate();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> ph(0.0, two_pi);
  double phase = ph(rng);
  double stretch = 1.0 + cfg.jitter * u(rng);
  const double f0 = cfg.hr_bpm / 60.0;
  signal::Waveform w{std::vector<double>(cfg.T), cfg.fps};
  for (std::size_t t = 0; t < cfg.T; ++t) {
    w.samples[t] = std::sin(phase) + cfg.harmonic * std::sin(2.0 * phase - 0.5 * std::numbers::pi);
    const double next = phase + two_pi * f0 / cfg.fps / stretch;
    if (std::floor(next / two_pi) != std::floor(phase / two_pi)) stretch = 1.0 + cfg.jitter * u(rng);
    phase = next;
  }
  const double m = signal::mean(w.samples);
  for (double& v : w.samples) v -= m;
  const double r = signal::rms(w.samples);
  for (double& v : w.samples) v /= r;
  return w;
}

// Multi-octave value noise in roughly [-1, 1].
inline std::vector<double> value_noise(std::size_t H, std::size_t W, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> out(H * W, 0.0);
  const std::array<std::pair<std::size_t, double>, 3> octaves = {{{16, 0.5}, {8, 0.3}, {4, 0.2}}};
  for (const auto& [cell, weight] : octaves) {
    const std::size_t gh = H / cell + 2, gw = W / cell + 2;
    std::vector<double> g(gh * gw);
    for (double& v : g) v = u(rng);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const double fy = static_cast<double>(y) / static_cast<double>(cell);
        const double fx = static_cast<double>(x) / static_cast<double>(cell);
        const auto iy = static_cast<std::size_t>(fy), ix = static_cast<std::size_t>(fx);
        double ty = fy - static_cast<double>(iy), tx = fx - static_cast<double>(ix);
        ty = ty * ty * (3 - 2 * ty);
        tx = tx * tx * (3 - 2 * tx);
        const double a = g[iy * gw + ix], b = g[iy * gw + ix + 1];
        const double c = g[(iy + 1) * gw + ix], d = g[(iy + 1) * gw + ix + 1];
        out[y * W + x] += weight * ((1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d));
      }
  }
  return out;
}

// Per-pixel pulse gain: full on forehead and cheeks, reduced elsewhere on
// skin, low over the eye/mouth bands, zero off skin.
inline std::vector<double> pulse_weight_map(const RegionLayout& L) {
  std::vector<double> w(L.H * L.W, 0.0);
  for (std::size_t y = 0; y < L.H; ++y)
    for (std::size_t x = 0; x < L.W; ++x) {
      if (!L.skin(y, x)) continue;
      w[y * L.W + x] = L.core(y, x) ? 1.0 : (L.occluder(y, x) ? 0.3 : 0.6);
    }
  return w;
}

inline VideoClip render_clip(const signal::Waveform& pulse, const SynthConfig& cfg) {
  cfg.validate();
  if (pulse.size() != cfg.T) {
    throw std::invalid_argument("pulse length " + std::to_string(pulse.size()) + " does not match T=" +
                                std::to_string(cfg.T));
  }
  const auto L = RegionLayout::for_frame(cfg.H, cfg.W);
  const auto tex = value_noise(cfg.H, cfg.W, cfg.base_texture_seed);
  const auto gain = pulse_weight_map(L);
  constexpr std::array<double, 3> skin_rgb = {0.72, 0.52, 0.42};
  constexpr std::array<double, 3> bg_rgb = {0.30, 0.36, 0.42};
  std::vector<double> base(cfg.H * cfg.W * 3);
  for (std::size_t y = 0; y < cfg.H; ++y)
    for (std::size_t x = 0; x < cfg.W; ++x) {
      const bool s = L.skin(y, x);
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(cfg.W) - 0.5;
      double shade = (1.0 + cfg.texture_contrast * tex[y * cfg.W + x]) * (1.0 + cfg.side_light * u);
      if (s && L.occluder(y, x)) shade *= 0.8;
      for (std::size_t c = 0; c < 3; ++c) base[(y * cfg.W + x) * 3 + c] = (s ? skin_rgb[c] : bg_rgb[c]) * shade;
    }

  VideoClip clip(cfg.T, cfg.H, cfg.W, cfg.fps);
  clip.mask = L.skin_mask();
  const auto d = pulse_direction();
  std::mt19937_64 rng(cfg.seed * 0x2545F4914F6CDD1DULL + 17);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t npx = cfg.H * cfg.W;
  for (std::size_t t = 0; t < cfg.T; ++t) {
    // Systole (positive pulse) darkens green.
    const double p = -pulse.samples[t] * cfg.pulse_amplitude;
    float* f = clip.frames.data() + t * npx * 3;
    for (std::size_t i = 0; i < npx; ++i)
      for (std::size_t c = 0; c < 3; ++c) {
        double v = base[i * 3 + c] + p * gain[i] * d[c];
        if (cfg.sensor_noise_sigma > 0) v += cfg.sensor_noise_sigma * noise(rng);
        f[i * 3 + c] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
      }
  }
  return clip;
}

inline VideoClip add_nuisance(const VideoClip& clip, const NuisanceSpec& spec) {
  VideoClip out = clip;
  const double w = 2.0 * std::numbers::pi * spec.freq_bpm / 60.0;
  const std::size_t npx = clip.H * clip.W;
  for (std::size_t t = 0; t < clip.T; ++t) {
    const double time = static_cast<double>(t) / clip.fps;
    if (spec.kind == NuisanceKind::illumination_flicker) {
      const double g = 1.0 + spec.amplitude * std::sin(w * time + spec.phase);
      float* f = out.frames.data() + t * npx * 3;
      for (std::size_t i = 0; i < npx * 3; ++i) f[i] = static_cast<float>(static_cast<double>(f[i]) * g);
    } else {
      // Horizontal translation by dx with bilinear sampling and edge clamping.
      const double dx = spec.amplitude * std::sin(w * time + spec.phase);
      for (std::size_t y = 0; y < clip.H; ++y)
        for (std::size_t x = 0; x < clip.W; ++x) {
          const double sx = std::clamp(static_cast<double>(x) - dx, 0.0, static_cast<double>(clip.W - 1));
          const auto x0 = static_cast<std::size_t>(std::floor(sx));
          const std::size_t x1 = std::min(x0 + 1, clip.W - 1);
          const double a = sx - static_cast<double>(x0);
          for (std::size_t c = 0; c < 3; ++c)
            out.at(t, y, x, c) = static_cast<float>((1 - a) * clip.at(t, y, x0, c) + a * clip.at(t, y, x1, c));
        }
    }
  }
  out.clamp();
  return out;
}

}  // namespace pcp::synth
