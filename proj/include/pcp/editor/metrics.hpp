#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pcp/synth/clip.hpp"

namespace pcp::editor {

inline constexpr double kPsnrIdentical = 100.0;  // reported for zero error

inline void check_same(const synth::VideoClip& a, const synth::VideoClip& b) {
  if (!a.same_shape(b) || a.frames.size() != b.frames.size()) throw std::invalid_argument("clip shapes differ");
}

// PSNR over all frames and channels, peak 1.
inline double psnr(const synth::VideoClip& a, const synth::VideoClip& b) {
  check_same(a, b);
  double se = 0.0;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    const double d = static_cast<double>(a.frames[i]) - static_cast<double>(b.frames[i]);
    se += d * d;
  }
  if (se == 0.0) return kPsnrIdentical;
  const double mse = se / static_cast<double>(a.frames.size());
  return std::min(kPsnrIdentical, -10.0 * std::log10(mse));
}

namespace detail {

inline std::vector<double> gaussian_window(std::size_t n = 11, double sigma = 1.5) {
  std::vector<double> g(n);
  double s = 0.0;
  const double c = static_cast<double>(n - 1) / 2.0;
  for (std::size_t i = 0; i < n; ++i) s += g[i] = std::exp(-(static_cast<double>(i) - c) * (static_cast<double>(i) - c) / (2 * sigma * sigma));
  for (double& v : g) v /= s;
  return g;
}

// Mean SSIM of two single-channel planes over valid window positions.
inline double ssim_plane(const std::vector<double>& x, const std::vector<double>& y, std::size_t H, std::size_t W) {
  static const auto g = gaussian_window();
  const std::size_t n = g.size();
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  if (H < n || W < n) throw std::invalid_argument("ssim: frame smaller than the 11x11 window");
  // Separable filtering of x, y, x^2, y^2, xy along rows, then columns.
  const std::size_t ow = W - n + 1, oh = H - n + 1;
  std::vector<double> r(5 * H * ow, 0.0);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s[5] = {0, 0, 0, 0, 0};
      for (std::size_t k = 0; k < n; ++k) {
        const double a = x[i * W + j + k], b = y[i * W + j + k];
        s[0] += g[k] * a;
        s[1] += g[k] * b;
        s[2] += g[k] * a * a;
        s[3] += g[k] * b * b;
        s[4] += g[k] * a * b;
      }
      for (int q = 0; q < 5; ++q) r[(static_cast<std::size_t>(q) * H + i) * ow + j] = s[q];
    }
  double total = 0.0;
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s[5] = {0, 0, 0, 0, 0};
      for (std::size_t k = 0; k < n; ++k)
        for (int q = 0; q < 5; ++q) s[q] += g[k] * r[(static_cast<std::size_t>(q) * H + i + k) * ow + j];
      const double mx = s[0], my = s[1];
      const double vx = s[2] - mx * mx, vy = s[3] - my * my, cxy = s[4] - mx * my;
      total += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
    }
  return total / static_cast<double>(oh * ow);
}

}  // namespace detail

// Mean SSIM, 11x11 Gaussian window (sigma 1.5), averaged over frames and channels.
inline double ssim(const synth::VideoClip& a, const synth::VideoClip& b) {
  check_same(a, b);
  std::vector<double> x(a.H * a.W), y(a.H * a.W);
  double total = 0.0;
  for (std::size_t t = 0; t < a.T; ++t)
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < a.H * a.W; ++p) {
        x[p] = a.frames[t * a.frame_size() + p * 3 + c];
        y[p] = b.frames[t * b.frame_size() + p * 3 + c];
      }
      total += detail::ssim_plane(x, y, a.H, a.W);
    }
  return total / static_cast<double>(a.T * 3);
}

}  // namespace pcp::editor
