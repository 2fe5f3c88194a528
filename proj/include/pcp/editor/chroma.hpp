#pragma once

#include <array>
#include <cmath>

#include "pcp/editor/pyramid.hpp"
#include "pcp/synth/generator.hpp"

namespace pcp::editor {

// Unit luminance axis. Equal weights: a gray pixel is pure luminance and
// maps to a zero carrier.
inline const std::array<double, 3>& luminance_axis() {
  static const std::array<double, 3> w = {1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0)};
  return w;
}

inline std::array<double, 3> suppress_pixel(std::array<double, 3> p) {
  const auto& w = luminance_axis();
  const double k = p[0] * w[0] + p[1] * w[1] + p[2] * w[2];
  for (std::size_t c = 0; c < 3; ++c) p[c] -= k * w[c];
  return p;
}

// Chrominance carrier: the image minus its per-pixel luminance projection.
inline Image luminance_suppress(const Image& low) {
  Image out = low;
  for (std::size_t i = 0; i < out.pixels(); ++i) {
    const auto p = suppress_pixel({low.data[3 * i], low.data[3 * i + 1], low.data[3 * i + 2]});
    for (std::size_t c = 0; c < 3; ++c) out.data[3 * i + c] = p[c];
  }
  return out;
}

// Chrominance part of the pulse direction, signed so that a positive pulse
// sample darkens green like the renderer does.
inline std::array<double, 3> pulse_chroma_vector() {
  auto v = suppress_pixel(synth::pulse_direction());
  for (double& x : v) x = -x;
  return v;
}

}  // namespace pcp::editor
