#pragma once

#include <array>
#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcp/synth/clip.hpp"

namespace pcp::editor {

inline constexpr std::size_t kPyramidLevels = 4;

// Interleaved 3-channel double image.
struct Image {
  std::size_t H = 0, W = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : H(h), W(w), data(h * w * 3, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * W + x) * 3 + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * W + x) * 3 + c]; }
  std::size_t pixels() const { return H * W; }
};

struct PyramidDecomposition {
  std::vector<Image> high_layers;  // finest first
  Image low_base;
};

namespace detail {

inline constexpr std::array<double, 5> kBinomial = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

// Reflect-101 border index, repeated for very small extents.
inline std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto m = static_cast<std::ptrdiff_t>(n);
  while (i < 0 || i >= m) i = i < 0 ? -i : 2 * (m - 1) - i;
  return static_cast<std::size_t>(i);
}

inline Image blur_rows(const Image& in, double gain) {
  Image out(in.H, in.W);
  for (std::size_t y = 0; y < in.H; ++y)
    for (std::size_t x = 0; x < in.W; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (std::ptrdiff_t k = -2; k <= 2; ++k)
          s += kBinomial[static_cast<std::size_t>(k + 2)] *
               in.at(y, reflect(static_cast<std::ptrdiff_t>(x) + k, in.W), c);
        out.at(y, x, c) = gain * s;
      }
  return out;
}

inline Image blur_cols(const Image& in, double gain) {
  Image out(in.H, in.W);
  for (std::size_t y = 0; y < in.H; ++y)
    for (std::size_t x = 0; x < in.W; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (std::ptrdiff_t k = -2; k <= 2; ++k)
          s += kBinomial[static_cast<std::size_t>(k + 2)] *
               in.at(reflect(static_cast<std::ptrdiff_t>(y) + k, in.H), x, c);
        out.at(y, x, c) = gain * s;
      }
  return out;
}

}  // namespace detail

// Gaussian blur then keep every second row and column.
inline Image reduce(const Image& in) {
  const Image b = detail::blur_cols(detail::blur_rows(in, 1.0), 1.0);
  Image out(in.H / 2, in.W / 2);
  for (std::size_t y = 0; y < out.H; ++y)
    for (std::size_t x = 0; x < out.W; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = b.at(2 * y, 2 * x, c);
  return out;
}

// Zero-insert to twice the size, then blur with gain 2 per axis.
inline Image expand(const Image& in) {
  Image up(in.H * 2, in.W * 2);
  for (std::size_t y = 0; y < in.H; ++y)
    for (std::size_t x = 0; x < in.W; ++x)
      for (std::size_t c = 0; c < 3; ++c) up.at(2 * y, 2 * x, c) = in.at(y, x, c);
  return detail::blur_cols(detail::blur_rows(up, 2.0), 2.0);
}

// Repeated expand, the spatial footprint of a low-base change after reconstruction.
inline Image expand_levels(Image img, std::size_t times) {
  for (std::size_t i = 0; i < times; ++i) img = expand(img);
  return img;
}

inline void check_divisible(std::size_t H, std::size_t W, std::size_t levels) {
  if (levels < 1) throw std::invalid_argument("pyramid needs at least one level");
  const std::size_t f = std::size_t{1} << (levels - 1);
  if (H % f || W % f || H < f || W < f) {
    throw std::invalid_argument("frame " + std::to_string(H) + "x" + std::to_string(W) +
                                " is not divisible by 2^" + std::to_string(levels - 1));
  }
}

inline PyramidDecomposition laplacian_decompose(const Image& frame, std::size_t levels = kPyramidLevels) {
  check_divisible(frame.H, frame.W, levels);
  PyramidDecomposition pd;
  Image g = frame;
  for (std::size_t k = 0; k + 1 < levels; ++k) {
    Image next = reduce(g);
    const Image up = expand(next);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] -= up.data[i];
    pd.high_layers.push_back(std::move(g));
    g = std::move(next);
  }
  pd.low_base = std::move(g);
  return pd;
}

inline Image laplacian_reconstruct(const PyramidDecomposition& pd) {
  Image g = pd.low_base;
  for (std::size_t k = pd.high_layers.size(); k-- > 0;) {
    Image up = expand(g);
    const Image& h = pd.high_layers[k];
    if (up.H != h.H || up.W != h.W) throw std::invalid_argument("pyramid layer sizes are inconsistent");
    for (std::size_t i = 0; i < up.data.size(); ++i) up.data[i] += h.data[i];
    g = std::move(up);
  }
  return g;
}

// Low base only, without materialising the detail layers.
inline Image low_base(const Image& frame, std::size_t levels = kPyramidLevels) {
  check_divisible(frame.H, frame.W, levels);
  Image g = frame;
  for (std::size_t k = 0; k + 1 < levels; ++k) g = reduce(g);
  return g;
}

inline Image frame_image(const synth::VideoClip& clip, std::size_t t) {
  Image img(clip.H, clip.W);
  const float* f = clip.frames.data() + t * clip.frame_size();
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = f[i];
  return img;
}

// Writes a frame back, clamping to [0, 1].
inline void store_frame(synth::VideoClip& clip, std::size_t t, const Image& img) {
  float* f = clip.frames.data() + t * clip.frame_size();
  for (std::size_t i = 0; i < img.data.size(); ++i) f[i] = static_cast<float>(std::clamp(img.data[i], 0.0, 1.0));
}

}  // namespace pcp::editor
