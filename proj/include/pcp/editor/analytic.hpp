#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "pcp/editor/chroma.hpp"
#include "pcp/editor/psm.hpp"
#include "pcp/editor/pyramid.hpp"
#include "pcp/signal/filter.hpp"
#include "pcp/synth/clip.hpp"

namespace pcp::editor {

// Low-base perturbation per unit of target signal: pulse chroma vector
// weighted by the support map.
inline Image pulse_direction_map(const PerturbationSupportMap& m) {
  const auto v = pulse_chroma_vector();
  Image M(m.h, m.w);
  for (std::size_t i = 0; i < m.psm.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) M.data[3 * i + c] = v[c] * m.psm[i];
  return M;
}

// Optional record of per-frame pyramids before and after the edit.
struct EditTrace {
  std::vector<PyramidDecomposition> original, edited;
};

namespace detail {
inline void check_edit_args(const synth::VideoClip& clip, std::size_t n, const PerturbationSupportMap& m) {
  if (n != clip.T) {
    throw std::invalid_argument("target length " + std::to_string(n) + " does not match clip length " +
                                std::to_string(clip.T));
  }
  check_divisible(clip.H, clip.W, kPyramidLevels);
  if (m.h != clip.H >> (kPyramidLevels - 1) || m.w != clip.W >> (kPyramidLevels - 1)) {
    throw std::invalid_argument("support map does not match the low-base resolution");
  }
}
}  // namespace detail

// Reference editor: decompose each frame, add strength*s[t]*M to the low base
// only, reconstruct, clamp.
inline synth::VideoClip analytic_edit(const synth::VideoClip& clip, const std::vector<double>& s_target,
                                      double strength, const PerturbationSupportMap& m, EditTrace* trace = nullptr) {
  detail::check_edit_args(clip, s_target.size(), m);
  if (strength == 0.0 && trace == nullptr) return clip;
  const Image M = pulse_direction_map(m);
  synth::VideoClip out = clip;
  for (std::size_t t = 0; t < clip.T; ++t) {
    PyramidDecomposition pd = laplacian_decompose(frame_image(clip, t));
    if (trace) trace->original.push_back(pd);
    const double k = strength * s_target[t];
    for (std::size_t i = 0; i < M.data.size(); ++i) pd.low_base.data[i] += k * M.data[i];
    store_frame(out, t, laplacian_reconstruct(pd));
    if (trace) trace->edited.push_back(std::move(pd));
  }
  if (strength == 0.0) return clip;
  return out;
}

// Same edit through the linearity of reconstruction: the low-base change
// reaches full resolution as a fixed expanded pattern scaled per frame.
class AnalyticEditor {
 public:
  AnalyticEditor() = default;
  explicit AnalyticEditor(const PerturbationSupportMap& m)
      : map_(m), pattern_(expand_levels(pulse_direction_map(m), kPyramidLevels - 1)) {}

  const PerturbationSupportMap& support() const { return map_; }
  const Image& pattern() const { return pattern_; }

  synth::VideoClip apply(const synth::VideoClip& clip, const std::vector<double>& s_target, double strength) const {
    detail::check_edit_args(clip, s_target.size(), map_);
    if (strength == 0.0) return clip;
    synth::VideoClip out = clip;
    const std::size_t n = clip.frame_size();
    for (std::size_t t = 0; t < clip.T; ++t) {
      const double k = strength * s_target[t];
      float* f = out.frames.data() + t * n;
      for (std::size_t i = 0; i < n; ++i)
        f[i] = static_cast<float>(std::clamp(static_cast<double>(f[i]) + k * pattern_.data[i], 0.0, 1.0));
    }
    return out;
  }

 private:
  PerturbationSupportMap map_;
  Image pattern_;
};

// Band energy of the chrominance part of the region-mean colour, summed over
// channels.
inline double chroma_band_energy(const synth::VideoClip& clip, const std::vector<float>& mask) {
  const auto rgb = synth::region_mean_rgb(clip, mask);
  double e = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    signal::Waveform w{std::vector<double>(clip.T), clip.fps};
    for (std::size_t t = 0; t < clip.T; ++t) w.samples[t] = suppress_pixel(rgb[t])[c];
    e += signal::band_energy(w);
  }
  return e;
}

}  // namespace pcp::editor
