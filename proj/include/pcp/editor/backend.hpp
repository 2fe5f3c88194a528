#pragma once

#include <string>
#include <vector>

#include "pcp/editor/analytic.hpp"
#include "pcp/editor/psm.hpp"
#include "pcp/synth/clip.hpp"

namespace pcp::editor {

inline constexpr double kReferenceStrength = 0.004;  // pulse amplitude of the synthetic corpus

// A frozen editor as seen by the training loop: inject gain * s under a
// support map. Gain 1 on a unit-RMS target is the reference pulse strength.
class EditorBackend {
 public:
  virtual ~EditorBackend() = default;
  virtual synth::VideoClip inject(const synth::VideoClip& clip, const PerturbationSupportMap& m,
                                  const std::vector<double>& s, double gain) const = 0;
  virtual std::string name() const = 0;
};

class AnalyticBackend final : public EditorBackend {
 public:
  explicit AnalyticBackend(double strength = kReferenceStrength) : strength_(strength) {}
  synth::VideoClip inject(const synth::VideoClip& clip, const PerturbationSupportMap& m, const std::vector<double>& s,
                          double gain) const override {
    return AnalyticEditor(m).apply(clip, s, gain * strength_);
  }
  std::string name() const override { return "analytic"; }
  double strength() const { return strength_; }

 private:
  double strength_;
};

}  // namespace pcp::editor
