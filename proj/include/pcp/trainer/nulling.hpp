#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pcp/editor/backend.hpp"
#include "pcp/editor/psm.hpp"
#include "pcp/extractor/classical.hpp"
#include "pcp/extractor/network.hpp"
#include "pcp/signal/transform.hpp"
#include "pcp/trainer/config.hpp"

namespace pcp::trainer {

// In-band energy of whatever the probe extractor reads from a clip.
using EnergyProbe = std::function<double(const synth::VideoClip&)>;

inline EnergyProbe pos_probe(const std::vector<float>& mask) {
  return [mask](const synth::VideoClip& c) {
    return signal::energy(extractor::classical_extract(c, mask, extractor::ClassicalMethod::pos).samples);
  };
}

// Chrominance band energy of the skin-region mean over all three channels.
// Unlike a single projection, it cannot be cancelled by an edit along the
// pulse direction unless the hypothesis really lies there.
inline EnergyProbe skin_band_probe(const std::vector<float>& mask) {
  return [mask](const synth::VideoClip& c) { return editor::chroma_band_energy(c, mask); };
}

inline EnergyProbe network_probe(const extractor::PhysNet& net) {
  return [&net](const synth::VideoClip& c) { return signal::energy(net.extract(c).samples); };
}

inline constexpr double kDegenerateRms = 1e-9;

// Band-limited, unit-RMS copy of a hypothesis. Empty when it carries no
// in-band content.
inline std::vector<double> unit_hypothesis(const std::vector<double>& s0, double fs) {
  auto b = editor::band_limit(s0, fs);
  const double r = signal::rms(b);
  if (!(r > kDegenerateRms)) return {};
  for (double& v : b) v /= r;
  return b;
}

struct NullingResult {
  double alpha_star = 0.0;
  synth::VideoClip X_nul;
  double residual_energy = 0.0;
  double base_energy = 0.0;
  double coarse_best_energy = 0.0;
  bool degenerate = false;
  int evaluations = 0;

  double residual_ratio() const { return base_energy > 0.0 ? residual_energy / base_energy : 0.0; }
};

// Five uniform candidates over the range, then three bracket-halving
// refinements around the incumbent. Minimises probe energy of G(X, a*s).
inline NullingResult nulling_search(const synth::VideoClip& clip, const std::vector<double>& s, const editor::EditorBackend& G,
                                    const editor::PerturbationSupportMap& m, Range range, const EnergyProbe& probe) {
  if (s.size() != clip.T) throw std::invalid_argument("nulling_search: hypothesis length does not match clip");
  NullingResult r;
  r.base_energy = probe(clip);
  if (!(signal::rms(s) > kDegenerateRms)) {
    r.degenerate = true;
    r.X_nul = clip;
    r.residual_energy = r.coarse_best_energy = r.base_energy;
    return r;
  }
  auto eval = [&](double a) {
    ++r.evaluations;
    return a == 0.0 ? r.base_energy : probe(G.inject(clip, m, s, a));
  };
  double best_a = range.lo, best_e = INFINITY;
  const double step = (range.hi - range.lo) / 4.0;
  for (int i = 0; i < 5; ++i) {
    const double a = i == 4 ? range.hi : range.lo + step * i;
    const double e = eval(a);
    if (e < best_e) {
      best_e = e;
      best_a = a;
    }
  }
  r.coarse_best_energy = best_e;
  double h = step;
  for (int k = 0; k < 3; ++k) {
    h /= 2.0;
    const double centre = best_a;
    for (double a : {centre - h, centre + h}) {
      if (a < range.lo || a > range.hi) continue;
      const double e = eval(a);
      if (e < best_e) {
        best_e = e;
        best_a = a;
      }
    }
  }
  r.alpha_star = best_a;
  r.residual_energy = best_e;
  r.X_nul = best_a == 0.0 ? clip : G.inject(clip, m, s, best_a);
  return r;
}

struct Interventions {
  double alpha = 0.0;
  int tau = 0;
  double rho = 1.0;
};

// Uniform draws from the configured ranges; tau is an integer frame shift.
inline Interventions sample_interventions(const TrainConfig& c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ua(c.alpha_range.lo, c.alpha_range.hi);
  std::uniform_real_distribution<double> ur(c.rho_range.lo, c.rho_range.hi);
  std::uniform_int_distribution<int> ut(static_cast<int>(std::ceil(c.tau_range.lo)), static_cast<int>(std::floor(c.tau_range.hi)));
  Interventions v;
  v.alpha = ua(rng);
  v.tau = ut(rng);
  v.rho = ur(rng);
  return v;
}

// Everything derived from a hypothesis before intervening: unit form,
// support map, observed chrominance and the orientation that aligns the
// hypothesis with the editor's injection direction.
struct PreparedHypothesis {
  std::vector<double> unit;      // band-limited, unit RMS
  std::vector<double> oriented;  // sigma * unit
  double sigma = 1.0;
  editor::PerturbationSupportMap psm;
  signal::Waveform c_obs;
  bool degenerate = false;
};

inline PreparedHypothesis prepare_hypothesis(const synth::VideoClip& clip, const std::vector<double>& s0, std::size_t K) {
  PreparedHypothesis h;
  const auto cs = editor::cell_series(clip);
  const auto L = synth::RegionLayout::for_frame(clip.H, clip.W);
  const auto A = editor::anatomical_prior(L, clip.mask, cs.lh, cs.lw);
  h.unit = unit_hypothesis(s0, clip.fps);
  if (h.unit.empty()) {
    h.degenerate = true;
    h.unit = h.oriented = std::vector<double>(clip.T, 0.0);
    h.psm = editor::compose_psm(A, std::vector<double>(editor::kGrid * editor::kGrid, 0.0), cs.lh, cs.lw);
    h.c_obs = {std::vector<double>(clip.T, 0.0), clip.fps};
    return h;
  }
  h.psm = editor::compute_psm(cs, A, h.unit);
  h.c_obs = editor::observed_chrominance(cs, h.psm, K);
  double r = 0.0;
  try {
    r = signal::pearson(h.unit, h.c_obs.samples);
  } catch (const DegenerateSignal&) {
    r = 0.0;
  }
  // A correctly signed hypothesis anti-correlates with the green carrier.
  h.sigma = r > 0.0 ? -1.0 : 1.0;
  h.oriented = h.unit;
  for (double& v : h.oriented) v *= h.sigma;
  return h;
}

}  // namespace pcp::trainer
