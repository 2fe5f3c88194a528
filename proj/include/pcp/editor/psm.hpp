#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "pcp/editor/chroma.hpp"
#include "pcp/editor/pyramid.hpp"
#include "pcp/signal/filter.hpp"
#include "pcp/synth/clip.hpp"

namespace pcp::editor {

inline constexpr std::size_t kGrid = 8;

struct PerturbationSupportMap {
  std::size_t h = 0, w = 0;      // low-base resolution
  std::vector<double> A;         // h x w anatomical prior
  std::vector<double> W_static;  // kGrid x kGrid consensus grid
  std::vector<double> psm;       // h x w

  std::size_t cell_of(std::size_t y, std::size_t x) const { return (y * kGrid / h) * kGrid + x * kGrid / w; }
};

// Green carrier series of each grid cell, band-limited, one row per cell.
struct CellSeries {
  std::size_t T = 0, lh = 0, lw = 0;
  double fs = 30.0;
  std::vector<std::vector<double>> cells;  // kGrid*kGrid rows of length T
};

// Mean removal, then band-pass when the series is long enough for the FIR.
inline std::vector<double> band_limit(std::vector<double> x, double fs) {
  signal::Waveform w = signal::remove_mean({std::move(x), fs});
  if (w.size() >= signal::kFirTaps) w = signal::bandpass(w);
  return w.samples;
}

inline CellSeries cell_series(const synth::VideoClip& clip, std::size_t levels = kPyramidLevels) {
  check_divisible(clip.H, clip.W, levels);
  CellSeries cs;
  cs.T = clip.T;
  cs.fs = clip.fps;
  cs.lh = clip.H >> (levels - 1);
  cs.lw = clip.W >> (levels - 1);
  if (cs.lh % kGrid || cs.lw % kGrid) throw std::invalid_argument("low base is not divisible into an 8x8 grid");
  const std::size_t by = cs.lh / kGrid, bx = cs.lw / kGrid;
  cs.cells.assign(kGrid * kGrid, std::vector<double>(clip.T, 0.0));
  for (std::size_t t = 0; t < clip.T; ++t) {
    const Image C = luminance_suppress(low_base(frame_image(clip, t), levels));
    for (std::size_t y = 0; y < cs.lh; ++y)
      for (std::size_t x = 0; x < cs.lw; ++x) cs.cells[(y / by) * kGrid + x / bx][t] += C.at(y, x, 1);
  }
  for (auto& s : cs.cells) {
    for (double& v : s) v /= static_cast<double>(by * bx);
    s = band_limit(std::move(s), clip.fps);
  }
  return cs;
}

// Area-averaged anatomical prior: 1 on forehead and cheeks, 0 on the eye and
// mouth bands and off skin, 0.5 on remaining skin.
inline std::vector<double> anatomical_prior(const synth::RegionLayout& L, const std::vector<float>& mask,
                                            std::size_t lh, std::size_t lw) {
  if (mask.size() != L.H * L.W) throw std::invalid_argument("mask size does not match layout");
  const std::size_t by = L.H / lh, bx = L.W / lw;
  std::vector<double> A(lh * lw, 0.0);
  for (std::size_t y = 0; y < L.H; ++y)
    for (std::size_t x = 0; x < L.W; ++x) {
      if (!L.skin(y, x) || mask[y * L.W + x] <= 0.5f) continue;
      const double p = L.core(y, x) ? 1.0 : (L.occluder(y, x) ? 0.0 : 0.5);
      A[(y / by) * lw + x / bx] += p;
    }
  for (double& a : A) a /= static_cast<double>(by * bx);
  return A;
}

inline PerturbationSupportMap compose_psm(std::vector<double> A, std::vector<double> W_static, std::size_t lh,
                                          std::size_t lw) {
  PerturbationSupportMap m;
  m.h = lh;
  m.w = lw;
  m.A = std::move(A);
  m.W_static = std::move(W_static);
  m.psm.resize(lh * lw);
  for (std::size_t y = 0; y < lh; ++y)
    for (std::size_t x = 0; x < lw; ++x) m.psm[y * lw + x] = m.A[y * lw + x] * m.W_static[m.cell_of(y, x)];
  return m;
}

// |pearson| of each cell against the hypothesis; degenerate cells get 0.
inline std::vector<double> static_weights(const CellSeries& cs, const std::vector<double>& s0) {
  if (s0.size() != cs.T) throw std::invalid_argument("hypothesis length does not match clip");
  const auto s = band_limit(s0, cs.fs);
  std::vector<double> W(kGrid * kGrid, 0.0);
  for (std::size_t i = 0; i < W.size(); ++i) {
    try {
      W[i] = std::clamp(std::fabs(signal::pearson(cs.cells[i], s)), 0.0, 1.0);
    } catch (const DegenerateSignal&) {
      W[i] = 0.0;
    }
  }
  return W;
}

inline PerturbationSupportMap compute_psm(const CellSeries& cs, const std::vector<double>& A,
                                          const std::vector<double>& s0) {
  return compose_psm(A, static_weights(cs, s0), cs.lh, cs.lw);
}

inline PerturbationSupportMap compute_psm(const synth::VideoClip& clip, const std::vector<float>& mask,
                                          const signal::Waveform& s0) {
  const auto cs = cell_series(clip);
  const auto L = synth::RegionLayout::for_frame(clip.H, clip.W);
  return compute_psm(cs, anatomical_prior(L, mask, cs.lh, cs.lw), s0.samples);
}

// Support without a hypothesis: every grid cell fully trusted.
inline PerturbationSupportMap prior_only_psm(const synth::VideoClip& clip, const std::vector<float>& mask) {
  const std::size_t lh = clip.H >> (kPyramidLevels - 1), lw = clip.W >> (kPyramidLevels - 1);
  const auto L = synth::RegionLayout::for_frame(clip.H, clip.W);
  return compose_psm(anatomical_prior(L, mask, lh, lw), std::vector<double>(kGrid * kGrid, 1.0), lh, lw);
}

// Cells touching the anatomical support, ranked by static weight.
inline std::vector<std::size_t> top_cells(const PerturbationSupportMap& m, std::size_t K) {
  std::vector<double> support(kGrid * kGrid, 0.0);
  for (std::size_t y = 0; y < m.h; ++y)
    for (std::size_t x = 0; x < m.w; ++x) support[m.cell_of(y, x)] = std::max(support[m.cell_of(y, x)], m.A[y * m.w + x]);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < support.size(); ++i)
    if (support[i] > 0.0) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return m.W_static[a] > m.W_static[b]; });
  if (idx.size() > K) idx.resize(K);
  return idx;
}

// Observed chrominance: band-passed point-wise median of the top-K cell series.
inline signal::Waveform observed_chrominance(const CellSeries& cs, const PerturbationSupportMap& m, std::size_t K) {
  const auto cells = top_cells(m, K);
  if (cells.empty()) throw std::invalid_argument("observed_chrominance: no cell inside the anatomical support");
  std::vector<double> med(cs.T), col(cells.size());
  for (std::size_t t = 0; t < cs.T; ++t) {
    for (std::size_t k = 0; k < cells.size(); ++k) col[k] = cs.cells[cells[k]][t];
    const std::size_t mid = col.size() / 2;
    std::nth_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(mid), col.end());
    double v = col[mid];
    if (col.size() % 2 == 0) v = 0.5 * (v + *std::max_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(mid)));
    med[t] = v;
  }
  return {band_limit(std::move(med), cs.fs), cs.fs};
}

// Full-resolution mask of one grid cell.
inline std::vector<float> cell_mask(std::size_t cell, std::size_t H, std::size_t W) {
  std::vector<float> m(H * W, 0.0f);
  const std::size_t cy = cell / kGrid, cx = cell % kGrid;
  for (std::size_t y = cy * H / kGrid; y < (cy + 1) * H / kGrid; ++y)
    for (std::size_t x = cx * W / kGrid; x < (cx + 1) * W / kGrid; ++x) m[y * W + x] = 1.0f;
  return m;
}

}  // namespace pcp::editor
