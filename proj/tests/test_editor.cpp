#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pcp/editor/analytic.hpp"
#include "pcp/editor/metrics.hpp"
#include "pcp/editor/psm.hpp"
#include "pcp/editor/pyramid.hpp"
#include "pcp/extractor/classical.hpp"
#include "pcp/signal/spectrum.hpp"
#include "pcp/synth/generator.hpp"

using namespace pcp;
using namespace pcp::editor;

namespace {

Image random_image(std::size_t H, std::size_t W, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(H, W);
  for (double& v : img.data) v = u(rng);
  return img;
}

synth::VideoClip make_clip(double hr = 72.0, std::uint64_t seed = 1, double amp = 0.004, std::size_t T = 300) {
  synth::SynthConfig cfg;
  cfg.hr_bpm = hr;
  cfg.seed = seed;
  cfg.base_texture_seed = 100 + seed;
  cfg.pulse_amplitude = amp;
  cfg.T = T;
  return synth::render_clip(synth::synth_pulse(cfg), cfg);
}

signal::Waveform embedded_pulse(double hr = 72.0, std::uint64_t seed = 1, std::size_t T = 300) {
  synth::SynthConfig cfg;
  cfg.hr_bpm = hr;
  cfg.seed = seed;
  cfg.T = T;
  return synth::synth_pulse(cfg);
}

// Non-separable expand written from the definition: zero insertion, then
// the 5x5 binomial kernel with reflected borders and gain 4.
Image expand_oracle(const Image& in) {
  const double k[5] = {1, 4, 6, 4, 1};
  const std::size_t H = 2 * in.H, W = 2 * in.W;
  auto refl = [](long i, long n) {
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  Image out(H, W);
  for (long y = 0; y < static_cast<long>(H); ++y)
    for (long x = 0; x < static_cast<long>(W); ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (long i = -2; i <= 2; ++i)
          for (long j = -2; j <= 2; ++j) {
            const long sy = refl(y + i, static_cast<long>(H)), sx = refl(x + j, static_cast<long>(W));
            if (sy % 2 || sx % 2) continue;
            s += k[i + 2] * k[j + 2] / 256.0 * in.at(static_cast<std::size_t>(sy / 2), static_cast<std::size_t>(sx / 2), c);
          }
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = 4.0 * s;
      }
  return out;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST(Pyramid, ConstantImageHasNoDetail) {
  Image img(64, 64, 0.37);
  auto pd = laplacian_decompose(img);
  ASSERT_EQ(pd.high_layers.size(), kPyramidLevels - 1);
  for (const auto& h : pd.high_layers)
    for (double v : h.data) EXPECT_NEAR(v, 0.0, 1e-12);
  EXPECT_EQ(pd.low_base.H, 8u);
  for (double v : pd.low_base.data) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(Pyramid, RandomRoundTrip) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto img = random_image(64, 48, seed);
    EXPECT_LT(max_abs_diff(laplacian_reconstruct(laplacian_decompose(img)), img), 1e-6);
  }
}

TEST(Pyramid, ExpandMatchesDirectDefinition) {
  auto img = random_image(8, 8, 3);
  EXPECT_LT(max_abs_diff(expand(img), expand_oracle(img)), 1e-12);
}

TEST(Pyramid, LowBasePerturbationSpreadsAsUpsampledPattern) {
  auto img = random_image(64, 64, 4);
  auto pd = laplacian_decompose(img);
  auto delta = random_image(8, 8, 5);
  for (double& v : delta.data) v = 0.01 * (v - 0.5);
  for (std::size_t i = 0; i < delta.data.size(); ++i) pd.low_base.data[i] += delta.data[i];
  auto out = laplacian_reconstruct(pd);
  Image pattern = expand_oracle(expand_oracle(expand_oracle(delta)));
  for (std::size_t i = 0; i < img.data.size(); ++i) ASSERT_NEAR(out.data[i] - img.data[i], pattern.data[i], 1e-12);
}

TEST(Pyramid, RejectsNonDivisibleFrames) {
  EXPECT_THROW(laplacian_decompose(Image(60, 64)), std::invalid_argument);
  EXPECT_THROW(laplacian_decompose(Image(64, 4)), std::invalid_argument);
  EXPECT_NO_THROW(laplacian_decompose(Image(16, 24)));
}

TEST(Luminance, GrayPixelVanishes) {
  Image g(2, 2, 0.6);
  for (double v : luminance_suppress(g).data) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Luminance, PulseDirectionKeepsMostEnergy) {
  const auto d = synth::pulse_direction();
  const auto c = suppress_pixel(d);
  const double e = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
  EXPECT_GE(e, 0.9);
}

TEST(Luminance, IdempotentAndOrthogonal) {
  auto img = random_image(8, 8, 6);
  auto C = luminance_suppress(img);
  EXPECT_LT(max_abs_diff(luminance_suppress(C), C), 1e-10);
  const auto& w = luminance_axis();
  for (std::size_t i = 0; i < C.pixels(); ++i)
    EXPECT_NEAR(C.data[3 * i] * w[0] + C.data[3 * i + 1] * w[1] + C.data[3 * i + 2] * w[2], 0.0, 1e-10);
}

TEST(Psm, PulseHypothesisFavoursSkin) {
  auto clip = make_clip();
  auto m = compute_psm(clip, clip.mask, embedded_pulse());
  const auto L = synth::RegionLayout::for_frame(clip.H, clip.W);
  double skin = 0, bg = 0;
  int ns = 0, nb = 0;
  for (std::size_t cell = 0; cell < kGrid * kGrid; ++cell) {
    const std::size_t y0 = (cell / kGrid) * 8, x0 = (cell % kGrid) * 8;
    if (m.A[cell] >= 0.5) {  // low base is 8x8, one pixel per cell
      skin += m.W_static[cell];
      ++ns;
    } else if (L.background.contains(y0, x0) && L.background.contains(y0 + 7, x0 + 7)) {
      bg += m.W_static[cell];
      ++nb;
    }
  }
  ASSERT_GT(ns, 0);
  ASSERT_GT(nb, 0);
  EXPECT_GT(skin / ns, 3.0 * (bg / nb));
}

TEST(Psm, WhiteNoiseHypothesisStaysLow) {
  auto clip = make_clip();
  const auto cs = cell_series(clip);
  const auto L = synth::RegionLayout::for_frame(clip.H, clip.W);
  const auto A = anatomical_prior(L, clip.mask, cs.lh, cs.lw);
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> s(clip.T);
    for (double& v : s) v = n(rng);
    const auto m = compute_psm(cs, A, s);
    double mean = 0.0;
    for (double w : m.W_static) mean += w;
    total += mean / static_cast<double>(m.W_static.size());
  }
  EXPECT_LT(total / 10.0, 0.3);
}

TEST(Psm, ZeroPriorGatesExactly) {
  auto clip = make_clip();
  auto m = compute_psm(clip, clip.mask, embedded_pulse());
  bool any_zero = false;
  for (std::size_t i = 0; i < m.psm.size(); ++i) {
    EXPECT_GE(m.psm[i], 0.0);
    EXPECT_LE(m.psm[i], 1.0);
    if (m.A[i] == 0.0) {
      any_zero = true;
      EXPECT_EQ(m.psm[i], 0.0);
    }
  }
  EXPECT_TRUE(any_zero);
}

TEST(Psm, ConstantCellsGetZeroWeight) {
  synth::VideoClip c(200, 64, 64, 30.0);
  for (float& v : c.frames) v = 0.5f;
  const auto cs = cell_series(c);
  std::vector<double> s(200);
  for (std::size_t t = 0; t < s.size(); ++t) s[t] = std::sin(0.3 * static_cast<double>(t));
  for (double w : static_weights(cs, s)) EXPECT_EQ(w, 0.0);
}

TEST(Psm, ObservedChrominanceTracksPulse) {
  auto clip = make_clip(80, 2);
  const auto s = embedded_pulse(80, 2);
  const auto cs = cell_series(clip);
  const auto L = synth::RegionLayout::for_frame(clip.H, clip.W);
  const auto m = compute_psm(cs, anatomical_prior(L, clip.mask, cs.lh, cs.lw), s.samples);
  const auto cobs = observed_chrominance(cs, m, 8);
  // Systole darkens green, so the carrier's green channel runs against the pulse.
  EXPECT_LT(signal::pearson(cobs.samples, signal::bandpass(s).samples), -0.9);
}

TEST(AnalyticEdit, ZeroStrengthIsBitExact) {
  auto clip = make_clip();
  auto m = prior_only_psm(clip, clip.mask);
  auto out = analytic_edit(clip, embedded_pulse().samples, 0.0, m);
  EXPECT_EQ(out.frames, clip.frames);
  EXPECT_EQ(AnalyticEditor(m).apply(clip, embedded_pulse().samples, 0.0).frames, clip.frames);
}

TEST(AnalyticEdit, InjectedToneIsReadByPos) {
  auto clip = make_clip(72, 3, 0.0);
  std::vector<double> tone(clip.T);
  for (std::size_t t = 0; t < clip.T; ++t) tone[t] = std::sqrt(2.0) * std::sin(2 * std::numbers::pi * 2.0 * static_cast<double>(t) / clip.fps);
  auto out = analytic_edit(clip, tone, 0.004, prior_only_psm(clip, clip.mask));
  EXPECT_NEAR(signal::estimate_hr(extractor::classical_extract(out, extractor::ClassicalMethod::pos)), 120.0, 2.0);
}

TEST(AnalyticEdit, NullingRemovesSkinBandEnergy) {
  auto clip = make_clip(66, 4);
  const auto s = embedded_pulse(66, 4);
  const AnalyticEditor ed(compute_psm(clip, clip.mask, s));
  const double before = chroma_band_energy(clip, clip.mask);
  double best = before;
  for (int i = 0; i <= 40; ++i) {
    const double k = -0.0002 * i;
    best = std::min(best, chroma_band_energy(ed.apply(clip, s.samples, k), clip.mask));
  }
  EXPECT_LE(best, 0.2 * before);
}

TEST(AnalyticEdit, FastPathMatchesPyramidPath) {
  auto clip = make_clip(90, 5, 0.004, 64);
  const auto s = embedded_pulse(90, 5, 64);
  const auto m = prior_only_psm(clip, clip.mask);
  const auto a = analytic_edit(clip, s.samples, 0.01, m);
  const auto b = AnalyticEditor(m).apply(clip, s.samples, 0.01);
  for (std::size_t i = 0; i < a.frames.size(); ++i) ASSERT_NEAR(a.frames[i], b.frames[i], 1e-6);
}

TEST(AnalyticEdit, EditsTouchOnlyChromaticLowBase) {
  auto clip = make_clip(75, 6, 0.004, 64);
  const auto s = embedded_pulse(75, 6, 64);
  const auto m = compute_psm(clip, clip.mask, s);
  EditTrace trace;
  analytic_edit(clip, s.samples, -0.006, m, &trace);
  ASSERT_EQ(trace.original.size(), clip.T);
  const auto& w = luminance_axis();
  for (std::size_t t = 0; t < clip.T; ++t) {
    const auto& o = trace.original[t];
    const auto& e = trace.edited[t];
    for (std::size_t k = 0; k < o.high_layers.size(); ++k) ASSERT_EQ(o.high_layers[k].data, e.high_layers[k].data);
    for (std::size_t i = 0; i < o.low_base.pixels(); ++i) {
      double lum = 0.0;
      for (std::size_t c = 0; c < 3; ++c) lum += w[c] * (e.low_base.data[3 * i + c] - o.low_base.data[3 * i + c]);
      ASSERT_LE(std::fabs(lum), 1e-6);
      if (m.psm[i] == 0.0) {
        for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(e.low_base.data[3 * i + c], o.low_base.data[3 * i + c]);
      }
    }
  }
}

TEST(AnalyticEdit, LengthMismatchRejected) {
  auto clip = make_clip(72, 1, 0.004, 64);
  EXPECT_THROW(analytic_edit(clip, std::vector<double>(10), 0.1, prior_only_psm(clip, clip.mask)), std::invalid_argument);
}

TEST(AnalyticEdit, DefaultStrengthFidelity) {
  auto clip = make_clip();
  const auto s = embedded_pulse();
  const auto out = AnalyticEditor(compute_psm(clip, clip.mask, s)).apply(clip, s.samples, 0.004);
  EXPECT_GE(psnr(clip, out), 60.0);
  EXPECT_GE(ssim(clip, out), 0.99);
}

TEST(Fidelity, IdenticalClips) {
  auto clip = make_clip(72, 1, 0.004, 64);
  EXPECT_GE(psnr(clip, clip), 99.0);
  EXPECT_NEAR(ssim(clip, clip), 1.0, 1e-12);
}

TEST(Fidelity, UniformOffsetIsFortyDb) {
  synth::VideoClip a(4, 16, 16, 30.0);
  for (std::size_t i = 0; i < a.frames.size(); ++i) a.frames[i] = 0.25f;
  auto b = a;
  for (float& v : b.frames) v = 0.26f;
  EXPECT_NEAR(psnr(a, b), 40.0, 1e-4);
}

TEST(Fidelity, SsimBoundedAndShapeChecked) {
  auto a = make_clip(72, 1, 0.004, 64);
  auto b = make_clip(90, 2, 0.004, 64);
  const double v = ssim(a, b);
  EXPECT_GE(v, -1.0);
  EXPECT_LE(v, 1.0);
  auto c = make_clip(72, 1, 0.004, 80);
  EXPECT_THROW(psnr(a, c), std::invalid_argument);
  EXPECT_THROW(ssim(a, c), std::invalid_argument);
}
