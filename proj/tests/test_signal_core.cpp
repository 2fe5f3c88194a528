#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pcp/ad/grad_check.hpp"
#include "pcp/signal/diff.hpp"
#include "pcp/signal/filter.hpp"
#include "pcp/signal/spectrum.hpp"
#include "pcp/signal/transform.hpp"
#include "pcp/signal/waveform.hpp"

using namespace pcp::signal;
using pcp::DegenerateSignal;

namespace {

constexpr double kPi = std::numbers::pi;

Waveform tone(double f, std::size_t n, double fs = 30.0, double phase = 0.0, double amp = 1.0) {
  Waveform w{std::vector<double>(n), fs};
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2 * kPi * f * static_cast<double>(i) / fs + phase);
  return w;
}

Waveform noise(std::size_t n, unsigned seed, double fs = 30.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Waveform w{std::vector<double>(n), fs};
  for (auto& v : w.samples) v = g(rng);
  return w;
}

double bin_width(std::size_t n, double fs = 30.0) { return 60.0 * fs / static_cast<double>(default_nfft(n)); }

}  // namespace

TEST(Bandpass, PassesInBandTone) {
  auto x = tone(2.0, 512);
  EXPECT_GE(rms(bandpass(x).samples), 0.9 * rms(x.samples));
}

TEST(Bandpass, RejectsSlowDrift) {
  auto x = tone(0.2, 512);
  EXPECT_LE(rms(bandpass(x).samples), 0.1 * rms(x.samples));
}

TEST(Bandpass, DesignResponseAtProbeFrequencies) {
  const auto& h = bandpass_kernel(30.0);
  EXPECT_EQ(h.size(), 127u);
  EXPECT_NEAR(kernel_gain(h, 2.0, 30.0), 1.0, 0.01);
  EXPECT_LT(kernel_gain(h, 0.2, 30.0), 0.01);
  EXPECT_LT(kernel_gain(h, 6.0, 30.0), 0.01);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_DOUBLE_EQ(h[i], h[h.size() - 1 - i]);
}

TEST(Bandpass, ZeroInZeroOut) {
  Waveform z{std::vector<double>(200, 0.0), 30.0};
  for (double v : bandpass(z).samples) EXPECT_EQ(v, 0.0);
}

TEST(Bandpass, ShortClipRejected) {
  EXPECT_THROW(bandpass(tone(1.0, 100)), std::invalid_argument);
  EXPECT_THROW(bandpass(Waveform{std::vector<double>(300), 8.0}), std::invalid_argument);
}

TEST(Bandpass, Linear) {
  auto x = noise(300, 1), y = noise(300, 2);
  Waveform c{std::vector<double>(300), 30.0};
  for (std::size_t i = 0; i < 300; ++i) c.samples[i] = 2.5 * x[i] - 0.75 * y[i];
  auto bx = bandpass(x), by = bandpass(y), bc = bandpass(c);
  for (std::size_t i = 0; i < 300; ++i) EXPECT_NEAR(bc[i], 2.5 * bx[i] - 0.75 * by[i], 1e-10);
}

TEST(Psd, SingleTonePeak) {
  auto sp = psd(tone(1.5, 512));
  const auto k = std::max_element(sp.power.begin(), sp.power.end()) - sp.power.begin();
  EXPECT_NEAR(sp.freqs[static_cast<std::size_t>(k)], 1.5, 30.0 / static_cast<double>(default_nfft(512)));
  double s = 0.0;
  for (double p : sp.power) s += p;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Psd, WhiteNoiseFlat) {
  // Without zero padding each bin is an independent estimate.
  for (unsigned seed = 0; seed < 10; ++seed) {
    auto sp = psd(noise(512, 100 + seed), Band{}, 512);
    EXPECT_LT(*std::max_element(sp.power.begin(), sp.power.end()), 0.2);
  }
}

TEST(Psd, TwoEqualTones) {
  auto a = tone(1.0, 512), b = tone(2.0, 512);
  for (std::size_t i = 0; i < 512; ++i) a.samples[i] += b.samples[i];
  auto sp = psd(a);
  double p1 = 0, p2 = 0;
  for (std::size_t i = 0; i < sp.freqs.size(); ++i) {
    if (std::fabs(sp.freqs[i] - 1.0) < 0.03) p1 = std::max(p1, sp.power[i]);
    if (std::fabs(sp.freqs[i] - 2.0) < 0.03) p2 = std::max(p2, sp.power[i]);
  }
  EXPECT_GE(p1 / p2, 0.8);
  EXPECT_LE(p1 / p2, 1.25);
}

TEST(Psd, ShortOrEmptyBandRejected) {
  EXPECT_THROW(psd(tone(1.0, 32)), std::invalid_argument);
  EXPECT_THROW(psd(tone(1.0, 128), Band{20.0, 25.0}), std::invalid_argument);
}

TEST(EstimateHr, ToneAt72) {
  EXPECT_NEAR(estimate_hr(tone(1.2, 300)), 72.0, bin_width(300));
}

TEST(EstimateHr, ZeroSignalReported) {
  EXPECT_THROW(estimate_hr(Waveform{std::vector<double>(300, 0.0), 30.0}), DegenerateSignal);
}

TEST(Pearson, SelfAndNegation) {
  auto a = noise(100, 3);
  auto b = a;
  for (auto& v : b.samples) v = -v;
  EXPECT_NEAR(pearson(a, a), 1.0, 1e-15);
  EXPECT_NEAR(pearson(a, b), -1.0, 1e-15);
}

TEST(Pearson, QuadratureTones) {
  EXPECT_LT(std::fabs(pearson(tone(1.0, 300), tone(1.0, 300, 30.0, kPi / 2))), 0.05);
}

TEST(Pearson, ZeroVarianceRejected) {
  EXPECT_THROW(pearson(Waveform{std::vector<double>(50, 3.0), 30.0}, noise(50, 4)), DegenerateSignal);
}

TEST(Pearson, AffineInvariant) {
  auto a = noise(200, 5), b = noise(200, 6);
  for (std::size_t i = 0; i < 200; ++i) a.samples[i] += 0.5 * b.samples[i];
  auto c = b;
  for (auto& v : c.samples) v = 3.7 * v - 12.0;
  EXPECT_NEAR(pearson(a, c), pearson(a, b), 1e-10);
}

TEST(Transform, Identities) {
  auto s = noise(64, 7);
  for (double v : transform_signal(s, TransformSpec::amplitude(0.0)).samples) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(transform_signal(s, TransformSpec::phase(0)).samples, s.samples);
  EXPECT_EQ(transform_signal(s, TransformSpec::frequency(1.0)).samples, s.samples);
}

TEST(Transform, PhaseComposes) {
  auto s = noise(64, 8);
  for (int t1 : {-20, -3, 0, 5, 30})
    for (int t2 : {-40, -1, 7, 33}) {
      auto a = transform_signal(transform_signal(s, TransformSpec::phase(t1)), TransformSpec::phase(t2));
      const int tot = t1 + t2;
      const int wrapped = ((tot % 64) + 64) % 64;
      EXPECT_EQ(a.samples, transform_signal(s, TransformSpec::phase(wrapped)).samples);
    }
}

TEST(Transform, FrequencyDoublesHr) {
  auto y = transform_signal(tone(1.0, 300), TransformSpec::frequency(2.0));
  EXPECT_NEAR(estimate_hr(y), 120.0, bin_width(300));
}

TEST(Transform, FrequencyScalesHr) {
  for (double f : {0.9, 1.2})
    for (double rho : {0.8, 1.5, 2.0}) {
      auto s = tone(f, 300);
      const double h0 = estimate_hr(s);
      // Integer-period tiling keeps the tone clean; account for the tiling seam at one extra bin.
      EXPECT_NEAR(estimate_hr(transform_signal(s, TransformSpec::frequency(rho))), rho * h0, 2 * bin_width(300))
          << f << " " << rho;
    }
}

TEST(Transform, CycleAlignedTilingTracksJitteredPulse) {
  // Whole-cycle tiling keeps the resampled pulse free of seam harmonics.
  for (double f : {0.85, 1.1, 1.45})
    for (double rho : {1.5, 2.0}) {
      Waveform s{std::vector<double>(300), 30.0};
      for (std::size_t t = 0; t < 300; ++t) {
        const double ph = 2 * std::numbers::pi * f * static_cast<double>(t) / 30.0;
        s.samples[t] = std::sin(ph) + 0.3 * std::sin(2 * ph - 1.0);
      }
      const double L = cycle_aligned_period(s);
      ASSERT_GT(L, 250.0);
      ASSERT_LE(L, 299.0);
      const double h0 = estimate_hr(s);
      EXPECT_NEAR(estimate_hr(transform_signal(s, TransformSpec::frequency(rho, L))), rho * h0, 1.0) << f << " " << rho;
    }
}

TEST(Transform, OutOfRangeRejected) {
  auto s = noise(64, 9);
  EXPECT_THROW(transform_signal(s, TransformSpec::frequency(0.4)), std::invalid_argument);
  EXPECT_THROW(transform_signal(s, TransformSpec::frequency(3.5)), std::invalid_argument);
  EXPECT_THROW(transform_signal(s, TransformSpec::frequency(1.5, 64.0)), std::invalid_argument);
  EXPECT_THROW(transform_signal(s, TransformSpec::phase(64)), std::invalid_argument);
}

TEST(Entropy, OneHotUniformAndJs) {
  Spectrum d;
  d.freqs.resize(32);
  d.power.assign(32, 0.0);
  d.power[5] = 1.0;
  EXPECT_NEAR(spectral_entropy(d), 0.0, 1e-6);
  Spectrum u = d;
  u.power.assign(32, 1.0 / 32);
  EXPECT_NEAR(spectral_entropy(u), std::log(32.0), 1e-6);
  EXPECT_NEAR(js_divergence(u, u), 0.0, 1e-15);
  EXPECT_NEAR(js_divergence(d, u), js_divergence(u, d), 1e-15);
  Spectrum e = d;
  e.power.assign(32, 0.0);
  e.power[9] = 1.0;
  EXPECT_NEAR(js_divergence(d, e), std::log(2.0), 1e-6);
  Spectrum other = u;
  other.freqs.resize(16);
  EXPECT_THROW(js_divergence(u, other), std::invalid_argument);
}

TEST(Csv, RoundTrip) {
  auto w = noise(50, 10, 25.0);
  const std::string path = ::testing::TempDir() + "/wave.csv";
  write_waveform_csv(w, path);
  auto r = read_waveform_csv(path);
  EXPECT_EQ(r.samples, w.samples);
  EXPECT_EQ(r.fs, 25.0);
}

// Differentiable versions agree with the plain ones and pass gradient checks.

TEST(DiffSignal, MatchesPlainImplementations) {
  auto x = noise(160, 11);
  auto y = noise(160, 12);
  auto tx = pcp::ad::Tensor::from({160}, x.samples);
  auto ty = pcp::ad::Tensor::from({160}, y.samples);
  auto bp = diff::bandpass(tx, 30.0);
  auto ref = bandpass(x);
  for (std::size_t i = 0; i < 160; ++i) EXPECT_NEAR(bp[i], ref[i], 1e-12);
  EXPECT_NEAR(diff::pearson(tx, ty).item(), pearson(x, y), 1e-12);
  for (auto spec : {TransformSpec::phase(-7), TransformSpec::frequency(1.7), TransformSpec::frequency(1.4, 50.5), TransformSpec::amplitude(1.3)}) {
    EXPECT_EQ(diff::transform(tx, spec).data(), transform_signal(x, spec).samples);
  }
  auto p = diff::psd(tx, 30.0, Band{}, 160);
  auto sp = psd(x, Band{}, 160);
  ASSERT_EQ(p.size(), sp.power.size());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], sp.power[i], 1e-12);
  EXPECT_NEAR(diff::spectral_entropy(p).item(), spectral_entropy(sp), 1e-12);
}

TEST(DiffSignal, GradientsMatchFiniteDifferences) {
  using pcp::ad::Tensor;
  auto y = pcp::ad::Tensor::from({128}, noise(128, 13).samples);
  auto x0 = pcp::ad::Tensor::from({128}, noise(128, 14).samples);
  std::vector<std::size_t> coords = {0, 17, 63, 64, 100, 127};
  auto f_pear = [&](const Tensor& x) { return diff::pearson(diff::bandpass(x, 30.0), y); };
  EXPECT_LT(pcp::ad::grad_check(f_pear, x0, 1e-4, coords), 1e-4);
  auto f_wave = [&](const Tensor& x) {
    auto h1 = diff::psd(pcp::ad::slice(x, 0, 0, 64), 30.0);
    auto h2 = diff::psd(pcp::ad::slice(x, 0, 64, 64), 30.0);
    return pcp::ad::add(diff::spectral_entropy(diff::psd(x, 30.0)), diff::js_divergence(h1, h2));
  };
  EXPECT_LT(pcp::ad::grad_check(f_wave, x0, 1e-4, coords), 1e-4);
  auto f_tr = [&](const Tensor& x) {
    return pcp::ad::sum(pcp::ad::mul(diff::transform(diff::transform(x, TransformSpec::frequency(1.3)),
                                                     TransformSpec::phase(9)), y));
  };
  EXPECT_LT(pcp::ad::grad_check(f_tr, x0, 1e-4, coords), 1e-4);
}
