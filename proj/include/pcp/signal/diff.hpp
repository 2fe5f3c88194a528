#pragma once

// Differentiable counterparts of the waveform operations, for use inside
// training losses. Waveforms are rank-1 tensors of length T.

#include <map>
#include <memory>
#include <numbers>
#include <tuple>

#include "pcp/ad/ops.hpp"
#include "pcp/common/errors.hpp"
#include "pcp/signal/filter.hpp"
#include "pcp/signal/spectrum.hpp"
#include "pcp/signal/transform.hpp"

namespace pcp::signal::diff {

using ad::Tensor;

inline Tensor bandpass(const Tensor& x, double fs) {
  const auto& h = bandpass_kernel(fs);
  if (x.size() < h.size()) {
    throw std::invalid_argument("bandpass: signal of " + std::to_string(x.size()) +
                                " samples is shorter than the filter order " + std::to_string(h.size()));
  }
  return ad::conv1d_fixed(x, h);
}

inline Tensor transform(const Tensor& s, const TransformSpec& spec) {
  const std::size_t n = s.size();
  validate(spec, n);
  switch (spec.kind) {
    case TransformKind::amplitude:
      return ad::scale(s, spec.alpha);
    case TransformKind::phase: {
      const int tau = spec.tau;
      return ad::linear_map(
          "phase_shift", s, s.shape(),
          [n, tau](std::span<const double> x, std::span<double> y) {
            for (std::size_t t = 0; t < n; ++t) y[t] = x[phase_source(t, n, tau)];
          },
          [n, tau](std::span<const double> g, std::span<double> y) {
            for (std::size_t t = 0; t < n; ++t) y[phase_source(t, n, tau)] += g[t];
          });
    }
    case TransformKind::frequency: {
      const double rho = spec.rho, period = spec.period;
      return ad::linear_map(
          "freq_scale", s, s.shape(),
          [n, rho, period](std::span<const double> x, std::span<double> y) {
            for (std::size_t t = 0; t < n; ++t) {
              const auto tap = frequency_tap(t, n, rho, period);
              y[t] = (1.0 - tap.w1) * x[tap.i0] + tap.w1 * x[tap.i1];
            }
          },
          [n, rho, period](std::span<const double> g, std::span<double> y) {
            for (std::size_t t = 0; t < n; ++t) {
              const auto tap = frequency_tap(t, n, rho, period);
              y[tap.i0] += (1.0 - tap.w1) * g[t];
              y[tap.i1] += tap.w1 * g[t];
            }
          });
    }
  }
  throw std::logic_error("unknown transform kind");
}

// Pearson correlation as a scalar tensor; DegenerateSignal on zero variance.
inline Tensor pearson(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ad::ShapeError("pearson: lengths differ");
  std::ignore = signal::pearson(a.data(), b.data());  // degeneracy check
  const Tensor da = ad::sub(a, ad::mean(a));
  const Tensor db = ad::sub(b, ad::mean(b));
  const Tensor num = ad::sum(ad::mul(da, db));
  const Tensor den = ad::sqrt(ad::mul(ad::sum(ad::square(da)), ad::sum(ad::square(db))));
  return ad::div(num, den);
}

inline Tensor mean_abs_diff(const Tensor& a, const Tensor& b) { return ad::mean(ad::abs(ad::sub(a, b))); }

namespace detail {

struct DftBasis {
  Tensor cos_m, sin_m;  // [T, nbins]
  std::vector<double> freqs;
};

inline const DftBasis& dft_basis(std::size_t n, double fs, std::size_t nfft, Band band) {
  using Key = std::tuple<std::size_t, double, std::size_t, double, double>;
  thread_local std::map<Key, DftBasis> cache;
  const Key key{n, fs, nfft, band.low, band.high};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const auto bins = band_bins(fs, nfft, band);
  if (bins.empty()) throw std::invalid_argument("psd: no frequency bins inside the band");
  const auto win = hann(n);
  std::vector<double> c(n * bins.size()), s(n * bins.size());
  DftBasis b;
  for (std::size_t j = 0; j < bins.size(); ++j) {
    b.freqs.push_back(static_cast<double>(bins[j]) * fs / static_cast<double>(nfft));
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(bins[j] * i % nfft) / static_cast<double>(nfft);
      c[i * bins.size() + j] = win[i] * std::cos(ang);
      s[i * bins.size() + j] = win[i] * std::sin(ang);
    }
  }
  b.cos_m = Tensor::from({n, bins.size()}, std::move(c));
  b.sin_m = Tensor::from({n, bins.size()}, std::move(s));
  return cache.emplace(key, std::move(b)).first->second;
}

}  // namespace detail

// Normalised in-band Hann periodogram; nfft = 0 means no zero padding.
inline Tensor psd(const Tensor& x, double fs, Band band = {}, std::size_t nfft = 0) {
  const std::size_t n = x.size();
  if (n < 64) throw std::invalid_argument("psd: need at least 64 samples, got " + std::to_string(n));
  if (nfft == 0) nfft = n;
  const auto& B = detail::dft_basis(n, fs, nfft, band);
  const Tensor xc = ad::reshape(ad::sub(x, ad::mean(x)), {1, n});
  const Tensor p = ad::add(ad::square(ad::matmul(xc, B.cos_m)), ad::square(ad::matmul(xc, B.sin_m)));
  if (!(ad::sum(p).item() > 0.0)) throw DegenerateSignal("psd: no in-band power");
  return ad::reshape(ad::div(p, ad::sum(p)), {p.size()});
}

inline Tensor spectral_entropy(const Tensor& p) {
  return ad::neg(ad::sum(ad::mul(p, ad::log(ad::add_scalar(p, kLogEps)))));
}

inline Tensor js_divergence(const Tensor& p, const Tensor& q) {
  if (p.size() != q.size()) throw std::invalid_argument("js_divergence: spectra on different bins");
  const Tensor m = ad::scale(ad::add(p, q), 0.5);
  const Tensor lm = ad::log(ad::add_scalar(m, kLogEps));
  const Tensor kp = ad::sum(ad::mul(p, ad::sub(ad::log(ad::add_scalar(p, kLogEps)), lm)));
  const Tensor kq = ad::sum(ad::mul(q, ad::sub(ad::log(ad::add_scalar(q, kLogEps)), lm)));
  return ad::scale(ad::add(kp, kq), 0.5);
}

}  // namespace pcp::signal::diff
