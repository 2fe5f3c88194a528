#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pcp/ad/ops.hpp"
#include "pcp/common/errors.hpp"
#include "pcp/signal/diff.hpp"
#include "pcp/signal/transform.hpp"

namespace pcp::trainer {

using ad::Tensor;

struct LossBreakdown {
  double l_recon = 0.0;  // editor training only
  double l_nul = 0.0;
  double l_equ_amp = 0.0, l_equ_phase = 0.0, l_equ_freq = 0.0;
  double l_forward = 0.0, l_multiregion = 0.0, l_background = 0.0, l_wave = 0.0;
  double total = 0.0;

  double sum_terms() const {
    return l_recon + l_nul + (l_equ_amp + l_equ_phase + l_equ_freq) + (l_forward + l_multiregion + l_background + l_wave);
  }
  LossBreakdown& operator+=(const LossBreakdown& o) {
    l_recon += o.l_recon;
    l_nul += o.l_nul;
    l_equ_amp += o.l_equ_amp;
    l_equ_phase += o.l_equ_phase;
    l_equ_freq += o.l_equ_freq;
    l_forward += o.l_forward;
    l_multiregion += o.l_multiregion;
    l_background += o.l_background;
    l_wave += o.l_wave;
    total += o.total;
    return *this;
  }
  LossBreakdown scaled(double c) const {
    LossBreakdown b = *this;
    for (double* v : {&b.l_recon, &b.l_nul, &b.l_equ_amp, &b.l_equ_phase, &b.l_equ_freq, &b.l_forward, &b.l_multiregion,
                      &b.l_background, &b.l_wave, &b.total})
      *v *= c;
    return b;
  }
  static std::vector<std::string> names() {
    return {"l_recon", "l_nul", "l_equ_amp", "l_equ_phase", "l_equ_freq", "l_forward", "l_multiregion", "l_background", "l_wave", "total"};
  }
  std::vector<double> values() const {
    return {l_recon, l_nul, l_equ_amp, l_equ_phase, l_equ_freq, l_forward, l_multiregion, l_background, l_wave, total};
  }
};

// Mean squared band-passed output.
inline Tensor loss_nul(const Tensor& s_nul, double fs) {
  return ad::mean(ad::square(signal::diff::bandpass(s_nul, fs)));
}

// Mean absolute difference between a band-passed prediction and a fixed target.
inline Tensor equivariance_term(const Tensor& pred_bp, const std::vector<double>& target) {
  return signal::diff::mean_abs_diff(pred_bp, Tensor::from({target.size()}, target));
}

// Counts correlations that fell back to their worst-case value.
struct DegenerateCounter {
  int count = 0;
};

inline Tensor abs_pearson_or(const Tensor& a, const Tensor& b, double fallback, DegenerateCounter* dc) {
  try {
    return ad::abs(signal::diff::pearson(a, b));
  } catch (const DegenerateSignal&) {
    if (dc) ++dc->count;
    return Tensor::scalar(fallback);
  }
}

// 1 - |pearson(s, ref)|.
inline Tensor consistency_term(const Tensor& s_bp, const Tensor& ref, DegenerateCounter* dc = nullptr) {
  return ad::sub(Tensor::scalar(1.0), abs_pearson_or(s_bp, ref, 0.0, dc));
}

// |pearson(s, c_bg)| plus the share of band energy the background carries.
inline Tensor background_term(const Tensor& s_bp, const Tensor& bg_bp, DegenerateCounter* dc = nullptr) {
  const Tensor r = abs_pearson_or(s_bp, bg_bp, 0.0, dc);
  const Tensor eb = ad::mean(ad::square(bg_bp)), es = ad::mean(ad::square(s_bp));
  const Tensor den = ad::add_scalar(ad::add(eb, es), 1e-12);
  return ad::add(r, ad::div(eb, den));
}

// Spectral entropy of the whole signal plus JS divergence between the
// spectra of its two halves.
inline Tensor wave_term(const Tensor& s_bp, double fs, DegenerateCounter* dc = nullptr) {
  const std::size_t n = s_bp.size(), h = n / 2;
  try {
    const Tensor ent = signal::diff::spectral_entropy(signal::diff::psd(s_bp, fs));
    const Tensor a = signal::diff::psd(ad::slice(s_bp, 0, 0, h), fs);
    const Tensor b = signal::diff::psd(ad::slice(s_bp, 0, n - h, h), fs);
    return ad::add(ent, signal::diff::js_divergence(a, b));
  } catch (const DegenerateSignal&) {
    if (dc) ++dc->count;
    return Tensor::scalar(0.0);
  }
}

// Supervised waveform loss: 1 - pearson of band-passed signals plus 0.1 times
// the out-of-band share of the prediction's energy.
inline Tensor supervised_loss(const Tensor& pred, const std::vector<double>& target_bp, double fs) {
  const Tensor pc = ad::sub(pred, ad::mean(pred));
  const Tensor pb = signal::diff::bandpass(pc, fs);
  Tensor r;
  try {
    r = signal::diff::pearson(pb, Tensor::from({target_bp.size()}, target_bp));
  } catch (const DegenerateSignal&) {
    r = Tensor::scalar(0.0);
  }
  const Tensor out = ad::mean(ad::square(ad::sub(pc, pb)));
  const Tensor all = ad::add_scalar(ad::mean(ad::square(pc)), 1e-12);
  return ad::add(ad::sub(Tensor::scalar(1.0), r), ad::scale(ad::div(out, all), 0.1));
}

}  // namespace pcp::trainer
