#pragma once

#include <random>
#include <vector>

#include "pcp/editor/generator.hpp"
#include "pcp/trainer/train.hpp"

namespace pcp::trainer {

// Differentiable E* response to an edited clip tensor [T, H*W*3].
inline Tensor frozen_response(const extractor::PhysNet& e_star, const Tensor& x, const synth::VideoClip& like) {
  const Tensor y = e_star.forward(extractor::temporal_normalize(x), like.H, like.W, std::vector<float>(like.H * like.W, 1.0f));
  return signal::diff::bandpass(ad::sub(y, ad::mean(y)), like.fps);
}

// Per-clip editor objective. The generator is conditioned on the unit-RMS
// band-limited ground truth; responses are read through the frozen E* and
// divided by its response to the unedited clip.
inline std::pair<Tensor, LossBreakdown> stage2_clip_loss(const editor::EditorGenerator& gen, const extractor::PhysNet& e_star,
                                                         const synth::VideoClip& X, const std::vector<double>& s_gt,
                                                         const TrainConfig& cfg, std::mt19937_64& rng) {
  if (!X.has_mask()) throw std::invalid_argument("stage2: clip carries no skin mask");
  const double fs = X.fps;
  LossBreakdown b;
  Tensor total = Tensor::scalar(0.0);
  auto add = [&](double& slot, const Tensor& term, double w) {
    const Tensor t = ad::scale(term, w);
    slot = t.item();
    total = ad::add(total, t);
  };
  const auto u = unit_hypothesis(s_gt, fs);
  const auto iv = sample_interventions(cfg, rng);
  if (u.empty()) return {total, b};
  const auto m = editor::compute_psm(X, X.mask, signal::Waveform{u, fs});
  const Tensor x0 = extractor::clip_tensor(X);

  double k_e = 1.0;
  synth::VideoClip X_nul;
  {
    ad::NoGradGuard ng;
    k_e = std::max(signal::rms(frozen_response(e_star, x0, X).data()), 1e-8);
    X_nul = editor::tensor_to_clip(editor::learned_edit_tensor(X, u, -1.0, gen, m), X);
  }
  auto response = [&](const Tensor& xe) { return ad::scale(frozen_response(e_star, xe, X), 1.0 / k_e); };

  const double ks = cfg.edit_strength;
  const Tensor rec = ad::mean(ad::square(ad::sub(editor::learned_edit_tensor(X, u, 0.0, gen, m), x0)));
  add(b.l_recon, ad::scale(rec, 1.0 / (ks * ks)), cfg.w_recon);

  const Tensor nul = response(editor::learned_edit_tensor(X, u, -1.0, gen, m));
  add(b.l_nul, ad::mean(ad::square(nul)), cfg.w_nul);

  std::vector<double> t_amp = u;
  const double k = cfg.amplitude_target == AmplitudeTarget::total_scale ? 1.0 + iv.alpha : iv.alpha;
  for (double& v : t_amp) v *= k;
  add(b.l_equ_amp, equivariance_term(response(editor::learned_edit_tensor(X, u, iv.alpha, gen, m)), t_amp), cfg.w_equ);

  const auto ph = signal::TransformSpec::phase(iv.tau);
  const auto u_ph = signal::transform_signal({u, fs}, ph).samples;
  add(b.l_equ_phase, equivariance_term(response(editor::learned_edit_tensor(X_nul, u_ph, 1.0, gen, m)), u_ph), cfg.w_equ);

  const auto fr = signal::TransformSpec::frequency(iv.rho, signal::cycle_aligned_period({u, fs}));
  const auto u_fr = signal::transform_signal({u, fs}, fr).samples;
  add(b.l_equ_freq, equivariance_term(response(editor::learned_edit_tensor(X_nul, u_fr, 1.0, gen, m)), u_fr), cfg.w_equ);

  b.total = b.sum_terms();
  return {total, b};
}

// Stage II: learned editor against a frozen supervised extractor. E*'s
// parameters receive no update; its gradients are cleared afterwards.
inline TrainReport train_editor(editor::EditorGenerator& gen, extractor::PhysNet& e_star, const std::vector<LabeledClip>& data,
                                const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed * 2749 + 5);
  const std::size_t len = static_cast<std::size_t>(cfg.crop_frames);
  auto clip_loss = [&](std::size_t i, int, EpochStats&) {
    const auto& d = data[i];
    const std::size_t L = std::min(len, d.clip.T);
    const std::size_t s = crop_start(d.clip.T, L, rng);
    const auto X = crop_clip(d.clip, s, L);
    const std::vector<double> gt(d.s_gt.samples.begin() + static_cast<std::ptrdiff_t>(s),
                                 d.s_gt.samples.begin() + static_cast<std::ptrdiff_t>(s + L));
    return stage2_clip_loss(gen, e_star, X, gt, cfg, rng);
  };
  auto rep = run_epochs(gen.params(), data.size(), cfg.stage2_epochs, cfg.editor_learning_rate, cfg, rng, clip_loss, on_epoch);
  e_star.params().zero_grad();
  if (!rep.history.empty()) gen.mark_trained();
  return rep;
}

}  // namespace pcp::trainer
