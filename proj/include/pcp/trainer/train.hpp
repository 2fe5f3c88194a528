#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "pcp/ad/optim.hpp"
#include "pcp/editor/backend.hpp"
#include "pcp/extractor/classical.hpp"
#include "pcp/extractor/network.hpp"
#include "pcp/signal/diff.hpp"
#include "pcp/signal/spectrum.hpp"
#include "pcp/synth/generator.hpp"
#include "pcp/trainer/config.hpp"
#include "pcp/trainer/losses.hpp"
#include "pcp/trainer/nulling.hpp"

namespace pcp::trainer {

struct LabeledClip {
  synth::VideoClip clip;
  signal::Waveform s_gt;
};

inline synth::VideoClip crop_clip(const synth::VideoClip& c, std::size_t start, std::size_t len) {
  if (start + len > c.T) throw std::invalid_argument("crop outside clip");
  synth::VideoClip out = c;
  out.T = len;
  const std::size_t n = c.frame_size();
  out.frames.assign(c.frames.begin() + static_cast<std::ptrdiff_t>(start * n),
                    c.frames.begin() + static_cast<std::ptrdiff_t>((start + len) * n));
  return out;
}

inline std::size_t crop_start(std::size_t T, std::size_t len, std::mt19937_64& rng) {
  if (T <= len) return 0;
  return std::uniform_int_distribution<std::size_t>(0, T - len)(rng);
}

struct EpochStats {
  int epoch = 0;
  LossBreakdown loss;
  double lr = 0.0;
  double mean_alpha_star = 0.0;
  double mean_residual_ratio = 0.0;
  int degenerate = 0;
  bool warmup = false;
};

struct TrainReport {
  std::vector<EpochStats> history;
  bool diverged = false;
  std::string message;
};

using EpochCallback = std::function<void(const EpochStats&)>;

inline ad::AdamW make_optimizer(ad::ParamSet& params, const TrainConfig& cfg, double lr) {
  ad::AdamW::Options o;
  o.lr = lr;
  o.weight_decay = cfg.weight_decay;
  return ad::AdamW(params, o);
}

inline std::vector<std::vector<double>> snapshot(const ad::ParamSet& ps) {
  std::vector<std::vector<double>> s;
  for (const auto& [n, t] : ps.items()) s.push_back(t.data());
  return s;
}

inline void restore(ad::ParamSet& ps, const std::vector<std::vector<double>>& s) {
  auto& items = ps.items();
  for (std::size_t i = 0; i < items.size(); ++i) items[i].second.mutable_data() = s[i];
}

inline bool finite_breakdown(const LossBreakdown& b) {
  for (double v : b.values())
    if (!std::isfinite(v)) return false;
  return true;
}

// Shared epoch/batch loop. `clip_loss` builds one clip's graph and returns
// its scalar loss plus a breakdown; gradients are averaged over each batch.
template <typename ClipLoss>
TrainReport run_epochs(ad::ParamSet& params, std::size_t n_clips, int epochs, double base_lr, const TrainConfig& cfg,
                       std::mt19937_64& rng, ClipLoss&& clip_loss, const EpochCallback& on_epoch) {
  TrainReport rep;
  if (n_clips == 0) throw std::invalid_argument("training set is empty");
  auto opt = make_optimizer(params, cfg, base_lr);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const long steps_per_epoch = static_cast<long>((n_clips + bs - 1) / bs);
  const long total_steps = steps_per_epoch * epochs;
  auto last_good = snapshot(params);
  std::vector<std::size_t> order(n_clips);
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats st;
    st.epoch = e;
    bool bad = false;
    for (std::size_t b0 = 0; b0 < n_clips && !bad; b0 += bs) {
      const std::size_t b1 = std::min(n_clips, b0 + bs);
      params.zero_grad();
      for (std::size_t i = b0; i < b1; ++i) {
        try {
          auto [loss, br] = clip_loss(order[i], e, st);
          if (!finite_breakdown(br) || !std::isfinite(loss.item())) throw ad::NumericError("non-finite loss");
          ad::backward(ad::scale(loss, 1.0 / static_cast<double>(b1 - b0)));
          st.loss += br;
        } catch (const ad::NumericError& err) {
          rep.diverged = true;
          rep.message = "epoch " + std::to_string(e) + ": " + err.what();
          bad = true;
        }
        ad::reset_graph();
        if (bad) break;
      }
      if (bad) break;
      st.lr = ad::cosine_lr(base_lr, step, total_steps);
      opt.step(st.lr);
      ++step;
    }
    if (bad) {
      restore(params, last_good);
      break;
    }
    const double inv = 1.0 / static_cast<double>(n_clips);
    st.loss = st.loss.scaled(inv);
    st.mean_alpha_star *= inv;
    st.mean_residual_ratio *= inv;
    rep.history.push_back(st);
    last_good = snapshot(params);
    if (on_epoch) on_epoch(st);
  }
  return rep;
}

// Random nuisance for a training crop: illumination flicker or horizontal
// sway at a rate anywhere in the pulse band. Labels are untouched.
inline synth::VideoClip augment_nuisance(const synth::VideoClip& c, double p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double pick = u(rng);
  const double bpm = 40.0 + 110.0 * u(rng), phase = 2.0 * std::numbers::pi * u(rng), amp = u(rng);
  if (pick >= p) return c;
  if (pick < 0.5 * p) return synth::add_nuisance(c, synth::NuisanceSpec::flicker(bpm, 0.005 + 0.025 * amp, phase));
  return synth::add_nuisance(c, synth::NuisanceSpec::motion(bpm, 0.5 + 1.5 * amp, phase));
}

// Stage I: supervised extractor on labelled clips.
inline TrainReport train_stage1(extractor::PhysNet& net, const std::vector<LabeledClip>& data, const TrainConfig& cfg,
                                const EpochCallback& on_epoch = {}) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed * 7919 + 1);
  std::mt19937_64 drop(cfg.seed * 104729 + 2);
  std::mt19937_64 aug(cfg.seed * 4483 + 7);
  const std::size_t len = static_cast<std::size_t>(cfg.crop_frames);
  auto clip_loss = [&](std::size_t i, int, EpochStats&) {
    const auto& d = data[i];
    const std::size_t L = std::min(len, d.clip.T);
    const std::size_t s = crop_start(d.clip.T, L, rng);
    const auto X = augment_nuisance(crop_clip(d.clip, s, L), cfg.nuisance_augment, aug);
    std::vector<double> gt(d.s_gt.samples.begin() + static_cast<std::ptrdiff_t>(s),
                           d.s_gt.samples.begin() + static_cast<std::ptrdiff_t>(s + L));
    const auto gt_bp = signal::bandpass(signal::remove_mean({gt, X.fps})).samples;
    const Tensor loss = supervised_loss(net.forward(X, &drop), gt_bp, X.fps);
    LossBreakdown b;
    b.total = loss.item();
    return std::pair{loss, b};
  };
  return run_epochs(net.params(), data.size(), cfg.stage1_epochs, cfg.learning_rate, cfg, rng, clip_loss, on_epoch);
}

// Per-clip Stage-III objective with its term breakdown. `warmup` selects the
// POS proxy as hypothesis and nulling probe.
struct Stage3Step {
  Tensor total;
  LossBreakdown breakdown;
  NullingResult nulling;
  PreparedHypothesis hypothesis;
  Interventions iv;
};

inline Stage3Step stage3_clip_loss(const extractor::PhysNet& net, const synth::VideoClip& X, const editor::EditorBackend& G,
                                   const TrainConfig& cfg, bool warmup, std::mt19937_64& rng,
                                   std::mt19937_64* dropout_rng, DegenerateCounter* dc = nullptr) {
  namespace sd = signal::diff;
  if (!X.has_mask()) throw std::invalid_argument("stage3: clip carries no skin mask");
  const double fs = X.fps;
  const std::vector<float> full(X.H * X.W, 1.0f);
  Tensor xn;
  {
    ad::NoGradGuard ng;
    xn = extractor::temporal_normalize(extractor::clip_tensor(X));
  }
  auto bp = [fs](const Tensor& s) { return sd::bandpass(ad::sub(s, ad::mean(s)), fs); };
  const Tensor y0 = net.forward(xn, X.H, X.W, full, dropout_rng);
  const Tensor y0_bp = bp(y0);

  // Hypothesis and the quantities it drives.
  std::vector<double> s_ref;
  if (warmup) {
    s_ref = extractor::classical_extract(X, extractor::ClassicalMethod::pos).samples;
  } else {
    s_ref = y0.data();
    const double m = signal::mean(s_ref);
    for (double& v : s_ref) v -= m;
  }
  Stage3Step out;
  out.hypothesis = prepare_hypothesis(X, s_ref, static_cast<std::size_t>(cfg.top_K_cells));
  const auto& H = out.hypothesis;
  out.iv = sample_interventions(cfg, rng);
  const auto& iv = out.iv;

  double g = 1.0;
  if (cfg.scale_free_losses) g = std::max(signal::rms(y0_bp.data()), 1e-8);
  std::vector<double> base;
  if (cfg.scale_free_losses) {
    base = H.unit;
  } else {
    base = signal::bandpass(signal::remove_mean({s_ref, fs})).samples;
  }
  LossBreakdown& b = out.breakdown;
  Tensor total = Tensor::scalar(0.0);
  auto add = [&](double& slot, const Tensor& term, double w) {
    const Tensor t = ad::scale(term, w);
    slot = t.item();
    total = ad::add(total, t);
  };

  if (!H.degenerate) {
    const EnergyProbe probe = warmup ? pos_probe(X.mask) : network_probe(net);
    out.nulling = nulling_search(X, H.oriented, G, H.psm, cfg.nulling_range, probe);
    const double a = -out.nulling.alpha_star;
    auto response = [&](const synth::VideoClip& Xe) {
      return ad::scale(bp(net.forward(Xe, dropout_rng)), 1.0 / g);
    };
    add(b.l_nul, ad::scale(loss_nul(net.forward(out.nulling.X_nul, dropout_rng), fs), 1.0 / (g * g)), cfg.w_nul);

    std::vector<double> t_amp = base;
    const double k = cfg.amplitude_target == AmplitudeTarget::total_scale ? 1.0 + iv.alpha : iv.alpha;
    for (double& v : t_amp) v *= k;
    const auto X_a = G.inject(X, H.psm, H.oriented, iv.alpha * a);
    add(b.l_equ_amp, equivariance_term(response(X_a), t_amp), cfg.w_equ);

    const auto ph = signal::TransformSpec::phase(iv.tau);
    const auto t_ph = signal::transform_signal({base, fs}, ph).samples;
    const auto X_t = G.inject(out.nulling.X_nul, H.psm, signal::transform_signal({H.oriented, fs}, ph).samples, a);
    add(b.l_equ_phase, equivariance_term(response(X_t), t_ph), cfg.w_equ);

    const auto fr = signal::TransformSpec::frequency(iv.rho, signal::cycle_aligned_period({H.unit, fs}));
    const auto t_fr = signal::transform_signal({base, fs}, fr).samples;
    const auto X_r = G.inject(out.nulling.X_nul, H.psm, signal::transform_signal({H.oriented, fs}, fr).samples, a);
    add(b.l_equ_freq, equivariance_term(response(X_r), t_fr), cfg.w_equ);
  } else if (dc) {
    ++dc->count;
  }

  // Spatio-temporal priors on the network's own output.
  add(b.l_forward, consistency_term(y0_bp, Tensor::from({X.T}, H.c_obs.samples), dc), cfg.w_forward);
  const auto cells = editor::top_cells(H.psm, static_cast<std::size_t>(cfg.top_K_cells));
  if (!cells.empty()) {
    std::vector<std::size_t> pick = cells;
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(std::min<std::size_t>(pick.size(), static_cast<std::size_t>(cfg.multiregion_samples)));
    Tensor mr = Tensor::scalar(0.0);
    for (std::size_t c : pick) {
      const Tensor ck = bp(net.forward(xn, X.H, X.W, editor::cell_mask(c, X.H, X.W), dropout_rng));
      mr = ad::add(mr, consistency_term(y0_bp, ck, dc));
    }
    add(b.l_multiregion, ad::scale(mr, 1.0 / static_cast<double>(pick.size())), cfg.w_multiregion);
  }
  const auto L = synth::RegionLayout::for_frame(X.H, X.W);
  const Tensor c_bg = bp(net.forward(xn, X.H, X.W, L.rect_mask(L.background), dropout_rng));
  add(b.l_background, background_term(y0_bp, c_bg, dc), cfg.w_background);
  add(b.l_wave, wave_term(y0_bp, fs, dc), cfg.w_wave);

  b.total = b.sum_terms();
  out.total = total;
  return out;
}

// Stage III: self-supervised extractor on unlabelled clips with a frozen editor.
inline TrainReport train_stage3(extractor::PhysNet& net, const std::vector<synth::VideoClip>& clips,
                                const editor::EditorBackend& G, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed * 6151 + 3);
  std::mt19937_64 drop(cfg.seed * 3571 + 4);
  std::mt19937_64 aug(cfg.seed * 4483 + 6);
  const std::size_t len = static_cast<std::size_t>(cfg.crop_frames);
  auto clip_loss = [&](std::size_t i, int epoch, EpochStats& st) {
    const auto& c = clips[i];
    const std::size_t L = std::min(len, c.T);
    const auto X = augment_nuisance(crop_clip(c, crop_start(c.T, L, rng), L), cfg.nuisance_augment, aug);
    DegenerateCounter dc;
    const bool warm = epoch < cfg.warmup_epochs;
    auto r = stage3_clip_loss(net, X, G, cfg, warm, rng, &drop, &dc);
    st.warmup = warm;
    st.degenerate += dc.count;
    st.mean_alpha_star += r.nulling.alpha_star;
    st.mean_residual_ratio += r.nulling.residual_ratio();
    return std::pair{r.total, r.breakdown};
  };
  return run_epochs(net.params(), clips.size(), cfg.epochs, cfg.learning_rate, cfg, rng, clip_loss, on_epoch);
}

// One row per epoch with every breakdown field.
inline void write_metrics_csv(const TrainReport& rep, const std::string& path) {
  std::ofstream o(path);
  if (!o) throw DataError("cannot write metrics " + path);
  o << "epoch";
  for (const auto& n : LossBreakdown::names()) o << ',' << n;
  o << ",lr,mean_alpha_star,mean_residual_ratio,degenerate,warmup\n";
  o << std::setprecision(17);
  for (const auto& s : rep.history) {
    o << s.epoch;
    for (double v : s.loss.values()) o << ',' << v;
    o << ',' << s.lr << ',' << s.mean_alpha_star << ',' << s.mean_residual_ratio << ',' << s.degenerate << ','
      << (s.warmup ? 1 : 0) << '\n';
  }
}

// Fraction of consecutive 5-epoch windows whose mean total is below the
// previous window's.
inline double decreasing_window_fraction(const std::vector<double>& totals, std::size_t w = 5) {
  if (totals.size() < 2 * w) return 0.0;
  std::vector<double> means;
  for (std::size_t i = 0; i + w <= totals.size(); i += w)
    means.push_back(std::accumulate(totals.begin() + static_cast<std::ptrdiff_t>(i),
                                    totals.begin() + static_cast<std::ptrdiff_t>(i + w), 0.0) /
                    static_cast<double>(w));
  std::size_t ok = 0;
  for (std::size_t i = 1; i < means.size(); ++i) ok += means[i] <= means[i - 1];
  return static_cast<double>(ok) / static_cast<double>(means.size() - 1);
}

}  // namespace pcp::trainer
