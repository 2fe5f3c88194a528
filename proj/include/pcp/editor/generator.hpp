#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcp/ad/checkpoint.hpp"
#include "pcp/ad/ops.hpp"
#include "pcp/ad/optim.hpp"
#include "pcp/editor/backend.hpp"
#include "pcp/editor/chroma.hpp"
#include "pcp/editor/psm.hpp"
#include "pcp/editor/pyramid.hpp"

namespace pcp::editor {

using ad::Tensor;

// One axis of the low-base-to-frame map: column i is the footprint of a unit
// change in low-base row (or column) i after reconstruction.
inline std::vector<double> expand_axis(std::size_t lo, std::size_t levels) {
  const std::size_t hi = lo << levels;
  std::vector<double> E(hi * lo);
  for (std::size_t i = 0; i < lo; ++i) {
    Image e(lo, 2);
    for (std::size_t x = 0; x < 2; ++x)
      for (std::size_t c = 0; c < 3; ++c) e.at(i, x, c) = 1.0;
    const Image up = expand_levels(e, levels);
    for (std::size_t y = 0; y < hi; ++y) E[y * lo + i] = up.at(y, 0, 0);
  }
  return E;
}

// Differentiable low-base change [T, h*w*3] -> full-resolution frame change
// [T, H*W*3], identical to pyramid reconstruction of a low-base edit.
inline Tensor upsample_low_base(const Tensor& dc, std::size_t h, std::size_t w, std::size_t levels = kPyramidLevels - 1) {
  if (dc.rank() != 2 || dc.dim(1) != h * w * 3) throw ad::ShapeError("upsample_low_base: bad shape " + ad::shape_str(dc.shape()));
  const std::size_t T = dc.dim(0), H = h << levels, W = w << levels;
  const auto Ey = expand_axis(h, levels), Ex = expand_axis(w, levels);
  return ad::linear_map(
      "upsample_low_base", dc, {T, H * W * 3},
      [=](std::span<const double> in, std::span<double> out) {
        std::vector<double> tmp(H * w * 3);
        for (std::size_t t = 0; t < T; ++t) {
          const double* a = in.data() + t * h * w * 3;
          std::fill(tmp.begin(), tmp.end(), 0.0);
          for (std::size_t Y = 0; Y < H; ++Y)
            for (std::size_t i = 0; i < h; ++i) {
              const double e = Ey[Y * h + i];
              if (e == 0.0) continue;
              for (std::size_t k = 0; k < w * 3; ++k) tmp[Y * w * 3 + k] += e * a[i * w * 3 + k];
            }
          double* o = out.data() + t * H * W * 3;
          for (std::size_t Y = 0; Y < H; ++Y)
            for (std::size_t X = 0; X < W; ++X)
              for (std::size_t j = 0; j < w; ++j) {
                const double e = Ex[X * w + j];
                if (e == 0.0) continue;
                for (std::size_t c = 0; c < 3; ++c) o[(Y * W + X) * 3 + c] += e * tmp[(Y * w + j) * 3 + c];
              }
        }
      },
      [=](std::span<const double> g, std::span<double> out) {
        std::vector<double> tmp(H * w * 3);
        for (std::size_t t = 0; t < T; ++t) {
          const double* gg = g.data() + t * H * W * 3;
          std::fill(tmp.begin(), tmp.end(), 0.0);
          for (std::size_t Y = 0; Y < H; ++Y)
            for (std::size_t X = 0; X < W; ++X)
              for (std::size_t j = 0; j < w; ++j) {
                const double e = Ex[X * w + j];
                if (e == 0.0) continue;
                for (std::size_t c = 0; c < 3; ++c) tmp[(Y * w + j) * 3 + c] += e * gg[(Y * W + X) * 3 + c];
              }
          double* o = out.data() + t * h * w * 3;
          for (std::size_t Y = 0; Y < H; ++Y)
            for (std::size_t i = 0; i < h; ++i) {
              const double e = Ey[Y * h + i];
              if (e == 0.0) continue;
              for (std::size_t k = 0; k < w * 3; ++k) o[i * w * 3 + k] += e * tmp[Y * w * 3 + k];
            }
        }
      });
}

struct GeneratorConfig {
  std::size_t c1 = 16, c2 = 32, film_hidden = 16;
  std::uint64_t init_seed = 1;
};

inline constexpr double kGeneratorOutputScale = 0.01;

// Two-level encoder-decoder with a skip connection over [C (3), alpha*S (1)]
// on the low base, FiLM-modulated decoder, chroma-projected output gated by the
// support map.
class EditorGenerator {
 public:
  EditorGenerator() : EditorGenerator(GeneratorConfig{}) {}
  explicit EditorGenerator(const GeneratorConfig& cfg) : cfg_(cfg) { init(); }

  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }
  const GeneratorConfig& config() const { return cfg_; }
  bool trained() const { return trained_; }
  void mark_trained(bool v = true) { trained_ = v; }

  const Tensor& param(const std::string& n) const {
    const Tensor* t = const_cast<ad::ParamSet&>(params_).find(n);
    if (!t) throw std::out_of_range("no parameter " + n);
    return *t;
  }

  // Low-base change [T, h*w*3] for the carrier [3, T, h, w] and per-frame target.
  Tensor delta(const Tensor& carrier, const std::vector<double>& s, double alpha, const PerturbationSupportMap& m) const {
    const std::size_t T = carrier.dim(1), h = carrier.dim(2), w = carrier.dim(3);
    if (s.size() != T) throw std::invalid_argument("generator: target length does not match clip");
    if (m.h != h || m.w != w) throw std::invalid_argument("generator: support map does not match the low base");
    std::vector<double> sv(T * h * w);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < h * w; ++i) sv[t * h * w + i] = alpha * s[t];
    const Tensor x = ad::concat({carrier, Tensor::from({1, T, h, w}, std::move(sv))}, 0);

    const Tensor hid = ad::silu(ad::add(ad::scale(param("film.w1"), alpha), param("film.b1")));
    const Tensor film = ad::add(ad::matmul(ad::reshape(hid, {1, cfg_.film_hidden}), param("film.w2")), param("film.b2"));
    auto mod = [&](const Tensor& f, std::size_t off, std::size_t c) {
      const Tensor g = ad::reshape(ad::slice(film, 1, off, c), {c, 1, 1, 1});
      const Tensor b = ad::reshape(ad::slice(film, 1, off + c, c), {c, 1, 1, 1});
      return ad::add(ad::mul(f, ad::add_scalar(g, 1.0)), b);
    };

    const Tensor e1 = ad::silu(ad::conv3d(x, param("enc1.w"), param("enc1.b")));
    Tensor e2 = ad::silu(ad::conv3d(ad::avg_pool2d(e1, 2), param("enc2.w"), param("enc2.b")));
    e2 = mod(e2, 0, cfg_.c2);
    const Tensor cat = ad::concat({ad::upsample_nearest2d(e2, 2), e1}, 0);
    Tensor d1 = ad::silu(ad::conv3d(cat, param("dec1.w"), param("dec1.b")));
    d1 = mod(d1, 2 * cfg_.c2, cfg_.c1);
    // Decoder output plus a direct path linear in the target channel.
    const Tensor skip = ad::mul(ad::reshape(param("skip.v"), {3, 1, 1, 1}), ad::slice(x, 0, 3, 1));
    const Tensor o = ad::add(ad::scale(ad::conv3d(d1, param("out.w"), param("out.b")), kGeneratorOutputScale),
                             ad::scale(skip, kReferenceStrength));  // [3, T, h, w]

    // Remove luminance, gate by the support map, lay out as [T, h*w*3].
    const auto& lw = luminance_axis();
    std::vector<double> P(9);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) P[a * 3 + b] = (a == b ? 1.0 : 0.0) - lw[a] * lw[b];
    const Tensor pix = ad::reshape(ad::permute(o, {1, 2, 3, 0}), {T * h * w, 3});
    const Tensor chroma = ad::matmul(pix, Tensor::from({3, 3}, P));
    const Tensor gate = Tensor::from({1, h * w, 1}, m.psm);
    return ad::reshape(ad::mul(ad::reshape(chroma, {T, h * w, 3}), gate), {T, h * w * 3});
  }

  void save(const std::string& path) const {
    std::vector<ad::NamedArray> arrays;
    arrays.push_back({"meta.editor",
                      {5},
                      {static_cast<double>(cfg_.c1), static_cast<double>(cfg_.c2), static_cast<double>(cfg_.film_hidden),
                       trained_ ? 1.0 : 0.0, kGeneratorOutputScale}});
    for (const auto& [n, t] : params_.items()) arrays.push_back({n, t.shape(), t.data()});
    ad::write_weights(path, arrays);
  }

  static EditorGenerator load(const std::string& path) {
    const auto arrays = ad::read_weights(path);
    const auto& meta = ad::find_array(arrays, "meta.editor", path);
    if (meta.values.size() != 5) throw DataError(path + ": malformed editor metadata");
    GeneratorConfig cfg;
    cfg.c1 = static_cast<std::size_t>(meta.values[0]);
    cfg.c2 = static_cast<std::size_t>(meta.values[1]);
    cfg.film_hidden = static_cast<std::size_t>(meta.values[2]);
    EditorGenerator g(cfg);
    g.trained_ = meta.values[3] != 0.0;
    for (auto& [n, t] : g.params_.items()) {
      const auto& a = ad::find_array(arrays, n, path);
      if (a.shape != t.shape()) throw DataError(path + ": shape mismatch for " + n);
      t.mutable_data() = a.values;
    }
    return g;
  }

 private:
  void init() {
    std::mt19937_64 rng(cfg_.init_seed * 0x2545F4914F6CDD1DULL + 11);
    auto uniform = [&](ad::Shape s, double a) {
      std::uniform_real_distribution<double> u(-a, a);
      std::vector<double> v(ad::numel(s));
      for (double& x : v) x = u(rng);
      return Tensor::from(std::move(s), std::move(v));
    };
    auto fan = [](double n) { return 1.0 / std::sqrt(n); };
    const std::size_t c1 = cfg_.c1, c2 = cfg_.c2, fh = cfg_.film_hidden;
    params_.add("enc1.w", uniform({c1, 4, 1, 3, 3}, fan(36.0)));
    params_.add("enc1.b", Tensor::zeros({c1}));
    params_.add("enc2.w", uniform({c2, c1, 1, 3, 3}, fan(9.0 * static_cast<double>(c1))));
    params_.add("enc2.b", Tensor::zeros({c2}));
    params_.add("dec1.w", uniform({c1, c1 + c2, 1, 3, 3}, fan(9.0 * static_cast<double>(c1 + c2))));
    params_.add("dec1.b", Tensor::zeros({c1}));
    params_.add("out.w", uniform({3, c1, 1, 3, 3}, fan(9.0 * static_cast<double>(c1))));
    params_.add("out.b", Tensor::zeros({3}));
    params_.add("skip.v", Tensor::zeros({3}));
    params_.add("film.w1", uniform({fh}, 1.0));
    params_.add("film.b1", uniform({fh}, 0.5));
    params_.add("film.w2", uniform({fh, 2 * (c1 + c2)}, 0.1 * fan(static_cast<double>(fh))));
    params_.add("film.b2", Tensor::zeros({2 * (c1 + c2)}));
  }

  GeneratorConfig cfg_;
  ad::ParamSet params_;
  bool trained_ = false;
};

// Luminance-suppressed low-base carrier of every frame, [3, T, h, w].
inline Tensor carrier_tensor(const synth::VideoClip& clip) {
  check_divisible(clip.H, clip.W, kPyramidLevels);
  const std::size_t h = clip.H >> (kPyramidLevels - 1), w = clip.W >> (kPyramidLevels - 1), T = clip.T;
  std::vector<double> v(3 * T * h * w);
  for (std::size_t t = 0; t < T; ++t) {
    const Image C = luminance_suppress(low_base(frame_image(clip, t)));
    for (std::size_t i = 0; i < h * w; ++i)
      for (std::size_t c = 0; c < 3; ++c) v[(c * T + t) * h * w + i] = C.data[i * 3 + c];
  }
  return Tensor::from({3, T, h, w}, std::move(v));
}

// Edited clip as an unclamped tensor [T, H*W*3]; differentiable in the
// generator parameters.
inline Tensor learned_edit_tensor(const synth::VideoClip& clip, const std::vector<double>& s, double alpha,
                                  const EditorGenerator& gen, const PerturbationSupportMap& m) {
  const Tensor carrier = carrier_tensor(clip);
  const Tensor dc = gen.delta(carrier, s, alpha, m);
  const Tensor up = upsample_low_base(dc, m.h, m.w);
  const Tensor X = Tensor::from({clip.T, clip.frame_size()}, std::vector<double>(clip.frames.begin(), clip.frames.end()));
  return ad::add(X, up);
}

inline synth::VideoClip tensor_to_clip(const Tensor& x, const synth::VideoClip& like) {
  synth::VideoClip out = like;
  for (std::size_t i = 0; i < out.frames.size(); ++i) out.frames[i] = static_cast<float>(std::clamp(x.data()[i], 0.0, 1.0));
  return out;
}

// Learned editor: generator residual on the low base, reconstructed and
// clamped. Refuses to run an untrained generator unless explicitly allowed.
inline synth::VideoClip learned_edit(const synth::VideoClip& clip, const std::vector<double>& s, double alpha,
                                     const EditorGenerator& gen, const PerturbationSupportMap& m, bool allow_untrained = false) {
  if (!gen.trained() && !allow_untrained) throw std::logic_error("learned_edit: editor generator is untrained");
  if (s.size() != clip.T) throw std::invalid_argument("learned_edit: target length does not match clip");
  ad::NoGradGuard ng;
  return tensor_to_clip(learned_edit_tensor(clip, s, alpha, gen, m), clip);
}

class LearnedBackend final : public EditorBackend {
 public:
  explicit LearnedBackend(const EditorGenerator& g) : gen_(g) {
    if (!gen_.trained()) throw std::logic_error("learned editor backend needs a trained generator");
  }
  synth::VideoClip inject(const synth::VideoClip& clip, const PerturbationSupportMap& m, const std::vector<double>& s,
                          double gain) const override {
    return learned_edit(clip, s, gain, gen_, m);
  }
  std::string name() const override { return "learned"; }

 private:
  const EditorGenerator& gen_;
};

}  // namespace pcp::editor
