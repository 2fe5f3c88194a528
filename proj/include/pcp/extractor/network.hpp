#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcp/ad/checkpoint.hpp"
#include "pcp/ad/ops.hpp"
#include "pcp/ad/optim.hpp"
#include "pcp/signal/filter.hpp"
#include "pcp/synth/clip.hpp"

namespace pcp::extractor {

using ad::Tensor;

struct ExtractorConfig {
  std::size_t token_dim = 32;
  std::size_t num_gtss_blocks = 4;
  std::size_t ssm_state_dim = 8;
  std::size_t conv_kernel = 5;
  std::size_t attention_heads = 2;
  double dropout_rate = 0.1;
  std::size_t stem_channels1 = 8, stem_channels2 = 16;
  std::uint64_t init_seed = 1;

  void validate() const {
    if (token_dim == 0 || ssm_state_dim == 0 || num_gtss_blocks == 0) {
      throw std::invalid_argument("extractor widths must be positive");
    }
    if (conv_kernel % 2 == 0) throw std::invalid_argument("conv_kernel must be odd");
    if (attention_heads == 0 || token_dim % attention_heads) {
      throw std::invalid_argument("token_dim must be divisible by attention_heads");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate outside [0, 1)");
  }
};

inline constexpr std::size_t kStemGrid = 8;  // stem input is pooled to 8x8 cells
inline constexpr double kNormEps = 1e-6;

// Per-column linear detrend and variance normalisation of x [T, P].
inline Tensor temporal_normalize(const Tensor& x) {
  if (x.rank() != 2) throw ad::ShapeError("temporal_normalize expects [T, P], got " + ad::shape_str(x.shape()));
  const std::size_t T = x.dim(0), P = x.dim(1);
  if (T < 16) throw std::invalid_argument("temporal_normalize needs at least 16 frames");
  ad::detail::check_inputs_finite(x, "temporal_normalize");
  const double tm = static_cast<double>(T - 1) / 2.0;
  double tt = 0.0;
  for (std::size_t t = 0; t < T; ++t) tt += (static_cast<double>(t) - tm) * (static_cast<double>(t) - tm);
  const auto& X = x.data();
  // Row-major sweeps keep the column statistics vectorisable.
  std::vector<double> m(P, 0.0), slope(P, 0.0), sigma(P, 0.0), r(T * P), y(T * P);
  for (std::size_t t = 0; t < T; ++t) {
    const double dt = static_cast<double>(t) - tm;
    const double* row = X.data() + t * P;
    for (std::size_t p = 0; p < P; ++p) {
      m[p] += row[p];
      slope[p] += row[p] * dt;
    }
  }
  for (std::size_t p = 0; p < P; ++p) {
    m[p] /= static_cast<double>(T);
    slope[p] /= tt;
  }
  for (std::size_t t = 0; t < T; ++t) {
    const double dt = static_cast<double>(t) - tm;
    const double* row = X.data() + t * P;
    double* rr = r.data() + t * P;
    for (std::size_t p = 0; p < P; ++p) {
      rr[p] = row[p] - m[p] - slope[p] * dt;
      sigma[p] += rr[p] * rr[p];
    }
  }
  std::vector<double> inv(P);
  for (std::size_t p = 0; p < P; ++p) {
    sigma[p] = std::sqrt(sigma[p] / static_cast<double>(T));
    inv[p] = 1.0 / (sigma[p] + kNormEps);
  }
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t p = 0; p < P; ++p) y[t * P + p] = r[t * P + p] * inv[p];
  return ad::detail::make_result(
      "temporal_normalize", x.shape(), std::move(y), {x},
      [r = std::move(r), sigma = std::move(sigma), inv = std::move(inv), T, P, tm, tt](ad::Node& self) {
        ad::Node& in = *self.inputs[0];
        const auto& G = self.grad;
        std::vector<double> k(P, 0.0), gm(P, 0.0), gs(P, 0.0), gr(T * P);
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t p = 0; p < P; ++p) k[p] += G[t * P + p] * r[t * P + p];
        for (std::size_t p = 0; p < P; ++p)
          k[p] = sigma[p] > 0.0 ? k[p] * inv[p] * inv[p] / (sigma[p] * static_cast<double>(T)) : 0.0;
        for (std::size_t t = 0; t < T; ++t) {
          const double dt = static_cast<double>(t) - tm;
          for (std::size_t p = 0; p < P; ++p) {
            const std::size_t i = t * P + p;
            gr[i] = G[i] * inv[p] - k[p] * r[i];
            gm[p] += gr[i];
            gs[p] += gr[i] * dt;
          }
        }
        for (std::size_t p = 0; p < P; ++p) {
          gm[p] /= static_cast<double>(T);
          gs[p] /= tt;
        }
        for (std::size_t t = 0; t < T; ++t) {
          const double dt = static_cast<double>(t) - tm;
          for (std::size_t p = 0; p < P; ++p) in.grad[t * P + p] += gr[t * P + p] - gm[p] - gs[p] * dt;
        }
      });
}

// Clip frames as a [T, H*W*3] tensor.
inline Tensor clip_tensor(const synth::VideoClip& clip) {
  return Tensor::from({clip.T, clip.H * clip.W * 3}, std::vector<double>(clip.frames.begin(), clip.frames.end()));
}

// Masked 8x8 cell average of normalised voxels: [T, H*W*3] -> [3, T, 8, 8].
// Pixels outside the mask contribute zero, as if blanked before the network.
inline Tensor pool_cells(const Tensor& y, std::size_t H, std::size_t W, const std::vector<float>& mask) {
  if (H % kStemGrid || W % kStemGrid) throw std::invalid_argument("frame size must be divisible by 8");
  if (y.rank() != 2 || y.dim(1) != H * W * 3) throw ad::ShapeError("pool_cells: bad input " + ad::shape_str(y.shape()));
  if (mask.size() != H * W) throw std::invalid_argument("pool_cells: mask size does not match frame");
  const std::size_t T = y.dim(0), by = H / kStemGrid, bx = W / kStemGrid;
  const double inv = 1.0 / static_cast<double>(by * bx);
  std::vector<std::size_t> px;
  std::vector<std::size_t> cell;
  for (std::size_t yy = 0; yy < H; ++yy)
    for (std::size_t xx = 0; xx < W; ++xx)
      if (mask[yy * W + xx] > 0.5f) {
        px.push_back(yy * W + xx);
        cell.push_back((yy / by) * kStemGrid + xx / bx);
      }
  const std::size_t G = kStemGrid * kStemGrid, P = H * W * 3;
  return ad::linear_map(
      "pool_cells", y, {3, T, kStemGrid, kStemGrid},
      [=](std::span<const double> in, std::span<double> out) {
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t k = 0; k < px.size(); ++k)
            for (std::size_t c = 0; c < 3; ++c) out[(c * T + t) * G + cell[k]] += inv * in[t * P + px[k] * 3 + c];
      },
      [=](std::span<const double> g, std::span<double> out) {
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t k = 0; k < px.size(); ++k)
            for (std::size_t c = 0; c < 3; ++c) out[t * P + px[k] * 3 + c] += inv * g[(c * T + t) * G + cell[k]];
      });
}

// Z'_t = 2 Z_t - Z_{t-1}, Z'_0 = Z_0, over the leading axis of [T, d].
inline Tensor temporal_difference(const Tensor& z) {
  if (z.rank() != 2 || z.dim(0) < 2) throw ad::ShapeError("temporal_difference expects [T>=2, d]");
  const std::size_t T = z.dim(0), d = z.dim(1);
  return ad::linear_map(
      "temporal_difference", z, z.shape(),
      [=](std::span<const double> x, std::span<double> y) {
        for (std::size_t i = 0; i < d; ++i) y[i] = x[i];
        for (std::size_t t = 1; t < T; ++t)
          for (std::size_t i = 0; i < d; ++i) y[t * d + i] = 2.0 * x[t * d + i] - x[(t - 1) * d + i];
      },
      [=](std::span<const double> g, std::span<double> y) {
        for (std::size_t i = 0; i < d; ++i) y[i] += g[i];
        for (std::size_t t = 1; t < T; ++t)
          for (std::size_t i = 0; i < d; ++i) {
            y[t * d + i] += 2.0 * g[t * d + i];
            y[(t - 1) * d + i] -= g[t * d + i];
          }
      });
}

// Gated temporal state-space block parameters, by name inside a ParamSet.
struct GtssParams {
  Tensor in_w, in_b, conv_w, conv_b, dt_w, dt_b, A_log, B_w, C_w, D, out_w, out_b;
};

// Split -> depthwise temporal conv + SiLU -> selective scan -> gate -> project -> residual.
inline Tensor gtss_forward(const Tensor& z, const GtssParams& p) {
  const std::size_t T = z.dim(0), d = z.dim(1), N = p.A_log.dim(1);
  const Tensor u = ad::add(ad::matmul(z, p.in_w), p.in_b);
  const Tensor x = ad::slice(u, 1, 0, d);
  const Tensor gate = ad::slice(u, 1, d, d);
  const Tensor xc = ad::silu(ad::add(ad::depthwise_conv_time(x, p.conv_w), p.conv_b));
  const Tensor delta = ad::softplus(ad::add(ad::matmul(xc, p.dt_w), p.dt_b));  // [T, d]
  const Tensor A = ad::neg(ad::exp(p.A_log));                                     // [d, N]
  const Tensor Bt = ad::matmul(xc, p.B_w);                                        // [T, N]
  const Tensor Ct = ad::matmul(xc, p.C_w);                                        // [T, N]
  const Tensor decay = ad::reshape(ad::exp(ad::mul(ad::reshape(delta, {T, d, 1}), ad::reshape(A, {1, d, N}))), {T, d * N});
#ifndef NDEBUG
  for (double v : decay.data())
    if (!(v > 0.0 && v < 1.0)) throw ad::NumericError("gtss: discretised transition outside (0, 1)");
#endif
  const Tensor drive = ad::reshape(ad::mul(ad::reshape(ad::mul(delta, xc), {T, d, 1}), ad::reshape(Bt, {T, 1, N})), {T, d * N});
  const Tensor h = ad::reshape(ad::scan(decay, drive), {T, d, N});
  const Tensor y = ad::add(ad::sum_axis(ad::mul(h, ad::reshape(Ct, {T, 1, N})), 2), ad::mul(xc, p.D));
  const Tensor out = ad::add(ad::matmul(ad::mul(y, ad::silu(gate)), p.out_w), p.out_b);
  return ad::add(z, out);
}

struct AttentionParams {
  Tensor q_w, k_w, v_w, o_w, o_b;
};

// Multi-head scaled dot-product self-attention over time, residual added.
// When `weights` is given it receives the per-head [T, T] attention rows.
inline Tensor global_attention(const Tensor& z, const AttentionParams& p, std::size_t heads,
                               std::vector<Tensor>* weights = nullptr) {
  const std::size_t d = z.dim(1), dh = d / heads;
  const Tensor q = ad::matmul(z, p.q_w), k = ad::matmul(z, p.k_w), v = ad::matmul(z, p.v_w);
  std::vector<Tensor> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = ad::slice(q, 1, h * dh, dh), kh = ad::slice(k, 1, h * dh, dh), vh = ad::slice(v, 1, h * dh, dh);
    const Tensor att = ad::softmax(ad::scale(ad::matmul(qh, ad::transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh))));
    if (weights) weights->push_back(att);
    outs.push_back(ad::matmul(att, vh));
  }
  const Tensor cat = heads == 1 ? outs[0] : ad::concat(outs, 1);
  return ad::add(z, ad::add(ad::matmul(cat, p.o_w), p.o_b));
}

// Compact PhysMambaFormer-style extractor.
class PhysNet {
 public:
  PhysNet() : PhysNet(ExtractorConfig{}) {}
  explicit PhysNet(const ExtractorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    init();
  }

  const ExtractorConfig& config() const { return cfg_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

  Tensor& param(const std::string& name) {
    Tensor* t = params_.find(name);
    if (!t) throw std::out_of_range("no parameter " + name);
    return *t;
  }
  const Tensor& param(const std::string& name) const { return const_cast<PhysNet*>(this)->param(name); }

  GtssParams block(std::size_t i) const {
    const std::string b = "gtss" + std::to_string(i) + ".";
    return {param(b + "in_w"), param(b + "in_b"), param(b + "conv_w"), param(b + "conv_b"),
            param(b + "dt_w"), param(b + "dt_b"), param(b + "A_log"),  param(b + "B_w"),
            param(b + "C_w"),  param(b + "D"),    param(b + "out_w"),  param(b + "out_b")};
  }
  AttentionParams attention() const {
    return {param("attn.q_w"), param("attn.k_w"), param("attn.v_w"), param("attn.o_w"), param("attn.o_b")};
  }

  // Stem convolutions on pooled voxels [3, T, 8, 8] -> tokens [T, d].
  Tensor tokenize(const Tensor& cells, std::mt19937_64* dropout_rng = nullptr) const {
    const std::size_t T = cells.dim(1);
    Tensor a = ad::silu(ad::conv3d(cells, param("stem.w1"), param("stem.b1")));
    a = ad::avg_pool2d(a, 2);  // [C1, T, 4, 4]
    a = ad::silu(ad::conv3d(a, param("stem.w2"), param("stem.b2")));
    const std::size_t flat = a.dim(0) * a.dim(2) * a.dim(3);
    a = ad::reshape(ad::permute(a, {1, 0, 2, 3}), {T, flat});
    Tensor z = ad::add(ad::matmul(a, param("tok.w")), param("tok.b"));
    if (dropout_rng && cfg_.dropout_rate > 0.0) {
      std::bernoulli_distribution keep(1.0 - cfg_.dropout_rate);
      std::vector<double> m(z.size());
      for (double& v : m) v = keep(*dropout_rng) ? 1.0 / (1.0 - cfg_.dropout_rate) : 0.0;
      z = ad::mul(z, Tensor::from(z.shape(), std::move(m)));
    }
    return z;
  }

  // Raw per-frame output [T] from pooled voxels. Dropout is active only when
  // an rng is supplied.
  Tensor forward_cells(const Tensor& cells, std::mt19937_64* dropout_rng = nullptr) const {
    Tensor z = temporal_difference(tokenize(cells, dropout_rng));
    for (std::size_t i = 0; i < cfg_.num_gtss_blocks; ++i) z = gtss_forward(z, block(i));
    z = global_attention(z, attention(), cfg_.attention_heads);
    const Tensor s = ad::add(ad::matmul(z, param("head.w")), param("head.b"));
    return ad::reshape(s, {z.dim(0)});
  }

  Tensor forward(const Tensor& normalized, std::size_t H, std::size_t W, const std::vector<float>& mask,
                 std::mt19937_64* dropout_rng = nullptr) const {
    return forward_cells(pool_cells(normalized, H, W, mask), dropout_rng);
  }

  Tensor forward(const synth::VideoClip& clip, std::mt19937_64* dropout_rng = nullptr) const {
    return forward(temporal_normalize(clip_tensor(clip)), clip.H, clip.W,
                   std::vector<float>(clip.H * clip.W, 1.0f), dropout_rng);
  }

  // Zeroes pixels outside the region before the forward pass.
  Tensor masked_forward(const synth::VideoClip& clip, const std::vector<float>& region) const {
    check_region(region, clip.H * clip.W);
    return forward(temporal_normalize(clip_tensor(clip)), clip.H, clip.W, region);
  }

  // Inference: no graph, no dropout, band-passed when long enough.
  signal::Waveform extract(const synth::VideoClip& clip) const {
    ad::NoGradGuard ng;
    return finish(forward(clip).data(), clip.fps);
  }
  signal::Waveform masked_extract(const synth::VideoClip& clip, const std::vector<float>& region) const {
    ad::NoGradGuard ng;
    return finish(masked_forward(clip, region).data(), clip.fps);
  }

  static void check_region(const std::vector<float>& region, std::size_t n) {
    if (region.size() != n) throw std::invalid_argument("region mask size does not match frame");
    for (float v : region)
      if (v > 0.5f) return;
    throw std::invalid_argument("masked_extract: empty region");
  }

  void save(const std::string& path, const std::string& kind = "extractor") const {
    std::vector<ad::NamedArray> arrays;
    const std::vector<double> meta = {static_cast<double>(cfg_.token_dim), static_cast<double>(cfg_.num_gtss_blocks),
                                      static_cast<double>(cfg_.ssm_state_dim), static_cast<double>(cfg_.conv_kernel),
                                      static_cast<double>(cfg_.attention_heads), cfg_.dropout_rate,
                                      static_cast<double>(cfg_.stem_channels1), static_cast<double>(cfg_.stem_channels2)};
    arrays.push_back({"meta." + kind, {meta.size()}, meta});
    for (const auto& [n, t] : params_.items()) arrays.push_back({n, t.shape(), t.data()});
    ad::write_weights(path, arrays);
  }

  static PhysNet load(const std::string& path, const std::string& kind = "extractor") {
    const auto arrays = ad::read_weights(path);
    const auto& meta = ad::find_array(arrays, "meta." + kind, path);
    if (meta.values.size() != 8) throw DataError(path + ": malformed extractor metadata");
    ExtractorConfig cfg;
    cfg.token_dim = static_cast<std::size_t>(meta.values[0]);
    cfg.num_gtss_blocks = static_cast<std::size_t>(meta.values[1]);
    cfg.ssm_state_dim = static_cast<std::size_t>(meta.values[2]);
    cfg.conv_kernel = static_cast<std::size_t>(meta.values[3]);
    cfg.attention_heads = static_cast<std::size_t>(meta.values[4]);
    cfg.dropout_rate = meta.values[5];
    cfg.stem_channels1 = static_cast<std::size_t>(meta.values[6]);
    cfg.stem_channels2 = static_cast<std::size_t>(meta.values[7]);
    PhysNet net(cfg);
    for (auto& [n, t] : net.params_.items()) {
      const auto& a = ad::find_array(arrays, n, path);
      if (a.shape != t.shape()) throw DataError(path + ": shape mismatch for " + n);
      t.mutable_data() = a.values;
    }
    return net;
  }

  // Copies parameter values from another network of the same shape.
  void copy_from(const PhysNet& other) {
    auto& mine = params_.items();
    const auto& theirs = other.params_.items();
    if (mine.size() != theirs.size()) throw std::invalid_argument("parameter sets differ");
    for (std::size_t i = 0; i < mine.size(); ++i) mine[i].second.mutable_data() = theirs[i].second.data();
  }

 private:
  static signal::Waveform finish(std::vector<double> raw, double fs) {
    signal::Waveform w = signal::remove_mean({std::move(raw), fs});
    if (w.size() >= signal::kFirTaps) w = signal::bandpass(w);
    return w;
  }

  void init() {
    std::mt19937_64 rng(cfg_.init_seed * 0x9E3779B97F4A7C15ULL + 3);
    auto uniform = [&](ad::Shape s, double a) {
      std::uniform_real_distribution<double> u(-a, a);
      std::vector<double> v(ad::numel(s));
      for (double& x : v) x = u(rng);
      return Tensor::from(std::move(s), std::move(v));
    };
    auto fan = [](double n) { return 1.0 / std::sqrt(n); };
    const std::size_t d = cfg_.token_dim, N = cfg_.ssm_state_dim, K = cfg_.conv_kernel;
    const std::size_t c1 = cfg_.stem_channels1, c2 = cfg_.stem_channels2;
    params_.add("stem.w1", uniform({c1, 3, 3, 3, 3}, fan(81.0)));
    params_.add("stem.b1", Tensor::zeros({c1}));
    params_.add("stem.w2", uniform({c2, c1, 3, 3, 3}, fan(27.0 * static_cast<double>(c1))));
    params_.add("stem.b2", Tensor::zeros({c2}));
    params_.add("tok.w", uniform({c2 * 16, d}, fan(static_cast<double>(c2 * 16))));
    params_.add("tok.b", Tensor::zeros({d}));
    for (std::size_t i = 0; i < cfg_.num_gtss_blocks; ++i) {
      const std::string b = "gtss" + std::to_string(i) + ".";
      params_.add(b + "in_w", uniform({d, 2 * d}, fan(static_cast<double>(d))));
      params_.add(b + "in_b", Tensor::zeros({2 * d}));
      params_.add(b + "conv_w", uniform({K, d}, fan(static_cast<double>(K))));
      params_.add(b + "conv_b", Tensor::zeros({d}));
      params_.add(b + "dt_w", uniform({d, d}, 0.1 * fan(static_cast<double>(d))));
      // Step sizes spread log-uniformly over [0.01, 0.3].
      std::vector<double> dtb(d);
      for (std::size_t c = 0; c < d; ++c) {
        const double dt = 0.01 * std::pow(30.0, static_cast<double>(c) / static_cast<double>(std::max<std::size_t>(1, d - 1)));
        dtb[c] = std::log(std::expm1(dt));
      }
      params_.add(b + "dt_b", Tensor::from({d}, dtb));
      std::vector<double> alog(d * N);
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t n = 0; n < N; ++n) alog[c * N + n] = std::log(static_cast<double>(n + 1));
      params_.add(b + "A_log", Tensor::from({d, N}, alog));
      params_.add(b + "B_w", uniform({d, N}, fan(static_cast<double>(d))));
      params_.add(b + "C_w", uniform({d, N}, fan(static_cast<double>(d))));
      params_.add(b + "D", Tensor::full({d}, 1.0));
      params_.add(b + "out_w", uniform({d, d}, fan(static_cast<double>(d))));
      params_.add(b + "out_b", Tensor::zeros({d}));
    }
    for (const char* n : {"attn.q_w", "attn.k_w", "attn.v_w", "attn.o_w"}) params_.add(n, uniform({d, d}, fan(static_cast<double>(d))));
    params_.add("attn.o_b", Tensor::zeros({d}));
    params_.add("head.w", uniform({d, 1}, 0.1 * fan(static_cast<double>(d))));
    params_.add("head.b", Tensor::zeros({1}));
  }

  ExtractorConfig cfg_;
  ad::ParamSet params_;
};

}  // namespace pcp::extractor
