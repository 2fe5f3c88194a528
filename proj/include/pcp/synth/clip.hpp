#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pcp/common/errors.hpp"

namespace pcp::synth {

// T x H x W x 3 frames in [0, 1], stored as f32 to match the container.
struct VideoClip {
  std::size_t T = 0, H = 0, W = 0;
  double fps = 30.0;
  std::vector<float> frames;
  std::vector<float> mask;  // H x W skin mask; empty when absent

  VideoClip() = default;
  VideoClip(std::size_t t, std::size_t h, std::size_t w, double f)
      : T(t), H(h), W(w), fps(f), frames(t * h * w * 3, 0.0f) {}

  std::size_t frame_size() const { return H * W * 3; }
  std::size_t index(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
    return ((t * H + y) * W + x) * 3 + c;
  }
  float& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) { return frames[index(t, y, x, c)]; }
  float at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const { return frames[index(t, y, x, c)]; }
  bool has_mask() const { return !mask.empty(); }
  bool same_shape(const VideoClip& o) const { return T == o.T && H == o.H && W == o.W; }

  void clamp() {
    for (float& v : frames) v = std::fmin(1.0f, std::fmax(0.0f, v));
  }
};

struct Rect {
  std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open
  bool contains(std::size_t y, std::size_t x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
  std::size_t area() const { return (y1 - y0) * (x1 - x0); }
};

// Face-patch geometry: an elliptical skin area, named sub-regions inside it,
// and a background strip outside it. Coordinates scale with frame size.
struct RegionLayout {
  std::size_t H = 64, W = 64;
  double cy = 36, cx = 32, ry = 26, rx = 24;
  Rect forehead, cheek_left, cheek_right, background, eyes, mouth;

  static RegionLayout for_frame(std::size_t H, std::size_t W) {
    RegionLayout L;
    L.H = H;
    L.W = W;
    auto sy = [H](double v) { return static_cast<std::size_t>(std::lround(v * static_cast<double>(H) / 64.0)); };
    auto sx = [W](double v) { return static_cast<std::size_t>(std::lround(v * static_cast<double>(W) / 64.0)); };
    L.cy = 36.0 * static_cast<double>(H) / 64.0;
    L.cx = 32.0 * static_cast<double>(W) / 64.0;
    L.ry = 26.0 * static_cast<double>(H) / 64.0;
    L.rx = 24.0 * static_cast<double>(W) / 64.0;
    L.forehead = {sy(14), sx(20), sy(22), sx(44)};
    L.eyes = {sy(24), sx(14), sy(30), sx(50)};
    L.cheek_left = {sy(32), sx(14), sy(44), sx(26)};
    L.cheek_right = {sy(32), sx(38), sy(44), sx(50)};
    L.mouth = {sy(50), sx(24), sy(56), sx(40)};
    L.background = {0, 0, sy(8), W};
    return L;
  }

  bool skin(std::size_t y, std::size_t x) const {
    const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
    const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
  }
  bool core(std::size_t y, std::size_t x) const {
    return forehead.contains(y, x) || cheek_left.contains(y, x) || cheek_right.contains(y, x);
  }
  bool occluder(std::size_t y, std::size_t x) const { return eyes.contains(y, x) || mouth.contains(y, x); }

  std::vector<float> skin_mask() const {
    std::vector<float> m(H * W);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) m[y * W + x] = skin(y, x) ? 1.0f : 0.0f;
    return m;
  }
  std::vector<float> rect_mask(const Rect& r) const {
    std::vector<float> m(H * W, 0.0f);
    for (std::size_t y = r.y0; y < r.y1; ++y)
      for (std::size_t x = r.x0; x < r.x1; ++x) m[y * W + x] = 1.0f;
    return m;
  }
};

// Per-frame mean RGB over pixels with mask > 0.5.
inline std::vector<std::array<double, 3>> region_mean_rgb(const VideoClip& clip, const std::vector<float>& mask) {
  if (mask.size() != clip.H * clip.W) throw std::invalid_argument("mask size does not match frame");
  std::vector<std::size_t> px;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] > 0.5f) px.push_back(i);
  if (px.empty()) throw std::invalid_argument("empty mask");
  std::vector<std::array<double, 3>> out(clip.T);
  const double inv = 1.0 / static_cast<double>(px.size());
  for (std::size_t t = 0; t < clip.T; ++t) {
    const float* f = clip.frames.data() + t * clip.frame_size();
    double s[3] = {0, 0, 0};
    for (std::size_t i : px)
      for (int c = 0; c < 3; ++c) s[c] += f[i * 3 + static_cast<std::size_t>(c)];
    out[t] = {s[0] * inv, s[1] * inv, s[2] * inv};
  }
  return out;
}

// ---- RPCL container --------------------------------------------------------

namespace io_detail {

inline void put_u32(std::ostream& o, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  o.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_f32(std::ostream& o, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(o, v);
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline float get_f32(const unsigned char* p) {
  const std::uint32_t v = get_u32(p);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace io_detail

inline constexpr std::uint32_t kClipVersion = 1;

inline void write_clip(const VideoClip& clip, const std::string& path) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw DataError("cannot write clip " + path);
  o.write("RPCL", 4);
  io_detail::put_u32(o, kClipVersion);
  io_detail::put_u32(o, static_cast<std::uint32_t>(clip.T));
  io_detail::put_u32(o, static_cast<std::uint32_t>(clip.H));
  io_detail::put_u32(o, static_cast<std::uint32_t>(clip.W));
  io_detail::put_f32(o, static_cast<float>(clip.fps));
  const char has_mask = clip.has_mask() ? 1 : 0;
  o.write(&has_mask, 1);
  for (float v : clip.frames) io_detail::put_f32(o, v);
  for (float v : clip.mask) io_detail::put_f32(o, v);
  if (!o) throw DataError("write failed for clip " + path);
}

inline VideoClip read_clip(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open clip " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t header = 4 + 4 * 4 + 4 + 1;
  if (buf.size() < 4 || std::memcmp(buf.data(), "RPCL", 4) != 0) {
    throw DataError(path + ": not a clip container");
  }
  if (buf.size() < header) throw DataError(path + ": malformed header");
  const unsigned char* p = buf.data() + 4;
  const std::uint32_t version = io_detail::get_u32(p);
  VideoClip c;
  c.T = io_detail::get_u32(p + 4);
  c.H = io_detail::get_u32(p + 8);
  c.W = io_detail::get_u32(p + 12);
  const float fps = io_detail::get_f32(p + 16);
  const unsigned char has_mask = p[20];
  if (version != kClipVersion || c.T == 0 || c.H == 0 || c.W == 0 || !(fps > 0.0f) || has_mask > 1 ||
      c.T * c.H * c.W > (std::size_t{1} << 32)) {
    throw DataError(path + ": malformed header");
  }
  c.fps = fps;
  const std::size_t nf = c.T * c.H * c.W * 3;
  const std::size_t nm = has_mask ? c.H * c.W : 0;
  const std::size_t need = header + 4 * (nf + nm);
  if (buf.size() < need) throw DataError(path + ": truncated payload");
  if (buf.size() > need) throw DataError(path + ": malformed header (trailing bytes)");
  c.frames.resize(nf);
  const unsigned char* q = buf.data() + header;
  for (std::size_t i = 0; i < nf; ++i) c.frames[i] = io_detail::get_f32(q + 4 * i);
  q += 4 * nf;
  c.mask.resize(nm);
  for (std::size_t i = 0; i < nm; ++i) c.mask[i] = io_detail::get_f32(q + 4 * i);
  return c;
}

}  // namespace pcp::synth
