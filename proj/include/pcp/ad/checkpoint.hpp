#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pcp/ad/tensor.hpp"
#include "pcp/common/errors.hpp"

namespace pcp::ad {

// RPWT weight container: "RPWT", u32 version, u32 array count, then per
// array: u32 name length, name bytes, u32 rank, u64 dims, f64 values.
// Little-endian throughout.
inline constexpr std::uint32_t kWeightsVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

namespace ckpt_detail {

template <typename T>
void put(std::ostream& o, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  o.write(reinterpret_cast<const char*>(b), sizeof(T));
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& buf, std::string path) : buf_(buf), path_(std::move(path)) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw DataError(path_ + ": truncated weights payload");
  }
  const std::vector<unsigned char>& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace ckpt_detail

inline void write_weights(const std::string& path, const std::vector<NamedArray>& arrays) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw DataError("cannot write weights " + path);
  o.write("RPWT", 4);
  ckpt_detail::put<std::uint32_t>(o, kWeightsVersion);
  ckpt_detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    ckpt_detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(a.name.size()));
    o.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    ckpt_detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(a.shape.size()));
    for (std::size_t d : a.shape) ckpt_detail::put<std::uint64_t>(o, d);
    for (double v : a.values) ckpt_detail::put<double>(o, v);
  }
  if (!o) throw DataError("write failed for weights " + path);
}

inline std::vector<NamedArray> read_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weights " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), "RPWT", 4) != 0) throw DataError(path + ": not a weights file");
  ckpt_detail::Reader r(buf, path);
  r.bytes(4);
  if (r.get<std::uint32_t>() != kWeightsVersion) throw DataError(path + ": unsupported weights version");
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedArray> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray a;
    a.name = r.bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw DataError(path + ": malformed array header for " + a.name);
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      a.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
      n *= a.shape.back();
    }
    if (n > buf.size()) throw DataError(path + ": truncated weights payload");
    a.values.resize(n);
    for (double& v : a.values) v = r.get<double>();
    out.push_back(std::move(a));
  }
  if (!r.done()) throw DataError(path + ": trailing bytes after weights");
  return out;
}

inline const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name,
                                    const std::string& path = "weights") {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw DataError(path + ": missing array '" + name + "'");
}

}  // namespace pcp::ad
