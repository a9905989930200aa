#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "rgdiff/errors.hpp"
#include "rgdiff/volume.hpp"

namespace rgdiff {

// On-disk container: 16-byte magic/version header, 1 byte dimensionality,
// shape as 64-bit little-endian integers, then samples as 32-bit
// little-endian IEEE floats in row-major order.
inline constexpr std::array<char, 16> kVolumeMagic = {
    'R', 'G', 'D', 'I', 'F', 'F', '-', 'V', 'O', 'L', 'U', 'M', 'E', '-', '1', '\0'};
inline constexpr std::array<char, 16> kParamsMagic = {
    'R', 'G', 'D', 'I', 'F', 'F', '-', 'P', 'A', 'R', 'A', 'M', 'S', '-', '1', '\0'};

namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u16_le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_f32_le(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32_le(out, bits);
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  void expect_magic(const std::array<char, 16>& magic) {
    if (bytes_.size() < 16 || std::memcmp(bytes_.data(), magic.data(), 16) != 0)
      throw ConfigError(origin_ + ": bad magic, not a rgdiff file of the expected kind");
    pos_ = 16;
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint8_t>(bytes_[pos_]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_ + 1])) << 8);
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw ConfigError(origin_ + ": truncated file");
  }

  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed for " + path);
}

inline void encode_volume_body(std::string& out, const ImageVolume& v) {
  out.push_back(static_cast<char>(v.dims()));
  for (std::int64_t d : v.shape()) put_u64_le(out, static_cast<std::uint64_t>(d));
  for (double s : v.data()) put_f32_le(out, static_cast<float>(s));
}

inline ImageVolume decode_volume_body(Reader& r) {
  const int dims = r.u8();
  if (dims < 1 || dims > 3)
    throw ConfigError(r.origin() + ": unsupported dimensionality " + std::to_string(dims));
  Shape shape(dims);
  for (int i = 0; i < dims; ++i) {
    const std::uint64_t d = r.u64();
    if (d == 0 || d > (1ull << 30))
      throw ConfigError(r.origin() + ": implausible dimension " + std::to_string(d));
    shape[i] = static_cast<std::int64_t>(d);
  }
  const std::int64_t n = shape_elements(shape);
  std::vector<double> data(static_cast<std::size_t>(n));
  for (auto& s : data) s = static_cast<double>(r.f32());
  return ImageVolume(std::move(shape), std::move(data));
}

}  // namespace detail

inline std::string encode_volume(const ImageVolume& v) {
  std::string out(kVolumeMagic.begin(), kVolumeMagic.end());
  detail::encode_volume_body(out, v);
  return out;
}

inline void save_volume(const ImageVolume& v, const std::string& path) {
  detail::write_file_bytes(path, encode_volume(v));
}

inline ImageVolume load_volume(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::Reader r(bytes, path);
  r.expect_magic(kVolumeMagic);
  ImageVolume v = detail::decode_volume_body(r);
  if (!r.at_end()) throw ConfigError(path + ": trailing bytes after volume data");
  return v;
}

/// 2-D export as binary PGM, maxval 65535. Values are clamped to [0,1] and
/// scaled; PGM stores the most significant byte first.
inline void save_pgm16(const ImageVolume& v, const std::string& path) {
  if (v.dims() != 2)
    throw std::invalid_argument("save_pgm16: only 2-D volumes, got " +
                                shape_to_string(v.shape()));
  std::string out = "P5\n" + std::to_string(v.width()) + " " +
                    std::to_string(v.height()) + "\n65535\n";
  for (double s : v.data()) {
    const double c = std::clamp(s, 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(c * 65535.0));
    out.push_back(static_cast<char>((q >> 8) & 0xFF));
    out.push_back(static_cast<char>(q & 0xFF));
  }
  detail::write_file_bytes(path, out);
}

/// Named parameter blocks in the same binary container, used for trained
/// denoiser weights.
inline void save_named_volumes(
    const std::vector<std::pair<std::string, ImageVolume>>& blocks,
    const std::string& path) {
  std::string out(kParamsMagic.begin(), kParamsMagic.end());
  detail::put_u32_le(out, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& [name, vol] : blocks) {
    if (name.size() > 0xFFFF)
      throw std::invalid_argument("save_named_volumes: block name too long");
    detail::put_u16_le(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    detail::encode_volume_body(out, vol);
  }
  detail::write_file_bytes(path, out);
}

inline std::vector<std::pair<std::string, ImageVolume>> load_named_volumes(
    const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::Reader r(bytes, path);
  r.expect_magic(kParamsMagic);
  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, ImageVolume>> blocks;
  blocks.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    std::string name = r.str(len);
    blocks.emplace_back(std::move(name), detail::decode_volume_body(r));
  }
  if (!r.at_end()) throw ConfigError(path + ": trailing bytes after parameter blocks");
  return blocks;
}

}  // namespace rgdiff
