#pragma once

// Binary checkpoint container.
//
//   "XLAAE001"
//   u64 header length, header (UTF-8 JSON)
//   per array: u32 name length, name, u32 rank, u64 dims[rank], f64 data[]
//   SHA-256 of every preceding byte
//
// Integers and doubles are little-endian. The header always carries
// "format_version" and an "arrays" directory of names and dims.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "xlingmap/embed_io.hpp"
#include "xlingmap/error.hpp"
#include "xlingmap/numerics.hpp"
#include "xlingmap/sha256.hpp"

namespace xlingmap {

inline constexpr std::string_view kCheckpointMagic = "XLAAE001";
inline constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public Error {
 public:
  using Error::Error;
};

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  static NamedArray from_matrix(std::string name, const Matrix& m) {
    return NamedArray{std::move(name), {m.rows(), m.cols()}, m.values()};
  }
  Matrix to_matrix() const {
    if (dims.size() != 2) throw CheckpointError("array '" + name + "' is not a matrix");
    return Matrix(dims[0], dims[1], data);
  }

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

struct CheckpointFile {
  nlohmann::json header = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray& array(std::string_view name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    throw CheckpointError("checkpoint has no array '" + std::string(name) + "'");
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() { return uint_le(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint_le(4)); }
  double f64() { return std::bit_cast<double>(uint_le(8)); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::uint64_t uint_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const CheckpointFile& ckpt) {
  nlohmann::json header = ckpt.header;
  header["format_version"] = kCheckpointFormatVersion;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& a : ckpt.arrays) {
    std::uint64_t expected = 1;
    for (auto d : a.dims) expected *= d;
    if (expected != a.data.size()) throw CheckpointError("array '" + a.name + "' dims do not match its data");
    dir.push_back({{"name", a.name}, {"dims", a.dims}});
  }
  header["arrays"] = dir;
  const std::string header_text = header.dump();

  std::string out(kCheckpointMagic);
  detail::put_u64(out, header_text.size());
  out += header_text;
  for (const auto& a : ckpt.arrays) {
    detail::put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    detail::put_u32(out, static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) detail::put_u64(out, d);
    for (double v : a.data) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  const Digest digest = sha256(out);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return out;
}

inline CheckpointFile decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() + 8 + 32) throw CheckpointError("checkpoint truncated");
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 32);
  const Digest want = sha256(body);
  if (std::memcmp(want.data(), bytes.data() + body.size(), 32) != 0) {
    throw CheckpointError("checkpoint digest mismatch (corrupt or truncated file)");
  }

  detail::ByteReader rd(body.substr(kCheckpointMagic.size()));
  CheckpointFile ckpt;
  const std::uint64_t header_len = rd.u64();
  try {
    ckpt.header = nlohmann::json::parse(rd.take(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (!ckpt.header.is_object() || ckpt.header.value("format_version", -1) != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version");
  }
  const auto& dir = ckpt.header.at("arrays");
  for (const auto& entry : dir) {
    NamedArray a;
    a.name = std::string(rd.take(rd.u32()));
    const std::uint32_t rank = rd.u32();
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      a.dims.push_back(rd.u64());
      count *= a.dims.back();
    }
    if (a.name != entry.at("name").get<std::string>() || a.dims != entry.at("dims").get<std::vector<std::uint64_t>>()) {
      throw CheckpointError("array '" + a.name + "' does not match the header directory");
    }
    if (count > body.size() / 8) throw CheckpointError("checkpoint truncated");
    a.data.resize(count);
    for (auto& v : a.data) v = rd.f64();
    ckpt.arrays.push_back(std::move(a));
  }
  if (!rd.done()) throw CheckpointError("trailing bytes after the last array");
  return ckpt;
}

inline void save_checkpoint_file(const CheckpointFile& ckpt, const std::string& path) {
  detail::write_file(path, encode_checkpoint(ckpt));
}

inline CheckpointFile load_checkpoint_file(const std::string& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace xlingmap
