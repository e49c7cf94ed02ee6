#pragma once

// Model checkpoint file:
//
//   8 bytes   magic "RVMCKPT\0"
//   u32 LE    format version (1)
//   u32 LE    descriptor length N
//   N bytes   architecture descriptor text (ArchDescriptor::to_text)
//   u64 LE    parameter count M
//   M x f64   parameters, little-endian, in parameter_layout order

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "rvmaudit/model.hpp"

namespace rvm {

class CheckpointError : public Error {
public:
  using Error::Error;
};

inline constexpr std::array<char, 8> kCheckpointMagic = {'R', 'V', 'M', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace checkpoint_detail {

template <typename T>
void put_le(std::string& out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U u;
  std::memcpy(&u, &v, sizeof(U));
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (in.size() - pos < sizeof(U)) throw CheckpointError("checkpoint truncated");
  U u = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    u |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  T v;
  std::memcpy(&v, &u, sizeof(U));
  return v;
}

}  // namespace checkpoint_detail

inline std::string encode_checkpoint(const ClassifierParams& p) {
  using namespace checkpoint_detail;
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string desc = p.arch.to_text();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(desc.size()));
  out += desc;
  put_le<std::uint64_t>(out, p.values.size());
  for (double v : p.values) put_le<double>(out, v);
  return out;
}

inline ClassifierParams decode_checkpoint(const std::string& bytes) {
  using namespace checkpoint_detail;
  if (bytes.size() < kCheckpointMagic.size() ||
      std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0)
    throw CheckpointError("not a model checkpoint");
  std::size_t pos = kCheckpointMagic.size();
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get_le<std::uint32_t>(bytes, pos);
  if (bytes.size() - pos < len) throw CheckpointError("checkpoint truncated");
  ClassifierParams p;
  p.arch = ArchDescriptor::parse(bytes.substr(pos, len));
  pos += len;
  const auto count = get_le<std::uint64_t>(bytes, pos);
  if (count != parameter_count(p.arch))
    throw CheckpointError("parameter count does not match the architecture descriptor");
  if ((bytes.size() - pos) / 8 < count) throw CheckpointError("checkpoint truncated");
  p.values.resize(count);
  for (auto& v : p.values) v = get_le<double>(bytes, pos);
  if (!p.finite()) throw CheckpointError("checkpoint contains non-finite parameters");
  return p;
}

inline void save_checkpoint(const ClassifierParams& p, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(p);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw CheckpointError("write failed: " + path.string());
}

inline ClassifierParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace rvm
