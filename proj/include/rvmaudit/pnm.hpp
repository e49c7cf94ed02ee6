#pragma once

// Binary netpbm codecs: P5 (gray) and P6 (RGB), maxval 255 only.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "rvmaudit/image.hpp"

namespace rvm {

class PnmError : public Error {
public:
  enum class Kind { Io, WrongFormat, MalformedHeader, BadMaxval, Truncated };

  PnmError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const { return kind_; }

private:
  Kind kind_;
};

namespace pnm_detail {

struct Header {
  char magic = 0;  // '5' or '6'
  int width = 0;
  int height = 0;
  std::size_t payload_offset = 0;
};

inline bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Parses "P? <w> <h> <maxval>" with arbitrary whitespace and '#' comments
// between tokens; exactly one whitespace byte separates maxval from payload.
inline Header parse_header(std::string_view bytes, const std::string& origin) {
  auto fail = [&](const std::string& msg) -> PnmError {
    return {PnmError::Kind::MalformedHeader, origin + ": " + msg};
  };
  if (bytes.size() < 2 || bytes[0] != 'P')
    throw PnmError(PnmError::Kind::WrongFormat, origin + ": not a netpbm file");

  Header h;
  h.magic = bytes[1];
  if (h.magic != '5' && h.magic != '6')
    throw PnmError(PnmError::Kind::WrongFormat,
                   origin + ": unsupported netpbm magic P" + std::string(1, h.magic));

  std::size_t pos = 2;
  auto next_number = [&](const char* field) -> long {
    for (;;) {
      while (pos < bytes.size() && is_space(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
      throw fail(std::string("expected ") + field);
    long value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1'000'000'000) throw fail(std::string(field) + " out of range");
      ++pos;
    }
    return value;
  };

  if (pos >= bytes.size() || !is_space(static_cast<unsigned char>(bytes[pos])))
    throw fail("missing whitespace after magic");
  const long w = next_number("width");
  const long h_ = next_number("height");
  const long maxval = next_number("maxval");
  if (w <= 0 || h_ <= 0) throw fail("image dimensions must be positive");
  if (maxval != 255)
    throw PnmError(PnmError::Kind::BadMaxval,
                   origin + ": maxval " + std::to_string(maxval) + " (only 255 supported)");
  if (pos >= bytes.size() || !is_space(static_cast<unsigned char>(bytes[pos])))
    throw fail("missing whitespace before payload");
  ++pos;

  h.width = static_cast<int>(w);
  h.height = static_cast<int>(h_);
  h.payload_offset = pos;
  return h;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PnmError(PnmError::Kind::Io, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw PnmError(PnmError::Kind::Io, "read failed: " + path.string());
  return data;
}

inline std::string canonical_header(char magic, int w, int h) {
  return std::string("P") + magic + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
}

}  // namespace pnm_detail

inline GrayImage decode_gray(std::string_view bytes, const std::string& origin = "<memory>") {
  const auto h = pnm_detail::parse_header(bytes, origin);
  if (h.magic != '5')
    throw PnmError(PnmError::Kind::WrongFormat, origin + ": expected P5, found P6");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() - h.payload_offset < n)
    throw PnmError(PnmError::Kind::Truncated,
                   origin + ": payload has " + std::to_string(bytes.size() - h.payload_offset) +
                       " bytes, expected " + std::to_string(n));
  const auto* p = reinterpret_cast<const Piv*>(bytes.data() + h.payload_offset);
  return GrayImage(h.width, h.height, std::vector<Piv>(p, p + n));
}

inline ColorImage decode_color(std::string_view bytes, const std::string& origin = "<memory>") {
  const auto h = pnm_detail::parse_header(bytes, origin);
  if (h.magic != '6')
    throw PnmError(PnmError::Kind::WrongFormat, origin + ": expected P6, found P5");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() - h.payload_offset < 3 * n)
    throw PnmError(PnmError::Kind::Truncated,
                   origin + ": payload has " + std::to_string(bytes.size() - h.payload_offset) +
                       " bytes, expected " + std::to_string(3 * n));
  ColorImage img(h.width, h.height);
  const auto* p = reinterpret_cast<const Piv*>(bytes.data() + h.payload_offset);
  for (std::size_t i = 0; i < n; ++i) {
    img.red[i] = p[3 * i];
    img.green[i] = p[3 * i + 1];
    img.blue[i] = p[3 * i + 2];
  }
  return img;
}

inline std::string encode_gray(const GrayImage& img) {
  std::string out = pnm_detail::canonical_header('5', img.width, img.height);
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline std::string encode_color(const ColorImage& img) {
  if (!img.valid()) throw GeometryError("color image channels do not match its dimensions");
  std::string out = pnm_detail::canonical_header('6', img.width, img.height);
  const std::size_t n = img.size();
  out.reserve(out.size() + 3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(static_cast<char>(img.red[i]));
    out.push_back(static_cast<char>(img.green[i]));
    out.push_back(static_cast<char>(img.blue[i]));
  }
  return out;
}

inline GrayImage read_gray(const std::filesystem::path& path) {
  return decode_gray(pnm_detail::slurp(path), path.string());
}

inline ColorImage read_color(const std::filesystem::path& path) {
  return decode_color(pnm_detail::slurp(path), path.string());
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PnmError(PnmError::Kind::Io, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw PnmError(PnmError::Kind::Io, "write failed: " + path.string());
}

inline void write_gray(const GrayImage& img, const std::filesystem::path& path) {
  write_bytes(path, encode_gray(img));
}

inline void write_color(const ColorImage& img, const std::filesystem::path& path) {
  write_bytes(path, encode_color(img));
}

}  // namespace rvm
