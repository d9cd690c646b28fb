#pragma once

#include <openssl/evp.h>
#include <zlib.h>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "vat/error.hpp"

namespace vat::io {

namespace fs = std::filesystem;

/// Reads a whole file. Gzip input is detected by magic bytes, not extension.
inline std::string read_file(const fs::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw InputError("io", "cannot open file: " + path.string());
  std::array<char, 2> magic{};
  probe.read(magic.data(), 2);
  const bool gzipped = probe.gcount() == 2 && static_cast<unsigned char>(magic[0]) == 0x1f &&
                       static_cast<unsigned char>(magic[1]) == 0x8b;
  if (!gzipped) {
    probe.clear();
    probe.seekg(0);
    std::ostringstream ss;
    ss << probe.rdbuf();
    return ss.str();
  }
  probe.close();

  gzFile gz = gzopen(path.string().c_str(), "rb");
  if (gz == nullptr) throw InputError("io", "cannot open gzip file: " + path.string());
  std::string out;
  std::array<char, 1 << 16> buf{};
  for (;;) {
    const int got = gzread(gz, buf.data(), static_cast<unsigned>(buf.size()));
    if (got < 0) {
      int errnum = 0;
      const std::string msg = gzerror(gz, &errnum);
      gzclose(gz);
      throw InputError("io", "gzip read error in " + path.string() + ": " + msg);
    }
    if (got == 0) break;
    out.append(buf.data(), static_cast<std::size_t>(got));
  }
  gzclose(gz);
  return out;
}

inline void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("io", "cannot write file: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw InputError("io", "short write: " + path.string());
}

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::kInput, "io", "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

/// Shortest decimal form that round-trips; used for every CSV cell so that
/// exported files are byte-stable.
inline std::string format_double(double x) {
  if (x == 0.0) return "0";  // folds -0
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc{}) return std::to_string(x);
  return std::string(buf.data(), end);
}

inline std::string format_optional(const std::optional<double>& x) {
  return x ? format_double(*x) : std::string{};
}

/// Quotes a CSV field only when it needs it.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace vat::io
