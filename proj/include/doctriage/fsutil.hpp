#ifndef DOCTRIAGE_FSUTIL_HPP
#define DOCTRIAGE_FSUTIL_HPP

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <openssl/evp.h>
#include <unistd.h>

#include "doctriage/error.hpp"

namespace doctriage {

namespace fs = std::filesystem;

inline std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof()) throw DataError("read failed: " + path.string());
  return std::move(buf).str();
}

// Write-to-temp plus atomic rename, safe under concurrent writers of the
// same target (last rename wins, readers never see a partial file).
inline void write_file_atomic(const fs::path& path, std::string_view data) {
  const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  fs::create_directories(dir);
  fs::path tmp = dir / (path.filename().string() + ".tmp." +
                        std::to_string(static_cast<long>(::getpid())) + "." +
                        std::to_string(reinterpret_cast<std::uintptr_t>(&data) & 0xffff));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot create file: " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out.good()) throw DataError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("rename failed for " + path.string() + ": " + ec.message());
  }
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw DataError("sha256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_file_hex(const fs::path& path) {
  return sha256_hex(read_file_bytes(path));
}

// Search $PATH for an executable name; empty result when not found.
inline fs::path find_on_path(const std::string& name) {
  if (name.find('/') != std::string::npos) {
    return ::access(name.c_str(), X_OK) == 0 ? fs::path(name) : fs::path();
  }
  const char* raw = std::getenv("PATH");
  if (!raw) return {};
  std::string path_env(raw);
  std::size_t start = 0;
  while (start <= path_env.size()) {
    std::size_t end = path_env.find(':', start);
    if (end == std::string::npos) end = path_env.size();
    const std::string dir = path_env.substr(start, end - start);
    if (!dir.empty()) {
      fs::path candidate = fs::path(dir) / name;
      if (::access(candidate.c_str(), X_OK) == 0) return candidate;
    }
    start = end + 1;
  }
  return {};
}

}  // namespace doctriage

#endif  // DOCTRIAGE_FSUTIL_HPP
