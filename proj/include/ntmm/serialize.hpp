#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ntmm {

/// FNV-1a 64-bit over a byte range.
inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_str(const std::string& s);

/// Little-endian binary buffer writer. The final file layout is
/// [magic u32][payload][fnv1a64 of magic+payload]; the reader verifies the
/// checksum before handing out any field.
class BinWriter {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i64(std::int64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void boolean(bool v) { u32(v ? 1u : 0u); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void f64_vec(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }

  /// Writes magic + payload + checksum to disk, failing loudly on IO errors.
  void write_file(const std::filesystem::path& path, std::uint32_t magic) const;

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<unsigned char> buf_;
};

class BinReader {
 public:
  /// Loads the file, validates the magic and the trailing checksum.
  BinReader(const std::filesystem::path& path, std::uint32_t magic);

  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  bool boolean() { return u32() != 0; }
  std::string str();
  std::vector<double> f64_vec();

  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  void raw(void* p, std::size_t n);
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace ntmm
