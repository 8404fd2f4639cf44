#include "ntmm/serialize.hpp"

#include <fstream>

namespace ntmm {

std::uint64_t fnv1a64_str(const std::string& s) {
  return fnv1a64(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

void BinWriter::write_file(const std::filesystem::path& path, std::uint32_t magic) const {
  std::vector<unsigned char> out;
  out.reserve(buf_.size() + 12);
  const auto* mb = reinterpret_cast<const unsigned char*>(&magic);
  out.insert(out.end(), mb, mb + sizeof magic);
  out.insert(out.end(), buf_.begin(), buf_.end());
  const std::uint64_t sum = fnv1a64(out.data(), out.size());
  const auto* sb = reinterpret_cast<const unsigned char*>(&sum);
  out.insert(out.end(), sb, sb + sizeof sum);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("serialize: cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("serialize: write failed for '" + path.string() + "'");
}

BinReader::BinReader(const std::filesystem::path& path, std::uint32_t magic) : path_(path.string()) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("serialize: cannot open '" + path_ + "'");
  buf_.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  if (buf_.size() < sizeof(std::uint32_t) + sizeof(std::uint64_t)) {
    throw std::runtime_error("serialize: '" + path_ + "' truncated (" + std::to_string(buf_.size()) + " bytes)");
  }
  std::uint64_t stored;
  std::memcpy(&stored, buf_.data() + buf_.size() - sizeof stored, sizeof stored);
  const std::uint64_t computed = fnv1a64(buf_.data(), buf_.size() - sizeof stored);
  if (stored != computed) throw std::runtime_error("serialize: checksum mismatch in '" + path_ + "'");
  buf_.resize(buf_.size() - sizeof stored);

  std::uint32_t m;
  std::memcpy(&m, buf_.data(), sizeof m);
  pos_ = sizeof m;
  if (m != magic) throw std::runtime_error("serialize: bad magic in '" + path_ + "'");
}

void BinReader::raw(void* p, std::size_t n) {
  if (pos_ + n > buf_.size()) throw std::runtime_error("serialize: '" + path_ + "' truncated mid-record");
  std::memcpy(p, buf_.data() + pos_, n);
  pos_ += n;
}

std::uint32_t BinReader::u32() {
  std::uint32_t v;
  raw(&v, sizeof v);
  return v;
}

std::uint64_t BinReader::u64() {
  std::uint64_t v;
  raw(&v, sizeof v);
  return v;
}

std::int64_t BinReader::i64() {
  std::int64_t v;
  raw(&v, sizeof v);
  return v;
}

double BinReader::f64() {
  double v;
  raw(&v, sizeof v);
  return v;
}

std::string BinReader::str() {
  const std::uint64_t n = u64();
  if (pos_ + n > buf_.size()) throw std::runtime_error("serialize: '" + path_ + "' truncated string");
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::vector<double> BinReader::f64_vec() {
  const std::uint64_t n = u64();
  std::vector<double> v(n);
  raw(v.data(), n * sizeof(double));
  return v;
}

}  // namespace ntmm
