#include "vstorm/common/binary_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "vstorm/common/errors.hpp"

namespace vstorm {

static_assert(std::endian::native == std::endian::little, "containers assume a little-endian host");

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s);
}

void ByteWriter::f64_array(std::span<const double> v) {
  u64(v.size());
  const auto old = bytes_.size();
  bytes_.resize(old + v.size() * sizeof(double));
  if (!v.empty()) std::memcpy(bytes_.data() + old, v.data(), v.size() * sizeof(double));
}

void ByteWriter::u32_array(std::span<const std::uint32_t> v) {
  u64(v.size());
  for (auto x : v) u32(x);
}

void ByteWriter::save_with_checksum(const std::filesystem::path& path) const {
  const std::uint32_t crc = crc32_of(bytes_);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
  char tail[4];
  for (int i = 0; i < 4; ++i) tail[i] = static_cast<char>(crc >> (8 * i));
  out.write(tail, 4);
  if (!out) throw Error("write failed: " + path.string());
}

ByteReader ByteReader::load_with_checksum(const std::filesystem::path& path, std::string what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(what + ": cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4) throw ParseError(what + ": file too short at byte offset 0");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  const auto actual = crc32_of(std::span(bytes.data(), body));
  if (stored != actual) throw ParseError(what + ": checksum mismatch in " + path.string());
  bytes.resize(body);
  return ByteReader(std::move(bytes), std::move(what));
}

void ByteReader::fail(const std::string& msg) const {
  throw ParseError(what_ + ": " + msg + " at byte offset " + std::to_string(offset_));
}

void ByteReader::need(std::size_t n) const {
  if (bytes_.size() - offset_ < n) fail("truncated data");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[offset_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[offset_ + i]) << (8 * i);
  offset_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
  offset_ += 8;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const auto n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), n);
  offset_ += n;
  return s;
}

void ByteReader::expect_magic(std::string_view magic) {
  need(magic.size());
  if (std::memcmp(bytes_.data() + offset_, magic.data(), magic.size()) != 0) fail("bad magic");
  offset_ += magic.size();
}

std::vector<double> ByteReader::f64_array() {
  const auto n = u64();
  if (n > (bytes_.size() - offset_) / sizeof(double)) fail("array length exceeds file");
  std::vector<double> v(n);
  if (n) std::memcpy(v.data(), bytes_.data() + offset_, n * sizeof(double));
  offset_ += n * sizeof(double);
  return v;
}

std::vector<std::uint32_t> ByteReader::u32_array() {
  const auto n = u64();
  if (n > (bytes_.size() - offset_) / 4) fail("array length exceeds file");
  std::vector<std::uint32_t> v(n);
  for (auto& x : v) x = u32();
  return v;
}

}  // namespace vstorm
