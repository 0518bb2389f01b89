#pragma once

// Little-endian binary containers with a trailing CRC-32 over the payload.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vstorm {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v);
  void str(std::string_view s);
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void f64_array(std::span<const double> v);
  void u32_array(std::span<const std::uint32_t> v);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

  /// Appends the CRC-32 of everything written so far and writes the file.
  void save_with_checksum(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  /// Loads the file and verifies the trailing checksum; `what` names the
  /// container kind in error messages.
  static ByteReader load_with_checksum(const std::filesystem::path& path, std::string what);

  ByteReader(std::vector<std::uint8_t> bytes, std::string what)
      : bytes_(std::move(bytes)), what_(std::move(what)) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64();
  std::string str();
  void expect_magic(std::string_view magic);
  std::vector<double> f64_array();
  std::vector<std::uint32_t> u32_array();

  std::size_t offset() const { return offset_; }
  bool at_end() const { return offset_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& msg) const;

 private:
  void need(std::size_t n) const;

  std::vector<std::uint8_t> bytes_;
  std::string what_;
  std::size_t offset_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace vstorm
