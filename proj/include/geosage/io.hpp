#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "geosage/errors.hpp"

namespace geosage {

// Little-endian binary encoding shared by the corpus and model containers.
// Doubles go through their IEEE-754 bit pattern, so round-trips are bit-exact.

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }

  void u8(std::uint8_t v) { bytes(&v, 1); }

  void u32(std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    bytes(b, 4);
  }

  void u64(std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    bytes(b, 8);
  }

  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  // Fixed-width tag written verbatim, checked verbatim on read.
  void magic(const std::string& s) { bytes(s.data(), s.size()); }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  // context names the container kind in error messages ("model", "corpus").
  BinaryReader(std::istream& in, std::string context)
      : in_(in), context_(std::move(context)) {}

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("unexpected end of file");
  }

  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }

  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    std::uint8_t b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str(std::size_t max_len = 1u << 24) {
    std::uint32_t n = u32();
    if (n > max_len) fail("string length out of range");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  // Reads a fixed-width tag; a mismatch on the leading magic means the file
  // is a different (or newer) format, anywhere else it means corruption.
  void expect_magic(const std::string& s, bool version_gate = false) {
    std::string got(s.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(s.size()));
    if (static_cast<std::size_t>(in_.gcount()) != s.size() || got != s) {
      if (version_gate) throw VersionMismatch("bad magic in " + context_ + " file");
      fail("marker mismatch");
    }
  }

  [[noreturn]] void fail(const std::string& why) {
    if (context_ == "model") throw CorruptModel("corrupt model file: " + why);
    throw CorruptCorpus("corrupt " + context_ + " file: " + why);
  }

 private:
  std::istream& in_;
  std::string context_;
};

}  // namespace geosage
