#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "dyna/error.hpp"

namespace dyna::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write_pod(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_pod(out, v); }
inline void write_f64(std::ostream& out, double v) { write_pod(out, v); }

inline void write_f64s(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream& in, char* dst, std::size_t count, const char* what) {
  in.read(dst, static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) throw FormatError(std::string("truncated file while reading ") + what);
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T value{};
  read_exact(in, reinterpret_cast<char*>(&value), sizeof(T), what);
  return value;
}

inline std::uint32_t read_u32(std::istream& in, const char* what) { return read_pod<std::uint32_t>(in, what); }
inline std::uint64_t read_u64(std::istream& in, const char* what) { return read_pod<std::uint64_t>(in, what); }
inline double read_f64(std::istream& in, const char* what) { return read_pod<double>(in, what); }

inline void read_f64s(std::istream& in, double* dst, std::size_t count, const char* what) {
  read_exact(in, reinterpret_cast<char*>(dst), count * sizeof(double), what);
}

inline std::string read_string(std::istream& in, std::size_t max_len, const char* what) {
  const std::uint32_t len = read_u32(in, what);
  if (len > max_len) throw FormatError(std::string("implausible string length while reading ") + what);
  std::string s(len, '\0');
  read_exact(in, s.data(), len, what);
  return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const char* what) {
  char buf[4];
  read_exact(in, buf, 4, what);
  if (std::memcmp(buf, magic, 4) != 0) throw FormatError(std::string("bad magic in ") + what);
}

inline void write_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

}  // namespace dyna::io
