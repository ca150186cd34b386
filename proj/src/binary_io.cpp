#include "ctd4/binary_io.hpp"

#include <array>
#include <bit>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ctd4::binary {

namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw std::runtime_error("truncated binary stream");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void write_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

void write_f64s(std::ostream& out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (double v : values) write_f64(out, v);
  }
}

void write_magic(std::ostream& out) { out.write(kMagic.data(), kMagic.size()); }

std::uint32_t read_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
double read_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

void read_f64s(std::istream& in, std::span<double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    if (in.gcount() != static_cast<std::streamsize>(values.size_bytes())) {
      throw std::runtime_error("truncated binary stream");
    }
  } else {
    for (double& v : values) v = read_f64(in);
  }
}

void expect_magic(std::istream& in, std::string_view what) {
  std::array<char, 4> got{};
  in.read(got.data(), got.size());
  if (in.gcount() != 4) throw std::runtime_error(std::string(what) + ": truncated header");
  if (std::string_view(got.data(), got.size()) != kMagic) {
    throw std::runtime_error(std::string(what) + ": bad magic bytes");
  }
}

}  // namespace ctd4::binary
