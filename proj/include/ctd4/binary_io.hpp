#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>

namespace ctd4::binary {

inline constexpr std::string_view kMagic = "CTD4";

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_f64s(std::ostream& out, std::span<const double> values);
void write_magic(std::ostream& out);

// All readers throw std::runtime_error on a short read.
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
void read_f64s(std::istream& in, std::span<double> values);
void expect_magic(std::istream& in, std::string_view what);

}  // namespace ctd4::binary
