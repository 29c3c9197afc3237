#pragma once

// Little-endian scalar IO shared by the checkpoint and dataset formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "spdsru/errors.hpp"

namespace spdsru::binio {

template <class U>
void put_uint(std::ostream& os, U v) {
    unsigned char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <class U>
U get_uint(std::istream& is, const char* what) {
    unsigned char b[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(U))) throw FormatError(std::string("truncated ") + what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

inline void put_f64(std::ostream& os, double d) { put_uint<std::uint64_t>(os, std::bit_cast<std::uint64_t>(d)); }

inline double get_f64(std::istream& is, const char* what) {
    return std::bit_cast<double>(get_uint<std::uint64_t>(is, what));
}

}  // namespace spdsru::binio
