#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "ypath/common.hpp"

namespace ypath::detail {

// Little-endian scalar + length-prefixed string serialization for the
// binary index files. Writers append to a string buffer; readers walk a
// cursor and reject truncated input. Explicit byte order keeps files
// portable.

inline void write_u32(std::string& buf, uint32_t v) {
    char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
    buf.append(b, 4);
}

inline void write_u64(std::string& buf, uint64_t v) {
    write_u32(buf, static_cast<uint32_t>(v));
    write_u32(buf, static_cast<uint32_t>(v >> 32));
}

inline void write_f64(std::string& buf, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(buf, bits);
}

inline void write_str(std::string& buf, const std::string& s) {
    write_u32(buf, static_cast<uint32_t>(s.size()));
    buf.append(s);
}

inline uint32_t read_u32(const std::string& buf, size_t& pos) {
    if (pos + 4 > buf.size()) throw IndexError("unexpected end of binary data");
    const auto* b = reinterpret_cast<const unsigned char*>(buf.data() + pos);
    pos += 4;
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

inline uint64_t read_u64(const std::string& buf, size_t& pos) {
    uint64_t lo = read_u32(buf, pos);
    uint64_t hi = read_u32(buf, pos);
    return lo | (hi << 32);
}

inline double read_f64(const std::string& buf, size_t& pos) {
    uint64_t bits = read_u64(buf, pos);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline std::string read_str(const std::string& buf, size_t& pos) {
    uint32_t n = read_u32(buf, pos);
    if (pos + n > buf.size()) throw IndexError("unexpected end of binary data");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
}

}  // namespace ypath::detail
