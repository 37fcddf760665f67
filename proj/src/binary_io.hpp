#pragma once

// Little-endian primitives shared by the dataset and model file formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bkst::io {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
    os.write(b, 4);
}

inline void put_f64(std::ostream& os, double x) {
    const auto v = std::bit_cast<std::uint64_t>(x);
    char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
    os.write(b, 8);
}

inline void put_f64s(std::ostream& os, std::span<const double> xs) {
    for (double x : xs) put_f64(os, x);
}

// Readers return false on short input so callers can name what was truncated.
inline bool get_u32(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[k]) << (8 * k);
    return true;
}

inline bool get_f64(std::istream& is, double& x) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    x = std::bit_cast<double>(v);
    return true;
}

inline bool get_f64s(std::istream& is, std::vector<double>& xs, std::size_t count) {
    xs.resize(count);
    for (double& x : xs)
        if (!get_f64(is, x)) return false;
    return true;
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xffffffffu) throw FormatError(std::string(what) + " does not fit in u32");
    return static_cast<std::uint32_t>(v);
}

}  // namespace bkst::io
