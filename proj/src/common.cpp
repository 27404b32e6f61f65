#include "seglm/common.hpp"

#include <array>
#include <cmath>

namespace seglm {

double Rng::normal(double mean, double sd) {
    if (have_cached_) {
        have_cached_ = false;
        return mean + sd * cached_;
    }
    // Box-Muller; u1 kept away from 0.
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 1e-300);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return mean + sd * r * std::cos(a);
}

std::string hex_u64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[size_t(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

void write_u32le(std::ostream& os, uint32_t v) {
    std::array<char, 4> b{char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                          char((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

void write_u64le(std::ostream& os, uint64_t v) {
    write_u32le(os, uint32_t(v & 0xffffffffull));
    write_u32le(os, uint32_t(v >> 32));
}

void write_f32le(std::ostream& os, float v) { write_u32le(os, std::bit_cast<uint32_t>(v)); }

void write_f64le(std::ostream& os, double v) { write_u64le(os, std::bit_cast<uint64_t>(v)); }

void write_lp_string(std::ostream& os, std::string_view s) {
    write_u32le(os, uint32_t(s.size()));
    os.write(s.data(), std::streamsize(s.size()));
}

uint32_t read_u32le(std::istream& is) {
    std::array<char, 4> b{};
    is.read(b.data(), 4);
    if (!is) throw DataError("unexpected end of stream while reading u32");
    return uint32_t(uint8_t(b[0])) | uint32_t(uint8_t(b[1])) << 8 | uint32_t(uint8_t(b[2])) << 16 |
           uint32_t(uint8_t(b[3])) << 24;
}

uint64_t read_u64le(std::istream& is) {
    uint64_t lo = read_u32le(is);
    uint64_t hi = read_u32le(is);
    return lo | (hi << 32);
}

float read_f32le(std::istream& is) { return std::bit_cast<float>(read_u32le(is)); }

double read_f64le(std::istream& is) { return std::bit_cast<double>(read_u64le(is)); }

std::string read_lp_string(std::istream& is) {
    uint32_t n = read_u32le(is);
    if (n > (1u << 30)) throw DataError("corrupt length-prefixed string");
    std::string s(n, '\0');
    is.read(s.data(), std::streamsize(n));
    if (!is) throw DataError("unexpected end of stream while reading string");
    return s;
}

}  // namespace seglm
