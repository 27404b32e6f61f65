#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace seglm {

// Error taxonomy. The CLI maps these onto exit codes (data = 3, divergence = 4).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what, long step_at)
        : std::runtime_error(what), step(step_at) {}
    long step;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64 core with hand-rolled distributions so that
// results do not depend on the standard library's distribution internals.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Order-sensitive seed derivation for independent RNG streams.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    return splitmix64(a ^ 0x2545f4914f6cdd1dull) ^ splitmix64(b + 0x9e3779b97f4a7c15ull);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x8e1fdc9317b6a3c5ull)) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    // [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

    double normal(double mean = 0.0, double sd = 1.0);

  private:
    uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

// Per-element hash used by dropout masks: independent of iteration order and
// of the thread that touches the element.
inline uint64_t elem_hash(uint64_t seed, uint64_t index) {
    return splitmix64(seed ^ (0x632be59bd9b4e019ull * (index + 1)));
}

// ---------------------------------------------------------------------------
// FNV-1a fingerprinting for vocab/config provenance.

class Fnv1a {
  public:
    void update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            h_ ^= c;
            h_ *= 0x100000001b3ull;
        }
    }
    void update_u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h_ ^= (v >> (8 * i)) & 0xff;
            h_ *= 0x100000001b3ull;
        }
    }
    uint64_t digest() const { return h_; }

  private:
    uint64_t h_ = 0xcbf29ce484222325ull;
};

std::string hex_u64(uint64_t v);

// ---------------------------------------------------------------------------
// Little-endian binary IO for the on-disk formats.

void write_u32le(std::ostream& os, uint32_t v);
void write_u64le(std::ostream& os, uint64_t v);
void write_f32le(std::ostream& os, float v);
void write_f64le(std::ostream& os, double v);
void write_lp_string(std::ostream& os, std::string_view s);

uint32_t read_u32le(std::istream& is);
uint64_t read_u64le(std::istream& is);
float read_f32le(std::istream& is);
double read_f64le(std::istream& is);
std::string read_lp_string(std::istream& is);

}  // namespace seglm
