#pragma once
// Grid geometry, modulation alphabets and deterministic RNG streams shared by
// the rest of the library.

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace otfs {

using cplx = std::complex<double>;

inline constexpr double pi = 3.141592653589793238462643383279502884;

// Floor modulo: result always in [0, n).
inline int mod_floor(long long a, int n) {
    int r = static_cast<int>(a % n);
    return r < 0 ? r + n : r;
}

// Delay-Doppler grid geometry.  N Doppler bins (time slots of duration T),
// M delay bins (subcarriers spaced delta_f apart) and the fractional sampling
// factor G (received samples per symbol period T_s = T/M).
struct DDGridConfig {
    int n = 0;            // N, Doppler bins / time slots
    int m = 0;            // M, delay bins / subcarriers
    double delta_f = 0.0; // subcarrier spacing [Hz]
    double t_slot = 0.0;  // slot duration T [s], t_slot * delta_f == 1
    int g = 1;            // fractional sampling factor G

    DDGridConfig() = default;

    DDGridConfig(int n_, int m_, double delta_f_, int g_ = 1)
        : n(n_), m(m_), delta_f(delta_f_), t_slot(1.0 / delta_f_), g(g_) {
        validate();
    }

    void validate() const {
        if (n < 1 || m < 1) throw std::invalid_argument("grid: N and M must be >= 1");
        if (!(delta_f > 0.0)) throw std::invalid_argument("grid: delta_f must be > 0");
        if (g < 1) throw std::invalid_argument("grid: G must be >= 1");
        if (std::abs(t_slot * delta_f - 1.0) > 1e-12)
            throw std::invalid_argument("grid: T * delta_f must equal 1");
    }

    double ts() const { return t_slot / m; }            // symbol period T_s [s]
    double frame_duration() const { return n * t_slot; } // derived, never stored
    double bandwidth() const { return m * delta_f; }     // derived, never stored
    int grid_size() const { return n * m; }
    int frame_samples() const { return n * m * g; }      // samples at rate G/T_s

    // Row/column convention for vectorized DD frames: Doppler-major.
    int vec_index(int k, int l) const { return k * m + l; }
};

// Modulation alphabet with Gray bit labels.  The index of a symbol is its bit
// label: bit pattern j maps to symbols[j], so Hamming distances between labels
// are popcounts of index XORs.
struct ModAlphabet {
    std::vector<cplx> symbols;
    int bits_per_symbol = 0;

    int order() const { return static_cast<int>(symbols.size()); }
    // Reference symbol used by LLR blocks (denominator of every ratio).
    int ref_index() const { return order() - 1; }

    double avg_energy() const {
        double e = 0.0;
        for (const cplx& s : symbols) e += std::norm(s);
        return e / static_cast<double>(symbols.size());
    }
};

// Number of bit positions in which two symbol labels differ.
inline int bit_distance(int a, int b) {
    unsigned x = static_cast<unsigned>(a ^ b);
    int c = 0;
    while (x) { c += x & 1u; x >>= 1; }
    return c;
}

// Gray-labelled QPSK, unit average energy.  Index = (b_I << 1) | b_Q with
// bit value 0 mapping to the positive rail:
//   0 -> (+1+j)/sqrt(2), 1 -> (+1-j)/sqrt(2),
//   2 -> (-1+j)/sqrt(2), 3 -> (-1-j)/sqrt(2).
inline ModAlphabet make_qpsk_gray() {
    const double s = 1.0 / std::sqrt(2.0);
    ModAlphabet a;
    a.bits_per_symbol = 2;
    a.symbols = { {s, s}, {s, -s}, {-s, s}, {-s, -s} };
    return a;
}

namespace detail {
// Binary-reflected Gray decode: label -> level rank.
inline unsigned gray_decode(unsigned g) {
    unsigned v = 0;
    for (; g; g >>= 1) v ^= g;
    return v;
}
} // namespace detail

// Square QAM with per-rail Gray labels and unit average energy.
// order must be 4^k (4, 16, 64, ...).  High half of the label indexes the
// in-phase rail, low half the quadrature rail.
inline ModAlphabet make_qam(int order) {
    if (order < 4) throw std::invalid_argument("make_qam: order must be >= 4");
    int bps = 0;
    while ((1 << bps) < order) ++bps;
    if ((1 << bps) != order || bps % 2 != 0)
        throw std::invalid_argument("make_qam: order must be a power of 4");
    const int rail_bits = bps / 2;
    const int levels = 1 << rail_bits;
    // Average rail energy of {-(L-1), ..., L-1} odd levels is (L^2-1)/3.
    const double norm = std::sqrt(2.0 * (levels * levels - 1) / 3.0);
    ModAlphabet a;
    a.bits_per_symbol = bps;
    a.symbols.resize(order);
    for (int j = 0; j < order; ++j) {
        unsigned ci = static_cast<unsigned>(j) >> rail_bits;
        unsigned cq = static_cast<unsigned>(j) & ((1u << rail_bits) - 1u);
        int vi = static_cast<int>(detail::gray_decode(ci));
        int vq = static_cast<int>(detail::gray_decode(cq));
        a.symbols[j] = cplx((2 * vi - (levels - 1)) / norm,
                            (2 * vq - (levels - 1)) / norm);
    }
    return a;
}

// ------------------------------------------------------------------
// Deterministic RNG streams.  Every stochastic quantity draws from its own
// stream derived from (master_seed, stream_id); the same pair always yields
// the same sequence, independent of what other streams consumed.

struct RngSpec {
    std::uint64_t master_seed = 1;
    std::uint64_t stream_id = 0;
};

// Purposes multiplex one frame index into independent streams.
enum class Stream : std::uint64_t {
    data = 0, channel = 1, noise = 2, csi = 3, prior = 4,
};

inline constexpr std::uint64_t streams_per_frame = 8;

inline RngSpec stream_for(std::uint64_t master_seed, std::uint64_t frame, Stream s) {
    return RngSpec{master_seed, frame * streams_per_frame + static_cast<std::uint64_t>(s)};
}

namespace detail {
// SplitMix64-style finalizer combining two words into one well-mixed seed.
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 0x632be59bd9b4e019ULL);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
} // namespace detail

inline std::mt19937_64 make_rng(const RngSpec& spec) {
    return std::mt19937_64(detail::mix64(spec.master_seed, spec.stream_id));
}

// Uniform double in (0, 1]; 53 significant bits, never zero.
inline double uniform01(std::mt19937_64& g) {
    return static_cast<double>((g() >> 11) + 1) * 0x1.0p-53;
}

// Standard normal via Box-Muller; consumes exactly two engine words per call.
inline double draw_std_normal(std::mt19937_64& g) {
    double u1 = uniform01(g);
    double u2 = uniform01(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi * u2);
}

// Circularly symmetric complex Gaussian with E|z|^2 = var.
inline cplx draw_cn(std::mt19937_64& g, double var) {
    double u1 = uniform01(g);
    double u2 = uniform01(g);
    double r = std::sqrt(-std::log(u1) * var);
    return cplx(r * std::cos(2.0 * pi * u2), r * std::sin(2.0 * pi * u2));
}

} // namespace otfs
