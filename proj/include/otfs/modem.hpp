#pragma once
// OTFS modulation chain for rectangular pulses: ISFFT/SFFT between the
// delay-Doppler and time-frequency grids, Heisenberg/Wigner transforms
// between time-frequency and sampled baseband, cyclic prefix handling and
// polyphase branch decimation.
//
// Sampled-baseband conventions: the transmit pulse has amplitude T^{-1/2}
// over one slot and the Wigner integral is evaluated as a Riemann sum on the
// sample lattice.  In units of T_s both collapse to an orthonormal per-slot
// DFT, so a channel-free modulate/demodulate round trip is exact for grid
// tones, and white per-sample noise keeps its variance through demodulation.

#include <stdexcept>
#include <vector>

#include "otfs/core.hpp"

namespace otfs {

// Data frame on the N x M delay-Doppler grid, Doppler-major: x[k*M + l].
struct DDFrame {
    DDGridConfig grid;
    std::vector<cplx> x;

    DDFrame() = default;
    explicit DDFrame(const DDGridConfig& g) : grid(g), x(g.grid_size()) {}

    cplx& at(int k, int l) { return x[grid.vec_index(k, l)]; }
    const cplx& at(int k, int l) const { return x[grid.vec_index(k, l)]; }
};

// Time-frequency frame, slot-major: x[n*M + m].
struct TFFrame {
    DDGridConfig grid;
    std::vector<cplx> x;

    TFFrame() = default;
    explicit TFFrame(const DDGridConfig& g) : grid(g), x(g.grid_size()) {}

    cplx& at(int n, int m) { return x[n * grid.m + m]; }
    const cplx& at(int n, int m) const { return x[n * grid.m + m]; }
};

// Baseband sample stream at rate oversampling/T_s, with cp_len prefix
// samples (same rate) ahead of the N*M*oversampling frame samples.
struct BasebandSignal {
    std::vector<cplx> samples;
    int oversampling = 1;
    int cp_len = 0;

    int frame_offset() const { return cp_len; }
};

namespace detail {

// Roots of unity w[r] = exp(+j 2 pi r / size).
struct TwiddleTable {
    int size = 0;
    std::vector<cplx> w;

    explicit TwiddleTable(int sz) : size(sz), w(sz) {
        for (int r = 0; r < sz; ++r)
            w[r] = std::polar(1.0, 2.0 * pi * r / sz);
    }
    const cplx& pos(long long r) const { return w[mod_floor(r, size)]; }
    cplx neg(long long r) const { return std::conj(w[mod_floor(r, size)]); }
};

} // namespace detail

// ISFFT: X[n,m] = (NM)^{-1/2} sum_{k,l} x[k,l] e^{j2pi(nk/N - ml/M)}.
inline TFFrame isfft(const DDFrame& dd) {
    const int n_bins = dd.grid.n, m_bins = dd.grid.m;
    if (static_cast<int>(dd.x.size()) != n_bins * m_bins)
        throw std::invalid_argument("isfft: frame size does not match grid");
    detail::TwiddleTable twn(n_bins), twm(m_bins);
    // Doppler axis first: A[n,l] = sum_k x[k,l] e^{+j2pi nk/N}.
    std::vector<cplx> a(static_cast<size_t>(n_bins) * m_bins);
    for (int n = 0; n < n_bins; ++n)
        for (int l = 0; l < m_bins; ++l) {
            cplx acc(0.0, 0.0);
            for (int k = 0; k < n_bins; ++k)
                acc += dd.x[static_cast<size_t>(k) * m_bins + l] *
                       twn.pos(static_cast<long long>(n) * k);
            a[static_cast<size_t>(n) * m_bins + l] = acc;
        }
    TFFrame tf(dd.grid);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_bins) * m_bins);
    for (int n = 0; n < n_bins; ++n)
        for (int m = 0; m < m_bins; ++m) {
            cplx acc(0.0, 0.0);
            for (int l = 0; l < m_bins; ++l)
                acc += a[static_cast<size_t>(n) * m_bins + l] *
                       twm.neg(static_cast<long long>(m) * l);
            tf.x[static_cast<size_t>(n) * m_bins + m] = acc * scale;
        }
    return tf;
}

// SFFT, the inverse of isfft:
// x[k,l] = (NM)^{-1/2} sum_{n,m} Y[n,m] e^{-j2pi(nk/N - ml/M)}.
inline DDFrame sfft(const TFFrame& tf) {
    const int n_bins = tf.grid.n, m_bins = tf.grid.m;
    if (static_cast<int>(tf.x.size()) != n_bins * m_bins)
        throw std::invalid_argument("sfft: frame size does not match grid");
    detail::TwiddleTable twn(n_bins), twm(m_bins);
    std::vector<cplx> b(static_cast<size_t>(n_bins) * m_bins);
    for (int k = 0; k < n_bins; ++k)
        for (int m = 0; m < m_bins; ++m) {
            cplx acc(0.0, 0.0);
            for (int n = 0; n < n_bins; ++n)
                acc += tf.x[static_cast<size_t>(n) * m_bins + m] *
                       twn.neg(static_cast<long long>(n) * k);
            b[static_cast<size_t>(k) * m_bins + m] = acc;
        }
    DDFrame dd(tf.grid);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_bins) * m_bins);
    for (int k = 0; k < n_bins; ++k)
        for (int l = 0; l < m_bins; ++l) {
            cplx acc(0.0, 0.0);
            for (int m = 0; m < m_bins; ++m)
                acc += b[static_cast<size_t>(k) * m_bins + m] *
                       twm.pos(static_cast<long long>(m) * l);
            dd.x[static_cast<size_t>(k) * m_bins + l] = acc * scale;
        }
    return dd;
}

// Heisenberg transform with the rectangular transmit pulse, sampled at rate
// G/T_s.  Within slot n, sample u' of M*G:
//   s = M^{-1/2} sum_m X[n,m] e^{j2pi(m-(M-1)/2) u'/(MG)}
// which is the T^{-1/2}-scaled pulse with the half-band subcarrier shift.
inline BasebandSignal heisenberg_rect(const TFFrame& tf) {
    const int n_bins = tf.grid.n, m_bins = tf.grid.m, g = tf.grid.g;
    const int slot = m_bins * g;
    detail::TwiddleTable tw(2 * slot); // angles in units of pi/(MG)
    BasebandSignal s;
    s.oversampling = g;
    s.cp_len = 0;
    s.samples.assign(static_cast<size_t>(n_bins) * slot, cplx(0.0, 0.0));
    const double amp = 1.0 / std::sqrt(static_cast<double>(m_bins));
    for (int n = 0; n < n_bins; ++n)
        for (int u = 0; u < slot; ++u) {
            cplx acc(0.0, 0.0);
            for (int m = 0; m < m_bins; ++m)
                acc += tf.x[static_cast<size_t>(n) * m_bins + m] *
                       tw.pos(static_cast<long long>(2 * m - m_bins + 1) * u);
            s.samples[static_cast<size_t>(n) * slot + u] = acc * amp;
        }
    return s;
}

// Wigner transform with the rectangular receive pulse: Riemann sum over the
// slot's samples (exact for tones on the subcarrier lattice).  Accepts any
// integer oversampling so a decimated branch signal demodulates the same way.
inline TFFrame wigner_rect(const BasebandSignal& r, const DDGridConfig& grid) {
    if (r.cp_len != 0)
        throw std::invalid_argument("wigner_rect: remove the cyclic prefix first");
    const int n_bins = grid.n, m_bins = grid.m, os = r.oversampling;
    const int slot = m_bins * os;
    if (os < 1 || r.samples.size() != static_cast<size_t>(n_bins) * slot)
        throw std::invalid_argument("wigner_rect: sample count does not match grid");
    detail::TwiddleTable tw(2 * slot);
    TFFrame tf(grid);
    const double weight = 1.0 / (os * std::sqrt(static_cast<double>(m_bins)));
    for (int n = 0; n < n_bins; ++n)
        for (int m = 0; m < m_bins; ++m) {
            cplx acc(0.0, 0.0);
            for (int u = 0; u < slot; ++u)
                acc += r.samples[static_cast<size_t>(n) * slot + u] *
                       tw.neg(static_cast<long long>(2 * m - m_bins + 1) * u);
            tf.x[static_cast<size_t>(n) * m_bins + m] = acc * weight;
        }
    return tf;
}

// Prepend the last cp_len samples of the frame as a cyclic prefix.
inline BasebandSignal add_cp(const BasebandSignal& s, int cp_len) {
    if (s.cp_len != 0)
        throw std::invalid_argument("add_cp: signal already carries a prefix");
    if (cp_len < 0 || cp_len > static_cast<int>(s.samples.size()))
        throw std::invalid_argument("add_cp: prefix length out of range");
    BasebandSignal out;
    out.oversampling = s.oversampling;
    out.cp_len = cp_len;
    out.samples.reserve(s.samples.size() + cp_len);
    out.samples.insert(out.samples.end(), s.samples.end() - cp_len, s.samples.end());
    out.samples.insert(out.samples.end(), s.samples.begin(), s.samples.end());
    return out;
}

inline BasebandSignal remove_cp(const BasebandSignal& s) {
    BasebandSignal out;
    out.oversampling = s.oversampling;
    out.cp_len = 0;
    out.samples.assign(s.samples.begin() + s.cp_len, s.samples.end());
    return out;
}

// Extract polyphase branch g: samples r(u T_s + g T_s/G), re-timed onto the
// symbol lattice (the branch offset is carried by the channel taps, not by
// the demodulator).
inline BasebandSignal decimate_branch(const BasebandSignal& r, int g) {
    if (r.cp_len != 0)
        throw std::invalid_argument("decimate_branch: remove the cyclic prefix first");
    if (g < 0 || g >= r.oversampling)
        throw std::invalid_argument("decimate_branch: branch index out of range");
    BasebandSignal out;
    out.oversampling = 1;
    out.cp_len = 0;
    const size_t n = r.samples.size() / r.oversampling;
    out.samples.resize(n);
    for (size_t u = 0; u < n; ++u)
        out.samples[u] = r.samples[u * r.oversampling + g];
    return out;
}

} // namespace otfs
