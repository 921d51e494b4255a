#pragma once
// Closed-form delay-Doppler input-output relation for the rectangular-pulse
// modem over the sampled multipath channel.  Each receiver branch g sees
//
//   y_g[k,l] = sum_i sum_p sum_q  h_i * tap_{i,g}[p] * gamma(k,l,p,q; i)
//              * x[[k - k_i + q]_N, [l - p]_M]
//
// where tap_{i,g}[p] samples the pulse at the branch offset, k_i + beta_i is
// the path Doppler in grid units, q runs over one Doppler period, and gamma
// collects three factors: a Dirichlet kernel spreading fractional Doppler
// across bins, a phase tied to the tap position inside the slot, and a wrap
// correction for taps that reach into the previous slot (l < p).  The matrix
// acts on the vectorized grid x[k*M + l].

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "otfs/channel.hpp"
#include "otfs/core.hpp"
#include "otfs/pulses.hpp"

namespace otfs {

// Dirichlet kernel over the Doppler axis: sum_{n=0}^{N-1} e^{j2pi n(q+beta)/N}
// in closed form.  Exactly periodic in q with period N; beta = 0 collapses it
// to N at q = 0 (mod N) and zero elsewhere, which the analytic branch returns
// exactly.
inline cplx doppler_dirichlet(long long q, double beta, int n) {
    const int r = mod_floor(q, n);
    if (beta == 0.0) return r == 0 ? cplx(static_cast<double>(n), 0.0) : cplx(0.0, 0.0);
    // Integer full turns drop out of the numerator analytically.
    const cplx num = std::polar(1.0, 2.0 * pi * beta) - 1.0;
    const cplx den = std::polar(1.0, 2.0 * pi * (r + beta) / n) - 1.0;
    return num / den;
}

// Phase attached to output delay bin l and channel tap p: the half-subcarrier
// offset of the rectangular modem advances by pi(M-1)/M per tap, and the
// fractional-plus-integer Doppler contributes a linear phase in (l - p),
// which is deliberately not reduced modulo M.
inline cplx tap_phase(int l, int p, int k_nu, double beta, const DDGridConfig& grid) {
    const double angle = pi * (grid.m - 1) * p / grid.m +
                         2.0 * pi * (l - p) * (k_nu + beta) / (static_cast<double>(grid.m) * grid.n);
    return std::polar(1.0, angle);
}

// Wrap correction for taps reaching into the previous slot (l < p), as a
// function of the output Doppler bin ck = [k - k_nu + q]_N.
inline cplx wrap_phase(int ck, const DDGridConfig& grid) {
    const double sign = (grid.m % 2 == 0) ? -1.0 : 1.0; // (-1)^(M-1)
    return sign * std::polar(1.0, -2.0 * pi * ck / grid.n);
}

struct DDMatrixEntry {
    int col;
    cplx val;
};

// Sparse matrix on the vectorized delay-Doppler grid, rows sorted by column.
struct SparseDDMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::vector<DDMatrixEntry>> row;

    cplx at(int r, int c) const {
        for (const DDMatrixEntry& e : row[static_cast<size_t>(r)])
            if (e.col == c) return e.val;
        return cplx(0.0, 0.0);
    }

    size_t nnz() const {
        size_t n = 0;
        for (const auto& r : row) n += r.size();
        return n;
    }

    std::vector<cplx> multiply(const std::vector<cplx>& x) const {
        if (static_cast<int>(x.size()) != cols)
            throw std::invalid_argument("SparseDDMatrix::multiply: size mismatch");
        std::vector<cplx> y(static_cast<size_t>(rows), cplx(0.0, 0.0));
        for (int r = 0; r < rows; ++r) {
            cplx acc(0.0, 0.0);
            for (const DDMatrixEntry& e : row[static_cast<size_t>(r)])
                acc += e.val * x[static_cast<size_t>(e.col)];
            y[static_cast<size_t>(r)] = acc;
        }
        return y;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (const auto& r : row)
            for (const DDMatrixEntry& e : r) s += std::norm(e.val);
        return std::sqrt(s);
    }
};

// || a - b ||_F over the union of sparsity patterns.
inline double frobenius_distance(const SparseDDMatrix& a, const SparseDDMatrix& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("frobenius_distance: shape mismatch");
    double s = 0.0;
    for (int r = 0; r < a.rows; ++r) {
        const auto& ra = a.row[static_cast<size_t>(r)];
        const auto& rb = b.row[static_cast<size_t>(r)];
        size_t ia = 0, ib = 0;
        while (ia < ra.size() || ib < rb.size()) {
            if (ib == rb.size() || (ia < ra.size() && ra[ia].col < rb[ib].col)) {
                s += std::norm(ra[ia].val);
                ++ia;
            } else if (ia == ra.size() || rb[ib].col < ra[ia].col) {
                s += std::norm(rb[ib].val);
                ++ib;
            } else {
                s += std::norm(ra[ia].val - rb[ib].val);
                ++ia;
                ++ib;
            }
        }
    }
    return std::sqrt(s);
}

// Doppler-spread truncation: keep interference terms q in [-e, e].  Negative
// e (the default) keeps the full period.  Residues are deduplicated so
// e = N/2 reproduces the untruncated sum exactly.
struct TruncationSpec {
    int e = -1;
};

namespace detail {

inline std::vector<int> truncation_residues(int e, int n) {
    const int e_eff = (e < 0) ? n / 2 : std::min(e, n / 2);
    std::vector<int> qs;
    std::vector<char> seen(static_cast<size_t>(n), 0);
    for (int q = -e_eff; q <= e_eff; ++q) {
        const int r = mod_floor(q, n);
        if (!seen[static_cast<size_t>(r)]) {
            seen[static_cast<size_t>(r)] = 1;
            qs.push_back(r);
        }
    }
    return qs;
}

inline SparseDDMatrix rows_from_maps(std::vector<std::map<int, cplx>>& acc, int rows, int cols) {
    SparseDDMatrix h;
    h.rows = rows;
    h.cols = cols;
    h.row.resize(static_cast<size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        auto& out = h.row[static_cast<size_t>(r)];
        out.reserve(acc[static_cast<size_t>(r)].size());
        for (const auto& [c, v] : acc[static_cast<size_t>(r)])
            if (v != cplx(0.0, 0.0)) out.push_back({c, v});
    }
    return h;
}

} // namespace detail

// Closed-form matrix of receiver branch g.  Shares the tap discretization
// with apply_channel so the two descriptions agree to numerical precision.
inline SparseDDMatrix build_branch_matrix(const ChannelRealization& ch,
                                          const RolloffFilter& filter,
                                          const DDGridConfig& grid, int g,
                                          TruncationSpec trunc = {},
                                          double tap_threshold = 1e-6) {
    validate_channel(ch, grid);
    const int n = grid.n, m = grid.m, nm = grid.grid_size();
    const auto taps = channel_taps(ch, filter, grid, g, tap_threshold);
    const std::vector<int> qs = detail::truncation_residues(trunc.e, n);

    std::vector<cplx> wrap_table(static_cast<size_t>(n));
    for (int ck = 0; ck < n; ++ck) wrap_table[static_cast<size_t>(ck)] = wrap_phase(ck, grid);

    std::vector<std::map<int, cplx>> acc(static_cast<size_t>(nm));
    std::vector<cplx> xi_l(static_cast<size_t>(m));
    for (size_t i = 0; i < ch.paths.size(); ++i) {
        const DopplerSplit ds = doppler_split(ch.paths[i].doppler, grid);
        for (const auto& [p, tap] : taps[i]) {
            const cplx base = ch.paths[i].gain * tap;
            for (int l = 0; l < m; ++l)
                xi_l[static_cast<size_t>(l)] = tap_phase(l, p, ds.k, ds.beta, grid);
            for (int q : qs) {
                const cplx th = doppler_dirichlet(q, ds.beta, n);
                if (th == cplx(0.0, 0.0)) continue;
                const cplx thn = th / static_cast<double>(n);
                for (int k = 0; k < n; ++k) {
                    const int ck = mod_floor(k - ds.k + q, n);
                    const cplx fk = wrap_table[static_cast<size_t>(ck)];
                    for (int l = 0; l < m; ++l) {
                        const int cl = mod_floor(l - p, m);
                        cplx v = base * (xi_l[static_cast<size_t>(l)] * thn);
                        if (l < p) v *= fk;
                        acc[static_cast<size_t>(k * m + l)][ck * m + cl] += v;
                    }
                }
            }
        }
    }
    return detail::rows_from_maps(acc, nm, nm);
}

// Specialization for channels on the delay-Doppler lattice, sampled at the
// symbol rate (branch 0): each path becomes a single unit tap and the
// Doppler spread collapses, leaving one entry per path per row.  Delays are
// rounded to the nearest symbol period and fractional Doppler is discarded,
// so feeding an off-grid channel yields the matched on-grid approximation.
inline SparseDDMatrix build_on_grid_matrix(const ChannelRealization& ch,
                                           const DDGridConfig& grid) {
    validate_channel(ch, grid);
    const int n = grid.n, m = grid.m, nm = grid.grid_size();

    std::vector<cplx> wrap_table(static_cast<size_t>(n));
    for (int ck = 0; ck < n; ++ck) wrap_table[static_cast<size_t>(ck)] = wrap_phase(ck, grid);

    std::vector<std::map<int, cplx>> acc(static_cast<size_t>(nm));
    for (size_t i = 0; i < ch.paths.size(); ++i) {
        const int p = static_cast<int>(std::llround(ch.paths[i].delay / grid.ts()));
        if (p < 0 || p >= ch.channel_order)
            throw std::invalid_argument("build_on_grid_matrix: delay outside the tap window");
        const int k_nu = doppler_split(ch.paths[i].doppler, grid).k;
        const cplx base = ch.paths[i].gain * 1.0;
        std::vector<cplx> xi_l(static_cast<size_t>(m));
        for (int l = 0; l < m; ++l)
            xi_l[static_cast<size_t>(l)] = tap_phase(l, p, k_nu, 0.0, grid);
        for (int k = 0; k < n; ++k) {
            const int ck = mod_floor(k - k_nu, n);
            const cplx fk = wrap_table[static_cast<size_t>(ck)];
            for (int l = 0; l < m; ++l) {
                const int cl = mod_floor(l - p, m);
                cplx v = base * (xi_l[static_cast<size_t>(l)] * cplx(1.0, 0.0));
                if (l < p) v *= fk;
                acc[static_cast<size_t>(k * m + l)][ck * m + cl] += v;
            }
        }
    }
    return detail::rows_from_maps(acc, nm, nm);
}

// Stack per-branch matrices into the joint observation model
// y = [y_0; y_1; ...] = H x, branch-major rows.
inline SparseDDMatrix stack_branches(const std::vector<SparseDDMatrix>& branches) {
    if (branches.empty()) throw std::invalid_argument("stack_branches: no branches");
    SparseDDMatrix h;
    h.cols = branches[0].cols;
    h.rows = 0;
    for (const SparseDDMatrix& b : branches) {
        if (b.cols != h.cols)
            throw std::invalid_argument("stack_branches: column count mismatch");
        h.rows += b.rows;
        h.row.insert(h.row.end(), b.row.begin(), b.row.end());
    }
    return h;
}

} // namespace otfs
