#pragma once
// Link-level analysis tooling: the end-to-end observation pipeline, extrinsic
// information transfer (EXIT) measurement for the quadrature alphabet,
// channel-knowledge perturbation, and deterministic bit-error-rate sweeps
// with CSV output.
//
// EXIT conventions: per-rail quantities are half log-ratios, so a rail prior
// is drawn as L ~ N(sigma^2 * x_rail * sqrt(2), sigma^2) with x_rail =
// +-1/sqrt(2), a full symbol log-ratio adds 2L per positive rail, and the
// rail information integral uses e^{-2L}.  Measured information comes from a
// 100-bin histogram over +-6 sample standard deviations, one estimate per
// rail, summed over the two rails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "otfs/channel.hpp"
#include "otfs/core.hpp"
#include "otfs/ddmatrix.hpp"
#include "otfs/equalizer.hpp"
#include "otfs/modem.hpp"
#include "otfs/pulses.hpp"

namespace otfs {

// ------------------------------------------------------------------
// Observation pipeline.

// Demodulate every polyphase branch of a received frame (prefix removed):
// branch g is decimated onto the symbol lattice and demodulated as if it
// were symbol-spaced.
inline std::vector<std::vector<cplx>> branch_observations(const BasebandSignal& r,
                                                          const DDGridConfig& grid) {
    std::vector<std::vector<cplx>> ys;
    ys.reserve(static_cast<size_t>(grid.g));
    for (int g = 0; g < grid.g; ++g)
        ys.push_back(sfft(wigner_rect(decimate_branch(r, g), grid)).x);
    return ys;
}

// Noiseless branch outputs of one frame pushed through the sampled
// time-domain channel, concatenated branch-major.  This chain never touches
// the closed-form matrix, so it serves as its independent reference.
inline std::vector<cplx> time_domain_reference(const DDFrame& dd, const ChannelRealization& ch,
                                               const RolloffFilter& filter,
                                               const DDGridConfig& grid) {
    const int cp = (ch.channel_order - 1) * grid.g;
    const BasebandSignal s = add_cp(heisenberg_rect(isfft(dd)), cp);
    const BasebandSignal r = remove_cp(apply_channel(s, ch, filter, grid));
    std::vector<cplx> y;
    y.reserve(static_cast<size_t>(grid.grid_size()) * grid.g);
    for (auto& yb : branch_observations(r, grid)) y.insert(y.end(), yb.begin(), yb.end());
    return y;
}

// ------------------------------------------------------------------
// EXIT measurement (quadrature alphabet only).

namespace detail {

inline void require_quadrature(const ModAlphabet& ab, const char* where) {
    if (ab.order() != 4)
        throw std::invalid_argument(std::string(where) + ": rail-based EXIT needs a quadrature alphabet");
}

} // namespace detail

// Rail-wise a-priori draw for known transmit symbols: half log-ratios with
// the consistency condition (mean sigma^2 aligned with the rail sign,
// variance sigma^2), plus the symbol-level ratios they induce.
struct AprioriDraw {
    LLRBlock llrs;                 // per symbol, ratio to the reference symbol
    std::vector<double> rail_l;    // 2 per symbol: in-phase then quadrature
    std::vector<int> rail_sign;    // true rail signs, +-1
};

inline AprioriDraw sample_apriori_llrs(double sigma, const std::vector<int>& tx,
                                       const ModAlphabet& alphabet, std::mt19937_64& rng) {
    detail::require_quadrature(alphabet, "sample_apriori_llrs");
    if (sigma < 0.0) throw std::invalid_argument("sample_apriori_llrs: negative sigma");
    AprioriDraw out;
    out.llrs.resize(tx.size(), std::vector<double>(4, 0.0));
    out.rail_l.resize(2 * tx.size());
    out.rail_sign.resize(2 * tx.size());
    const double s2 = sigma * sigma;
    for (size_t c = 0; c < tx.size(); ++c) {
        const cplx a = alphabet.symbols[static_cast<size_t>(tx[c])];
        const int si = a.real() > 0.0 ? 1 : -1;
        const int sq = a.imag() > 0.0 ? 1 : -1;
        const double li = s2 * si + sigma * draw_std_normal(rng);
        const double lq = s2 * sq + sigma * draw_std_normal(rng);
        out.rail_l[2 * c] = li;
        out.rail_l[2 * c + 1] = lq;
        out.rail_sign[2 * c] = si;
        out.rail_sign[2 * c + 1] = sq;
        for (int j = 0; j < 4; ++j) {
            const cplx aj = alphabet.symbols[static_cast<size_t>(j)];
            out.llrs[c][static_cast<size_t>(j)] =
                (aj.real() > 0.0 ? 2.0 * li : 0.0) + (aj.imag() > 0.0 ? 2.0 * lq : 0.0);
        }
    }
    return out;
}

// Information carried by one rail prior of spread sigma, by dense quadrature
// over the consistent Gaussian; both rails together carry twice this.
inline double mutual_info_apriori(double sigma) {
    if (sigma <= 0.0) return 0.0;
    const double s2 = sigma * sigma;
    const int steps = 4000;
    const double lo = -8.0, hi = 8.0;
    const double dt = (hi - lo) / steps;
    const double inv_ln2 = 1.0 / std::log(2.0);
    double acc = 0.0;
    for (int i = 0; i <= steps; ++i) {
        const double t = lo + i * dt;
        const double l = s2 + sigma * t;
        const double z = -2.0 * l;
        const double soft = z > 30.0 ? z : std::log1p(std::exp(std::min(z, 30.0)));
        const double f = soft * inv_ln2;
        const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
        acc += w * std::exp(-0.5 * t * t) / std::sqrt(2.0 * pi) * f * dt;
    }
    return 2.0 * (1.0 - acc);
}

// Histogram estimate of the information between a rail's half log-ratio and
// its true sign: 100 bins spanning +-6 sample standard deviations, outliers
// clamped into the edge bins.  Returns a value in [0, 1] per rail... doubled
// by the caller across the two rails.
inline double mutual_info_half_llr(const std::vector<double>& l, const std::vector<int>& sign,
                                   int bins = 100) {
    if (l.size() != sign.size() || l.empty())
        throw std::invalid_argument("mutual_info_half_llr: bad sample arrays");
    double mean = 0.0;
    for (double v : l) mean += v;
    mean /= static_cast<double>(l.size());
    double var = 0.0;
    for (double v : l) var += (v - mean) * (v - mean);
    var /= static_cast<double>(l.size());
    const double sd = std::max(std::sqrt(var), 1e-12);
    const double lo = mean - 6.0 * sd, hi = mean + 6.0 * sd;

    std::vector<double> cp(static_cast<size_t>(bins), 0.0), cn(static_cast<size_t>(bins), 0.0);
    double np = 0.0, nn = 0.0;
    for (size_t i = 0; i < l.size(); ++i) {
        int b = static_cast<int>((l[i] - lo) / (hi - lo) * bins);
        b = std::clamp(b, 0, bins - 1);
        if (sign[i] > 0) {
            cp[static_cast<size_t>(b)] += 1.0;
            np += 1.0;
        } else {
            cn[static_cast<size_t>(b)] += 1.0;
            nn += 1.0;
        }
    }
    if (np == 0.0 || nn == 0.0) return 0.0;
    double info = 0.0;
    for (int b = 0; b < bins; ++b) {
        const double pp = cp[static_cast<size_t>(b)] / np;
        const double pn = cn[static_cast<size_t>(b)] / nn;
        const double mix = 0.5 * (pp + pn);
        if (pp > 0.0) info += 0.5 * pp * std::log2(pp / mix);
        if (pn > 0.0) info += 0.5 * pn * std::log2(pn / mix);
    }
    return std::max(info, 0.0);
}

// Split symbol-level log-ratios back into per-rail half log-ratios.
inline void rails_from_llrs(const LLRBlock& llrs, const ModAlphabet& alphabet,
                            std::vector<double>& rail_l) {
    detail::require_quadrature(alphabet, "rails_from_llrs");
    rail_l.resize(2 * llrs.size());
    for (size_t c = 0; c < llrs.size(); ++c) {
        double p[4];
        double mx = llrs[c][0];
        for (int j = 1; j < 4; ++j) mx = std::max(mx, llrs[c][static_cast<size_t>(j)]);
        double s = 0.0;
        for (int j = 0; j < 4; ++j) {
            p[j] = std::exp(llrs[c][static_cast<size_t>(j)] - mx);
            s += p[j];
        }
        double pi_pos = 0.0, pi_neg = 0.0, pq_pos = 0.0, pq_neg = 0.0;
        for (int j = 0; j < 4; ++j) {
            const cplx a = alphabet.symbols[static_cast<size_t>(j)];
            const double w = p[j] / s;
            (a.real() > 0.0 ? pi_pos : pi_neg) += w;
            (a.imag() > 0.0 ? pq_pos : pq_neg) += w;
        }
        const double floor_p = 1e-300;
        rail_l[2 * c] = 0.5 * std::log(std::max(pi_pos, floor_p) / std::max(pi_neg, floor_p));
        rail_l[2 * c + 1] = 0.5 * std::log(std::max(pq_pos, floor_p) / std::max(pq_neg, floor_p));
    }
}

// Information of a pooled set of symbol log-ratio blocks against the known
// transmit indices: rails are separated, estimated independently, and summed.
inline double symbol_llr_information(const std::vector<double>& rail_l,
                                     const std::vector<int>& rail_sign) {
    std::vector<double> li, lq;
    std::vector<int> si, sq;
    for (size_t i = 0; i + 1 < rail_l.size(); i += 2) {
        li.push_back(rail_l[i]);
        si.push_back(rail_sign[i]);
        lq.push_back(rail_l[i + 1]);
        sq.push_back(rail_sign[i + 1]);
    }
    return mutual_info_half_llr(li, si) + mutual_info_half_llr(lq, sq);
}

// ------------------------------------------------------------------
// Channel-knowledge perturbation.

// Produce the true channel a receiver with estimate `est` actually faces:
// every path moves inside the relative ball of radius eps around its
// estimate (gain uniform in the complex disc, delay and Doppler uniform in
// the interval), so eps = 0 reproduces the estimate exactly.
inline ChannelRealization perturb_csi(const ChannelRealization& est, double eps,
                                      std::mt19937_64& rng) {
    if (eps < 0.0 || eps >= 1.0)
        throw std::invalid_argument("perturb_csi: eps must lie in [0, 1)");
    ChannelRealization out = est;
    if (eps == 0.0) return out;
    for (ChannelPath& p : out.paths) {
        const double radius = eps * std::abs(p.gain) * std::sqrt(uniform01(rng));
        const double phase = 2.0 * pi * uniform01(rng);
        p.gain += std::polar(radius, phase);
        p.delay += (2.0 * uniform01(rng) - 1.0) * eps * p.delay;
        p.doppler += (2.0 * uniform01(rng) - 1.0) * eps * std::abs(p.doppler);
    }
    return out;
}

// ------------------------------------------------------------------
// Bit-error-rate sweeps.

enum class ReceiverKind { icmp, tmp, s_icmp, s_tmp, sss_mp };

inline const char* receiver_name(ReceiverKind k) {
    switch (k) {
        case ReceiverKind::icmp: return "icmp";
        case ReceiverKind::tmp: return "tmp";
        case ReceiverKind::s_icmp: return "s-icmp";
        case ReceiverKind::s_tmp: return "s-tmp";
        case ReceiverKind::sss_mp: return "sss-mp";
    }
    return "unknown";
}

inline ReceiverKind parse_receiver(const std::string& name) {
    if (name == "icmp") return ReceiverKind::icmp;
    if (name == "tmp") return ReceiverKind::tmp;
    if (name == "s-icmp") return ReceiverKind::s_icmp;
    if (name == "s-tmp") return ReceiverKind::s_tmp;
    if (name == "sss-mp") return ReceiverKind::sss_mp;
    throw std::invalid_argument("unknown receiver: " + name);
}

struct SweepConfig {
    DDGridConfig grid{16, 32, 15e3, 2};
    ChannelProfile profile;
    ModAlphabet alphabet = make_qpsk_gray();
    double rolloff = 0.4;
    double filter_span = 4.0;
    MPParams mp;
    int n_t = 3;
    TruncationSpec trunc;    // Doppler window of the closed-form matrices
    int trim_r = 50;         // kept edges per row for the trimmed receivers
    double csi_epsilon = 0.0;
    int frames = 200;
    uint64_t seed = 1;
    std::vector<double> snr_db = {10.0};
    std::vector<ReceiverKind> receivers = {ReceiverKind::icmp, ReceiverKind::tmp};
};

struct FrameOutcome {
    std::vector<unsigned long long> bit_errors; // aligned with config receivers
    unsigned long long bits = 0;
};

// One frame at one SNR.  Streams are tied to (seed, frame, purpose), so the
// channel, data, and knowledge error repeat across SNR points and receivers
// see identical observations: comparisons are paired by construction.
inline FrameOutcome simulate_frame(const SweepConfig& cfg, double snr_db, int frame) {
    const DDGridConfig& grid = cfg.grid;
    const ModAlphabet& ab = cfg.alphabet;
    const RolloffFilter rc = make_rc_filter(cfg.rolloff, cfg.filter_span);
    const RolloffFilter rrc = make_rrc_filter(cfg.rolloff, cfg.filter_span);

    std::mt19937_64 ch_rng = make_rng(stream_for(cfg.seed, static_cast<uint64_t>(frame), Stream::channel));
    const ChannelRealization est = draw_channel(cfg.profile, grid, cfg.filter_span, ch_rng);
    std::mt19937_64 csi_rng = make_rng(stream_for(cfg.seed, static_cast<uint64_t>(frame), Stream::csi));
    const ChannelRealization truth = perturb_csi(est, cfg.csi_epsilon, csi_rng);

    std::mt19937_64 data_rng = make_rng(stream_for(cfg.seed, static_cast<uint64_t>(frame), Stream::data));
    std::vector<int> tx(static_cast<size_t>(grid.grid_size()));
    for (int& v : tx) v = static_cast<int>(data_rng() % static_cast<uint64_t>(ab.order()));
    DDFrame dd;
    dd.grid = grid;
    dd.x.resize(tx.size());
    for (size_t i = 0; i < tx.size(); ++i) dd.x[i] = ab.symbols[static_cast<size_t>(tx[i])];

    const int cp = (truth.channel_order - 1) * grid.g;
    BasebandSignal r = apply_channel(add_cp(heisenberg_rect(isfft(dd)), cp), truth, rc, grid);
    const double sigma_n2 = snr_to_sigma(snr_db, ab);
    std::mt19937_64 noise_rng = make_rng(stream_for(cfg.seed, static_cast<uint64_t>(frame), Stream::noise));
    r = add_rx_filtered_noise(r, sigma_n2, rrc, noise_rng);
    const std::vector<std::vector<cplx>> ys = branch_observations(remove_cp(r), grid);
    const double sigma_dd = noise_variance_after_rx_filter(sigma_n2, rrc);

    // Receiver-side models all come from the estimate, built on demand.
    std::vector<SparseDDMatrix> mats;
    std::vector<MPGraph> branch_graphs;
    MPGraph stacked, stacked_trim;
    std::vector<MPGraph> branch_trim;
    std::vector<cplx> y_stacked;
    bool have_branches = false, have_stacked = false, have_stacked_trim = false,
         have_branch_trim = false;
    auto ensure_branches = [&] {
        if (have_branches) return;
        for (int g = 0; g < grid.g; ++g) {
            mats.push_back(build_branch_matrix(est, rc, grid, g, cfg.trunc));
            branch_graphs.push_back(MPGraph::from_matrix(mats.back()));
        }
        for (const auto& yb : ys) y_stacked.insert(y_stacked.end(), yb.begin(), yb.end());
        have_branches = true;
    };
    auto ensure_stacked = [&] {
        ensure_branches();
        if (!have_stacked) {
            stacked = MPGraph::from_matrix(stack_branches(mats));
            have_stacked = true;
        }
    };

    FrameOutcome out;
    out.bits = static_cast<unsigned long long>(tx.size()) * ab.bits_per_symbol;
    for (ReceiverKind kind : cfg.receivers) {
        std::vector<int> dec;
        switch (kind) {
            case ReceiverKind::icmp: {
                ensure_stacked();
                dec = icmp_run(stacked, y_stacked, sigma_dd, ab, cfg.mp).decisions;
                break;
            }
            case ReceiverKind::tmp: {
                ensure_branches();
                if (grid.g != 2)
                    throw std::invalid_argument("simulate_frame: turbo receivers need two branches");
                dec = tmp_run(branch_graphs, ys, sigma_dd, ab, cfg.mp, cfg.n_t).decisions;
                break;
            }
            case ReceiverKind::s_icmp: {
                ensure_stacked();
                if (!have_stacked_trim) {
                    stacked_trim = trim_graph(stacked, cfg.trim_r, ab);
                    have_stacked_trim = true;
                }
                dec = icmp_run(stacked_trim, y_stacked, sigma_dd, ab, cfg.mp).decisions;
                break;
            }
            case ReceiverKind::s_tmp: {
                ensure_branches();
                if (grid.g != 2)
                    throw std::invalid_argument("simulate_frame: turbo receivers need two branches");
                if (!have_branch_trim) {
                    for (const MPGraph& g : branch_graphs)
                        branch_trim.push_back(trim_graph(g, cfg.trim_r, ab));
                    have_branch_trim = true;
                }
                dec = tmp_run(branch_trim, ys, sigma_dd, ab, cfg.mp, cfg.n_t).decisions;
                break;
            }
            case ReceiverKind::sss_mp: {
                const MPGraph g0 = MPGraph::from_matrix(build_on_grid_matrix(est, grid));
                dec = icmp_run(g0, ys[0], sigma_dd, ab, cfg.mp).decisions;
                break;
            }
        }
        unsigned long long errs = 0;
        for (size_t i = 0; i < tx.size(); ++i) errs += bit_distance(tx[i], dec[i]);
        out.bit_errors.push_back(errs);
    }
    return out;
}

struct BERPoint {
    ReceiverKind receiver;
    double snr_db = 0.0;
    unsigned long long bit_errors = 0;
    unsigned long long bits = 0;
    int frames = 0;

    double ber() const { return bits ? static_cast<double>(bit_errors) / bits : 0.0; }
};

inline std::vector<BERPoint> ber_sweep(const SweepConfig& cfg) {
    std::vector<BERPoint> points;
    for (ReceiverKind k : cfg.receivers)
        for (double snr : cfg.snr_db) points.push_back({k, snr, 0, 0, cfg.frames});
    for (size_t si = 0; si < cfg.snr_db.size(); ++si) {
        for (int f = 0; f < cfg.frames; ++f) {
            const FrameOutcome o = simulate_frame(cfg, cfg.snr_db[si], f);
            for (size_t ri = 0; ri < cfg.receivers.size(); ++ri) {
                BERPoint& p = points[ri * cfg.snr_db.size() + si];
                p.bit_errors += o.bit_errors[ri];
                p.bits += o.bits;
            }
        }
    }
    return points;
}

// ------------------------------------------------------------------
// EXIT chart and trajectory.

struct ExitConfig {
    DDGridConfig grid{16, 32, 15e3, 2};
    ChannelProfile profile;
    ModAlphabet alphabet = make_qpsk_gray();
    double rolloff = 0.4;
    double filter_span = 4.0;
    MPParams mp;
    TruncationSpec trunc;
    double snr_db = 6.0;
    int frames_per_point = 4;
    int n_t = 3; // trajectory only
    uint64_t seed = 1;
    std::vector<double> sigmas = {0.01, 0.3, 0.6, 0.9, 1.2, 1.6, 2.0, 2.6, 3.4, 5.0};
};

struct ExitPoint {
    double sigma = 0.0;
    double i_i = 0.0;
    double i_e = 0.0;
    double snr_db = 0.0;
};

namespace detail {

struct ExitFrame {
    std::vector<int> tx;
    std::vector<int> rail_sign;
    MPGraph stacked;
    std::vector<MPGraph> branch_graphs;
    std::vector<std::vector<cplx>> ys;
    std::vector<cplx> y_stacked;
};

inline ExitFrame make_exit_frame(const ExitConfig& cfg, int frame) {
    const DDGridConfig& grid = cfg.grid;
    const ModAlphabet& ab = cfg.alphabet;
    const RolloffFilter rc = make_rc_filter(cfg.rolloff, cfg.filter_span);
    const RolloffFilter rrc = make_rrc_filter(cfg.rolloff, cfg.filter_span);

    std::mt19937_64 ch_rng = make_rng(stream_for(cfg.seed, static_cast<uint64_t>(frame), Stream::channel));
    const ChannelRealization ch = draw_channel(cfg.profile, grid, cfg.filter_span, ch_rng);

    ExitFrame out;
    std::mt19937_64 data_rng = make_rng(stream_for(cfg.seed, static_cast<uint64_t>(frame), Stream::data));
    out.tx.resize(static_cast<size_t>(grid.grid_size()));
    for (int& v : out.tx) v = static_cast<int>(data_rng() % static_cast<uint64_t>(ab.order()));
    out.rail_sign.resize(2 * out.tx.size());
    for (size_t i = 0; i < out.tx.size(); ++i) {
        const cplx a = ab.symbols[static_cast<size_t>(out.tx[i])];
        out.rail_sign[2 * i] = a.real() > 0.0 ? 1 : -1;
        out.rail_sign[2 * i + 1] = a.imag() > 0.0 ? 1 : -1;
    }

    DDFrame dd;
    dd.grid = grid;
    dd.x.resize(out.tx.size());
    for (size_t i = 0; i < out.tx.size(); ++i)
        dd.x[i] = ab.symbols[static_cast<size_t>(out.tx[i])];

    const int cp = (ch.channel_order - 1) * grid.g;
    BasebandSignal r = apply_channel(add_cp(heisenberg_rect(isfft(dd)), cp), ch, rc, grid);
    const double sigma_n2 = snr_to_sigma(cfg.snr_db, ab);
    std::mt19937_64 noise_rng = make_rng(stream_for(cfg.seed, static_cast<uint64_t>(frame), Stream::noise));
    r = add_rx_filtered_noise(r, sigma_n2, rrc, noise_rng);
    out.ys = branch_observations(remove_cp(r), grid);

    std::vector<SparseDDMatrix> mats;
    for (int g = 0; g < grid.g; ++g) {
        mats.push_back(build_branch_matrix(ch, rc, grid, g, cfg.trunc));
        out.branch_graphs.push_back(MPGraph::from_matrix(mats.back()));
    }
    out.stacked = MPGraph::from_matrix(stack_branches(mats));
    for (const auto& yb : out.ys) out.y_stacked.insert(out.y_stacked.end(), yb.begin(), yb.end());
    return out;
}

inline LLRBlock clamp_block(LLRBlock l, double c) {
    for (auto& row : l)
        for (double& v : row) v = std::clamp(v, -c, c);
    return l;
}

} // namespace detail

// Measured detector transfer curve: for each prior spread sigma, feed
// consistently drawn rail priors into one full detector pass over the
// stacked branches and estimate the information of its extrinsic output.
inline std::vector<ExitPoint> exit_chart(const ExitConfig& cfg) {
    detail::require_quadrature(cfg.alphabet, "exit_chart");
    const RolloffFilter rrc = make_rrc_filter(cfg.rolloff, cfg.filter_span);
    const double sigma_dd = noise_variance_after_rx_filter(snr_to_sigma(cfg.snr_db, cfg.alphabet), rrc);

    std::vector<detail::ExitFrame> frames;
    for (int f = 0; f < cfg.frames_per_point; ++f) frames.push_back(detail::make_exit_frame(cfg, f));

    std::vector<ExitPoint> points;
    for (double sigma : cfg.sigmas) {
        std::vector<double> rail_l;
        std::vector<int> rail_sign;
        for (int f = 0; f < cfg.frames_per_point; ++f) {
            const detail::ExitFrame& fr = frames[static_cast<size_t>(f)];
            std::mt19937_64 prior_rng = make_rng(stream_for(cfg.seed, static_cast<uint64_t>(f), Stream::prior));
            const AprioriDraw prior = sample_apriori_llrs(sigma, fr.tx, cfg.alphabet, prior_rng);
            const LLRBlock l_in = detail::clamp_block(prior.llrs, cfg.mp.llr_clamp);

            const MPResult res = run_message_passing(fr.stacked, fr.y_stacked, sigma_dd,
                                                     cfg.alphabet, cfg.mp, &l_in);
            // Extraction floors only at the underflow boundary: the receiver's
            // working floor would cap the posterior ratios below the prior
            // clamp and corrupt the subtraction.
            LLRBlock l_e = llrs_from_posterior(res.posterior, 1e-300);
            for (size_t c = 0; c < l_e.size(); ++c)
                for (size_t j = 0; j < l_e[c].size(); ++j) l_e[c][j] -= l_in[c][j];

            std::vector<double> rails;
            rails_from_llrs(l_e, cfg.alphabet, rails);
            rail_l.insert(rail_l.end(), rails.begin(), rails.end());
            rail_sign.insert(rail_sign.end(), fr.rail_sign.begin(), fr.rail_sign.end());
        }
        points.push_back({sigma, mutual_info_apriori(sigma),
                          symbol_llr_information(rail_l, rail_sign), cfg.snr_db});
    }
    return points;
}

struct TrajectoryPoint {
    int pass = 0;      // half-pass index, 1-based
    double i_i = 0.0;  // information entering the branch detector
    double i_e = 0.0;  // information of its extrinsic output
    double snr_db = 0.0;
};

// Measured turbo trajectory: the information actually exchanged between the
// two branch detectors across the turbo passes, pooled over frames.
inline std::vector<TrajectoryPoint> exit_trajectory(const ExitConfig& cfg) {
    detail::require_quadrature(cfg.alphabet, "exit_trajectory");
    if (cfg.grid.g != 2)
        throw std::invalid_argument("exit_trajectory: the turbo exchange needs two branches");
    const RolloffFilter rrc = make_rrc_filter(cfg.rolloff, cfg.filter_span);
    const double sigma_dd = noise_variance_after_rx_filter(snr_to_sigma(cfg.snr_db, cfg.alphabet), rrc);
    const int q = cfg.alphabet.order();

    std::vector<detail::ExitFrame> frames;
    for (int f = 0; f < cfg.frames_per_point; ++f) frames.push_back(detail::make_exit_frame(cfg, f));
    std::vector<LLRBlock> prior(frames.size());
    for (size_t f = 0; f < frames.size(); ++f)
        prior[f].assign(frames[f].tx.size(), std::vector<double>(static_cast<size_t>(q), 0.0));

    std::vector<TrajectoryPoint> points;
    for (int t = 0; t < cfg.n_t; ++t) {
        for (int b = 0; b < 2; ++b) {
            std::vector<double> in_l, out_l;
            std::vector<int> signs;
            for (size_t f = 0; f < frames.size(); ++f) {
                const detail::ExitFrame& fr = frames[f];
                const MPResult res = run_message_passing(fr.branch_graphs[static_cast<size_t>(b)],
                                                         fr.ys[static_cast<size_t>(b)], sigma_dd,
                                                         cfg.alphabet, cfg.mp, &prior[f]);
                LLRBlock l_e = llrs_from_posterior(res.posterior, cfg.mp.prob_floor);
                for (size_t c = 0; c < l_e.size(); ++c)
                    for (size_t j = 0; j < l_e[c].size(); ++j)
                        l_e[c][j] = std::clamp(l_e[c][j] - prior[f][c][j], -cfg.mp.llr_clamp,
                                               cfg.mp.llr_clamp);

                std::vector<double> rails;
                rails_from_llrs(prior[f], cfg.alphabet, rails);
                in_l.insert(in_l.end(), rails.begin(), rails.end());
                rails_from_llrs(l_e, cfg.alphabet, rails);
                out_l.insert(out_l.end(), rails.begin(), rails.end());
                signs.insert(signs.end(), fr.rail_sign.begin(), fr.rail_sign.end());
                prior[f] = std::move(l_e);
            }
            points.push_back({2 * t + b + 1, symbol_llr_information(in_l, signs),
                              symbol_llr_information(out_l, signs), cfg.snr_db});
        }
    }
    return points;
}

// ------------------------------------------------------------------
// CSV output.  Fixed formatting keeps byte-identical files for identical
// configurations and seeds.

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace detail

inline void write_ber_csv(std::ostream& os, const std::vector<BERPoint>& points, uint64_t seed) {
    os << "receiver,snr_db,ber,frames,bit_errors,seed\n";
    for (const BERPoint& p : points)
        os << receiver_name(p.receiver) << ',' << detail::fmt_double(p.snr_db) << ','
           << detail::fmt_double(p.ber()) << ',' << p.frames << ',' << p.bit_errors << ','
           << seed << '\n';
}

inline void write_exit_csv(std::ostream& os, const std::vector<ExitPoint>& points) {
    os << "sigma,I_i,I_e,snr_db\n";
    for (const ExitPoint& p : points)
        os << detail::fmt_double(p.sigma) << ',' << detail::fmt_double(p.i_i) << ','
           << detail::fmt_double(p.i_e) << ',' << detail::fmt_double(p.snr_db) << '\n';
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryPoint>& points) {
    os << "pass,I_i,I_e,snr_db\n";
    for (const TrajectoryPoint& p : points)
        os << p.pass << ',' << detail::fmt_double(p.i_i) << ',' << detail::fmt_double(p.i_e)
           << ',' << detail::fmt_double(p.snr_db) << '\n';
}

// ------------------------------------------------------------------
// Rank correlation, for monotonicity checks on measured curves.

inline double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("spearman_rho: need two equally sized samples");
    auto ranks = [](const std::vector<double>& v) {
        const size_t n = v.size();
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
        std::vector<double> r(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
            for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> ra = ranks(a), rb = ranks(b);
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(ra.size());
    mb /= static_cast<double>(rb.size());
    double num = 0.0, da = 0.0, db = 0.0;
    for (size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da == 0.0 || db == 0.0) return 0.0;
    return num / std::sqrt(da * db);
}

} // namespace otfs
