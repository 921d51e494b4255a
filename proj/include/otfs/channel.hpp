#pragma once
// Time-varying multipath channel: path parameters, stochastic draws (Jakes
// Doppler, exponentially weighted delay profile), the sampled channel
// application at the receiver's fractional sampling rate, and receive-
// filtered noise.
//
// The sampled model is polyphase: the output sample at t = u T_s + g T_s/G
// is a symbol-rate convolution of the transmit samples s((u-p) T_s) with the
// branch-g taps P(p T_s + g T_s/G - tau_i), each weighted by the path gain
// and the Doppler phase e^{j 2 pi nu_i (u-p) T_s}.  Branches therefore share
// the symbol-rate input and differ only through their fractionally shifted
// tap sets, which is exactly the model the closed-form delay-Doppler matrix
// describes.

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "otfs/core.hpp"
#include "otfs/modem.hpp"
#include "otfs/pulses.hpp"

namespace otfs {

struct ChannelPath {
    cplx gain;      // h_i
    double delay;   // tau_i [s], >= 0
    double doppler; // nu_i [Hz], |nu_i| < delta_f
};

// Doppler decomposition nu * NT = k + beta with beta in (-1/2, 1/2].
struct DopplerSplit {
    int k = 0;
    double beta = 0.0;
};

inline DopplerSplit doppler_split(double nu, const DDGridConfig& grid) {
    const double x = nu * grid.n * grid.t_slot;
    const int k = static_cast<int>(std::ceil(x - 0.5));
    double beta = x - k;
    // Snap roundoff residue so frequencies built as k/(NT) split exactly;
    // the beta = 0 case selects dedicated analytic branches downstream.
    if (std::abs(beta) < 1e-12) beta = 0.0;
    return {k, beta};
}

struct ChannelRealization {
    std::vector<ChannelPath> paths;
    int channel_order = 0; // P: symbol-spaced taps p = 0..P-1

    double max_delay() const {
        double t = 0.0;
        for (const ChannelPath& p : paths) t = std::max(t, p.delay);
        return t;
    }
};

// Stochastic channel description: L paths over a delay span with an
// exponential power-delay weighting exp(-decay * tau[us]) and Jakes Doppler
// nu = nu_max * cos(rho), rho uniform.  The first path is pinned at tau = 0.
struct ChannelProfile {
    int l = 9;
    double tau_max = 2e-6;       // delay span [s]
    double nu_max = 1111.0;      // maximum Doppler [Hz]
    double decay_per_us = 1.0;   // power-delay exponent per microsecond
    bool on_grid_delays = false; // round delays to the T_s lattice
    bool on_grid_doppler = false; // zero the fractional Doppler part
};

// Maximum Doppler for a mobile at speed_kmh under carrier_hz, c = 3e8 m/s.
inline double jakes_nu_max(double speed_kmh, double carrier_hz) {
    return (speed_kmh / 3.6) * carrier_hz / 3e8;
}

// Channel order implied by a delay span and the pulse truncation span.
inline int channel_order_for(double tau_max, double filter_span, const DDGridConfig& grid) {
    return static_cast<int>(std::ceil(tau_max / grid.ts() - 1e-12)) +
           2 * static_cast<int>(std::ceil(filter_span));
}

inline void validate_channel(const ChannelRealization& ch, const DDGridConfig& grid) {
    if (ch.paths.empty()) throw std::invalid_argument("channel: no paths");
    if (ch.channel_order < 1 || ch.channel_order > grid.m)
        throw std::invalid_argument("channel: order P must satisfy 1 <= P <= M");
    for (const ChannelPath& p : ch.paths) {
        if (p.delay < 0.0) throw std::invalid_argument("channel: negative path delay");
        if (std::abs(p.doppler) >= grid.delta_f)
            throw std::invalid_argument("channel: |doppler| must stay below delta_f");
    }
}

inline ChannelRealization draw_channel(const ChannelProfile& profile,
                                       const DDGridConfig& grid,
                                       double filter_span,
                                       std::mt19937_64& rng) {
    if (profile.l < 1) throw std::invalid_argument("draw_channel: need at least one path");
    if (profile.tau_max < 0.0) throw std::invalid_argument("draw_channel: negative delay span");
    if (profile.nu_max >= grid.delta_f)
        throw std::invalid_argument("draw_channel: nu_max must stay below delta_f");

    ChannelRealization ch;
    ch.channel_order = channel_order_for(profile.tau_max, filter_span, grid);
    if (ch.channel_order > grid.m)
        throw std::invalid_argument("draw_channel: channel order exceeds M");
    ch.paths.resize(profile.l);

    // Fixed draw order keeps realizations reproducible: delays, then Doppler
    // angles, then gains.
    ch.paths[0].delay = 0.0;
    for (int i = 1; i < profile.l; ++i) {
        double tau = std::min(uniform01(rng) * profile.tau_max, profile.tau_max);
        if (profile.on_grid_delays) {
            const double max_idx = std::floor(profile.tau_max / grid.ts() + 1e-9);
            tau = std::min(std::round(tau / grid.ts()), max_idx) * grid.ts();
        }
        ch.paths[i].delay = tau;
    }
    for (int i = 0; i < profile.l; ++i) {
        const double rho = (2.0 * uniform01(rng) - 1.0) * pi;
        double nu = profile.nu_max * std::cos(rho);
        if (profile.on_grid_doppler) {
            const double step = 1.0 / (grid.n * grid.t_slot);
            nu = doppler_split(nu, grid).k * step;
        }
        ch.paths[i].doppler = nu;
    }
    // Power-delay weights, normalized so the mean channel power is one.
    std::vector<double> w(profile.l);
    double wsum = 0.0;
    for (int i = 0; i < profile.l; ++i) {
        w[i] = std::exp(-profile.decay_per_us * ch.paths[i].delay * 1e6);
        wsum += w[i];
    }
    for (int i = 0; i < profile.l; ++i)
        ch.paths[i].gain = draw_cn(rng, w[i] / wsum);

    validate_channel(ch, grid);
    return ch;
}

// Branch-g sampled taps of every path: tap[i] lists (p, P(p + g/G - tau/T_s))
// for p = 0..P-1, dropping magnitudes below `threshold`.  Shared between the
// time-domain channel application and the closed-form matrix construction so
// both operate on the same discretized channel.
inline std::vector<std::vector<std::pair<int, double>>>
channel_taps(const ChannelRealization& ch, const RolloffFilter& filter,
             const DDGridConfig& grid, int g, double threshold = 1e-6) {
    if (g < 0 || g >= grid.g)
        throw std::invalid_argument("channel_taps: branch index out of range");
    std::vector<std::vector<std::pair<int, double>>> taps(ch.paths.size());
    const double ts = grid.ts();
    for (size_t i = 0; i < ch.paths.size(); ++i) {
        for (int p = 0; p < ch.channel_order; ++p) {
            const double t = p + static_cast<double>(g) / grid.g - ch.paths[i].delay / ts;
            const double v = filter(t);
            if (std::abs(v) >= threshold) taps[i].emplace_back(p, v);
        }
    }
    return taps;
}

// Apply the sampled channel to a CP-extended baseband frame (noiseless).
// Output sample layout matches the input; the cyclic prefix must cover the
// channel memory (P-1 symbol periods).
inline BasebandSignal apply_channel(const BasebandSignal& s,
                                    const ChannelRealization& ch,
                                    const RolloffFilter& filter,
                                    const DDGridConfig& grid,
                                    double tap_threshold = 1e-6) {
    validate_channel(ch, grid);
    if (s.oversampling != grid.g)
        throw std::invalid_argument("apply_channel: oversampling does not match grid");
    const int nm = grid.grid_size();
    const int g_os = grid.g;
    const int frame_len = nm * g_os;
    const int total = static_cast<int>(s.samples.size());
    if (total != frame_len + s.cp_len)
        throw std::invalid_argument("apply_channel: sample count does not match grid");
    if (s.cp_len < (ch.channel_order - 1) * g_os)
        throw std::invalid_argument("apply_channel: channel order exceeds cyclic prefix");

    const int n_paths = static_cast<int>(ch.paths.size());
    std::vector<std::vector<std::vector<std::pair<int, double>>>> taps(g_os);
    for (int g = 0; g < g_os; ++g) taps[g] = channel_taps(ch, filter, grid, g, tap_threshold);

    const cplx* frame = s.samples.data() + s.cp_len;
    BasebandSignal out;
    out.oversampling = g_os;
    out.cp_len = s.cp_len;
    out.samples.assign(s.samples.size(), cplx(0.0, 0.0));
    const double ts = grid.ts();
    for (int w = 0; w < total; ++w) {
        const long long rel = static_cast<long long>(w) - s.cp_len;
        const long long u = rel >= 0 ? rel / g_os : -((-rel + g_os - 1) / g_os);
        const int g = mod_floor(rel, g_os);
        cplx acc(0.0, 0.0);
        for (int i = 0; i < n_paths; ++i) {
            const double omega = 2.0 * pi * ch.paths[i].doppler * ts;
            cplx path_acc(0.0, 0.0);
            for (const auto& [p, tap] : taps[g][i]) {
                const cplx in = frame[static_cast<size_t>(mod_floor(u - p, nm)) * g_os];
                path_acc += tap * std::polar(1.0, omega * static_cast<double>(u - p)) * in;
            }
            acc += ch.paths[i].gain * path_acc;
        }
        out.samples[w] = acc;
    }
    return out;
}

// Add receive-filtered noise: white complex Gaussian generated at twice the
// receiver sampling rate, convolved with the receive pulse, decimated onto
// the receiver lattice.  Per-sample variance approaches
// noise_variance_after_rx_filter(sigma_n2, filter).
inline BasebandSignal add_rx_filtered_noise(const BasebandSignal& s, double sigma_n2,
                                            const RolloffFilter& filter,
                                            std::mt19937_64& rng) {
    if (sigma_n2 < 0.0)
        throw std::invalid_argument("add_rx_filtered_noise: negative noise level");
    BasebandSignal out = s;
    if (sigma_n2 == 0.0) return out;
    const int os2 = 2 * s.oversampling; // generation lattice per T_s
    const double dt = 1.0 / os2;
    const int k_half = static_cast<int>(std::llround(filter.span * os2));
    std::vector<double> kernel(2 * k_half + 1);
    for (int m = -k_half; m <= k_half; ++m) kernel[m + k_half] = filter(m * dt) * dt;

    const int len = static_cast<int>(s.samples.size());
    std::vector<cplx> white(static_cast<size_t>(2 * len + 2 * k_half + 1));
    for (cplx& v : white) v = draw_cn(rng, sigma_n2 * os2);
    for (int w = 0; w < len; ++w) {
        cplx acc(0.0, 0.0);
        for (int m = -k_half; m <= k_half; ++m)
            acc += kernel[m + k_half] * white[static_cast<size_t>(2 * w + m + k_half)];
        out.samples[w] += acc;
    }
    return out;
}

// Noise level for a target SNR defined as symbol energy over the white-noise
// level at the channel input: sigma_n2 = E_s * 10^{-snr_db/10}.
inline double snr_to_sigma(double snr_db, const ModAlphabet& alphabet) {
    return alphabet.avg_energy() * std::pow(10.0, -snr_db / 10.0);
}

// ------------------------------------------------------------------
// Replayable text serialization: gains as re/im pairs, delays in seconds,
// Dopplers in Hz.

inline std::string channel_to_text(const ChannelRealization& ch) {
    std::ostringstream os;
    os.precision(17);
    os << "otfs-channel-v1 order=" << ch.channel_order
       << " paths=" << ch.paths.size() << "\n";
    for (const ChannelPath& p : ch.paths)
        os << p.gain.real() << " " << p.gain.imag() << " "
           << p.delay << " " << p.doppler << "\n";
    return os.str();
}

inline ChannelRealization channel_from_text(const std::string& text) {
    std::istringstream is(text);
    std::string magic, order_kv, paths_kv;
    if (!(is >> magic >> order_kv >> paths_kv) || magic != "otfs-channel-v1" ||
        order_kv.rfind("order=", 0) != 0 || paths_kv.rfind("paths=", 0) != 0)
        throw std::invalid_argument("channel_from_text: bad header");
    ChannelRealization ch;
    ch.channel_order = std::stoi(order_kv.substr(6));
    const int n_paths = std::stoi(paths_kv.substr(6));
    ch.paths.resize(n_paths);
    for (int i = 0; i < n_paths; ++i) {
        double re, im;
        if (!(is >> re >> im >> ch.paths[i].delay >> ch.paths[i].doppler))
            throw std::invalid_argument("channel_from_text: truncated record");
        ch.paths[i].gain = cplx(re, im);
    }
    return ch;
}

} // namespace otfs
