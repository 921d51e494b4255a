#pragma once
// Experiment configuration shared by every command: a flat validated record
// mirroring the INI layout (section.key), plus conversions into the run
// configs of the analysis layer.  Validation errors always name the
// offending field.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "otfs/analysis.hpp"

namespace otfs {

struct ExperimentConfig {
    // [grid]
    int n = 32;
    int m = 128;
    double delta_f = 15e3;
    int g = 2;

    // [modulation]
    std::string alphabet = "qpsk";

    // [channel]
    int paths = 9;
    double tau_max = 2e-6;
    double decay_per_us = 1.0;
    double nu_max = -1.0;       // explicit maximum Doppler; unset when negative
    double velocity_kmh = 300;  // alternative Doppler source: mobile speed
    double carrier_hz = 4e9;
    bool on_grid_delays = false;
    bool on_grid_doppler = false;

    // [filter]
    double rolloff = 0.4;
    double span = 4.0;

    // [receiver]
    std::vector<std::string> receivers = {"icmp", "tmp"};
    int n_iter = 20;
    double delta = 0.7;
    double rho = 0.1;
    int n_t = 3;
    int trim_r = 50;
    int trunc_e = -1;  // Doppler window half-width; full window when negative

    // [run]
    std::vector<double> snr_db = {10.0};
    int frames = 200;
    std::uint64_t seed = 1;
    double csi_epsilon = 0.0;

    // [exit]
    std::vector<double> exit_sigmas = {0.01, 0.4, 0.8, 1.2, 1.6, 2.0, 2.4};
    std::vector<double> exit_snr_db = {0.0, 6.0};
    int exit_frames = 12;

    // [output]
    std::string out_dir;  // empty: $OTFS_OUTPUT_DIR, falling back to "."
    std::string ber_csv = "ber.csv";
    std::string exit_csv = "exit.csv";
    std::string trajectory_csv = "exit_trajectory.csv";
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& field, const std::string& why) {
    throw std::invalid_argument("config field " + field + ": " + why);
}

} // namespace detail

// Maximum Doppler actually used: an explicit value wins over the
// velocity/carrier pair; `warning` (optional) receives a note when both
// sources are present.
inline double resolve_nu_max(const ExperimentConfig& cfg, std::string* warning = nullptr) {
    if (cfg.nu_max >= 0.0) {
        if (cfg.velocity_kmh > 0.0 && warning)
            *warning = "channel.nu_max and channel.velocity_kmh are both set; "
                       "explicit channel.nu_max wins";
        return cfg.nu_max;
    }
    if (cfg.velocity_kmh > 0.0) return jakes_nu_max(cfg.velocity_kmh, cfg.carrier_hz);
    detail::config_error("channel.nu_max", "set either nu_max or velocity_kmh");
}

inline void validate_experiment(const ExperimentConfig& cfg) {
    using detail::config_error;
    if (cfg.n < 1) config_error("grid.n", "must be >= 1");
    if (cfg.m < 1) config_error("grid.m", "must be >= 1");
    if (cfg.delta_f <= 0.0) config_error("grid.delta_f", "must be positive");
    if (cfg.g < 1) config_error("grid.g", "must be >= 1");

    if (cfg.alphabet != "qpsk") config_error("modulation.alphabet", "only 'qpsk' is supported");

    if (cfg.paths < 1) config_error("channel.paths", "must be >= 1");
    if (cfg.tau_max < 0.0) config_error("channel.tau_max", "must be >= 0");
    if (cfg.decay_per_us < 0.0) config_error("channel.decay_per_us", "must be >= 0");
    if (cfg.carrier_hz <= 0.0) config_error("channel.carrier_hz", "must be positive");
    const double nu = resolve_nu_max(cfg);
    if (nu >= cfg.delta_f) config_error("channel.nu_max", "must stay below delta_f");

    if (cfg.rolloff < 0.0 || cfg.rolloff > 1.0) config_error("filter.rolloff", "must lie in [0, 1]");
    if (cfg.span <= 0.0) config_error("filter.span", "must be positive");

    const DDGridConfig grid(cfg.n, cfg.m, cfg.delta_f, cfg.g);
    if (channel_order_for(cfg.tau_max, cfg.span, grid) > cfg.m)
        config_error("channel.tau_max", "delay spread plus filter span exceeds one slot");

    if (cfg.receivers.empty()) config_error("receiver.receivers", "need at least one receiver");
    for (const std::string& name : cfg.receivers) {
        ReceiverKind kind;
        try {
            kind = parse_receiver(name);
        } catch (const std::invalid_argument&) {
            config_error("receiver.receivers", "unknown receiver '" + name + "'");
        }
        if ((kind == ReceiverKind::tmp || kind == ReceiverKind::s_tmp) && cfg.g != 2)
            config_error("grid.g", "turbo receivers need exactly two branches");
        if ((kind == ReceiverKind::s_icmp || kind == ReceiverKind::s_tmp) && cfg.trim_r < 1)
            config_error("receiver.trim_r", "trimmed receivers need trim_r >= 1");
    }
    if (cfg.n_iter < 1) config_error("receiver.n_iter", "must be >= 1");
    if (cfg.delta <= 0.0 || cfg.delta > 1.0) config_error("receiver.delta", "must lie in (0, 1]");
    if (cfg.rho <= 0.0 || cfg.rho >= 1.0) config_error("receiver.rho", "must lie in (0, 1)");
    if (cfg.n_t < 1) config_error("receiver.n_t", "must be >= 1");
    if (cfg.trunc_e < -1) config_error("receiver.trunc_e", "must be -1 (full) or >= 0");

    if (cfg.snr_db.empty()) config_error("run.snr_db", "need at least one SNR point");
    if (cfg.frames < 1) config_error("run.frames", "must be >= 1");
    if (cfg.csi_epsilon < 0.0 || cfg.csi_epsilon >= 1.0)
        config_error("run.csi_epsilon", "must lie in [0, 1)");

    if (cfg.exit_sigmas.empty()) config_error("exit.sigmas", "need at least one sigma");
    for (double s : cfg.exit_sigmas)
        if (s < 0.0) config_error("exit.sigmas", "sigmas must be >= 0");
    if (cfg.exit_snr_db.empty()) config_error("exit.snr_db", "need at least one SNR point");
    if (cfg.exit_frames < 1) config_error("exit.frames", "must be >= 1");
}

inline ChannelProfile to_profile(const ExperimentConfig& cfg) {
    ChannelProfile p;
    p.l = cfg.paths;
    p.tau_max = cfg.tau_max;
    p.nu_max = resolve_nu_max(cfg);
    p.decay_per_us = cfg.decay_per_us;
    p.on_grid_delays = cfg.on_grid_delays;
    p.on_grid_doppler = cfg.on_grid_doppler;
    return p;
}

inline MPParams to_mp_params(const ExperimentConfig& cfg) {
    MPParams mp;
    mp.n_iter = cfg.n_iter;
    mp.delta = cfg.delta;
    mp.rho = cfg.rho;
    return mp;
}

inline SweepConfig to_sweep_config(const ExperimentConfig& cfg) {
    SweepConfig s;
    s.grid = DDGridConfig(cfg.n, cfg.m, cfg.delta_f, cfg.g);
    s.profile = to_profile(cfg);
    s.rolloff = cfg.rolloff;
    s.filter_span = cfg.span;
    s.mp = to_mp_params(cfg);
    s.n_t = cfg.n_t;
    s.trunc.e = cfg.trunc_e;
    s.trim_r = cfg.trim_r;
    s.csi_epsilon = cfg.csi_epsilon;
    s.frames = cfg.frames;
    s.seed = cfg.seed;
    s.snr_db = cfg.snr_db;
    s.receivers.clear();
    for (const std::string& name : cfg.receivers) s.receivers.push_back(parse_receiver(name));
    return s;
}

inline ExitConfig to_exit_config(const ExperimentConfig& cfg, double snr_db) {
    ExitConfig e;
    e.grid = DDGridConfig(cfg.n, cfg.m, cfg.delta_f, cfg.g);
    e.profile = to_profile(cfg);
    e.rolloff = cfg.rolloff;
    e.filter_span = cfg.span;
    e.mp = to_mp_params(cfg);
    e.trunc.e = cfg.trunc_e;
    e.snr_db = snr_db;
    e.frames_per_point = cfg.exit_frames;
    e.n_t = cfg.n_t;
    e.seed = cfg.seed;
    e.sigmas = cfg.exit_sigmas;
    return e;
}

} // namespace otfs
