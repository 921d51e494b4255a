#pragma once
// CLI wiring shared by the tool and its tests: every ExperimentConfig field
// is exposed as a dotted option, so INI sections map onto struct sections
// and flags override file values.

#include <CLI11.hpp>

#include "otfs/config.hpp"

namespace otfs_cli {

// Maps INI sections onto the dotted option names: `[grid] n=32` becomes the
// item `grid.n`, so one App-level option serves both the command line and
// the file.  Section open/close markers are dropped.
class SectionedConfig : public CLI::ConfigBase {
  public:
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        std::vector<CLI::ConfigItem> items = CLI::ConfigBase::from_config(input);
        std::vector<CLI::ConfigItem> out;
        for (CLI::ConfigItem& item : items) {
            if (item.name == "++" || item.name == "--") continue;
            if (!item.parents.empty()) {
                std::string joined;
                for (const std::string& p : item.parents) joined += p + ".";
                item.name = joined + item.name;
                item.parents.clear();
            }
            out.push_back(std::move(item));
        }
        return out;
    }
};

inline void attach_options(CLI::App& app, otfs::ExperimentConfig& cfg) {
    app.config_formatter(std::make_shared<SectionedConfig>());
    app.set_config("--config", "", "INI configuration file; flags override file values");
    app.allow_config_extras(false);

    app.add_option("--grid.n", cfg.n, "Doppler bins per frame")->capture_default_str();
    app.add_option("--grid.m", cfg.m, "delay bins per frame")->capture_default_str();
    app.add_option("--grid.delta_f", cfg.delta_f, "subcarrier spacing [Hz]")->capture_default_str();
    app.add_option("--grid.g", cfg.g, "receive oversampling factor")->capture_default_str();

    app.add_option("--modulation.alphabet", cfg.alphabet, "symbol alphabet")->capture_default_str();

    app.add_option("--channel.paths", cfg.paths, "number of propagation paths")->capture_default_str();
    app.add_option("--channel.tau_max", cfg.tau_max, "maximum path delay [s]")->capture_default_str();
    app.add_option("--channel.decay_per_us", cfg.decay_per_us, "exponential power decay per microsecond")
        ->capture_default_str();
    app.add_option("--channel.nu_max", cfg.nu_max, "explicit maximum Doppler [Hz]; wins over velocity")
        ->capture_default_str();
    app.add_option("--channel.velocity_kmh", cfg.velocity_kmh, "mobile speed [km/h]")->capture_default_str();
    app.add_option("--channel.carrier_hz", cfg.carrier_hz, "carrier frequency [Hz]")->capture_default_str();
    app.add_flag("--channel.on_grid_delays", cfg.on_grid_delays, "round delays to the sample lattice")
        ->capture_default_str();
    app.add_flag("--channel.on_grid_doppler", cfg.on_grid_doppler, "round Doppler to the bin lattice")
        ->capture_default_str();

    app.add_option("--filter.rolloff", cfg.rolloff, "raised-cosine rolloff")->capture_default_str();
    app.add_option("--filter.span", cfg.span, "pulse truncation span [symbol periods]")->capture_default_str();

    app.add_option("--receiver.receivers", cfg.receivers,
                   "receivers to run: icmp, tmp, s-icmp, s-tmp, sss-mp")
        ->capture_default_str();
    app.add_option("--receiver.n_iter", cfg.n_iter, "detector iterations per pass")->capture_default_str();
    app.add_option("--receiver.delta", cfg.delta, "message damping factor")->capture_default_str();
    app.add_option("--receiver.rho", cfg.rho, "convergence probability margin")->capture_default_str();
    app.add_option("--receiver.n_t", cfg.n_t, "turbo passes")->capture_default_str();
    app.add_option("--receiver.trim_r", cfg.trim_r, "kept edges per row in trimmed receivers")
        ->capture_default_str();
    app.add_option("--receiver.trunc_e", cfg.trunc_e, "Doppler window half-width; -1 keeps the full window")
        ->capture_default_str();

    app.add_option("--run.snr_db", cfg.snr_db, "SNR grid [dB]")->capture_default_str();
    app.add_option("--run.frames", cfg.frames, "frames per SNR point")->capture_default_str();
    app.add_option("--run.seed", cfg.seed, "master seed")->capture_default_str();
    app.add_option("--run.csi_epsilon", cfg.csi_epsilon, "relative channel-knowledge error radius")
        ->capture_default_str();

    app.add_option("--exit.sigmas", cfg.exit_sigmas, "a-priori spread grid")->capture_default_str();
    app.add_option("--exit.snr_db", cfg.exit_snr_db, "SNR per transfer curve [dB]")->capture_default_str();
    app.add_option("--exit.frames", cfg.exit_frames, "frames pooled per curve point")->capture_default_str();

    app.add_option("--output.out_dir", cfg.out_dir, "output directory; default $OTFS_OUTPUT_DIR or '.'")
        ->capture_default_str();
    app.add_option("--output.ber_csv", cfg.ber_csv, "error-rate CSV filename")->capture_default_str();
    app.add_option("--output.exit_csv", cfg.exit_csv, "transfer-curve CSV filename")->capture_default_str();
    app.add_option("--output.trajectory_csv", cfg.trajectory_csv, "turbo trajectory CSV filename")
        ->capture_default_str();
}

} // namespace otfs_cli
