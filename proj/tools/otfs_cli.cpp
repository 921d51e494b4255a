// Batch driver for the delay-Doppler link simulator: BER sweeps, detector
// transfer curves, and model self-checks, all seeded and CSV-emitting.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "cli_app.hpp"
#include "otfs/analysis.hpp"
#include "otfs/config.hpp"

namespace {

using namespace otfs;

std::filesystem::path out_path(const ExperimentConfig& cfg, const std::string& filename) {
    std::filesystem::path dir;
    if (!cfg.out_dir.empty()) {
        dir = cfg.out_dir;
    } else if (const char* env = std::getenv("OTFS_OUTPUT_DIR"); env && *env) {
        dir = env;
    } else {
        dir = ".";
    }
    std::filesystem::create_directories(dir);
    return dir / filename;
}

void report_channel(const ExperimentConfig& cfg) {
    std::string warning;
    const double nu = resolve_nu_max(cfg, &warning);
    if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
    char line[160];
    if (cfg.nu_max >= 0.0) {
        std::snprintf(line, sizeof line, "channel: %d paths, nu_max = %.6g Hz (explicit)",
                      cfg.paths, nu);
    } else {
        std::snprintf(line, sizeof line,
                      "channel: %d paths, nu_max = %.6g Hz (from %.6g km/h at %.6g GHz)",
                      cfg.paths, nu, cfg.velocity_kmh, cfg.carrier_hz / 1e9);
    }
    std::cout << line << "\n";
}

int run_simulate(const ExperimentConfig& cfg) {
    report_channel(cfg);
    const SweepConfig sweep = to_sweep_config(cfg);
    const std::vector<BERPoint> points = ber_sweep(sweep);

    const std::filesystem::path path = out_path(cfg, cfg.ber_csv);
    std::ofstream os(path);
    if (!os) {
        std::cerr << "error: cannot open " << path << " for writing\n";
        return 1;
    }
    write_ber_csv(os, points, cfg.seed);

    std::printf("%-8s %8s %12s %12s %12s\n", "receiver", "snr_db", "ber", "bit_errors", "bits");
    for (const BERPoint& p : points)
        std::printf("%-8s %8.3g %12.5g %12llu %12llu\n", receiver_name(p.receiver), p.snr_db,
                    p.ber(), p.bit_errors, p.bits);
    std::cout << "wrote " << path.string() << "\n";
    return 0;
}

int run_exit_chart(const ExperimentConfig& cfg) {
    report_channel(cfg);
    std::vector<ExitPoint> curve;
    std::vector<TrajectoryPoint> traj;
    for (double snr : cfg.exit_snr_db) {
        const ExitConfig ec = to_exit_config(cfg, snr);
        for (const ExitPoint& p : exit_chart(ec)) curve.push_back(p);
        if (cfg.g == 2)
            for (const TrajectoryPoint& p : exit_trajectory(ec)) traj.push_back(p);
    }

    const std::filesystem::path curve_path = out_path(cfg, cfg.exit_csv);
    std::ofstream os(curve_path);
    if (!os) {
        std::cerr << "error: cannot open " << curve_path << " for writing\n";
        return 1;
    }
    write_exit_csv(os, curve);
    std::cout << "wrote " << curve_path.string() << " (" << curve.size() << " points)\n";

    if (!traj.empty()) {
        const std::filesystem::path traj_path = out_path(cfg, cfg.trajectory_csv);
        std::ofstream ts(traj_path);
        if (!ts) {
            std::cerr << "error: cannot open " << traj_path << " for writing\n";
            return 1;
        }
        write_trajectory_csv(ts, traj);
        std::cout << "wrote " << traj_path.string() << " (" << traj.size() << " points)\n";
    } else {
        std::cout << "trajectory skipped: needs grid.g = 2\n";
    }
    return 0;
}

// Model self-checks: fast versions of the oracle comparisons the test suite
// pins, runnable from a shipped binary.
int run_verify(const ExperimentConfig& cfg) {
    report_channel(cfg);
    int failures = 0;
    auto report = [&](const char* name, bool ok, const std::string& detail = "") {
        std::cout << (ok ? "[PASS] " : "[FAIL] ") << name;
        if (!ok && !detail.empty()) std::cout << ": " << detail;
        std::cout << "\n";
        if (!ok) ++failures;
    };

    // Transmit/receive transform round trip.
    {
        double worst = 0.0;
        for (int g : {1, 2}) {
            const DDGridConfig grid(8, 16, 15e3, g);
            const ModAlphabet qpsk = make_qpsk_gray();
            std::mt19937_64 rng = make_rng({cfg.seed, 100 + static_cast<uint64_t>(g)});
            for (int t = 0; t < 5; ++t) {
                DDFrame dd;
                dd.grid = grid;
                dd.x.resize(static_cast<size_t>(grid.grid_size()));
                for (auto& v : dd.x) v = qpsk.symbols[rng() % 4];
                const DDFrame back = sfft(wigner_rect(heisenberg_rect(isfft(dd)), grid));
                for (size_t i = 0; i < dd.x.size(); ++i)
                    worst = std::max(worst, std::abs(back.x[i] - dd.x[i]));
            }
        }
        report("transform round trip", worst < 1e-9, "max error " + std::to_string(worst));
    }

    // Integer-Doppler collapse of the truncation window kernel.
    {
        bool ok = true;
        for (int n : {8, 16, 32})
            for (long long q = -2 * n; q <= 2 * n && ok; ++q) {
                const cplx v = doppler_dirichlet(q, 0.0, n);
                const cplx want = (mod_floor(q, n) == 0) ? cplx(n, 0.0) : cplx(0.0, 0.0);
                ok = v == want;
            }
        report("integer-Doppler window collapse", ok);
    }

    // On-grid closed form equals the zero-window branch build.
    {
        bool ok = true;
        std::string detail;
        const DDGridConfig grid(8, 16, 15e3, 2);
        ChannelProfile prof;
        prof.l = 3;
        prof.tau_max = 2.5 * grid.ts();
        prof.nu_max = 1500.0;
        prof.on_grid_delays = true;
        prof.on_grid_doppler = true;
        const RolloffFilter rc = make_rc_filter(cfg.rolloff, cfg.span);
        for (uint64_t s = 0; s < 3 && ok; ++s) {
            std::mt19937_64 rng = make_rng({cfg.seed, 200 + s});
            const ChannelRealization ch = draw_channel(prof, grid, cfg.span, rng);
            TruncationSpec zero;
            zero.e = 0;
            const SparseDDMatrix a = build_on_grid_matrix(ch, grid);
            const SparseDDMatrix b = build_branch_matrix(ch, rc, grid, 0, zero);
            for (int r = 0; r < a.rows && ok; ++r) {
                const auto& ra = a.row[static_cast<size_t>(r)];
                const auto& rb = b.row[static_cast<size_t>(r)];
                if (ra.size() != rb.size()) {
                    ok = false;
                    detail = "support differs at row " + std::to_string(r);
                    break;
                }
                for (size_t e = 0; e < ra.size(); ++e)
                    if (ra[e].col != rb[e].col || ra[e].val != rb[e].val) {
                        ok = false;
                        detail = "entry differs at row " + std::to_string(r);
                        break;
                    }
            }
        }
        report("on-grid closed form matches zero-window build", ok, detail);
    }

    // Closed-form model against the sampled time-domain chain.
    {
        double worst = 0.0;
        const DDGridConfig grid(8, 16, 15e3, 2);
        ChannelProfile prof;
        prof.l = 4;
        prof.tau_max = 4.0 * grid.ts();
        prof.nu_max = 1600.0;
        const RolloffFilter rc = make_rc_filter(cfg.rolloff, cfg.span);
        const ModAlphabet qpsk = make_qpsk_gray();
        for (uint64_t s = 0; s < 5; ++s) {
            std::mt19937_64 rng = make_rng({cfg.seed, 300 + s});
            const ChannelRealization ch = draw_channel(prof, grid, cfg.span, rng);
            std::vector<SparseDDMatrix> mats;
            for (int g = 0; g < grid.g; ++g) mats.push_back(build_branch_matrix(ch, rc, grid, g));
            const SparseDDMatrix h = stack_branches(mats);
            for (int t = 0; t < 3; ++t) {
                DDFrame dd;
                dd.grid = grid;
                dd.x.resize(static_cast<size_t>(grid.grid_size()));
                std::vector<cplx> x(dd.x.size());
                for (size_t i = 0; i < dd.x.size(); ++i) {
                    dd.x[i] = qpsk.symbols[rng() % 4];
                    x[i] = dd.x[i];
                }
                const std::vector<cplx> ref = time_domain_reference(dd, ch, rc, grid);
                const std::vector<cplx> model = h.multiply(x);
                double num = 0.0, den = 0.0;
                for (size_t i = 0; i < ref.size(); ++i) {
                    num += std::norm(ref[i] - model[i]);
                    den += std::norm(ref[i]);
                }
                worst = std::max(worst, std::sqrt(num / den));
            }
        }
        report("sampled-model equivalence", worst < 1e-8,
               "worst relative error " + std::to_string(worst));
    }

    // Detector operation counters against the closed-form count.
    {
        const DDGridConfig grid(8, 16, 15e3, 2);
        ChannelProfile prof;
        prof.l = 3;
        prof.tau_max = 2.0 * grid.ts();
        prof.nu_max = 1200.0;
        const RolloffFilter rc = make_rc_filter(cfg.rolloff, cfg.span);
        std::mt19937_64 rng = make_rng({cfg.seed, 400});
        const ChannelRealization ch = draw_channel(prof, grid, cfg.span, rng);
        std::vector<SparseDDMatrix> mats;
        for (int g = 0; g < grid.g; ++g) mats.push_back(build_branch_matrix(ch, rc, grid, g));
        const MPGraph graph = MPGraph::from_matrix(stack_branches(mats));
        const ModAlphabet qpsk = make_qpsk_gray();
        std::vector<cplx> y(static_cast<size_t>(graph.n_rows), cplx(0.1, -0.2));
        MPParams params;
        params.n_iter = 4;
        params.stop_on_convergence = false;
        const MPResult res = icmp_run(graph, y, 0.5, qpsk, params);
        const unsigned long long edges = static_cast<unsigned long long>(graph.edges.size());
        const unsigned long long q = 4;
        const unsigned long long want = 4ull * edges * (11 * q + 1);
        report("operation counters", res.complexity.total() == want,
               "got " + std::to_string(res.complexity.total()) + ", want " + std::to_string(want));
    }

    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"delay-Doppler link simulator"};
    app.require_subcommand(1);
    otfs::ExperimentConfig cfg;
    otfs_cli::attach_options(app, cfg);
    bool dump = false;
    // configurable(false) keeps the flag out of the dump itself, so a dumped
    // file reloads as a run rather than another dump.
    app.add_flag("--dump-config", dump, "print the effective configuration and exit")
        ->configurable(false);
    CLI::App* sim = app.add_subcommand("simulate", "run a BER sweep and write the CSV");
    CLI::App* exit_cmd = app.add_subcommand("exit-chart", "measure detector transfer curves");
    CLI::App* verify = app.add_subcommand("verify", "run model self-checks");
    for (CLI::App* sub : {sim, exit_cmd, verify}) sub->fallthrough(true);
    CLI11_PARSE(app, argc, argv);

    try {
        otfs::validate_experiment(cfg);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    if (dump) {
        std::cout << app.config_to_str(true, false);
        return 0;
    }

    try {
        if (sim->parsed()) return run_simulate(cfg);
        if (exit_cmd->parsed()) return run_exit_chart(cfg);
        if (verify->parsed()) return run_verify(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
