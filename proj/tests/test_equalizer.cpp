#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "otfs/channel.hpp"
#include "otfs/core.hpp"
#include "otfs/ddmatrix.hpp"
#include "otfs/equalizer.hpp"
#include "otfs/modem.hpp"
#include "otfs/pulses.hpp"

using namespace otfs;

namespace {

SparseDDMatrix random_sparse(int n, int extra_per_row, double off_gain, std::mt19937_64& rng) {
    SparseDDMatrix h;
    h.rows = n;
    h.cols = n;
    h.row.resize(static_cast<size_t>(n));
    for (int r = 0; r < n; ++r) {
        std::vector<std::pair<int, cplx>> entries;
        entries.emplace_back(r, std::polar(1.0, 2.0 * pi * uniform01(rng)));
        for (int t = 0; t < extra_per_row; ++t) {
            int c = static_cast<int>(rng() % static_cast<uint64_t>(n));
            while (c == r) c = static_cast<int>(rng() % static_cast<uint64_t>(n));
            entries.emplace_back(c, off_gain * std::polar(1.0, 2.0 * pi * uniform01(rng)));
        }
        std::sort(entries.begin(), entries.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [c, v] : entries) {
            if (!h.row[static_cast<size_t>(r)].empty() &&
                h.row[static_cast<size_t>(r)].back().col == c) {
                h.row[static_cast<size_t>(r)].back().val += v;
            } else {
                h.row[static_cast<size_t>(r)].push_back({c, v});
            }
        }
    }
    return h;
}

std::vector<int> random_indices(int n, int q, std::mt19937_64& rng) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int& v : idx) v = static_cast<int>(rng() % static_cast<uint64_t>(q));
    return idx;
}

std::vector<cplx> modulate(const std::vector<int>& idx, const ModAlphabet& ab) {
    std::vector<cplx> x(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) x[i] = ab.symbols[static_cast<size_t>(idx[i])];
    return x;
}

std::vector<cplx> noisy(const std::vector<cplx>& y, double sigma2, std::mt19937_64& rng) {
    std::vector<cplx> out = y;
    for (cplx& v : out) v += draw_cn(rng, sigma2);
    return out;
}

// Brute-force detector reference: the same algorithm written with explicit
// per-edge exclusion sums instead of aggregate-minus-term updates.
MPResult reference_mp(const MPGraph& g, const std::vector<cplx>& y, double sigma2,
                      const ModAlphabet& ab, const MPParams& params,
                      const LLRBlock* prior_llrs) {
    const int q = ab.order();
    const int n_edges = static_cast<int>(g.edges.size());
    auto softmax = [&](std::vector<double>& v) {
        double mx = *std::max_element(v.begin(), v.end());
        double s = 0.0;
        for (double& t : v) {
            t = std::exp(t - mx);
            s += t;
        }
        for (double& t : v) t /= s;
    };

    std::vector<std::vector<double>> prior_log(
        static_cast<size_t>(g.n_cols), std::vector<double>(static_cast<size_t>(q), 0.0));
    std::vector<std::vector<double>> prior_prob(
        static_cast<size_t>(g.n_cols), std::vector<double>(static_cast<size_t>(q), 1.0 / q));
    if (prior_llrs) {
        for (int c = 0; c < g.n_cols; ++c) {
            for (int j = 0; j < q; ++j)
                prior_log[static_cast<size_t>(c)][static_cast<size_t>(j)] =
                    std::clamp((*prior_llrs)[static_cast<size_t>(c)][static_cast<size_t>(j)],
                               -params.llr_clamp, params.llr_clamp);
            prior_prob[static_cast<size_t>(c)] = prior_log[static_cast<size_t>(c)];
            softmax(prior_prob[static_cast<size_t>(c)]);
        }
    }

    std::vector<std::vector<double>> msg(static_cast<size_t>(n_edges));
    for (int e = 0; e < n_edges; ++e)
        msg[static_cast<size_t>(e)] = prior_prob[static_cast<size_t>(g.edges[static_cast<size_t>(e)].col)];

    std::vector<cplx> z(static_cast<size_t>(n_edges));
    std::vector<double> v2(static_cast<size_t>(n_edges));
    std::vector<std::vector<double>> post(static_cast<size_t>(g.n_cols),
                                          std::vector<double>(static_cast<size_t>(q), 1.0 / q));
    MPResult res;
    res.posterior = post;
    double eta_best = -1.0;

    for (int it = 1; it <= params.n_iter; ++it) {
        for (int e = 0; e < n_edges; ++e) {
            const MPGraph::Edge& ed = g.edges[static_cast<size_t>(e)];
            cplx mu = g.residual_mean[static_cast<size_t>(ed.row)];
            double var = g.residual_var[static_cast<size_t>(ed.row)] + sigma2;
            for (int o = g.row_begin[static_cast<size_t>(ed.row)];
                 o < g.row_begin[static_cast<size_t>(ed.row) + 1]; ++o) {
                if (o == e) continue;
                const MPGraph::Edge& oe = g.edges[static_cast<size_t>(o)];
                cplx sm(0.0, 0.0);
                double sp = 0.0;
                for (int j = 0; j < q; ++j) {
                    sm += msg[static_cast<size_t>(o)][static_cast<size_t>(j)] * ab.symbols[static_cast<size_t>(j)];
                    sp += msg[static_cast<size_t>(o)][static_cast<size_t>(j)] *
                          std::norm(ab.symbols[static_cast<size_t>(j)]);
                }
                mu += sm * oe.h;
                var += sp * std::norm(oe.h) - std::norm(sm * oe.h);
            }
            z[static_cast<size_t>(e)] = y[static_cast<size_t>(ed.row)] - mu;
            v2[static_cast<size_t>(e)] = var;
        }

        auto log_eps = [&](int e, int j) {
            const MPGraph::Edge& ed = g.edges[static_cast<size_t>(e)];
            return -std::norm(z[static_cast<size_t>(e)] - ed.h * ab.symbols[static_cast<size_t>(j)]) /
                   v2[static_cast<size_t>(e)];
        };

        int decided = 0;
        std::vector<std::vector<double>> fresh(static_cast<size_t>(n_edges),
                                               std::vector<double>(static_cast<size_t>(q)));
        for (int c = 0; c < g.n_cols; ++c) {
            std::vector<double> lam(static_cast<size_t>(q));
            for (int j = 0; j < q; ++j) {
                double s = prior_log[static_cast<size_t>(c)][static_cast<size_t>(j)];
                for (int e : g.col_edges[static_cast<size_t>(c)])
                    s += log_eps(e, j) - log_eps(e, q - 1);
                lam[static_cast<size_t>(j)] = s;
            }
            softmax(lam);
            post[static_cast<size_t>(c)] = lam;
            if (*std::max_element(lam.begin(), lam.end()) >= 1.0 - params.rho) ++decided;

            for (int e : g.col_edges[static_cast<size_t>(c)]) {
                std::vector<double> al(static_cast<size_t>(q));
                for (int j = 0; j < q; ++j) {
                    double s = prior_log[static_cast<size_t>(c)][static_cast<size_t>(j)];
                    for (int o : g.col_edges[static_cast<size_t>(c)]) {
                        if (o == e) continue;
                        s += log_eps(o, j) - log_eps(o, q - 1);
                    }
                    al[static_cast<size_t>(j)] = std::clamp(s, -params.llr_clamp, params.llr_clamp);
                }
                softmax(al);
                fresh[static_cast<size_t>(e)] = al;
            }
        }
        for (int e = 0; e < n_edges; ++e)
            for (int j = 0; j < q; ++j)
                msg[static_cast<size_t>(e)][static_cast<size_t>(j)] =
                    params.delta * fresh[static_cast<size_t>(e)][static_cast<size_t>(j)] +
                    (1.0 - params.delta) * msg[static_cast<size_t>(e)][static_cast<size_t>(j)];

        const double eta = static_cast<double>(decided) / g.n_cols;
        res.eta_history.push_back(eta);
        res.iterations = it;
        if (eta > eta_best) {
            eta_best = eta;
            res.posterior = post;
        }
        if (params.stop_on_convergence && decided == g.n_cols) break;
    }
    res.final_posterior = post;
    res.eta = std::max(eta_best, 0.0);
    res.decisions.resize(static_cast<size_t>(g.n_cols));
    for (int c = 0; c < g.n_cols; ++c) {
        const auto& pc = res.posterior[static_cast<size_t>(c)];
        res.decisions[static_cast<size_t>(c)] =
            static_cast<int>(std::max_element(pc.begin(), pc.end()) - pc.begin());
    }
    return res;
}

} // namespace

TEST_CASE("identity model decodes in one iteration") {
    const ModAlphabet qpsk = make_qpsk_gray();
    const DDGridConfig grid(4, 8, 15e3);
    ChannelRealization ch;
    ch.channel_order = 1;
    ch.paths = {{cplx(1.0, 0.0), 0.0, 0.0}};
    const MPGraph g = MPGraph::from_matrix(build_branch_matrix(ch, make_rc_filter(0.4, 4.0), grid, 0));

    std::mt19937_64 rng = make_rng({61, 0});
    const std::vector<int> tx = random_indices(g.n_cols, qpsk.order(), rng);
    const std::vector<cplx> y = noisy(modulate(tx, qpsk), 1e-4, rng);

    const MPResult r = icmp_run(g, y, 1e-4, qpsk, MPParams{});
    CHECK(r.decisions == tx);
    CHECK(r.eta == 1.0);
    CHECK(r.iterations == 1);
    CHECK(r.eta_history.size() == 1);
}

TEST_CASE("aggregate-minus-term updates equal explicit exclusion sums") {
    const ModAlphabet qpsk = make_qpsk_gray();
    MPParams params;
    params.n_iter = 5;
    params.stop_on_convergence = false;

    for (uint64_t seed : {71ull, 72ull, 73ull}) {
        std::mt19937_64 rng = make_rng({seed, 0});
        const SparseDDMatrix m = random_sparse(8, 2, 0.5, rng);
        const MPGraph g = MPGraph::from_matrix(m);
        const std::vector<int> tx = random_indices(g.n_cols, qpsk.order(), rng);
        const double sigma2 = 0.1;
        const std::vector<cplx> y = noisy(m.multiply(modulate(tx, qpsk)), sigma2, rng);

        // Random asymmetric priors exercise the prior path too.
        LLRBlock prior(static_cast<size_t>(g.n_cols), std::vector<double>(4, 0.0));
        for (auto& row : prior)
            for (int j = 0; j < 3; ++j) row[static_cast<size_t>(j)] = 3.0 * (uniform01(rng) - 0.5);

        const MPResult a = run_message_passing(g, y, sigma2, qpsk, params, &prior);
        const MPResult b = reference_mp(g, y, sigma2, qpsk, params, &prior);

        REQUIRE(a.iterations == b.iterations);
        REQUIRE(a.eta_history.size() == b.eta_history.size());
        for (size_t i = 0; i < a.eta_history.size(); ++i)
            CHECK(a.eta_history[i] == Catch::Approx(b.eta_history[i]).margin(1e-12));
        for (int c = 0; c < g.n_cols; ++c)
            for (int j = 0; j < 4; ++j) {
                CHECK(a.posterior[static_cast<size_t>(c)][static_cast<size_t>(j)] ==
                      Catch::Approx(b.posterior[static_cast<size_t>(c)][static_cast<size_t>(j)]).margin(1e-12));
                CHECK(a.final_posterior[static_cast<size_t>(c)][static_cast<size_t>(j)] ==
                      Catch::Approx(b.final_posterior[static_cast<size_t>(c)][static_cast<size_t>(j)]).margin(1e-12));
            }
        CHECK(a.decisions == b.decisions);
    }
}

TEST_CASE("operation counters follow the per-edge accounting exactly") {
    const ModAlphabet qpsk = make_qpsk_gray();
    std::mt19937_64 rng = make_rng({81, 0});
    const MPGraph g = MPGraph::from_matrix(random_sparse(12, 3, 0.4, rng));
    const std::vector<int> tx = random_indices(g.n_cols, qpsk.order(), rng);

    SparseDDMatrix m;
    m.rows = g.n_rows;
    m.cols = g.n_cols;
    m.row.resize(static_cast<size_t>(g.n_rows));
    for (const auto& e : g.edges) m.row[static_cast<size_t>(e.row)].push_back({e.col, e.h});
    const double sigma2 = snr_to_sigma(-5.0, qpsk);
    const std::vector<cplx> y = noisy(m.multiply(modulate(tx, qpsk)), sigma2, rng);

    MPParams params;
    params.n_iter = 7;
    params.stop_on_convergence = false;
    const MPResult r = run_message_passing(g, y, sigma2, qpsk, params, nullptr);

    const unsigned long long edges = g.edges.size();
    const unsigned long long q = qpsk.order();
    CHECK(r.iterations == 7);
    CHECK(r.complexity.mean_ops == 7ull * edges * 2ull * q);
    CHECK(r.complexity.var_ops == 7ull * edges * (4ull * q + 1ull));
    CHECK(r.complexity.msg_ops == 7ull * edges * 5ull * q);
    CHECK(r.complexity.total() == 7ull * edges * (11ull * q + 1ull));
}

TEST_CASE("joint detection agrees with exhaustive search on small models") {
    const ModAlphabet qpsk = make_qpsk_gray();
    const double sigma2 = snr_to_sigma(15.0, qpsk);
    MPParams params;

    std::mt19937_64 rng = make_rng({91, 0});
    int agree = 0;
    const int n_trials = 200;
    for (int t = 0; t < n_trials; ++t) {
        const SparseDDMatrix m = random_sparse(4, 2, 0.35, rng);
        const MPGraph g = MPGraph::from_matrix(m);
        const std::vector<int> tx = random_indices(4, 4, rng);
        const std::vector<cplx> y = noisy(m.multiply(modulate(tx, qpsk)), sigma2, rng);

        // Exhaustive minimum-distance search over all 256 symbol vectors.
        std::vector<int> best(4, 0);
        double best_metric = 1e300;
        std::vector<int> idx(4, 0);
        for (int h0 = 0; h0 < 4; ++h0)
            for (int h1 = 0; h1 < 4; ++h1)
                for (int h2 = 0; h2 < 4; ++h2)
                    for (int h3 = 0; h3 < 4; ++h3) {
                        idx = {h0, h1, h2, h3};
                        const std::vector<cplx> yh = m.multiply(modulate(idx, qpsk));
                        double d = 0.0;
                        for (int r = 0; r < 4; ++r) d += std::norm(y[static_cast<size_t>(r)] - yh[static_cast<size_t>(r)]);
                        if (d < best_metric) {
                            best_metric = d;
                            best = idx;
                        }
                    }

        const MPResult r = icmp_run(g, y, sigma2, qpsk, params);
        if (r.decisions == best) ++agree;
    }
    CHECK(agree >= static_cast<int>(0.95 * n_trials));
}

TEST_CASE("trim_graph keeps the strongest edges and folds the rest") {
    const ModAlphabet qpsk = make_qpsk_gray();
    SparseDDMatrix m;
    m.rows = 1;
    m.cols = 4;
    m.row = {{{0, cplx(1.0, 0.0)}, {1, cplx(0.0, 0.8)}, {2, cplx(0.8, 0.0)}, {3, cplx(0.1, 0.0)}}};
    const MPGraph full = MPGraph::from_matrix(m);

    const MPGraph t2 = trim_graph(full, 2, qpsk);
    REQUIRE(t2.edges.size() == 2);
    CHECK(t2.edges[0].col == 0);
    CHECK(t2.edges[1].col == 1); // magnitude tie 0.8 vs 0.8 resolves to the lower column
    CHECK(std::abs(t2.residual_mean[0]) == 0.0); // zero-mean alphabet under uniform priors
    CHECK(t2.residual_var[0] == Catch::Approx(0.64 + 0.01).margin(1e-15));

    const MPGraph t4 = trim_graph(full, 4, qpsk);
    REQUIRE(t4.edges.size() == 4);
    CHECK(t4.residual_var[0] == 0.0);
    CHECK(t4.residual_mean[0] == cplx(0.0, 0.0));
    for (size_t i = 0; i < 4; ++i) CHECK(t4.edges[i].col == static_cast<int>(i));

    CHECK_THROWS_AS(trim_graph(full, 0, qpsk), std::invalid_argument);
}

TEST_CASE("trimming at full support is bit-exact with the untrimmed detector") {
    const ModAlphabet qpsk = make_qpsk_gray();
    const DDGridConfig grid(4, 16, 15e3);
    ChannelProfile profile;
    profile.l = 3;
    profile.tau_max = 3.0 * grid.ts();
    profile.nu_max = 1.2 / (grid.n * grid.t_slot);
    const RolloffFilter rc = make_rc_filter(0.4, 4.0);

    std::mt19937_64 rng = make_rng({101, 1});
    const ChannelRealization ch = draw_channel(profile, grid, rc.span, rng);
    const SparseDDMatrix m = build_branch_matrix(ch, rc, grid, 0);
    const MPGraph full = MPGraph::from_matrix(m);
    const MPGraph same = trim_graph(full, full.max_row_support(), qpsk);
    REQUIRE(same.edges.size() == full.edges.size());

    const std::vector<int> tx = random_indices(full.n_cols, qpsk.order(), rng);
    const double sigma2 = snr_to_sigma(10.0, qpsk);
    const std::vector<cplx> y = noisy(m.multiply(modulate(tx, qpsk)), sigma2, rng);

    const MPResult a = icmp_run(full, y, sigma2, qpsk, MPParams{});
    const MPResult b = icmp_run(same, y, sigma2, qpsk, MPParams{});
    CHECK(a.decisions == b.decisions);
    CHECK(a.iterations == b.iterations);
    CHECK(a.complexity.total() == b.complexity.total());
    for (int c = 0; c < full.n_cols; ++c)
        for (int j = 0; j < 4; ++j)
            CHECK(a.posterior[static_cast<size_t>(c)][static_cast<size_t>(j)] ==
                  b.posterior[static_cast<size_t>(c)][static_cast<size_t>(j)]);
}

TEST_CASE("trimmed detection still decodes a dominant-diagonal model") {
    const ModAlphabet qpsk = make_qpsk_gray();
    std::mt19937_64 rng = make_rng({111, 0});
    const SparseDDMatrix m = random_sparse(16, 3, 0.15, rng);
    const MPGraph full = MPGraph::from_matrix(m);
    const MPGraph slim = trim_graph(full, 2, qpsk);
    CHECK(slim.edges.size() < full.edges.size());

    const std::vector<int> tx = random_indices(16, 4, rng);
    const double sigma2 = snr_to_sigma(18.0, qpsk);
    const std::vector<cplx> y = noisy(m.multiply(modulate(tx, qpsk)), sigma2, rng);
    const MPResult r = icmp_run(slim, y, sigma2, qpsk, MPParams{});
    CHECK(r.decisions == tx);
}

TEST_CASE("turbo exchange decodes both branches and traces per-pass decisions") {
    const ModAlphabet qpsk = make_qpsk_gray();
    const DDGridConfig grid(4, 16, 15e3, 2);
    ChannelProfile profile;
    profile.l = 3;
    profile.tau_max = 3.0 * grid.ts();
    profile.nu_max = 1.2 / (grid.n * grid.t_slot);
    const RolloffFilter rc = make_rc_filter(0.4, 4.0);

    std::mt19937_64 rng = make_rng({121, 1});
    const ChannelRealization ch = draw_channel(profile, grid, rc.span, rng);

    std::vector<MPGraph> graphs;
    for (int g = 0; g < 2; ++g)
        graphs.push_back(MPGraph::from_matrix(build_branch_matrix(ch, rc, grid, g)));

    const std::vector<int> tx = random_indices(grid.grid_size(), qpsk.order(), rng);
    DDFrame dd;
    dd.grid = grid;
    dd.x = modulate(tx, qpsk);
    const int cp = (ch.channel_order - 1) * grid.g;
    const BasebandSignal r = remove_cp(apply_channel(add_cp(heisenberg_rect(isfft(dd)), cp), ch, rc, grid));
    std::vector<std::vector<cplx>> ys;
    for (int g = 0; g < 2; ++g) ys.push_back(sfft(wigner_rect(decimate_branch(r, g), grid)).x);

    const double sigma2 = 1e-4;
    const TMPResult t = tmp_run(graphs, ys, sigma2, qpsk, MPParams{}, 2);
    CHECK(t.decisions == tx);
    CHECK(t.per_pass_decisions.size() == 2);
    CHECK(t.per_pass_decisions.back() == t.decisions);
    CHECK(t.complexity.total() > 0);

    CHECK_THROWS_AS(tmp_run({graphs[0]}, {ys[0]}, sigma2, qpsk, MPParams{}, 2),
                    std::invalid_argument);
    CHECK_THROWS_AS(tmp_run(graphs, ys, sigma2, qpsk, MPParams{}, 0), std::invalid_argument);
}

TEST_CASE("snapshot confidence equals the best per-iteration confidence") {
    const ModAlphabet qpsk = make_qpsk_gray();
    std::mt19937_64 rng = make_rng({131, 0});
    const SparseDDMatrix m = random_sparse(12, 3, 0.6, rng);
    const MPGraph g = MPGraph::from_matrix(m);
    const std::vector<int> tx = random_indices(12, 4, rng);
    const double sigma2 = snr_to_sigma(8.0, qpsk);
    const std::vector<cplx> y = noisy(m.multiply(modulate(tx, qpsk)), sigma2, rng);

    MPParams params;
    params.stop_on_convergence = false;
    const MPResult r = run_message_passing(g, y, sigma2, qpsk, params, nullptr);
    CHECK(r.eta == *std::max_element(r.eta_history.begin(), r.eta_history.end()));
    CHECK(r.eta_history.size() == static_cast<size_t>(params.n_iter));
}

TEST_CASE("strong priors dominate an uninformative channel") {
    const ModAlphabet qpsk = make_qpsk_gray();
    SparseDDMatrix m;
    m.rows = 4;
    m.cols = 4;
    m.row.resize(4);
    for (int r = 0; r < 4; ++r) m.row[static_cast<size_t>(r)] = {{r, cplx(1e-6, 0.0)}};
    const MPGraph g = MPGraph::from_matrix(m);

    LLRBlock prior(4, std::vector<double>(4, 0.0));
    const std::vector<int> want = {2, 0, 3, 1};
    for (int c = 0; c < 4; ++c)
        for (int j = 0; j < 4; ++j)
            prior[static_cast<size_t>(c)][static_cast<size_t>(j)] = (j == want[static_cast<size_t>(c)]) ? 8.0 : -8.0;
    prior[2][3] = 0.0; // reference entry stays the baseline for symbol 2's favorite

    const std::vector<cplx> y(4, cplx(0.0, 0.0));
    const MPResult r = run_message_passing(g, y, 1.0, qpsk, MPParams{}, &prior);
    CHECK(r.decisions == want);
}

TEST_CASE("posterior log-ratios use the floor and keep the reference at zero") {
    const LLRBlock l = llrs_from_posterior({{0.0, 0.5, 0.25, 0.25}}, 1e-12);
    CHECK(l[0][3] == 0.0);
    CHECK(l[0][1] == Catch::Approx(std::log(0.5 / 0.25)).margin(1e-12));
    CHECK(l[0][0] == Catch::Approx(std::log(1e-12 / 0.25)).margin(1e-9));
}

TEST_CASE("detector validates inputs") {
    const ModAlphabet qpsk = make_qpsk_gray();
    std::mt19937_64 rng = make_rng({141, 0});
    const MPGraph g = MPGraph::from_matrix(random_sparse(4, 1, 0.3, rng));
    const std::vector<cplx> y(4, cplx(0.0, 0.0));

    CHECK_THROWS_AS(icmp_run(g, std::vector<cplx>(3), 0.1, qpsk, MPParams{}), std::invalid_argument);
    CHECK_THROWS_AS(icmp_run(g, y, 0.0, qpsk, MPParams{}), std::invalid_argument);
    MPParams bad;
    bad.n_iter = 0;
    CHECK_THROWS_AS(icmp_run(g, y, 0.1, qpsk, bad), std::invalid_argument);
    LLRBlock prior(3);
    CHECK_THROWS_AS(run_message_passing(g, y, 0.1, qpsk, MPParams{}, &prior), std::invalid_argument);
}
