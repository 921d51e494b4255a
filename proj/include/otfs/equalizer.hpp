#pragma once
// Message-passing symbol detection on the sparse delay-Doppler model
// y = H x + z.  Observation nodes send Gaussian interference summaries to
// symbol nodes; symbol nodes reply with damped probability messages.  The
// same core serves the joint (stacked-branch) detector, the per-branch
// turbo exchange, and the trimmed-graph variants: trimming folds the
// dropped edges into per-row residual moments that the core always adds,
// so an untrimmed graph simply carries zeros there and the full and
// trimmed detectors share one code path.
//
// Accounting conventions: operation counters charge 2Q per edge for input
// means, 4Q+1 per edge for input variances, and 5Q per edge for symbol
// messages, once per iteration each; residual moments and graph
// construction are not charged.  Probabilities are floored before logs,
// symbol-message log-ratios are clamped, and argmax ties resolve to the
// lowest symbol index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "otfs/core.hpp"
#include "otfs/ddmatrix.hpp"

namespace otfs {

using LLRBlock = std::vector<std::vector<double>>; // [symbol][j], ratio to the reference symbol

struct MPParams {
    int n_iter = 20;
    double delta = 0.7;      // damping weight on the fresh message
    double rho = 0.1;        // confidence margin: a symbol counts as decided at p >= 1 - rho
    double llr_clamp = 50.0;
    double prob_floor = 1e-12;
    bool stop_on_convergence = true; // leave set; clear only to pin iteration counts
};

struct ComplexityReport {
    unsigned long long mean_ops = 0;
    unsigned long long var_ops = 0;
    unsigned long long msg_ops = 0;

    unsigned long long total() const { return mean_ops + var_ops + msg_ops; }
    ComplexityReport& operator+=(const ComplexityReport& o) {
        mean_ops += o.mean_ops;
        var_ops += o.var_ops;
        msg_ops += o.msg_ops;
        return *this;
    }
};

// Bipartite observation/symbol graph with per-row residual moments for
// edges that were folded away by trimming.
struct MPGraph {
    struct Edge {
        int row;
        int col;
        cplx h;
    };

    int n_rows = 0;
    int n_cols = 0;
    std::vector<Edge> edges;               // row-major, columns ascending per row
    std::vector<int> row_begin;            // size n_rows + 1
    std::vector<std::vector<int>> col_edges;
    std::vector<cplx> residual_mean;       // per row, from folded edges
    std::vector<double> residual_var;      // per row, noise-free

    static MPGraph from_matrix(const SparseDDMatrix& h) {
        MPGraph g;
        g.n_rows = h.rows;
        g.n_cols = h.cols;
        g.edges.reserve(h.nnz());
        g.row_begin.resize(static_cast<size_t>(h.rows) + 1, 0);
        g.col_edges.resize(static_cast<size_t>(h.cols));
        for (int r = 0; r < h.rows; ++r) {
            g.row_begin[static_cast<size_t>(r)] = static_cast<int>(g.edges.size());
            for (const DDMatrixEntry& e : h.row[static_cast<size_t>(r)]) {
                g.col_edges[static_cast<size_t>(e.col)].push_back(static_cast<int>(g.edges.size()));
                g.edges.push_back({r, e.col, e.val});
            }
        }
        g.row_begin[static_cast<size_t>(h.rows)] = static_cast<int>(g.edges.size());
        g.residual_mean.assign(static_cast<size_t>(h.rows), cplx(0.0, 0.0));
        g.residual_var.assign(static_cast<size_t>(h.rows), 0.0);
        return g;
    }

    int max_row_support() const {
        int d = 0;
        for (int r = 0; r < n_rows; ++r)
            d = std::max(d, row_begin[static_cast<size_t>(r) + 1] - row_begin[static_cast<size_t>(r)]);
        return d;
    }
};

struct MPResult {
    std::vector<int> decisions;              // argmax of the snapshot posterior
    std::vector<std::vector<double>> posterior;       // best-confidence snapshot
    std::vector<std::vector<double>> final_posterior; // last iteration, for diagnostics
    std::vector<double> eta_history;         // per-iteration decided fraction
    double eta = 0.0;                        // best decided fraction seen
    int iterations = 0;
    ComplexityReport complexity;
};

namespace detail {

inline void softmax_inplace(double* v, int q) {
    double mx = v[0];
    for (int j = 1; j < q; ++j) mx = std::max(mx, v[j]);
    double s = 0.0;
    for (int j = 0; j < q; ++j) {
        v[j] = std::exp(v[j] - mx);
        s += v[j];
    }
    for (int j = 0; j < q; ++j) v[j] /= s;
}

} // namespace detail

// One detector pass.  Symbol priors enter as log-probability ratios to the
// reference symbol (null for uniform); the returned posterior is the
// snapshot taken whenever the decided fraction improves, so an early good
// iteration is never overwritten by a later oscillation.
inline MPResult run_message_passing(const MPGraph& g, const std::vector<cplx>& y,
                                    double sigma2, const ModAlphabet& alphabet,
                                    const MPParams& params,
                                    const LLRBlock* prior_llrs = nullptr) {
    const int q = alphabet.order();
    const int n_edges = static_cast<int>(g.edges.size());
    if (static_cast<int>(y.size()) != g.n_rows)
        throw std::invalid_argument("run_message_passing: observation size mismatch");
    if (sigma2 <= 0.0) throw std::invalid_argument("run_message_passing: sigma2 must be positive");
    if (params.n_iter < 1 || params.delta <= 0.0 || params.delta > 1.0)
        throw std::invalid_argument("run_message_passing: bad iteration or damping setting");
    if (prior_llrs && static_cast<int>(prior_llrs->size()) != g.n_cols)
        throw std::invalid_argument("run_message_passing: prior size mismatch");

    const std::vector<cplx>& a = alphabet.symbols;
    std::vector<double> a2(static_cast<size_t>(q));
    for (int j = 0; j < q; ++j) a2[static_cast<size_t>(j)] = std::norm(a[static_cast<size_t>(j)]);

    // Clamped prior log-ratios and the matching probabilities.
    std::vector<double> prior_log(static_cast<size_t>(g.n_cols) * q, 0.0);
    std::vector<double> prior_prob(static_cast<size_t>(g.n_cols) * q, 1.0 / q);
    if (prior_llrs) {
        for (int c = 0; c < g.n_cols; ++c) {
            if (static_cast<int>((*prior_llrs)[static_cast<size_t>(c)].size()) != q)
                throw std::invalid_argument("run_message_passing: prior entry size mismatch");
            double* pl = prior_log.data() + static_cast<size_t>(c) * q;
            double* pp = prior_prob.data() + static_cast<size_t>(c) * q;
            for (int j = 0; j < q; ++j) {
                const double v = (*prior_llrs)[static_cast<size_t>(c)][static_cast<size_t>(j)];
                pl[j] = std::clamp(v, -params.llr_clamp, params.llr_clamp);
                pp[j] = pl[j];
            }
            detail::softmax_inplace(pp, q);
        }
    }

    // Edge messages start from the priors.
    std::vector<double> msg(static_cast<size_t>(n_edges) * q);
    for (int e = 0; e < n_edges; ++e) {
        const double* pp = prior_prob.data() + static_cast<size_t>(g.edges[static_cast<size_t>(e)].col) * q;
        std::copy(pp, pp + q, msg.data() + static_cast<size_t>(e) * q);
    }

    std::vector<cplx> edge_mean(static_cast<size_t>(n_edges));
    std::vector<double> edge_var(static_cast<size_t>(n_edges));
    std::vector<cplx> edge_z(static_cast<size_t>(n_edges)); // y[d] minus excluded-c interference mean
    std::vector<double> edge_v(static_cast<size_t>(n_edges));

    int max_degree = 0;
    for (const auto& ce : g.col_edges) max_degree = std::max(max_degree, static_cast<int>(ce.size()));
    std::vector<double> loge(static_cast<size_t>(std::max(1, max_degree)) * q);
    std::vector<double> t_sum(static_cast<size_t>(q));
    std::vector<double> lam(static_cast<size_t>(q));
    std::vector<double> fresh(static_cast<size_t>(q));

    std::vector<std::vector<double>> post(static_cast<size_t>(g.n_cols),
                                          std::vector<double>(static_cast<size_t>(q), 1.0 / q));
    MPResult res;
    res.posterior = post;
    double eta_best = -1.0;

    for (int it = 1; it <= params.n_iter; ++it) {
        // Observation update: per-row interference moments with one-term exclusion.
        for (int r = 0; r < g.n_rows; ++r) {
            const int b = g.row_begin[static_cast<size_t>(r)];
            const int e_end = g.row_begin[static_cast<size_t>(r) + 1];
            cplx s_mean = g.residual_mean[static_cast<size_t>(r)];
            double s_var = g.residual_var[static_cast<size_t>(r)];
            for (int e = b; e < e_end; ++e) {
                const MPGraph::Edge& ed = g.edges[static_cast<size_t>(e)];
                const double* pe = msg.data() + static_cast<size_t>(e) * q;
                cplx sym_mean(0.0, 0.0);
                double sym_pow = 0.0;
                for (int j = 0; j < q; ++j) {
                    sym_mean += pe[j] * a[static_cast<size_t>(j)];
                    sym_pow += pe[j] * a2[static_cast<size_t>(j)];
                }
                const cplx m = sym_mean * ed.h;
                edge_mean[static_cast<size_t>(e)] = m;
                edge_var[static_cast<size_t>(e)] = sym_pow * std::norm(ed.h) - std::norm(m);
                s_mean += m;
                s_var += edge_var[static_cast<size_t>(e)];
                res.complexity.mean_ops += 2ull * q;
                res.complexity.var_ops += 4ull * q + 1;
            }
            for (int e = b; e < e_end; ++e) {
                edge_z[static_cast<size_t>(e)] =
                    y[static_cast<size_t>(r)] - (s_mean - edge_mean[static_cast<size_t>(e)]);
                edge_v[static_cast<size_t>(e)] =
                    (s_var - edge_var[static_cast<size_t>(e)]) + sigma2;
            }
        }

        // Symbol update: likelihood ratios, posterior, damped replies.
        int decided = 0;
        for (int c = 0; c < g.n_cols; ++c) {
            const auto& ce = g.col_edges[static_cast<size_t>(c)];
            const int deg = static_cast<int>(ce.size());
            const double* pl = prior_log.data() + static_cast<size_t>(c) * q;
            std::fill(t_sum.begin(), t_sum.end(), 0.0);
            for (int e_i = 0; e_i < deg; ++e_i) {
                const int e = ce[static_cast<size_t>(e_i)];
                const MPGraph::Edge& ed = g.edges[static_cast<size_t>(e)];
                double* le = loge.data() + static_cast<size_t>(e_i) * q;
                for (int j = 0; j < q; ++j)
                    le[j] = -std::norm(edge_z[static_cast<size_t>(e)] - ed.h * a[static_cast<size_t>(j)]) /
                            edge_v[static_cast<size_t>(e)];
                for (int j = 0; j < q; ++j) t_sum[static_cast<size_t>(j)] += le[j] - le[q - 1];
                res.complexity.msg_ops += 5ull * q;
            }

            for (int j = 0; j < q; ++j) lam[static_cast<size_t>(j)] = pl[j] + t_sum[static_cast<size_t>(j)];
            detail::softmax_inplace(lam.data(), q);
            std::copy(lam.begin(), lam.end(), post[static_cast<size_t>(c)].begin());
            double mx = lam[0];
            for (int j = 1; j < q; ++j) mx = std::max(mx, lam[static_cast<size_t>(j)]);
            if (mx >= 1.0 - params.rho) ++decided;

            for (int e_i = 0; e_i < deg; ++e_i) {
                const int e = ce[static_cast<size_t>(e_i)];
                const double* le = loge.data() + static_cast<size_t>(e_i) * q;
                for (int j = 0; j < q; ++j)
                    fresh[static_cast<size_t>(j)] =
                        std::clamp(pl[j] + t_sum[static_cast<size_t>(j)] - (le[j] - le[q - 1]),
                                   -params.llr_clamp, params.llr_clamp);
                detail::softmax_inplace(fresh.data(), q);
                double* pe = msg.data() + static_cast<size_t>(e) * q;
                for (int j = 0; j < q; ++j)
                    pe[j] = params.delta * fresh[static_cast<size_t>(j)] + (1.0 - params.delta) * pe[j];
            }
        }

        const double eta = static_cast<double>(decided) / g.n_cols;
        res.eta_history.push_back(eta);
        res.iterations = it;
        if (eta > eta_best) {
            eta_best = eta;
            res.posterior = post;
        }
        if (params.stop_on_convergence && decided == g.n_cols) break;
    }

    res.final_posterior = std::move(post);
    res.eta = std::max(eta_best, 0.0);
    res.decisions.resize(static_cast<size_t>(g.n_cols));
    for (int c = 0; c < g.n_cols; ++c) {
        const auto& pc = res.posterior[static_cast<size_t>(c)];
        int best = 0;
        for (int j = 1; j < q; ++j)
            if (pc[static_cast<size_t>(j)] > pc[static_cast<size_t>(best)]) best = j;
        res.decisions[static_cast<size_t>(c)] = best;
    }
    return res;
}

// Joint detector over all receiver branches (stacked observation model),
// starting from uniform priors.
inline MPResult icmp_run(const MPGraph& g, const std::vector<cplx>& y, double sigma2,
                         const ModAlphabet& alphabet, const MPParams& params) {
    return run_message_passing(g, y, sigma2, alphabet, params, nullptr);
}

// Log-probability ratios (to the reference symbol) of a posterior block.
inline LLRBlock llrs_from_posterior(const std::vector<std::vector<double>>& posterior,
                                    double prob_floor = 1e-12) {
    LLRBlock out(posterior.size());
    for (size_t c = 0; c < posterior.size(); ++c) {
        const size_t q = posterior[c].size();
        out[c].resize(q);
        const double ref = std::log(std::max(posterior[c][q - 1], prob_floor));
        for (size_t j = 0; j < q; ++j)
            out[c][j] = std::log(std::max(posterior[c][j], prob_floor)) - ref;
    }
    return out;
}

struct TMPResult {
    std::vector<int> decisions;                    // from the last pass
    std::vector<std::vector<int>> per_pass_decisions; // after each turbo iteration
    double eta = 0.0;                              // last pass
    ComplexityReport complexity;
};

// Turbo exchange between the two branch detectors: each pass runs a full
// detector on one branch and hands only the extrinsic part of its output
// (posterior ratios minus the incoming prior) to the other branch.  Message
// state does not survive across passes; only the extrinsic ratios do.
inline TMPResult tmp_run(const std::vector<MPGraph>& branches,
                         const std::vector<std::vector<cplx>>& ys, double sigma2,
                         const ModAlphabet& alphabet, const MPParams& params, int n_t) {
    if (branches.size() != 2 || ys.size() != 2)
        throw std::invalid_argument("tmp_run: the turbo exchange couples exactly two branches");
    if (branches[0].n_cols != branches[1].n_cols)
        throw std::invalid_argument("tmp_run: branch column counts differ");
    if (n_t < 1) throw std::invalid_argument("tmp_run: need at least one turbo iteration");

    const int q = alphabet.order();
    const int n_cols = branches[0].n_cols;
    LLRBlock prior(static_cast<size_t>(n_cols), std::vector<double>(static_cast<size_t>(q), 0.0));

    auto extrinsic = [&](const MPResult& r, const LLRBlock& in) {
        LLRBlock out = llrs_from_posterior(r.posterior, params.prob_floor);
        for (int c = 0; c < n_cols; ++c)
            for (int j = 0; j < q; ++j)
                out[static_cast<size_t>(c)][static_cast<size_t>(j)] =
                    std::clamp(out[static_cast<size_t>(c)][static_cast<size_t>(j)] -
                                   in[static_cast<size_t>(c)][static_cast<size_t>(j)],
                               -params.llr_clamp, params.llr_clamp);
        return out;
    };

    TMPResult res;
    for (int t = 0; t < n_t; ++t) {
        const MPResult r0 = run_message_passing(branches[0], ys[0], sigma2, alphabet, params, &prior);
        res.complexity += r0.complexity;
        const LLRBlock to_b1 = extrinsic(r0, prior);

        const MPResult r1 = run_message_passing(branches[1], ys[1], sigma2, alphabet, params, &to_b1);
        res.complexity += r1.complexity;
        prior = extrinsic(r1, to_b1);

        res.per_pass_decisions.push_back(r1.decisions);
        res.decisions = r1.decisions;
        res.eta = r1.eta;
    }
    return res;
}

// Keep the r strongest edges of every row (ties to the lowest column) and
// fold the rest into the row's residual interference moments under the given
// symbol priors (uniform when omitted).  The residual variance carries no
// noise term; the detector adds the noise level itself.
inline MPGraph trim_graph(const MPGraph& full, int r, const ModAlphabet& alphabet,
                          const std::vector<std::vector<double>>* prior_probs = nullptr) {
    if (r < 1) throw std::invalid_argument("trim_graph: keep at least one edge per row");
    const int q = alphabet.order();
    if (prior_probs && static_cast<int>(prior_probs->size()) != full.n_cols)
        throw std::invalid_argument("trim_graph: prior size mismatch");

    MPGraph g;
    g.n_rows = full.n_rows;
    g.n_cols = full.n_cols;
    g.row_begin.resize(static_cast<size_t>(full.n_rows) + 1, 0);
    g.col_edges.resize(static_cast<size_t>(full.n_cols));
    g.residual_mean = full.residual_mean;
    g.residual_var = full.residual_var;

    std::vector<int> order;
    for (int row = 0; row < full.n_rows; ++row) {
        g.row_begin[static_cast<size_t>(row)] = static_cast<int>(g.edges.size());
        const int b = full.row_begin[static_cast<size_t>(row)];
        const int e_end = full.row_begin[static_cast<size_t>(row) + 1];
        order.clear();
        for (int e = b; e < e_end; ++e) order.push_back(e);
        const int keep = std::min<int>(r, static_cast<int>(order.size()));
        std::sort(order.begin(), order.end(), [&](int ea, int eb) {
            const double na = std::norm(full.edges[static_cast<size_t>(ea)].h);
            const double nb = std::norm(full.edges[static_cast<size_t>(eb)].h);
            if (na != nb) return na > nb;
            return full.edges[static_cast<size_t>(ea)].col < full.edges[static_cast<size_t>(eb)].col;
        });
        std::sort(order.begin(), order.begin() + keep, [&](int ea, int eb) {
            return full.edges[static_cast<size_t>(ea)].col < full.edges[static_cast<size_t>(eb)].col;
        });
        for (int i = 0; i < keep; ++i) {
            const MPGraph::Edge& ed = full.edges[static_cast<size_t>(order[static_cast<size_t>(i)])];
            g.col_edges[static_cast<size_t>(ed.col)].push_back(static_cast<int>(g.edges.size()));
            g.edges.push_back(ed);
        }
        for (size_t i = static_cast<size_t>(keep); i < order.size(); ++i) {
            const MPGraph::Edge& ed = full.edges[static_cast<size_t>(order[i])];
            cplx sym_mean(0.0, 0.0);
            double sym_pow = 0.0;
            for (int j = 0; j < q; ++j) {
                const double w = prior_probs
                                     ? (*prior_probs)[static_cast<size_t>(ed.col)][static_cast<size_t>(j)]
                                     : 1.0 / q;
                sym_mean += w * alphabet.symbols[static_cast<size_t>(j)];
                sym_pow += w * std::norm(alphabet.symbols[static_cast<size_t>(j)]);
            }
            const cplx m = sym_mean * ed.h;
            g.residual_mean[static_cast<size_t>(ed.row)] += m;
            g.residual_var[static_cast<size_t>(ed.row)] += sym_pow * std::norm(ed.h) - std::norm(m);
        }
    }
    g.row_begin[static_cast<size_t>(full.n_rows)] = static_cast<int>(g.edges.size());
    return g;
}

} // namespace otfs
