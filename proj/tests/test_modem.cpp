#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "otfs/core.hpp"
#include "otfs/modem.hpp"

using namespace otfs;

namespace {

DDFrame random_frame(const DDGridConfig& grid, std::uint64_t seed) {
    auto g = make_rng({seed, 0});
    DDFrame f(grid);
    for (cplx& v : f.x) v = draw_cn(g, 1.0);
    return f;
}

DDFrame random_qpsk_frame(const DDGridConfig& grid, std::uint64_t seed) {
    auto g = make_rng({seed, 1});
    ModAlphabet a = make_qpsk_gray();
    DDFrame f(grid);
    for (cplx& v : f.x) v = a.symbols[g() % 4];
    return f;
}

double max_err(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    REQUIRE(a.size() == b.size());
    double e = 0.0;
    for (size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]));
    return e;
}

// Direct nested-sum ISFFT, the formula as written.
TFFrame isfft_direct(const DDFrame& dd) {
    const int nb = dd.grid.n, mb = dd.grid.m;
    TFFrame tf(dd.grid);
    const double s = 1.0 / std::sqrt(double(nb) * mb);
    for (int n = 0; n < nb; ++n)
        for (int m = 0; m < mb; ++m) {
            cplx acc(0, 0);
            for (int k = 0; k < nb; ++k)
                for (int l = 0; l < mb; ++l)
                    acc += dd.at(k, l) *
                           std::polar(1.0, 2.0 * pi * (double(n) * k / nb - double(m) * l / mb));
            tf.at(n, m) = acc * s;
        }
    return tf;
}

} // namespace

TEST_CASE("isfft matches the direct nested sum") {
    DDGridConfig grid(4, 5, 15e3); // non-power-of-two M on purpose
    DDFrame x = random_frame(grid, 21);
    TFFrame fast = isfft(x);
    TFFrame slow = isfft_direct(x);
    CHECK(max_err(fast.x, slow.x) < 1e-12);
}

TEST_CASE("isfft of a delay-Doppler impulse is the printed exponential") {
    DDGridConfig grid(8, 16, 15e3);
    DDFrame x(grid);
    const int k0 = 5, l0 = 11;
    x.at(k0, l0) = cplx(1.0, 0.0);
    TFFrame tf = isfft(x);
    const double s = 1.0 / std::sqrt(double(grid.n) * grid.m);
    for (int n = 0; n < grid.n; ++n)
        for (int m = 0; m < grid.m; ++m) {
            cplx want = s * std::polar(1.0, 2.0 * pi * (double(n) * k0 / grid.n -
                                                        double(m) * l0 / grid.m));
            CHECK(std::abs(tf.at(n, m) - want) < 1e-13);
        }
}

TEST_CASE("isfft is unitary and sfft inverts it") {
    DDGridConfig grid(8, 12, 15e3);
    DDFrame x = random_frame(grid, 22);
    TFFrame tf = isfft(x);
    double ex = 0.0, etf = 0.0;
    for (const cplx& v : x.x) ex += std::norm(v);
    for (const cplx& v : tf.x) etf += std::norm(v);
    CHECK(etf == Catch::Approx(ex).epsilon(1e-12));
    DDFrame back = sfft(tf);
    CHECK(max_err(back.x, x.x) < 1e-12);
}

TEST_CASE("heisenberg of a single time-frequency tone is the shifted carrier") {
    DDGridConfig grid(4, 8, 15e3, 2);
    TFFrame tf(grid);
    const int n0 = 2, m0 = 5;
    tf.at(n0, m0) = cplx(1.0, 0.0);
    BasebandSignal s = heisenberg_rect(tf);
    const int slot = grid.m * grid.g;
    REQUIRE(static_cast<int>(s.samples.size()) == grid.n * slot);
    for (int n = 0; n < grid.n; ++n)
        for (int u = 0; u < slot; ++u) {
            cplx want(0.0, 0.0);
            if (n == n0)
                want = std::polar(1.0 / std::sqrt(double(grid.m)),
                                  2.0 * pi * (m0 - (grid.m - 1) / 2.0) * u / slot);
            CHECK(std::abs(s.samples[size_t(n) * slot + u] - want) < 1e-13);
        }
}

TEST_CASE("modulate-demodulate round trip is exact without a channel") {
    for (int g : {1, 2, 4}) {
        DDGridConfig grid(8, 16, 15e3, g);
        DDFrame x = random_qpsk_frame(grid, 100 + g);
        DDFrame back = sfft(wigner_rect(heisenberg_rect(isfft(x)), grid));
        CHECK(max_err(back.x, x.x) < 1e-12);
    }
}

TEST_CASE("round trip holds over 100 random frames") {
    DDGridConfig grid(8, 16, 15e3, 2);
    double worst = 0.0;
    for (int f = 0; f < 100; ++f) {
        DDFrame x = random_qpsk_frame(grid, 1000 + f);
        DDFrame back = sfft(wigner_rect(heisenberg_rect(isfft(x)), grid));
        worst = std::max(worst, max_err(back.x, x.x));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("oversampling does not change the demodulated grid") {
    DDGridConfig g1(8, 16, 15e3, 1);
    DDGridConfig g2(8, 16, 15e3, 2);
    DDFrame x = random_frame(g1, 23);
    DDFrame x2(g2);
    x2.x = x.x;
    TFFrame y1 = wigner_rect(heisenberg_rect(isfft(x)), g1);
    TFFrame y2 = wigner_rect(heisenberg_rect(isfft(x2)), g2);
    CHECK(max_err(y1.x, y2.x) < 1e-12);
}

TEST_CASE("branch 0 of an oversampled signal is the symbol-rate signal") {
    DDGridConfig g1(4, 8, 15e3, 1);
    DDGridConfig g2(4, 8, 15e3, 2);
    DDFrame x = random_frame(g1, 24);
    DDFrame x2(g2);
    x2.x = x.x;
    BasebandSignal s1 = heisenberg_rect(isfft(x));
    BasebandSignal s2 = decimate_branch(heisenberg_rect(isfft(x2)), 0);
    CHECK(max_err(s1.samples, s2.samples) < 1e-13);
}

TEST_CASE("cyclic prefix add/remove are inverse and cyclic") {
    DDGridConfig grid(4, 8, 15e3, 2);
    BasebandSignal s = heisenberg_rect(isfft(random_frame(grid, 25)));
    BasebandSignal with = add_cp(s, 10);
    REQUIRE(with.cp_len == 10);
    REQUIRE(with.samples.size() == s.samples.size() + 10);
    for (int i = 0; i < 10; ++i)
        CHECK(with.samples[i] == s.samples[s.samples.size() - 10 + i]);
    BasebandSignal back = remove_cp(with);
    CHECK(back.cp_len == 0);
    CHECK(max_err(back.samples, s.samples) == 0.0);
}

TEST_CASE("unit-energy input yields unit-power samples") {
    DDGridConfig grid(16, 32, 15e3, 2);
    BasebandSignal s = heisenberg_rect(isfft(random_qpsk_frame(grid, 26)));
    double p = 0.0;
    for (const cplx& v : s.samples) p += std::norm(v);
    p /= static_cast<double>(s.samples.size());
    CHECK(p == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("modem input validation") {
    DDGridConfig grid(4, 8, 15e3, 2);
    DDFrame bad(grid);
    bad.x.pop_back();
    CHECK_THROWS_AS(isfft(bad), std::invalid_argument);
    BasebandSignal s = heisenberg_rect(isfft(random_frame(grid, 27)));
    BasebandSignal with = add_cp(s, 4);
    CHECK_THROWS_AS(wigner_rect(with, grid), std::invalid_argument);
    CHECK_THROWS_AS(decimate_branch(with, 0), std::invalid_argument);
    CHECK_THROWS_AS(decimate_branch(s, 2), std::invalid_argument);
    CHECK_THROWS_AS(add_cp(with, 2), std::invalid_argument);
    CHECK_THROWS_AS(add_cp(s, -1), std::invalid_argument);
}
