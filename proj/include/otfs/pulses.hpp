#pragma once
// Raised-cosine / root-raised-cosine pulse shapes, the rectangular-pulse
// cross-ambiguity function, and the receive-filter noise variance.
//
// Pulse time arguments are in units of the symbol period T_s.  Singular
// points of the closed forms are handled by their exact analytic limits,
// triggered when the denominator underflows to zero, never by nudging the
// argument.

#include <cmath>
#include <complex>
#include <stdexcept>

#include "otfs/core.hpp"

namespace otfs {

inline double sinc(double t) {
    if (t == 0.0) return 1.0;
    const double x = pi * t;
    return std::sin(x) / x;
}

// Raised cosine, rc(0) = 1, zero at the nonzero integers (Nyquist).
// At |t| = 1/(2*rolloff) the 0/0 form takes the limit (pi/4)*sinc(t).
inline double eval_rc(double t, double rolloff) {
    if (rolloff < 0.0 || rolloff > 1.0)
        throw std::invalid_argument("eval_rc: rolloff must be in [0, 1]");
    if (t == 0.0) return 1.0;
    const double den = 1.0 - (2.0 * rolloff * t) * (2.0 * rolloff * t);
    if (den == 0.0) return (pi / 4.0) * sinc(std::abs(t));
    return sinc(t) * std::cos(pi * rolloff * t) / den;
}

// Root raised cosine with unit energy (the self-convolution equals eval_rc,
// so the integral of its square is rc(0) = 1).  rrc(0) = 1 - a + 4a/pi; at
// |t| = 1/(4a) the closed form takes its analytic limit.
inline double eval_rrc(double t, double rolloff) {
    if (rolloff < 0.0 || rolloff > 1.0)
        throw std::invalid_argument("eval_rrc: rolloff must be in [0, 1]");
    const double a = rolloff;
    if (t == 0.0) return 1.0 - a + 4.0 * a / pi;
    const double den = pi * t * (1.0 - (4.0 * a * t) * (4.0 * a * t));
    if (den == 0.0) {
        const double x = pi / (4.0 * a);
        return (a / std::sqrt(2.0)) *
               ((1.0 + 2.0 / pi) * std::sin(x) + (1.0 - 2.0 / pi) * std::cos(x));
    }
    return (std::sin(pi * t * (1.0 - a)) + 4.0 * a * t * std::cos(pi * t * (1.0 + a))) / den;
}

// A pulse shape with an explicit one-sided truncation span (in T_s units).
// Evaluation outside [-span, span] is exactly zero; this is what sets the
// filter contribution to the channel order.
struct RolloffFilter {
    enum class Kind { raised_cosine, root_raised_cosine };

    Kind kind = Kind::raised_cosine;
    double rolloff = 0.4;
    double span = 4.0; // one-sided support, T_s units

    RolloffFilter() = default;
    RolloffFilter(Kind k, double rolloff_, double span_ = 4.0)
        : kind(k), rolloff(rolloff_), span(span_) {
        if (rolloff < 0.0 || rolloff > 1.0)
            throw std::invalid_argument("RolloffFilter: rolloff must be in [0, 1]");
        if (!(span > 0.0))
            throw std::invalid_argument("RolloffFilter: span must be > 0");
    }

    double operator()(double t) const {
        if (std::abs(t) > span) return 0.0;
        return kind == Kind::raised_cosine ? eval_rc(t, rolloff) : eval_rrc(t, rolloff);
    }

    // Energy of the truncated pulse by trapezoidal quadrature on a lattice of
    // `oversampling` points per T_s.
    double energy(int oversampling = 64) const {
        const long long half = std::llround(span * oversampling);
        const double h = 1.0 / oversampling;
        double acc = 0.0;
        for (long long k = -half; k <= half; ++k) {
            const double v = (*this)(static_cast<double>(k) * h);
            const double w = (k == -half || k == half) ? 0.5 : 1.0;
            acc += w * v * v;
        }
        return acc * h;
    }
};

inline RolloffFilter make_rc_filter(double rolloff, double span = 4.0) {
    return RolloffFilter(RolloffFilter::Kind::raised_cosine, rolloff, span);
}
inline RolloffFilter make_rrc_filter(double rolloff, double span = 4.0) {
    return RolloffFilter(RolloffFilter::Kind::root_raised_cosine, rolloff, span);
}

// Cross-ambiguity of two unit-energy rectangular pulses of duration T:
//   A(tau, f) = integral g*(t - tau) g(t) e^{-j 2 pi f (t - tau)} dt
// with g = T^{-1/2} on [0, T).  Closed form of the overlap integral; exactly
// zero once |tau| >= T.
inline cplx rect_cross_ambiguity(double tau, double f, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("rect_cross_ambiguity: T must be > 0");
    const double a = std::max(0.0, tau);
    const double b = std::min(T, T + tau);
    if (b <= a) return cplx(0.0, 0.0);
    if (f == 0.0) return cplx((b - a) / T, 0.0);
    const cplx eb = std::polar(1.0, -2.0 * pi * f * (b - tau));
    const cplx ea = std::polar(1.0, -2.0 * pi * f * (a - tau));
    return (eb - ea) / (cplx(0.0, -2.0 * pi * f) * T);
}

// Variance of AWGN with spectral level sigma_n2 after the receive filter:
// sigma_n2 times the filter energy (trapezoidal quadrature, 64 points/T_s).
inline double noise_variance_after_rx_filter(double sigma_n2, const RolloffFilter& filter) {
    if (sigma_n2 < 0.0)
        throw std::invalid_argument("noise_variance_after_rx_filter: sigma_n2 must be >= 0");
    return sigma_n2 * filter.energy(64);
}

} // namespace otfs
