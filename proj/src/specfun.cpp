#include "mcflab/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mcflab/errors.hpp"

namespace mcflab {

namespace {

bool is_nonpositive_integer(double x) {
    return x <= 0.0 && std::floor(x) == x;
}

// Lanczos approximation, g = 7, nine coefficients.
constexpr double kLanczosG = 7.0;
constexpr double kLanczos[9] = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

double lanczos_sum(double z) {
    double x = kLanczos[0];
    for (int i = 1; i < 9; ++i) x += kLanczos[i] / (z + i);
    return x;
}

}  // namespace

KummerParams KummerParams::make(double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b))
        throw DomainError("kummer: non-finite parameter");
    if (is_nonpositive_integer(b))
        throw DomainError("kummer: b must not be a nonpositive integer, got " +
                          std::to_string(b));
    KummerParams p;
    p.a = a;
    p.b = b;
    p.terminating = is_nonpositive_integer(a);
    return p;
}

int KummerParams::term_count() const {
    return terminating ? static_cast<int>(1.0 - a) : 0;
}

double rising_factorial(double a, int m) {
    double r = 1.0;
    for (int k = 0; k < m; ++k) r *= a + k;
    return r;
}

double gamma_fn(double x) {
    if (is_nonpositive_integer(x)) throw DomainError("gamma: pole at " + std::to_string(x));
    if (x < 0.5) {
        // reflection
        return std::numbers::pi / (std::sin(std::numbers::pi * x) * gamma_fn(1.0 - x));
    }
    const double z = x - 1.0;
    const double t = z + kLanczosG + 0.5;
    return std::sqrt(2.0 * std::numbers::pi) * std::pow(t, z + 0.5) * std::exp(-t) *
           lanczos_sum(z);
}

double log_gamma_fn(double x, int* sign) {
    if (is_nonpositive_integer(x)) throw DomainError("log_gamma: pole at " + std::to_string(x));
    if (x < 0.5) {
        const double s = std::sin(std::numbers::pi * x);
        const double lg = log_gamma_fn(1.0 - x, nullptr);
        if (sign) *sign = (s > 0.0) ? 1 : -1;
        return std::log(std::numbers::pi / std::fabs(s)) - lg;
    }
    if (sign) *sign = 1;
    const double z = x - 1.0;
    const double t = z + kLanczosG + 0.5;
    return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t +
           std::log(lanczos_sum(z));
}

double kummer_m(const KummerParams& p, double xi) {
    if (!(xi >= 0.0) || !std::isfinite(xi)) throw DomainError("kummer_m: xi must be finite and >= 0");
    double term = 1.0;
    double sum = 1.0;
    if (p.terminating) {
        const int last = p.term_count() - 1;
        for (int k = 0; k < last; ++k) {
            term *= (p.a + k) / ((p.b + k) * (k + 1.0)) * xi;
            sum += term;
        }
        return sum;
    }
    constexpr int kMaxTerms = 200000;
    constexpr double kBig = 1e300;
    const double settle = std::fabs(p.a) + std::fabs(p.b) + xi;
    for (int k = 0; k < kMaxTerms; ++k) {
        term *= (p.a + k) / ((p.b + k) * (k + 1.0)) * xi;
        sum += term;
        if (!std::isfinite(sum) || std::fabs(sum) > kBig || std::fabs(term) > kBig)
            throw OverflowError("kummer_m: series overflow at xi=" + std::to_string(xi) +
                                "; use kummer_asymptotic");
        if (k > settle && std::fabs(term) <= 1e-13 * std::fabs(sum)) return sum;
        if (term == 0.0) return sum;
    }
    throw NumericalError("kummer_m: term cap reached");
}

double kummer_m_prime(const KummerParams& p, double xi) {
    if (p.a == 0.0) return 0.0;
    return p.a / p.b * kummer_m(KummerParams::make(p.a + 1.0, p.b + 1.0), xi);
}

double kummer_ode_residual(const KummerParams& p, double xi, double h) {
    if (!(h > 0.0) || !(h < xi / 4.0))
        throw DomainError("kummer_ode_residual: need 0 < h < xi/4");
    const double mm = kummer_m(p, xi - h);
    const double m0 = kummer_m(p, xi);
    const double mp = kummer_m(p, xi + h);
    const double d1 = (mp - mm) / (2.0 * h);
    const double d2 = (mp - 2.0 * m0 + mm) / (h * h);
    // scaled by the term magnitudes and by M(|a|;b;xi), which bounds the sum of
    // absolute series terms and so the cancellation noise for negative a
    const double conditioning = kummer_m(KummerParams::make(std::fabs(p.a), p.b), xi);
    const double scale = std::max({1.0, conditioning,
                                   std::fabs(xi * d2) + std::fabs((p.b - xi) * d1) +
                                       std::fabs(p.a * m0)});
    return (xi * d2 + (p.b - xi) * d1 - p.a * m0) / scale;
}

double kummer_asymptotic(const KummerParams& p, double xi) {
    if (p.terminating) throw DomainError("kummer_asymptotic: invalid for terminating a");
    if (!(xi > 0.0)) throw DomainError("kummer_asymptotic: xi must be positive");
    int sb = 1;
    int sa = 1;
    const double lb = log_gamma_fn(p.b, &sb);
    const double la = log_gamma_fn(p.a, &sa);
    const double logv = lb - la + xi + (p.a - p.b) * std::log(xi);
    if (logv > std::log(std::numeric_limits<double>::max()))
        throw OverflowError("kummer_asymptotic: value exceeds double range");
    return sb * sa * std::exp(logv);
}

}  // namespace mcflab
