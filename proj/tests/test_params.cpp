#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mcflab/cone.hpp"
#include "mcflab/errors.hpp"
#include "mcflab/params.hpp"
#include "mcflab/rng.hpp"
#include "mcflab/spectrum.hpp"

using namespace mcflab;

namespace {

OrderedSpectrum simons_spectrum(int p, int q) {
    const ConeSpec c = quadratic_cone(p, q, 3.0);
    return order_and_select(c, 3.0, build_quadrature(c.n, 30), SpectrumScope::equivariant);
}

}  // namespace

TEST_CASE("alpha condition") {
    const auto sp = simons_spectrum(3, 3);
    const auto r = check_alpha_condition(7, -2.0, 6.0, sp.lambda_l, sp.delta_l);
    CHECK_FALSE(r.pass);
    CHECK(r.lhs == doctest::Approx(1.0 / 3.0));
    CHECK(r.terms[1] == doctest::Approx(-1.0 / 7.0));
    CHECK(r.margins[1] < 0.0);
    const auto e = check_alpha_condition(20, -1.0, 4.0, 1.0, 1.0);
    CHECK(e.lhs == 0.0);
    CHECK(e.pass);
    const auto big = simons_spectrum(50, 50);
    const double at = 2.0 - 2.0 * big.alpha;
    CHECK(check_alpha_condition(101, big.alpha, at, big.lambda_l, big.delta_l).pass);
}

TEST_CASE("admissible intervals") {
    const auto sp = simons_spectrum(3, 3);
    CHECK(admissible_intervals(7, -2.0, 6.0, sp.lambda_l, sp.delta_l).empty);
    const auto big = simons_spectrum(50, 50);
    const double at = 2.0 - 2.0 * big.alpha;
    const auto s = admissible_intervals(101, big.alpha, at, big.lambda_l, big.delta_l);
    CHECK_FALSE(s.empty);
    CHECK(s.theta.lo == doctest::Approx(1.0 / 103.0).epsilon(0.05));
    CHECK(s.theta.contains(1.1 / 103.0));
    CHECK(s.theta_weak_hi > s.theta.hi);
    const auto lim = admissible_intervals(20, -1.0, 4.0, 1.0, 1.0);
    CHECK(lim.theta.lo == 0.0);
}

TEST_CASE("empty-interval soundness and monotonicity") {
    Rng rng(21);
    for (int t = 0; t < 2000; ++t) {
        const int n = 7 + static_cast<int>(rng.uniform(0.0, 200.0));
        const double a = rng.uniform(-3.0, -0.5);
        const double at = rng.uniform(0.1, 8.0);
        const double lam = rng.uniform(0.05, 3.0);
        const double del = rng.uniform(0.01, 2.0);
        const auto c = check_alpha_condition(n, a, at, lam, del);
        const auto s = admissible_intervals(n, a, at, lam, del);
        if (!c.pass) CHECK(s.empty);
        const auto s2 = admissible_intervals(n, a, at, lam, 1.5 * del);
        CHECK(s2.xi.hi >= s.xi.hi);
    }
}

TEST_CASE("derived constants") {
    const auto sp = simons_spectrum(3, 3);
    const auto d = derived_constants_unchecked(sp.alpha, 7, sp.lambda_l, 0.1, 0.4);
    CHECK(d.sigma_l == doctest::Approx(1.0 / 6.0));
    CHECK(d.c_l == doctest::Approx(2.0));
    CHECK(d.varrho == doctest::Approx(0.1));
    CHECK(d.k_tilde == doctest::Approx(0.1 - 0.4 * 3.5 / 3.0));
    try {
        derived_constants(sp, 6.0, 0.1, 0.4);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("k_tilde") != std::string::npos);
    }

    const auto big = simons_spectrum(50, 50);
    const double at = 2.0 - 2.0 * big.alpha;
    const auto s = admissible_intervals(101, big.alpha, at, big.lambda_l, big.delta_l);
    const double theta = 0.5 * (s.theta.lo + s.theta.hi);
    const auto ok = derived_constants(big, at, s.xi_used, theta);
    CHECK(ok.k_tilde > 0.0);
    CHECK(ok.varrho > 0.0);
    CHECK(ok.varrho < theta);
    const ParamBundle b = make_bundle(big, at, s.xi_used, theta);
    CHECK(b.violations().empty());
    CHECK(b.to_json()["violations"].empty());

    // k_tilde vanishes where theta meets 2(1-a) xi/(n+2a+4)
    const double a = big.alpha;
    const double th = 0.01;
    const double xi_b = th * (101 + 2.0 * a + 4.0) / (2.0 * (1.0 - a));
    CHECK(std::fabs(derived_constants_unchecked(a, 101, 1.0, xi_b, th).k_tilde) < 1e-14);
    // theta at its lower bound gives varrho = 0
    const double lo = (-1.0 - a) / (1.0 - a);
    CHECK(std::fabs(derived_constants_unchecked(a, 101, 1.0, 0.5, lo).varrho) < 1e-14);
}

TEST_CASE("simons asymptotics") {
    for (int n : {51, 101, 151, 201}) {
        const auto r = simons_asymptotics(n);
        // the exact root is -1 - 2/(n-2) + O(n^-2), so the quoted form is off by
        // about 10/n^2: O(1/n^2), but not within 5/n^2
        const double n2 = double(n) * n;
        CHECK(std::fabs(r.alpha_exact - r.alpha_approx) * n2 < 12.0);
        CHECK(std::fabs(r.alpha_exact - r.alpha_approx) * n2 > 5.0);
        CHECK(r.alpha_tilde_exact == 2.0 - 2.0 * r.alpha_exact);
        CHECK(std::fabs(r.alpha_tilde_exact - r.alpha_tilde_approx) * n2 < 24.0);
    }
    CHECK(simons_asymptotics(52).q == 26);
    CHECK(simons_asymptotics(52).p == 25);
    CHECK(simons_asymptotics(10001).alpha_approx > -1.001);
    CHECK_THROWS(simons_asymptotics(20));
}
