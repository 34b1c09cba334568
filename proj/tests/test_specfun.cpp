#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <gsl/gsl_sf_hyperg.h>
#include <gsl/gsl_errno.h>

#include <cmath>

#include "mcflab/errors.hpp"
#include "mcflab/rng.hpp"
#include "mcflab/specfun.hpp"

using namespace mcflab;

TEST_CASE("rising factorial") {
    CHECK(rising_factorial(3.0, 0) == 1.0);
    CHECK(rising_factorial(1.0, 5) == doctest::Approx(120.0));
    CHECK(rising_factorial(2.5, 3) == doctest::Approx(39.375));
    CHECK(rising_factorial(-2.0, 3) == 0.0);
}

TEST_CASE("gamma against std::tgamma") {
    for (double x = 0.05; x < 50.0; x += 0.37)
        CHECK(std::fabs(gamma_fn(x) / std::tgamma(x) - 1.0) < 1e-12);
    for (double x : {-0.5, -1.5, -2.7, -7.3})
        CHECK(std::fabs(gamma_fn(x) / std::tgamma(x) - 1.0) < 1e-12);
    int sign = 0;
    CHECK(log_gamma_fn(-0.5, &sign) == doctest::Approx(std::lgamma(-0.5)));
    CHECK(sign == -1);
}

TEST_CASE("kummer series values") {
    CHECK(kummer_m(KummerParams::make(0.7, 3.0), 0.0) == 1.0);
    CHECK(kummer_m(KummerParams::make(0.0, 2.0), 5.0) == 1.0);
    CHECK(kummer_m(KummerParams::make(-1.0, 2.0), 4.0) == doctest::Approx(-1.0));
    CHECK(KummerParams::make(-3.0, 2.0).term_count() == 4);
    CHECK_THROWS_AS(KummerParams::make(1.0, -2.0), DomainError);
    CHECK_THROWS_AS(KummerParams::make(1.0, 0.0), DomainError);
    CHECK(kummer_m(KummerParams::make(1.0, 1.0), 3.0) == doctest::Approx(std::exp(3.0)).epsilon(1e-13));
}

TEST_CASE("kummer agrees with gsl oracle") {
    gsl_set_error_handler_off();
    Rng rng(7);
    for (int t = 0; t < 200; ++t) {
        const double a = rng.uniform(-6.0, 6.0);
        const double b = rng.uniform(0.2, 8.0);
        const double xi = rng.uniform(0.0, 25.0);
        gsl_sf_result r;
        if (gsl_sf_hyperg_1F1_e(a, b, xi, &r) != GSL_SUCCESS) continue;
        const double m = kummer_m(KummerParams::make(a, b), xi);
        CHECK(std::fabs(m - r.val) <= 1e-10 * std::fabs(r.val) + 10.0 * r.err + 1e-12);
    }
}

TEST_CASE("terminating case equals explicit polynomial") {
    for (int i = 0; i <= 8; ++i) {
        const double b = 1.3 + 0.7 * i;
        for (double xi = 0.01; xi < 60.0; xi *= 1.9) {
            double poly = 1.0;
            double mag = 1.0;
            for (int m = 1; m <= i; ++m) {
                const double K = std::pow(-1.0, m) * rising_factorial(-i, m) /
                                 (rising_factorial(b, m) * std::tgamma(m + 1.0));
                const double term = std::pow(-1.0, m) * K * std::pow(xi, m);
                poly += term;
                mag += std::fabs(term);
            }
            const double m = kummer_m(KummerParams::make(-i, b), xi);
            CHECK(std::fabs(m - poly) <= 1e-13 * mag);
        }
    }
}

TEST_CASE("ode residual") {
    CHECK(std::fabs(kummer_ode_residual(KummerParams::make(-2.0, 4.5), 1.0, 1e-4)) < 1e-6);
    CHECK(std::fabs(kummer_ode_residual(KummerParams::make(0.0, 3.0), 2.0, 1e-4)) < 1e-12);
    CHECK(std::fabs(kummer_ode_residual(KummerParams::make(0.5, 2.0), 0.5, 1e-4)) < 1e-6);
    Rng rng(11);
    for (int t = 0; t < 20; ++t) {
        const double a = rng.uniform(-4.0, 4.0);
        const double b = rng.uniform(0.5, 6.0);
        const auto p = KummerParams::make(a, b);
        for (double xi = 1e-2; xi <= 1e2; xi *= 1.5)
            CHECK(std::fabs(kummer_ode_residual(p, xi, 1e-4)) <= 1e-6);
    }
}

TEST_CASE("asymptotic form") {
    CHECK(kummer_asymptotic(KummerParams::make(1.0, 1.0), 30.0) ==
          doctest::Approx(std::exp(30.0)).epsilon(1e-12));
    const auto p = KummerParams::make(2.0, 3.0);
    const double ratio = kummer_asymptotic(p, 40.0) / kummer_m(p, 40.0);
    CHECK(ratio >= 0.95);
    CHECK(ratio <= 1.05);
    const auto q = KummerParams::make(0.5, 2.5);
    double prev = 1e9;
    for (double xi : {50.0, 100.0, 200.0, 400.0}) {
        const double dev = std::fabs(kummer_asymptotic(q, xi) / kummer_m(q, xi) - 1.0);
        CHECK(dev < prev);
        prev = dev;
    }
    CHECK(prev < 0.01);
    CHECK_THROWS_AS(kummer_asymptotic(KummerParams::make(-2.0, 3.0), 40.0), DomainError);
}

TEST_CASE("overflow is reported") {
    CHECK_THROWS_AS(kummer_m(KummerParams::make(0.5, 1.0), 800.0), OverflowError);
}

TEST_CASE("monotone in xi for positive parameters") {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const double a = rng.uniform(0.1, 5.0);
        const double b = rng.uniform(0.1, 5.0);
        const auto p = KummerParams::make(a, b);
        double prev = 0.0;
        for (double xi = 0.0; xi < 30.0; xi += 0.5) {
            const double m = kummer_m(p, xi);
            CHECK(m > prev);
            prev = m;
        }
    }
}
