#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mcflab/cone.hpp"
#include "mcflab/errors.hpp"
#include "mcflab/foliation.hpp"
#include "mcflab/spectrum.hpp"

using namespace mcflab;

namespace {

const FoliationLeaf& simons_leaf() {
    static const FoliationLeaf leaf = build_leaf(quadratic_cone(3, 3), 1e-3, 1e3);
    return leaf;
}

}  // namespace

TEST_CASE("cone line is an equilibrium") {
    const double th = cone_angle(3, 3);
    const ProfileSample start{std::cos(th), std::sin(th), th};
    const ProfileCurve c = integrate_profile(3, 3, start, 1e-2, 50.0);
    CHECK(c.samples.size() > 1000);
    for (const auto& x : c.samples) {
        CHECK(std::fabs(x.phi - th) < 1e-12);
        CHECK(std::fabs(cone_coordinates(3, 3, x.s, x.t).second) < 1e-11);
    }
    CHECK(std::fabs(profile_curvature(3, 4, 2.0, 2.0 * std::sqrt(4.0 / 3.0), cone_angle(3, 4))) < 1e-14);
}

TEST_CASE("shot leaf") {
    const ProfileCurve c = shoot_leaf(3, 3, 1.0, 1e-3, 100.0);
    CHECK(c.samples.front().t == 0.0);
    CHECK(c.samples.front().phi == doctest::Approx(M_PI / 2.0));
    for (std::size_t k = 1; k < c.samples.size(); k += 97) {
        const double ds = c.samples[k].s - c.samples[k - 1].s;
        const double dt = c.samples[k].t - c.samples[k - 1].t;
        CHECK(std::fabs(std::hypot(ds, dt) - c.arclength_step) <= 1e-9);
        CHECK(c.samples[k].s > 0.0);
        CHECK(c.samples[k].t >= 0.0);
    }
    const ProfileCurve c34 = shoot_leaf(3, 4, 1.0, 1e-3, 1e3);
    const auto& b = c34.samples.back();
    CHECK(std::fabs(b.t / b.s - std::sqrt(4.0 / 3.0)) < 1e-4);
    CHECK_THROWS_AS(shoot_leaf(3, 3, -1.0, 1e-3, 10.0), DomainError);
}

TEST_CASE("asymptotic fit") {
    const FoliationLeaf& leaf = simons_leaf();
    CHECK(leaf.fit_alpha == doctest::Approx(-2.0).epsilon(0.025));
    CHECK(leaf.fit_c == 1.0);
    CHECK(leaf.kappa == 1.0);
    CHECK(leaf.R_s > leaf.curve.samples.front().s);
    // ratio to c r^alpha tends to 1 (the unit normalization)
    const double r = 0.9 * leaf.r_max();
    CHECK(leaf.psi_at(r) * r * r == doctest::Approx(1.0).epsilon(1e-2));
    // the correction exponent of the p = q leaf is alpha_+ - alpha_- = 1
    CHECK(leaf.fit_alpha_tilde == doctest::Approx(1.0).epsilon(0.05));

    const FoliationLeaf& l = leaf;
    const AsymptoticFit refit = fit_asymptotics(l.curve, quadratic_cone(3, 3));
    CHECK(refit.c == doctest::Approx(1.0).epsilon(1e-6));

    const double th = cone_angle(3, 3);
    const ProfileCurve line = integrate_profile(3, 3, {std::cos(th), std::sin(th), th}, 1e-2, 100.0);
    CHECK_THROWS_AS(fit_asymptotics(line, quadratic_cone(3, 3)), DomainError);

    for (int p : {4, 5}) {
        const ConeSpec cone = quadratic_cone(p, p);
        const auto f = fit_asymptotics(shoot_leaf(p, p, 1.0, 2e-3, 1e3), cone);
        const double a = alpha_plus(cone.mu1(), cone.n);
        CHECK(std::fabs(f.alpha / a - 1.0) < 0.03);
    }
}

TEST_CASE("rescaling") {
    const FoliationLeaf& leaf = simons_leaf();
    const FoliationLeaf same = rescale_leaf(leaf, 1.0);
    CHECK(same.curve.samples.back().s == leaf.curve.samples.back().s);
    CHECK(same.fit_c == leaf.fit_c);
    const FoliationLeaf two = rescale_leaf(leaf, 2.0);
    CHECK(two.fit_c == doctest::Approx(2.0));
    CHECK(two.kappa == doctest::Approx(2.0));
    const double lam = std::cbrt(2.0);
    for (double r = 10.0; r < 500.0; r *= 1.37) {
        const double lhs = two.psi_at(r);
        const double rhs = lam * leaf.psi_at(r / lam);
        CHECK(std::fabs(lhs - rhs) <= 1e-9);
        CHECK(std::fabs(lhs - rhs) <= 1e-8 * std::fabs(rhs));
    }
    const auto f2 = fit_asymptotics(two.curve, quadratic_cone(3, 3));
    CHECK(f2.c == doctest::Approx(2.0).epsilon(1e-6));
    CHECK_THROWS_AS(rescale_leaf(leaf, 0.0), DomainError);
}

TEST_CASE("scaling covariance of shooting") {
    const ProfileCurve a = shoot_leaf(3, 3, 1.0, 1e-3, 30.0);
    const ProfileCurve b = shoot_leaf(3, 3, 1.5, 1e-3, 45.0);
    for (std::size_t k = 0; k < a.samples.size(); k += 211) {
        const ProfileSample x = profile_at(b, 1.5 * a.arclength(k));
        CHECK(std::fabs(x.s - 1.5 * a.samples[k].s) <= 1e-8);
        CHECK(std::fabs(x.t - 1.5 * a.samples[k].t) <= 1e-8);
    }
}

TEST_CASE("leaves foliate") {
    const ProfileCurve a = shoot_leaf(3, 3, 1.0, 1e-3, 200.0);
    const ProfileCurve b = shoot_leaf(3, 3, 1.5, 1e-3, 200.0);
    const ProfileCurve c = shoot_leaf(3, 3, 2.0, 1e-3, 200.0);
    CHECK(min_radial_gap(a, b) > 0.0);
    CHECK(min_radial_gap(b, c) > 0.0);
    CHECK(min_radial_gap(a, c) > 0.0);
}

TEST_CASE("tip Dirichlet eigenvalue") {
    const FoliationLeaf& leaf = simons_leaf();
    const auto e200 = tip_dirichlet_eigen(leaf, 200.0);
    CHECK(e200.lambda > 0.0);
    double prev = 1e300;
    for (double R : {3.0, 6.0, 12.0, 24.0, 48.0}) {
        const auto e = tip_dirichlet_eigen(leaf, R);
        CHECK(e.lambda < prev);
        prev = e.lambda;
        CHECK(e.phi1.back() == 0.0);
        for (std::size_t i = 0; i + 1 < e.phi1.size(); ++i) CHECK(e.phi1[i] > 0.0);
    }
    // grid refinement changes lambda only slightly
    const auto coarse = tip_dirichlet_eigen(leaf, 10.0, 500);
    const auto fine = tip_dirichlet_eigen(leaf, 10.0, 2000);
    CHECK(fine.lambda == doctest::Approx(coarse.lambda).epsilon(1e-3));
    CHECK_THROWS_AS(tip_dirichlet_eigen(leaf, 1.0), DomainError);
}

TEST_CASE("positive Jacobi field") {
    const FoliationLeaf& leaf = simons_leaf();
    CHECK(jacobi_field_positivity(leaf.curve) > 0.0);
    ProfileCurve flipped = leaf.curve;
    for (auto& x : flipped.samples) x.phi += M_PI;
    CHECK(jacobi_field_positivity(flipped) < 0.0);
    // <X, nu> / psi stays bounded on the outer decade (tends to 1 - alpha = 3)
    double lo = 1e300;
    double hi = 0.0;
    const auto& c = leaf.curve;
    for (std::size_t k = leaf.graph_start; k < c.samples.size(); k += 101) {
        const auto& x = c.samples[k];
        const auto [r, psi] = cone_coordinates(3, 3, x.s, x.t);
        if (r < leaf.r_max() / 10.0) continue;
        const double ratio = (x.s * std::sin(x.phi) - x.t * std::cos(x.phi)) / psi;
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    CHECK(lo > 2.5);
    CHECK(hi < 3.5);
}
