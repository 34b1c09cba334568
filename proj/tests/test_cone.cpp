#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <vector>

#include "mcflab/cone.hpp"
#include "mcflab/errors.hpp"

using namespace mcflab;

namespace {

// Finite-difference link geometry: S^p(r1) x S^q(r2) inside S^n, probed by
// great-circle curves in each factor.  Returns (H, |A|^2).
std::pair<double, double> fd_link_curvature(int p, int q) {
    const int n = p + q + 1;
    const double r1 = std::sqrt(double(p) / (n - 1));
    const double r2 = std::sqrt(double(q) / (n - 1));
    const int dim = n + 1;
    auto point = [&](double t, bool first) {
        std::vector<double> x(dim, 0.0);
        if (first) {
            x[0] = r1 * std::cos(t);
            x[1] = r1 * std::sin(t);
            x[p + 1] = r2;
        } else {
            x[0] = r1;
            x[p + 1] = r2 * std::cos(t);
            x[p + 2] = r2 * std::sin(t);
        }
        return x;
    };
    const double h = 1e-3;
    std::vector<double> nu(dim, 0.0);
    nu[0] = r2;
    nu[p + 1] = -r1;
    std::array<double, 2> k{};
    for (int f = 0; f < 2; ++f) {
        const auto xm = point(-h, f == 0);
        const auto x0 = point(0.0, f == 0);
        const auto xp = point(h, f == 0);
        double acc = 0.0;
        double speed2 = 0.0;
        for (int d = 0; d < dim; ++d) {
            acc += (xp[d] - 2.0 * x0[d] + xm[d]) / (h * h) * nu[d];
            const double v = (xp[d] - xm[d]) / (2.0 * h);
            speed2 += v * v;
        }
        k[f] = acc / speed2;
    }
    return {p * k[0] + q * k[1], p * k[0] * k[0] + q * k[1] * k[1]};
}

}  // namespace

TEST_CASE("quadratic cones") {
    const ConeSpec c33 = quadratic_cone(3, 3);
    CHECK(c33.n == 7);
    CHECK(c33.mu1() == doctest::Approx(-6.0));
    CHECK(c33.stability_margin == doctest::Approx(0.25));
    CHECK(c33.strictly_stable());
    CHECK(c33.link.symmetric);
    CHECK(c33.link.mult.front() == 1);
    const ConeSpec c44 = quadratic_cone(4, 4);
    CHECK(c44.n == 9);
    CHECK(c44.mu1() == doctest::Approx(-8.0));
    CHECK(c44.stability_margin == doctest::Approx(17.0 / 4.0));
    CHECK_THROWS(quadratic_cone(2, 4));
    CHECK_THROWS(quadratic_cone(2, 3));
    CHECK_NOTHROW(quadratic_cone(2, 5));
}

TEST_CASE("margin closed form and area") {
    for (int p = 2; p <= 12; ++p)
        for (int q = 2; q <= 12; ++q) {
            const int n = p + q + 1;
            if (n < 7 || (n == 7 && (p < 3 || q < 3))) continue;
            const ConeSpec c = quadratic_cone(p, q);
            CHECK(c.stability_margin == doctest::Approx((n - 2.0) * (n - 2.0) / 4.0 - (n - 1.0)));
            const double area = sphere_area(p, std::sqrt(double(p) / (n - 1))) *
                                sphere_area(q, std::sqrt(double(q) / (n - 1)));
            CHECK(c.link.area == doctest::Approx(area));
        }
    CHECK(sphere_area(2, 1.0) == doctest::Approx(4.0 * M_PI));
    CHECK(sphere_area(1, 2.0) == doctest::Approx(4.0 * M_PI));
}

TEST_CASE("finite-difference link geometry certifies closed-form data") {
    for (auto [p, q] : std::vector<std::pair<int, int>>{{3, 3}, {4, 4}, {2, 5}, {3, 7}}) {
        const auto [H, A2] = fd_link_curvature(p, q);
        CHECK(std::fabs(H) <= 1e-6);
        const ConeSpec c = quadratic_cone(p, q);
        CHECK(std::fabs(A2 / c.link.sup_A2 - 1.0) <= 1e-4);
        CHECK(c.mu1() == doctest::Approx(-A2).epsilon(1e-4));
    }
}

TEST_CASE("link levels") {
    const ConeSpec c = quadratic_cone(3, 3);
    // level mu = 0 from the degree (1,0) and (0,1) harmonics
    bool found0 = false;
    for (std::size_t k = 0; k < c.link.mu.size(); ++k) {
        if (k > 0) CHECK(c.link.mu[k] > c.link.mu[k - 1]);
        if (std::fabs(c.link.mu[k]) < 1e-12) {
            found0 = true;
            CHECK(c.link.mult[k] == 8);
        }
    }
    CHECK(found0);
    CHECK(spherical_harmonic_dim(3, 1) == 4);
    CHECK(spherical_harmonic_dim(2, 2) == 5);
    CHECK(spherical_harmonic_dim(3, 0) == 1);
}

TEST_CASE("cone curvature identities") {
    const ConeSpec c = quadratic_cone(3, 3);
    CHECK(cone_A2(c, 1.0) == doctest::Approx(6.0));
    CHECK(cone_A2(c, 2.0) == doctest::Approx(1.5));
    double prev = 1e300;
    for (double y = 0.5; y < 1e4; y *= 2.0) {
        const double a = cone_A2(c, y);
        CHECK(a < prev);
        CHECK(a * y * y == doctest::Approx(6.0));
        prev = a;
    }
    CHECK_THROWS_AS(cone_A2(c, 0.0), DomainError);
    CHECK(hessian_r_identities(c, 1.0).first == 1.0);
    CHECK(hessian_r_identities(c, 1.0).second == doctest::Approx(6.0));
    CHECK(hessian_r_identities(quadratic_cone(4, 4), 2.0).second == doctest::Approx(2.0));
    CHECK(hessian_r_identities(c, 1e8).second < 1e-15);
}

TEST_CASE("json round trip and validation") {
    const ConeSpec c = quadratic_cone(3, 3);
    nlohmann::json j = c;
    const ConeSpec d = j.get<ConeSpec>();
    CHECK(d.n == c.n);
    CHECK(d.link.mu == c.link.mu);
    CHECK(d.link.mult == c.link.mult);
    CHECK(d.stability_margin == doctest::Approx(c.stability_margin));

    LinkSpec bad;
    bad.dim = 6;
    bad.mu = {1.0, 0.0};
    bad.sup_A2 = 6.0;
    bad.area = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.mu = {-7.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);  // below -sup|A|^2
    nlohmann::json broken = {{"n", 7}, {"link", {{"dim", 6}}}};
    CHECK_THROWS_AS(broken.get<ConeSpec>(), ConfigError);
}
