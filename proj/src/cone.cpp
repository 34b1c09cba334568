#include "mcflab/cone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>

#include "mcflab/errors.hpp"
#include "mcflab/specfun.hpp"

namespace mcflab {

namespace {

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
        return std::numeric_limits<std::uint64_t>::max();
    return a * b;
}

std::uint64_t binom(int n, int k) {
    if (k < 0 || n < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) {
        // r * (n - k + i) / i stays integral at each step
        const std::uint64_t num = static_cast<std::uint64_t>(n - k + i);
        if (r > std::numeric_limits<std::uint64_t>::max() / num)
            return std::numeric_limits<std::uint64_t>::max();
        r = r * num / static_cast<std::uint64_t>(i);
    }
    return r;
}

}  // namespace

void LinkSpec::validate() const {
    if (dim < 1) throw ConfigError("link.dim must be >= 1");
    if (mu.empty()) throw ConfigError("link.mu must not be empty");
    if (!mult.empty() && mult.size() != mu.size())
        throw ConfigError("link.mult must match link.mu in length");
    for (std::size_t k = 1; k < mu.size(); ++k)
        if (!(mu[k] >= mu[k - 1])) throw ConfigError("link.mu must be sorted nondecreasing");
    if (!(sup_A2 >= 0.0)) throw ConfigError("link.sup_A2 must be >= 0");
    if (!(area > 0.0)) throw ConfigError("link.area must be > 0");
    if (mu.front() < -sup_A2 - 1e-12)
        throw ConfigError("link.mu[1] must be >= -sup_A2");
    for (auto m : mult)
        if (m == 0) throw ConfigError("link.mult entries must be positive");
}

double LinkSpec::omega1() const { return 1.0 / std::sqrt(area); }

ConeSpec ConeSpec::make(int n, LinkSpec link) {
    if (n < 7) throw ConfigError("cone.n must be >= 7");
    if (link.dim != n - 1) throw ConfigError("link.dim must equal n-1");
    if (link.mult.empty()) link.mult.assign(link.mu.size(), 1);
    link.validate();
    ConeSpec c;
    c.n = n;
    c.link = std::move(link);
    c.stability_margin = c.link.mu.front() + (n - 2.0) * (n - 2.0) / 4.0;
    return c;
}

double sphere_area(int k, double r) {
    const double h = 0.5 * (k + 1);
    return 2.0 * std::pow(std::numbers::pi, h) / gamma_fn(h) * std::pow(r, k);
}

std::uint64_t spherical_harmonic_dim(int sphere_dim, int degree) {
    if (degree == 0) return 1;
    if (degree == 1) return static_cast<std::uint64_t>(sphere_dim + 1);
    const std::uint64_t a = binom(degree + sphere_dim, sphere_dim);
    const std::uint64_t b = binom(degree + sphere_dim - 2, sphere_dim);
    return a - b;
}

ConeSpec quadratic_cone(int p, int q, double lambda_cap) {
    if (p < 2 || q < 2) throw ConfigError("quadratic_cone: need p, q >= 2");
    const int n = p + q + 1;
    if (n < 7) throw ConfigError("quadratic_cone: p+q+1 < 7 is not minimizing");
    if (n == 7 && (p < 3 || q < 3))
        throw ConfigError("quadratic_cone: n = 7 requires p, q >= 3");
    const double nm1 = n - 1.0;
    // lambda_{0j} <= cap  <=>  alpha_j <= 2 cap + 1  <=>  mu_j <= a(a + n - 2)
    const double amax = 2.0 * lambda_cap + 1.0;
    const double mu_max = std::max(amax * (amax + n - 2.0), 0.0);

    std::map<double, std::uint64_t> levels;
    for (int k = 0;; ++k) {
        const double ek = nm1 * k * (k + p - 1.0) / p;
        if (ek - nm1 > mu_max + 1e-9) break;
        for (int m = 0;; ++m) {
            const double mu = ek + nm1 * m * (m + q - 1.0) / q - nm1;
            if (mu > mu_max + 1e-9) break;
            const std::uint64_t d =
                sat_mul(spherical_harmonic_dim(p, k), spherical_harmonic_dim(q, m));
            // merge numerically equal levels, e.g. (k,m) and (m,k) when p = q
            auto it = levels.lower_bound(mu - 1e-9);
            if (it != levels.end() && std::fabs(it->first - mu) <= 1e-9)
                it->second = std::min(it->second + d, std::numeric_limits<std::uint64_t>::max());
            else
                levels.emplace(mu, d);
        }
    }
    LinkSpec link;
    link.dim = n - 1;
    for (const auto& [mu, d] : levels) {
        link.mu.push_back(mu);
        link.mult.push_back(d);
    }
    link.sup_A2 = nm1;
    link.area = sphere_area(p, std::sqrt(p / nm1)) * sphere_area(q, std::sqrt(q / nm1));
    link.symmetric = true;
    ConeSpec c = ConeSpec::make(n, std::move(link));
    c.p = p;
    c.q = q;
    return c;
}

double cone_A2(const ConeSpec& cone, double y) {
    if (!(y > 0.0)) throw DomainError("cone_A2: y must be positive");
    return cone.link.sup_A2 / (y * y);
}

std::pair<double, double> hessian_r_identities(const ConeSpec& cone, double r) {
    if (!(r > 0.0)) throw DomainError("hessian_r_identities: r must be positive");
    return {1.0, (cone.n - 1.0) / (r * r)};
}

void to_json(nlohmann::json& j, const LinkSpec& l) {
    j = nlohmann::json{{"dim", l.dim},       {"mu", l.mu},     {"mult", l.mult},
                       {"sup_A2", l.sup_A2}, {"area", l.area}, {"symmetric", l.symmetric}};
}

void from_json(const nlohmann::json& j, LinkSpec& l) {
    try {
        j.at("dim").get_to(l.dim);
        j.at("mu").get_to(l.mu);
        if (j.contains("mult"))
            j.at("mult").get_to(l.mult);
        else
            l.mult.assign(l.mu.size(), 1);
        j.at("sup_A2").get_to(l.sup_A2);
        j.at("area").get_to(l.area);
        l.symmetric = j.value("symmetric", false);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("link: ") + e.what());
    }
}

void to_json(nlohmann::json& j, const ConeSpec& c) {
    j = nlohmann::json{{"n", c.n},
                       {"link", c.link},
                       {"stability_margin", c.stability_margin},
                       {"p", c.p},
                       {"q", c.q}};
}

void from_json(const nlohmann::json& j, ConeSpec& c) {
    int n = 0;
    LinkSpec link;
    try {
        j.at("n").get_to(n);
        link = j.at("link").get<LinkSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("cone: ") + e.what());
    }
    c = ConeSpec::make(n, std::move(link));
    c.p = j.value("p", 0);
    c.q = j.value("q", 0);
}

}  // namespace mcflab
