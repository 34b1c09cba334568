#include "mcflab/params.hpp"

#include <algorithm>
#include <cmath>

#include "mcflab/errors.hpp"

namespace mcflab {

std::vector<std::string> ParamBundle::violations() const {
    std::vector<std::string> v;
    const double a = alpha;
    const double xi_hi =
        std::min({1.0, (n - 4.0 + 2.0 * a) / (2.0 * (1.0 - a)), delta_l / lambda_l});
    if (!(xi > 0.0 && xi < xi_hi)) v.push_back("xi in (0, min{1, (n-4+2a)/(2(1-a)), delta/lambda})");
    const double lower = (-1.0 - a) / (1.0 - a);
    if (!(theta > lower)) v.push_back("theta > (-1-a)/(1-a)");
    if (!(theta < 2.0 * (1.0 - a) * xi / (n + 2.0 * a + 4.0)))
        v.push_back("theta < 2(1-a) xi/(n+2a+4)");
    if (!(theta < 0.5 * (1.0 - theta) * alpha_tilde)) v.push_back("theta < (1-theta) at/2");
    if (std::fabs(varrho - (1.0 - 0.5 * (1.0 - a) * (1.0 - theta))) > 1e-14)
        v.push_back("varrho = 1 - (1-a)(1-theta)/2");
    if (!(varrho > 0.0 && varrho < theta)) v.push_back("0 < varrho < theta");
    if (std::fabs(k_tilde - (xi - theta * (0.5 * n + a + 2.0) / (1.0 - a))) > 1e-14)
        v.push_back("k_tilde = xi - theta (n/2+a+2)/(1-a)");
    if (!(k_tilde > 0.0)) v.push_back("k_tilde > 0");
    if (std::fabs(c_l - (0.5 + 0.25 / sigma_l)) > 1e-14) v.push_back("c_l = 1/2 + 1/(4 sigma_l)");
    if (!(Lambda > 1.0)) v.push_back("Lambda >> 1");
    if (!(rho < 1.0 && beta > 1.0)) v.push_back("rho << 1 << beta");
    if (!(t0 < 0.0)) v.push_back("t0 < 0");
    return v;
}

nlohmann::json ParamBundle::to_json() const {
    return nlohmann::json{{"n", n},           {"alpha", alpha},     {"alpha_tilde", alpha_tilde},
                          {"lambda_l", lambda_l}, {"delta_l", delta_l}, {"sigma_l", sigma_l},
                          {"xi", xi},         {"theta", theta},     {"varrho", varrho},
                          {"k_tilde", k_tilde}, {"c_l", c_l},       {"Lambda", Lambda},
                          {"beta", beta},     {"rho", rho},         {"t0", t0},
                          {"violations", violations()}};
}

nlohmann::json AlphaCondition::to_json() const {
    return nlohmann::json{{"pass", pass},
                          {"lhs", lhs},
                          {"terms",
                           {{"2(1-a)/(n+2a+4)", terms[0]},
                            {"(n-4+2a)/(n+4+2a)", terms[1]},
                            {"2(1-a)delta/((n+2a+4)lambda)", terms[2]},
                            {"at/(1+at)", terms[3]}}},
                          {"margins", margins}};
}

AlphaCondition check_alpha_condition(int n, double alpha, double alpha_tilde, double lambda_l,
                                     double delta_l) {
    const double a = alpha;
    AlphaCondition c;
    c.lhs = (-1.0 - a) / (1.0 - a);
    c.terms[0] = 2.0 * (1.0 - a) / (n + 2.0 * a + 4.0);
    c.terms[1] = (n - 4.0 + 2.0 * a) / (n + 4.0 + 2.0 * a);
    c.terms[2] = 2.0 * (1.0 - a) * delta_l / ((n + 2.0 * a + 4.0) * lambda_l);
    c.terms[3] = alpha_tilde / (1.0 + alpha_tilde);
    c.pass = true;
    for (int k = 0; k < 4; ++k) {
        c.margins[k] = c.terms[k] - c.lhs;
        if (!(c.margins[k] > 0.0)) c.pass = false;
    }
    return c;
}

nlohmann::json AdmissibleSet::to_json() const {
    return nlohmann::json{{"empty", empty},
                          {"xi", {xi.lo, xi.hi}},
                          {"xi_used", xi_used},
                          {"theta", {theta.lo, theta.hi}},
                          {"theta_weak_hi", theta_weak_hi}};
}

AdmissibleSet admissible_intervals(int n, double alpha, double alpha_tilde, double lambda_l,
                                   double delta_l) {
    const double a = alpha;
    AdmissibleSet s;
    s.xi.lo = 0.0;
    s.xi.hi = std::min({1.0, (n - 4.0 + 2.0 * a) / (2.0 * (1.0 - a)), delta_l / lambda_l});
    if (s.xi.empty()) return s;
    s.xi_used = 0.5 * (s.xi.lo + s.xi.hi);
    s.theta.lo = std::max(0.0, (-1.0 - a) / (1.0 - a));
    s.theta.hi = std::min(2.0 * (1.0 - a) * s.xi_used / (n + 2.0 * a + 4.0),
                          alpha_tilde / (2.0 + alpha_tilde));
    s.theta_weak_hi = 4.0 * s.xi_used / (n + 2.0 * a);
    s.empty = s.theta.empty();
    return s;
}

DerivedConstants derived_constants_unchecked(double alpha, int n, double lambda_l, double xi,
                                             double theta) {
    DerivedConstants d;
    d.sigma_l = lambda_l / (1.0 - alpha);
    d.c_l = 0.5 + 0.25 / d.sigma_l;
    d.varrho = 1.0 - 0.5 * (1.0 - alpha) * (1.0 - theta);
    d.k_tilde = xi - theta * (0.5 * n + alpha + 2.0) / (1.0 - alpha);
    return d;
}

DerivedConstants derived_constants(const OrderedSpectrum& sp, double alpha_tilde, double xi,
                                   double theta) {
    const DerivedConstants d =
        derived_constants_unchecked(sp.alpha, sp.n, sp.lambda_l, xi, theta);
    if (!(d.varrho > 0.0 && d.varrho < theta))
        throw ConfigError("derived_constants: violates 0 < varrho < theta (varrho = " +
                          std::to_string(d.varrho) + ")");
    if (!(d.k_tilde > 0.0))
        throw ConfigError("derived_constants: violates k_tilde > 0 (k_tilde = " +
                          std::to_string(d.k_tilde) + ")");
    const AdmissibleSet s = admissible_intervals(sp.n, sp.alpha, alpha_tilde, sp.lambda_l, sp.delta_l);
    if (!s.xi.contains(xi))
        throw ConfigError("derived_constants: violates xi in (0, min{1, (n-4+2a)/(2(1-a)), delta/lambda})");
    const double lower = (-1.0 - sp.alpha) / (1.0 - sp.alpha);
    if (!(theta > lower)) throw ConfigError("derived_constants: violates theta > (-1-a)/(1-a)");
    if (!(theta < 0.5 * (1.0 - theta) * alpha_tilde))
        throw ConfigError("derived_constants: violates theta < (1-theta) at/2");
    return d;
}

SimonsAsymptotics simons_asymptotics(int n) {
    if (n < 50) throw DomainError("simons_asymptotics: requires n >= 50");
    SimonsAsymptotics r;
    r.p = (n - 1) / 2;
    r.q = n - 1 - r.p;
    // mu_1 = -(n-1) for every C_{p,q}; the split only affects the link area
    r.alpha_exact = alpha_plus(-(n - 1.0), n);
    r.alpha_approx = -1.0 - 2.0 / (n + 1.0);
    r.alpha_tilde_exact = 2.0 - 2.0 * r.alpha_exact;
    r.alpha_tilde_approx = 4.0 + 4.0 / (n + 1.0);
    r.theta_approx = 1.0 / (n + 2.0);
    r.tolerance = 5.0 / (static_cast<double>(n) * n) * (r.p == r.q ? 1.0 : 2.0);
    return r;
}

ParamBundle make_bundle(const OrderedSpectrum& sp, double alpha_tilde, double xi, double theta) {
    ParamBundle b;
    b.n = sp.n;
    b.alpha = sp.alpha;
    b.alpha_tilde = alpha_tilde;
    b.lambda_l = sp.lambda_l;
    b.delta_l = sp.delta_l;
    b.xi = xi;
    b.theta = theta;
    const DerivedConstants d = derived_constants_unchecked(sp.alpha, sp.n, sp.lambda_l, xi, theta);
    b.sigma_l = d.sigma_l;
    b.c_l = d.c_l;
    b.varrho = d.varrho;
    b.k_tilde = d.k_tilde;
    return b;
}

}  // namespace mcflab
