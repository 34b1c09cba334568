#include "mcflab/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mcflab/errors.hpp"
#include "mcflab/interp.hpp"
#include "mcflab/specfun.hpp"

namespace mcflab {

double EigenMode::poly(double y) const {
    const double y2 = y * y;
    double s = 0.0;
    for (int m = i; m >= 1; --m) s = (s + ((m % 2) ? -K[m - 1] : K[m - 1])) * y2;
    return 1.0 + s;
}

namespace {

// P'(y) and P''(y) of the polynomial part.
void poly_derivs(const EigenMode& md, double y, double& d1, double& d2) {
    d1 = 0.0;
    d2 = 0.0;
    for (int m = 1; m <= md.i; ++m) {
        const double c = ((m % 2) ? -1.0 : 1.0) * md.K[m - 1];
        d1 += c * 2.0 * m * std::pow(y, 2 * m - 1);
        d2 += c * 2.0 * m * (2.0 * m - 1.0) * std::pow(y, 2 * m - 2);
    }
}

// y^{1-alpha} phi'(y) / c, a polynomial in y.
double reduced_deriv(const EigenMode& md, double y) {
    double d1 = 0.0;
    double d2 = 0.0;
    poly_derivs(md, y, d1, d2);
    return md.alpha * md.poly(y) + y * d1;
}

}  // namespace

double EigenMode::raw(double y) const { return std::pow(y, alpha) * poly(y); }

double EigenMode::raw_deriv(double y) const {
    return std::pow(y, alpha - 1.0) * reduced_deriv(*this, y);
}

double EigenMode::raw_deriv2(double y) const {
    double d1 = 0.0;
    double d2 = 0.0;
    poly_derivs(*this, y, d1, d2);
    const double P = poly(y);
    return std::pow(y, alpha - 2.0) *
           (alpha * (alpha - 1.0) * P + 2.0 * alpha * y * d1 + y * y * d2);
}

RadialFunction EigenMode::as_radial() const {
    RadialFunction f;
    const EigenMode self = *this;
    f.eval = [self](double y) { return self.profile(y); };
    f.deriv = [self](double y) { return self.profile_deriv(y); };
    f.decay = RadialFunction::Decay::polynomial;
    return f;
}

double alpha_plus(double mu, int n) {
    const double disc = (n - 2.0) * (n - 2.0) + 4.0 * mu;
    if (disc < 0.0)
        throw DomainError("alpha_plus: negative discriminant, cone not stable enough");
    return 0.5 * (-(n - 2.0) + std::sqrt(disc));
}

std::vector<double> mode_coefficients(int i, double alpha, int n) {
    std::vector<double> K(i);
    const double b = alpha + 0.5 * n;
    for (int m = 1; m <= i; ++m) {
        const double sgn = (m % 2) ? -1.0 : 1.0;
        K[m - 1] = sgn * rising_factorial(-i, m) /
                   (rising_factorial(b, m) * std::pow(4.0, m) * rising_factorial(1.0, m));
    }
    return K;
}

double mode_inner_product(const EigenMode& a, const EigenMode& b, int order) {
    if (a.j != b.j) return 0.0;
    const int ord = std::max(order, (a.i + b.i) / 2 + 2);
    const WeightedQuadrature q = build_quadrature(a.n, ord, a.alpha + b.alpha);
    double s = 0.0;
    for (std::size_t k = 0; k < q.nodes.size(); ++k)
        s += q.weights[k] * a.poly(q.nodes[k]) * b.poly(q.nodes[k]);
    return a.c_norm * b.c_norm * s;
}

EigenMode build_mode(const ConeSpec& cone, int i, int j, const WeightedQuadrature& quad) {
    if (i < 0) throw DomainError("build_mode: i must be >= 0");
    if (j < 1 || j > static_cast<int>(cone.link.mu.size()))
        throw DomainError("build_mode: link index out of range");
    EigenMode md;
    md.i = i;
    md.j = j;
    md.n = cone.n;
    md.mu = cone.link.mu[j - 1];
    md.mult = cone.link.mult.empty() ? 1 : cone.link.mult[j - 1];
    md.alpha = alpha_plus(md.mu, cone.n);
    if (!(2.0 * md.alpha - 2.0 > -cone.n))
        throw DomainError("build_mode: 2 alpha_j - 2 <= -n, mode not in H^1_W");
    md.lambda = -0.5 * (1.0 - md.alpha) + i;
    md.K = mode_coefficients(i, md.alpha, cone.n);
    md.c_norm = 1.0;
    const double nrm2 = mode_inner_product(md, md, std::max(quad.order, 2));
    md.c_norm = 1.0 / std::sqrt(nrm2);
    return md;
}

std::vector<EigenMode> OrderedSpectrum::unstable_j1() const {
    std::vector<EigenMode> out;
    for (const auto& m : modes)
        if (m.j == 1 && m.i < i1) out.push_back(m);
    std::sort(out.begin(), out.end(), [](const EigenMode& a, const EigenMode& b) { return a.i < b.i; });
    return out;
}

nlohmann::json OrderedSpectrum::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const auto& m = modes[k];
        rows.push_back({{"index", first_index[k]}, {"i", m.i}, {"j", m.j}, {"mu", m.mu},
                        {"alpha", m.alpha}, {"lambda", m.lambda}, {"c", m.c_norm},
                        {"mult", m.mult}, {"K", m.K}});
    }
    return nlohmann::json{{"scope", scope == SpectrumScope::full ? "full" : "equivariant"},
                          {"n", n},           {"alpha", alpha},     {"l", l},
                          {"i1", i1},         {"lambda_l", lambda_l}, {"delta_l", delta_l},
                          {"m_of_l", m_of_l}, {"i_k", i_k},         {"sigma_l", sigma_l},
                          {"modes", rows}};
}

OrderedSpectrum order_and_select(const ConeSpec& cone, double lambda_cutoff,
                                 const WeightedQuadrature& quad, SpectrumScope scope,
                                 std::optional<int> forced_i1) {
    OrderedSpectrum sp;
    sp.scope = scope;
    sp.n = cone.n;
    const int levels =
        scope == SpectrumScope::equivariant ? 1 : static_cast<int>(cone.link.mu.size());
    std::vector<double> lambda0(levels);
    for (int j = 1; j <= levels; ++j) {
        const double a = alpha_plus(cone.link.mu[j - 1], cone.n);
        if (!(2.0 * a - 2.0 > -cone.n)) {
            lambda0[j - 1] = std::numeric_limits<double>::infinity();
            continue;
        }
        lambda0[j - 1] = -0.5 * (1.0 - a);
        for (int i = 0; lambda0[j - 1] + i <= lambda_cutoff + 1e-12; ++i)
            sp.modes.push_back(build_mode(cone, i, j, quad));
    }
    sp.alpha = alpha_plus(cone.link.mu.front(), cone.n);
    if (scope == SpectrumScope::equivariant)
        for (auto& m : sp.modes) m.mult = 1;
    std::sort(sp.modes.begin(), sp.modes.end(), [](const EigenMode& a, const EigenMode& b) {
        if (std::fabs(a.lambda - b.lambda) > 1e-12) return a.lambda < b.lambda;
        if (a.j != b.j) return a.j < b.j;
        return a.i < b.i;
    });
    sp.first_index.resize(sp.modes.size());
    std::uint64_t idx = 1;
    for (std::size_t k = 0; k < sp.modes.size(); ++k) {
        sp.first_index[k] = idx;
        idx += sp.modes[k].mult;
    }

    auto gap_at = [&](std::size_t pos) -> double {
        const auto& m = sp.modes[pos];
        if (m.mult > 1) return 0.0;
        if (pos + 1 >= sp.modes.size())
            throw DomainError("order_and_select: lambda_cutoff too small to bound delta_l");
        return sp.modes[pos + 1].lambda - m.lambda;
    };

    bool found = false;
    for (std::size_t pos = 0; pos < sp.modes.size(); ++pos) {
        const auto& m = sp.modes[pos];
        if (m.j != 1 || !(m.lambda > 1e-14)) continue;
        if (forced_i1 && m.i != *forced_i1) continue;
        const double gap = gap_at(pos);
        if (gap <= 1e-12) {
            if (forced_i1)
                throw AdmissibilityError("order_and_select: zero gap at i1 = " + std::to_string(m.i) +
                                  ", choose a different l");
            continue;
        }
        sp.pos_l = pos;
        sp.i1 = m.i;
        sp.l = sp.first_index[pos];
        sp.lambda_l = m.lambda;
        sp.delta_l = gap;
        found = true;
        break;
    }
    if (!found)
        throw AdmissibilityError(forced_i1 ? "order_and_select: forced i1 not below cutoff or not positive"
                                    : "order_and_select: no positive j=1 eigenvalue with a "
                                      "positive gap below the cutoff");

    sp.sigma_l = sp.lambda_l / (1.0 - sp.alpha);
    sp.m_of_l = 0;
    for (int j = 1; j <= levels; ++j)
        if (lambda0[j - 1] <= sp.lambda_l + 1e-12) sp.m_of_l = j;
    sp.i_k.assign(1, sp.i1);
    for (int k = 2; k <= sp.m_of_l; ++k) {
        // largest i with lambda_{0k} + i < lambda_l (strict); -1 when empty
        const double d = sp.lambda_l - lambda0[k - 1];
        int ik = static_cast<int>(std::ceil(d - 1e-12)) - 1;
        sp.i_k.push_back(ik);
    }
    return sp;
}

double project(const SampledRadial& v, const EigenMode& mode, const WeightedQuadrature& quad) {
    if (v.j != mode.j) return 0.0;
    if (v.y.size() != v.v.size() || v.y.size() < 3)
        throw DomainError("project: need >= 3 matching samples");
    std::vector<double> ly(v.y.size());
    for (std::size_t k = 0; k < v.y.size(); ++k) {
        if (!(v.y[k] > 0.0)) throw DomainError("project: sample radii must be positive");
        ly[k] = std::log(v.y[k]);
    }
    const MonotoneCubic f(ly, v.v);
    // samples are expected to behave like the mode near the vertex, so the
    // rule absorbs y^(2 alpha) into its weight
    const WeightedQuadrature rule =
        (quad.kind == WeightedQuadrature::Kind::laguerre && quad.shift != 2.0 * mode.alpha)
            ? build_quadrature(quad.n, quad.order, 2.0 * mode.alpha)
            : quad;
    return rule.integrate([&](double y) {
        const double l = std::log(y);
        if (l < f.lo() || l > f.hi()) {
            if (v.zero_outside) return 0.0;
            throw DomainError("project: quadrature node outside samples and not interpolable");
        }
        return f(l) * mode.profile(y);
    });
}

double cutoff_eta(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / x);
    const double b = std::exp(-1.0 / (1.0 - x));
    return a / (a + b);
}

DecayFit cutoff_overlap_decay(const EigenMode& a, const EigenMode& b, double beta, double rho,
                              double sigma_l, const std::vector<double>& s_grid) {
    if (s_grid.size() < 2) throw DomainError("cutoff_overlap_decay: need >= 2 times");
    for (std::size_t k = 1; k < s_grid.size(); ++k)
        if (!(s_grid[k] > s_grid[k - 1])) throw DomainError("cutoff_overlap_decay: s_grid must increase");
    DecayFit fit;
    const int n = a.n;
    for (double s : s_grid) {
        double dev = 0.0;
        if (a.j == b.j) {
            const double y1 = (beta + 1.0) * std::exp(-sigma_l * s);
            const double y2lo = rho * std::exp(0.5 * s) - 1.0;
            const double y2hi = rho * std::exp(0.5 * s);
            auto integrand = [&](double y) {
                const double cut = cutoff_eta(std::exp(sigma_l * s) * y - beta) *
                                   cutoff_eta(y2hi - y);
                return (1.0 - cut) * a.profile(y) * b.profile(y);
            };
            if (y2lo > y1) {
                const WeightedQuadrature lo = build_panel_quadrature(n, y1 * 1e-10, y1, 60, 8);
                dev += lo.integrate(integrand);
                // beyond y ~ 80 the Gaussian weight is below double range
                if (y2lo < 80.0) {
                    const double top = std::max(y2hi, 1.0) + 40.0;
                    const WeightedQuadrature hi =
                        build_panel_quadrature(n, std::max(y2lo, 1e-300), top, 60, 8);
                    dev += hi.integrate(integrand);
                }
            } else {
                const double top = std::max(y2hi, y1) + 40.0;
                const WeightedQuadrature all = build_panel_quadrature(n, y1 * 1e-10, top, 200, 8);
                dev += all.integrate(integrand);
            }
        }
        fit.deviations.push_back(std::fabs(dev));
    }
    std::vector<double> xs;
    std::vector<double> ls;
    for (std::size_t k = 0; k < s_grid.size(); ++k) {
        const double d = fit.deviations[k];
        if (d > 1e-300 && std::isfinite(d)) {
            xs.push_back(s_grid[k]);
            ls.push_back(std::log(d));
        }
    }
    if (xs.size() < 2) {
        fit.converged = true;
        return fit;
    }
    const double N = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sx += xs[k];
        sy += ls[k];
        sxx += xs[k] * xs[k];
        sxy += xs[k] * ls[k];
    }
    fit.exponent = -(N * sxy - sx * sy) / (N * sxx - sx * sx);
    return fit;
}

double calibrate_morrey_constant(const ConeSpec& cone, const std::vector<EigenMode>& modes,
                                 const std::vector<double>& y_grid) {
    const double w1 = cone.link.omega1();
    double best = 0.0;
    for (double y : y_grid) {
        double s2 = 0.0;
        for (const auto& m : modes) {
            if (m.j != 1) throw DomainError("calibrate_morrey_constant: j = 1 modes only");
            const double v = m.profile(y);
            s2 += v * v;
        }
        best = std::max(best, w1 * std::sqrt(s2) / morrey_envelope(cone.n, y));
    }
    return 1.1 * best;
}

MorreyGram morrey_gram(const ConeSpec& cone, const std::vector<EigenMode>& modes) {
    const std::size_t N = modes.size();
    MorreyGram g;
    g.mass.assign(N * N, 0.0);
    g.grad.assign(N * N, 0.0);
    for (std::size_t a = 0; a < N; ++a) {
        if (modes[a].j != 1) throw DomainError("morrey_check: j = 1 modes only");
        for (std::size_t b = a; b < N; ++b) {
            const auto& A = modes[a];
            const auto& B = modes[b];
            const int ord = std::max(40, (A.i + B.i) / 2 + 3);
            const WeightedQuadrature q = build_quadrature(cone.n, ord, A.alpha + B.alpha - 2.0);
            double s = 0.0;
            for (std::size_t k = 0; k < q.nodes.size(); ++k)
                s += q.weights[k] * reduced_deriv(A, q.nodes[k]) * reduced_deriv(B, q.nodes[k]);
            g.mass[a * N + b] = g.mass[b * N + a] = mode_inner_product(A, B, 40);
            g.grad[a * N + b] = g.grad[b * N + a] = A.c_norm * B.c_norm * s;
        }
    }
    return g;
}

MorreyResult morrey_check(const ConeSpec& cone, const std::vector<EigenMode>& modes, const MorreyGram& gram,
                          const std::vector<double>& coeffs, double y, double C) {
    const std::size_t N = modes.size();
    if (N != coeffs.size() || gram.mass.size() != N * N) throw DomainError("morrey_check: size mismatch");
    MorreyResult r;
    r.sample.y = y;
    double v = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
        if (modes[k].j != 1) throw DomainError("morrey_check: j = 1 modes only");
        v += coeffs[k] * modes[k].profile(y);
    }
    r.sample.abs_value = std::fabs(v) * cone.link.omega1();
    double n2 = 0.0;
    double g2 = 0.0;
    for (std::size_t a = 0; a < N; ++a)
        for (std::size_t b = 0; b < N; ++b) {
            n2 += coeffs[a] * coeffs[b] * gram.mass[a * N + b];
            g2 += coeffs[a] * coeffs[b] * gram.grad[a * N + b];
        }
    r.sample.norm_W = std::sqrt(std::max(n2, 0.0));
    r.sample.grad_norm_W = std::sqrt(std::max(g2, 0.0));
    r.slack = morrey_slack(r.sample, cone.n, C);
    r.holds = r.slack >= 0.0;
    return r;
}

MorreyResult morrey_check(const ConeSpec& cone, const std::vector<EigenMode>& modes,
                          const std::vector<double>& coeffs, double y, double C) {
    if (modes.size() != coeffs.size()) throw DomainError("morrey_check: size mismatch");
    return morrey_check(cone, modes, morrey_gram(cone, modes), coeffs, y, C);
}

}  // namespace mcflab
