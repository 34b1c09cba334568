#include "mcflab/wspace.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mcflab/errors.hpp"
#include "mcflab/rng.hpp"
#include "mcflab/specfun.hpp"

namespace mcflab {

namespace {

// Orthonormal generalized Laguerre recurrence on eta with parameter a:
//   b_{k+1} p_{k+1} = (eta - a_k) p_k - b_k p_{k-1},
//   a_k = 2k + 1 + a,  b_k = sqrt(k (k + a)).
struct LaguerreEval {
    double p = 0.0;       // p_N (scaled)
    double dp = 0.0;      // p_N' (scaled, same factor)
    double log_sum = 0.0; // log sum_{k<N} p_k^2 (unscaled)
};

LaguerreEval laguerre_eval(int N, double a, double eta) {
    const double log_mu0 = log_gamma_fn(a + 1.0);
    double pm1 = 0.0;
    double dpm1 = 0.0;
    double p = 1.0;  // true p_0 = exp(-log_mu0/2); track the log factor separately
    double dp = 0.0;
    double log_scale = -0.5 * log_mu0;
    double sum = 0.0;  // scaled by exp(-2 log_scale)
    for (int k = 0; k < N; ++k) {
        sum += p * p;
        const double ak = 2.0 * k + 1.0 + a;
        const double bk = (k == 0) ? 0.0 : std::sqrt(k * (k + a));
        const double bk1 = std::sqrt((k + 1.0) * (k + 1.0 + a));
        const double pn = ((eta - ak) * p - bk * pm1) / bk1;
        const double dpn = (p + (eta - ak) * dp - bk * dpm1) / bk1;
        pm1 = p;
        dpm1 = dp;
        p = pn;
        dp = dpn;
        const double mag = std::max(std::fabs(p), std::fabs(pm1));
        if (mag > 1e100) {
            const double f = 1e-100;
            p *= f;
            pm1 *= f;
            dp *= f;
            dpm1 *= f;
            sum *= f * f;
            log_scale += std::log(1e100);
        }
    }
    LaguerreEval r;
    r.p = p;
    r.dp = dp;
    r.log_sum = std::log(sum) + 2.0 * log_scale;
    return r;
}

void gauss_legendre(int m, std::vector<double>& x, std::vector<double>& w) {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd off(m - 1);
    for (int k = 1; k < m; ++k) off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
    x.resize(m);
    w.resize(m);
    for (int k = 0; k < m; ++k) {
        x[k] = es.eigenvalues()(k);
        const double v0 = es.eigenvectors()(0, k);
        w[k] = 2.0 * v0 * v0;
    }
}

}  // namespace

double WeightedQuadrature::integrate(const std::function<double(double)>& f) const {
    double s = 0.0;
    if (shift == 0.0) {
        for (std::size_t k = 0; k < nodes.size(); ++k) s += weights[k] * f(nodes[k]);
    } else {
        for (std::size_t k = 0; k < nodes.size(); ++k)
            s += weights[k] * f(nodes[k]) * std::pow(nodes[k], -shift);
    }
    return s;
}

double WeightedQuadrature::mass() const {
    return integrate([](double) { return 1.0; });
}

WeightedQuadrature build_quadrature(int n, int order, double shift) {
    if (order < 2) throw DomainError("build_quadrature: order must be >= 2");
    if (order > 200) throw DomainError("build_quadrature: order > 200 is not supported");
    const double a = 0.5 * (n + shift) - 1.0;
    if (!(a > -1.0)) throw DomainError("build_quadrature: weight not integrable at 0");
    const int N = order;
    Eigen::VectorXd diag(N);
    Eigen::VectorXd off(N - 1);
    for (int k = 0; k < N; ++k) diag(k) = 2.0 * k + 1.0 + a;
    for (int k = 1; k < N; ++k) off(k - 1) = std::sqrt(k * (k + a));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);

    WeightedQuadrature q;
    q.kind = WeightedQuadrature::Kind::laguerre;
    q.n = n;
    q.order = order;
    q.shift = shift;
    q.nodes.resize(N);
    q.weights.resize(N);
    const double log_pref = (n - 1.0 + shift) * std::log(2.0);
    for (int k = 0; k < N; ++k) {
        double eta = es.eigenvalues()(k);
        for (int it = 0; it < 3; ++it) {  // Newton polish on p_N
            const LaguerreEval e = laguerre_eval(N, a, eta);
            if (e.dp == 0.0) break;
            eta -= e.p / e.dp;
        }
        const LaguerreEval e = laguerre_eval(N, a, eta);
        // Christoffel weight 1 / sum p_k^2 for the eta-rule
        q.nodes[k] = 2.0 * std::sqrt(eta);
        q.weights[k] = std::exp(log_pref - e.log_sum);
    }
    return q;
}

WeightedQuadrature build_panel_quadrature(int n, double y_lo, double y_hi, int panels,
                                          int points) {
    if (!(y_lo > 0.0) || !(y_hi > y_lo)) throw DomainError("panel quadrature: need 0 < lo < hi");
    if (panels < 1 || points < 1) throw DomainError("panel quadrature: empty rule");
    std::vector<double> gx;
    std::vector<double> gw;
    gauss_legendre(points, gx, gw);
    WeightedQuadrature q;
    q.kind = WeightedQuadrature::Kind::panels;
    q.n = n;
    q.order = points;
    q.nodes.reserve(static_cast<std::size_t>(panels) * points);
    q.weights.reserve(static_cast<std::size_t>(panels) * points);
    const double l0 = std::log(y_lo);
    const double dl = (std::log(y_hi) - l0) / panels;
    for (int pidx = 0; pidx < panels; ++pidx) {
        const double a = std::exp(l0 + pidx * dl);
        const double b = std::exp(l0 + (pidx + 1) * dl);
        const double mid = 0.5 * (a + b);
        const double half = 0.5 * (b - a);
        for (int k = 0; k < points; ++k) {
            const double y = mid + half * gx[k];
            q.nodes.push_back(y);
            q.weights.push_back(half * gw[k] * std::pow(y, n - 1) * std::exp(-0.25 * y * y));
        }
    }
    return q;
}

double inner_product_W(const LinkedFunction& f, const LinkedFunction& g, const ConeSpec& cone,
                       const WeightedQuadrature& quad) {
    if (f.f.decay != RadialFunction::Decay::polynomial ||
        g.f.decay != RadialFunction::Decay::polynomial)
        throw DomainError("inner_product_W: gaussian-borderline factor, integral may diverge");
    if (f.j < 1 || g.j < 1 || f.j > static_cast<int>(cone.link.mu.size()) ||
        g.j > static_cast<int>(cone.link.mu.size()))
        throw DomainError("inner_product_W: link index out of range");
    if (f.j != g.j) return 0.0;
    return quad.integrate([&](double y) { return f.f.eval(y) * g.f.eval(y); });
}

double hardy_constant(int n) { return 0.25 * (n - 2.0); }

double hardy_defect(const RadialFunction& u, int n, const WeightedQuadrature& quad) {
    if (!u.deriv) throw DomainError("hardy_defect: derivative required");
    const bool compact = std::isfinite(u.support_hi) && u.support_lo > 0.0;
    if (!compact) throw DomainError("hardy_defect: u must be compactly supported in (0, inf)");
    const WeightedQuadrature rule =
        (quad.kind == WeightedQuadrature::Kind::panels && quad.n == n)
            ? quad
            : build_panel_quadrature(n, u.support_lo, u.support_hi, 64, 8);
    const double a2 = 0.25 * (n - 2.0) * (n - 2.0);
    const double num = rule.integrate([&](double y) {
        const double v = u.eval(y);
        const double d = u.deriv(y);
        return d * d - a2 * v * v / (y * y);
    });
    const double den = rule.integrate([&](double y) {
        const double v = u.eval(y);
        return v * v;
    });
    if (!(den > 0.0)) throw DomainError("hardy_defect: int u^2 dW vanishes");
    return -num / den;
}

RadialFunction make_bump(double center, double half_width) {
    if (!(half_width > 0.0) || !(center - half_width > 0.0))
        throw DomainError("make_bump: support must lie in (0, inf)");
    RadialFunction f;
    f.eval = [center, half_width](double y) {
        const double x = (y - center) / half_width;
        if (std::fabs(x) >= 1.0) return 0.0;
        return std::exp(1.0 - 1.0 / (1.0 - x * x));
    };
    f.deriv = [center, half_width](double y) {
        const double x = (y - center) / half_width;
        if (std::fabs(x) >= 1.0) return 0.0;
        const double d = 1.0 - x * x;
        return std::exp(1.0 - 1.0 / d) * (-2.0 * x / (d * d)) / half_width;
    };
    f.support_lo = center - half_width;
    f.support_hi = center + half_width;
    return f;
}

nlohmann::json CoercivityCertificate::to_json() const {
    return nlohmann::json{{"eps_tilde", eps_tilde},       {"C", C},
                          {"eps_min_raw", eps_min_raw},   {"eps_analytic", eps_analytic},
                          {"trials", trials},             {"basis_size", basis_size},
                          {"seed", seed},                 {"padding", 0.1}};
}

CoercivityCertificate coercivity_certificate(const ConeSpec& cone, int basis_size, int trials,
                                             std::uint64_t seed) {
    if (!cone.strictly_stable())
        throw DomainError("coercivity_certificate: cone is not strictly stable");
    if (basis_size < 1 || trials < 1) throw DomainError("coercivity_certificate: empty trial set");
    const int n = cone.n;
    const double A2 = cone.link.sup_A2;
    const int levels = std::min<int>(4, static_cast<int>(cone.link.mu.size()));

    Rng rng(seed);
    struct Basis {
        RadialFunction f;
        int j;
    };
    std::vector<Basis> basis;
    basis.reserve(basis_size);
    for (int b = 0; b < basis_size; ++b) {
        const double c = std::pow(10.0, rng.uniform(-1.5, 0.7));
        const double w = c * rng.uniform(0.2, 0.9);
        basis.push_back({make_bump(c, w), (b % levels) + 1});
    }
    const WeightedQuadrature rule = build_panel_quadrature(n, 2e-3, 12.0, 480, 8);
    // Per-node basis values, reused across trials.
    const std::size_t m = rule.nodes.size();
    std::vector<std::vector<double>> val(basis_size, std::vector<double>(m));
    std::vector<std::vector<double>> der(basis_size, std::vector<double>(m));
    for (int b = 0; b < basis_size; ++b)
        for (std::size_t k = 0; k < m; ++k) {
            val[b][k] = basis[b].f.eval(rule.nodes[k]);
            der[b][k] = basis[b].f.deriv(rule.nodes[k]);
        }

    const double Cprime = hardy_constant(n);
    const double C = Cprime + 0.5;
    double eps_min = std::numeric_limits<double>::infinity();
    std::vector<double> coef(basis_size);
    for (int t = 0; t < trials; ++t) {
        for (auto& c : coef) c = rng.uniform(-1.0, 1.0);
        double G = 0.0;
        double Apart = 0.0;
        double U = 0.0;
        for (int j = 1; j <= levels; ++j) {
            const double mu = cone.link.mu[j - 1];
            for (std::size_t k = 0; k < m; ++k) {
                double u = 0.0;
                double du = 0.0;
                for (int b = 0; b < basis_size; ++b) {
                    if (basis[b].j != j) continue;
                    u += coef[b] * val[b][k];
                    du += coef[b] * der[b][k];
                }
                const double y = rule.nodes[k];
                const double w = rule.weights[k];
                G += w * (du * du + (mu + A2) * u * u / (y * y));
                Apart += w * A2 * u * u / (y * y);
                U += w * u * u;
            }
        }
        if (!(G > 0.0)) continue;
        const double Q = G - Apart - 0.5 * U;
        eps_min = std::min(eps_min, (Q + C * U) / G);
    }
    CoercivityCertificate cert;
    cert.eps_min_raw = eps_min;
    cert.eps_tilde = 0.9 * eps_min;
    cert.C = C;
    cert.eps_analytic = cone.stability_margin / (cone.stability_margin + A2);
    cert.trials = trials;
    cert.basis_size = basis_size;
    cert.seed = seed;
    return cert;
}

double morrey_envelope(int n, double y) {
    return std::pow(y, -0.5 * n) + std::exp(0.25 * (y + 1.0) * (y + 1.0));
}

double morrey_slack(const MorreySample& s, int n, double C) {
    return C * morrey_envelope(n, s.y) * (s.grad_norm_W + s.norm_W) - s.abs_value;
}

}  // namespace mcflab
