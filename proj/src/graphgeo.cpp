#include "mcflab/graphgeo.hpp"

#include <cmath>

#include "mcflab/errors.hpp"

namespace mcflab {

BaseCurve BaseCurve::cone(int p, int q) {
    if (p < 1 || q < 1) throw DomainError("BaseCurve::cone: p, q >= 1");
    BaseCurve b;
    b.p_ = p;
    b.q_ = q;
    return b;
}

BaseCurve BaseCurve::leaf(std::shared_ptr<const FoliationLeaf> leaf) {
    if (!leaf) throw DomainError("BaseCurve::leaf: null leaf");
    BaseCurve b;
    b.p_ = leaf->curve.p;
    b.q_ = leaf->curve.q;
    b.leaf_ = std::move(leaf);
    return b;
}

BaseGeometry BaseCurve::at(double sigma) const {
    BaseGeometry g;
    if (!leaf_) {
        if (!(sigma > 0.0)) throw DomainError("BaseCurve::at: cone vertex excluded");
        const double th = cone_angle(p_, q_);
        g.phi = th;
        g.S = sigma * std::cos(th);
        g.T = sigma * std::sin(th);
        g.kp = std::sin(th) / g.S;
        g.kq = -std::cos(th) / g.T;
        g.dkp = -g.kp / sigma;
        g.dkq = -g.kq / sigma;
        return g;
    }
    const ProfileSample x = profile_at(leaf_->curve, sigma);
    g.S = x.s;
    g.T = x.t;
    g.phi = x.phi;
    g.k = profile_curvature(p_, q_, x.s, x.t, x.phi);
    g.dk = profile_curvature_deriv(p_, q_, x.s, x.t, x.phi);
    const double sp = std::sin(x.phi);
    const double cp = std::cos(x.phi);
    g.kp = sp / x.s;
    g.dkp = (cp * g.k * x.s - sp * cp) / (x.s * x.s);
    g.axis = x.t < 1e-7 * x.s;
    if (g.axis) {
        g.kq = g.k;
        g.dkq = 0.0;
    } else {
        g.kq = -cp / x.t;
        g.dkq = (sp * g.k * x.t + cp * sp) / (x.t * x.t);
    }
    return g;
}

std::pair<double, double> BaseCurve::point(double sigma, double u) const {
    if (!leaf_) {
        const double th = cone_angle(p_, q_);
        return {sigma * std::cos(th) + u * std::sin(th), sigma * std::sin(th) - u * std::cos(th)};
    }
    const ProfileSample x = profile_at(leaf_->curve, sigma);
    return {x.s + u * std::sin(x.phi), x.t - u * std::cos(x.phi)};
}

GraphMetric graph_metric_jet(const BaseGeometry& b, const GraphJet& j) {
    GraphMetric m;
    const double a = 1.0 + j.u * b.k;
    m.g_ss = a * a + j.du * j.du;
    m.g_pp = (1.0 + j.u * b.kp) * (1.0 + j.u * b.kp);
    m.g_qq = (1.0 + j.u * b.kq) * (1.0 + j.u * b.kq);
    const double v2 = 1.0 - j.du * j.du / m.g_ss;
    m.V = v2 > 0.0 ? std::sqrt(v2) : 0.0;
    if (a < 0.0) m.V = -m.V;
    return m;
}

namespace {

// u'' + (p S'/S + q T'/T) u', with the axis limit q T'/T u' -> q u''
double laplacian(const BaseGeometry& b, const GraphJet& j, int p, int q) {
    const double sS = std::cos(b.phi) / b.S;
    if (b.axis) return (1.0 + q) * j.d2u + p * sS * j.du;
    return j.d2u + (p * sS + q * std::sin(b.phi) / b.T) * j.du;
}

}  // namespace

double mean_curvature_jet(const BaseGeometry& b, const GraphJet& j, int p, int q) {
    const GraphMetric m = graph_metric_jet(b, j);
    const double V = m.V;
    const double a = 1.0 + j.u * b.k;
    const double gss_inv = 1.0 / m.g_ss;
    // Hessian components of u in the sphere directions
    const double hess_p = std::cos(b.phi) / b.S * j.du;
    const double hess_q = b.axis ? j.d2u : std::sin(b.phi) / b.T * j.du;
    const double hs = (V * V * (b.k + j.u * b.k * b.k - j.d2u) +
                       (2.0 * j.du * b.k + j.u * b.dk) * j.du * gss_inv * a) / V;
    const double hp = (V * V * (b.kp + j.u * b.kp * b.kp - hess_p) +
                       j.u * b.dkp * j.du * gss_inv * a) / V;
    const double hq = (V * V * (b.kq + j.u * b.kq * b.kq - hess_q) +
                       j.u * b.dkq * j.du * gss_inv * a) / V;
    return gss_inv * hs + p * hp / m.g_pp + q * hq / m.g_qq;
}

double mean_curvature_direct(const BaseGeometry& b, const GraphJet& j, int p, int q) {
    const double a = 1.0 + j.u * b.k;
    const double bb = j.du;
    const double A1 = 2.0 * j.du * b.k + j.u * b.dk;
    const double A2 = j.d2u - b.k * a;
    const double speed = std::hypot(a, bb);
    const double kbar = (bb * A1 - a * A2) / (speed * speed * speed);
    const double Tx = std::cos(b.phi);
    const double Ty = std::sin(b.phi);
    const double Nx = std::sin(b.phi);
    const double Ny = -std::cos(b.phi);
    const double nbx = (a * Nx - bb * Tx) / speed;
    const double nby = (a * Ny - bb * Ty) / speed;
    const double Sbar = b.S + j.u * Nx;
    const double Tbar = b.T + j.u * Ny;
    const double qterm = b.axis ? kbar : nby / Tbar;
    return kbar + p * nbx / Sbar + q * qterm;
}

double second_fundamental_norm2_jet(const BaseGeometry& b, const GraphJet& j, int p, int q) {
    const double a = 1.0 + j.u * b.k;
    const double bb = j.du;
    const double A1 = 2.0 * j.du * b.k + j.u * b.dk;
    const double A2 = j.d2u - b.k * a;
    const double speed = std::hypot(a, bb);
    const double kbar = (bb * A1 - a * A2) / (speed * speed * speed);
    const double nbx = (a * std::sin(b.phi) - bb * std::cos(b.phi)) / speed;
    const double nby = (-a * std::cos(b.phi) - bb * std::sin(b.phi)) / speed;
    const double kp = nbx / (b.S + j.u * std::sin(b.phi));
    const double kq = b.axis ? kbar : nby / (b.T - j.u * std::cos(b.phi));
    return kbar * kbar + p * kp * kp + q * kq * kq;
}

double jacobi_operator_jet(const BaseGeometry& b, const GraphJet& j, int p, int q) {
    const double A2 = b.k * b.k + p * b.kp * b.kp + q * b.kq * b.kq;
    return laplacian(b, j, p, q) + A2 * j.u;
}

double error_term_jet(const BaseGeometry& b, const GraphJet& j, int p, int q) {
    const GraphMetric m = graph_metric_jet(b, j);
    return -mean_curvature_jet(b, j, p, q) / m.V - jacobi_operator_jet(b, j, p, q);
}

GraphJet GraphChart::jet(std::size_t i) const {
    const std::size_t N = sigma.size();
    if (N < 3 || u.size() != N) throw DomainError("GraphChart: need >= 3 matching samples");
    if (i >= N) throw DomainError("GraphChart: index out of range");
    const double h = sigma[1] - sigma[0];
    GraphJet j;
    j.u = u[i];
    if (i > 0 && i + 1 < N) {
        j.du = (u[i + 1] - u[i - 1]) / (2.0 * h);
        j.d2u = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
    } else if (i == 0 && !base.is_cone() && sigma[0] == 0.0) {
        j.du = 0.0;
        j.d2u = 2.0 * (u[1] - u[0]) / (h * h);
    } else if (i == 0) {
        j.du = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
        j.d2u = N > 3 ? (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / (h * h)
                      : (u[0] - 2.0 * u[1] + u[2]) / (h * h);
    } else {
        const std::size_t n = N - 1;
        j.du = (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) / (2.0 * h);
        j.d2u = N > 3 ? (2.0 * u[n] - 5.0 * u[n - 1] + 4.0 * u[n - 2] - u[n - 3]) / (h * h)
                      : (u[n] - 2.0 * u[n - 1] + u[n - 2]) / (h * h);
    }
    return j;
}

GraphMetric graph_metric(const GraphChart& chart, std::size_t i) {
    const BaseGeometry b = chart.base.at(chart.sigma[i]);
    const GraphMetric m = graph_metric_jet(b, chart.jet(i));
    if (!(m.g_ss > 0.0 && m.g_pp > 0.0 && m.g_qq > 0.0) || !(m.V > 0.0))
        throw NumericalError("graph_metric: graph condition violated (metric not positive definite)");
    return m;
}

double graph_mean_curvature(const GraphChart& chart, std::size_t i) {
    const BaseGeometry b = chart.base.at(chart.sigma[i]);
    const GraphJet j = chart.jet(i);
    const GraphMetric m = graph_metric_jet(b, j);
    if (!(m.V > 0.01)) throw NumericalError("graph_mean_curvature: near-fold, V <= 0.01");
    return mean_curvature_jet(b, j, chart.base.p(), chart.base.q());
}

double error_term(const GraphChart& chart, std::size_t i) {
    const BaseGeometry b = chart.base.at(chart.sigma[i]);
    const GraphJet j = chart.jet(i);
    const GraphMetric m = graph_metric_jet(b, j);
    if (!(m.V > 0.01)) throw NumericalError("error_term: near-fold, V <= 0.01");
    return error_term_jet(b, j, chart.base.p(), chart.base.q());
}

}  // namespace mcflab
