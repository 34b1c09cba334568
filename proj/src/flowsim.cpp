#include "mcflab/flowsim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>
#include <thread>
#include <tuple>

#include "mcflab/errors.hpp"
#include "mcflab/interp.hpp"

namespace mcflab {

namespace {

constexpr int kQuadOrder = 80;

// ---------------------------------------------------------------- config

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const std::exception&) {
        throw ConfigError(std::string("flow config: field '") + key + "' has the wrong type");
    }
}

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError("flow config: field '" + field + "' " + what);
}

// ---------------------------------------------------------------- numerics

// Thomas algorithm: lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]
// banded system with offsets -2..2 per row (entries hitting columns outside [0, N) must be zero);
// Gaussian elimination without pivoting, solution returned in rhs
using BandRow = std::array<double, 5>;

void solve_banded(std::vector<BandRow>& A, std::vector<double>& rhs) {
    const std::size_t N = A.size();
    for (std::size_t k = 0; k + 1 < N; ++k) {
        const double piv = A[k][2];
        for (std::size_t r = k + 1; r <= std::min(k + 2, N - 1); ++r) {
            const int off = 2 - static_cast<int>(r - k);  // position of column k in row r
            const double m = A[r][static_cast<std::size_t>(off)] / piv;
            if (m == 0.0) continue;
            for (int c = 0; c <= 2; ++c) {
                const int pos = off + c;  // column k + c in row r
                if (pos > 4) break;
                A[r][static_cast<std::size_t>(pos)] -= m * A[k][static_cast<std::size_t>(2 + c)];
            }
            rhs[r] -= m * rhs[k];
        }
    }
    for (std::size_t k = N; k-- > 0;) {
        double acc = rhs[k];
        for (std::size_t c = 1; c <= 2 && k + c < N; ++c) acc -= A[k][2 + c] * rhs[k + c];
        rhs[k] = acc / A[k][2];
    }
}

// row of I - th (A d_xx + B d_x + C) with fourth-order stencils when `wide`, second order otherwise
BandRow implicit_row(double th, double A, double B, double C, double h, bool wide) {
    static constexpr double d1w[5] = {1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0};
    static constexpr double d2w[5] = {-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0};
    static constexpr double d1n[5] = {0.0, -0.5, 0.0, 0.5, 0.0};
    static constexpr double d2n[5] = {0.0, 1.0, -2.0, 1.0, 0.0};
    const double* d1 = wide ? d1w : d1n;
    const double* d2 = wide ? d2w : d2n;
    BandRow r{};
    for (int k = 0; k < 5; ++k) r[static_cast<std::size_t>(k)] = -th * (A * d2[k] / (h * h) + B * d1[k] / h);
    r[2] += 1.0 - th * C;
    return r;
}

// cubic Lagrange through 4 points around x in increasing abscissae xs
double local_cubic(const std::vector<double>& xs, const std::vector<double>& ys, std::size_t lo_index,
                   double x) {
    const std::size_t N = xs.size();
    if (N < 4) throw DomainError("local_cubic: need >= 4 samples");
    auto it = std::upper_bound(xs.begin() + static_cast<std::ptrdiff_t>(lo_index), xs.end(), x);
    std::size_t k = static_cast<std::size_t>(it - xs.begin());
    k = k == 0 ? 0 : k - 1;
    std::size_t a = k >= lo_index + 1 ? k - 1 : lo_index;
    if (a + 3 >= N) a = N - 4;
    double acc = 0.0;
    for (std::size_t i = a; i < a + 4; ++i) {
        double w = 1.0;
        for (std::size_t m = a; m < a + 4; ++m)
            if (m != i) w *= (x - xs[m]) / (xs[i] - xs[m]);
        acc += w * ys[i];
    }
    return acc;
}

struct Linearized {
    double R = 0.0;
    double a = 0.0;  // dR/d(u'')
    double b = 0.0;  // dR/d(u')
    double c = 0.0;  // dR/du
};

template <class F>
Linearized linearize(const F& f, const GraphJet& j) {
    Linearized L;
    L.R = f(j);
    GraphJet k = j;
    const double D = std::max(1.0, std::fabs(j.d2u));
    k.d2u = j.d2u + D;
    L.a = (f(k) - L.R) / D;
    k = j;
    const double e1 = 1e-7 * std::max(1.0, std::fabs(j.du));
    k.du = j.du + e1;
    L.b = (f(k) - L.R) / e1;
    k = j;
    const double e0 = 1e-7 * std::max(1e-3, std::fabs(j.u));
    k.u = j.u + e0;
    L.c = (f(k) - L.R) / e0;
    return L;
}

// -H/V on a base, with the fold guard
double normal_speed(const BaseGeometry& b, const GraphJet& j, int p, int q) {
    const GraphMetric m = graph_metric_jet(b, j);
    if (!(m.V > 0.01)) throw NumericalError("flow: fold, V <= 0.01");
    return -mean_curvature_jet(b, j, p, q) / m.V;
}

std::vector<double> log_uniform(double lo, double hi, int N) {
    std::vector<double> y(N);
    const double a = std::log(lo);
    const double h = (std::log(hi) - a) / (N - 1);
    for (int i = 0; i < N; ++i) y[i] = std::exp(a + h * i);
    y.front() = lo;
    y.back() = hi;
    return y;
}

double outer_lo(const FlowSetup& S, double s) {
    return 0.5 * S.config.beta * std::exp(-S.sigma_l() * s);
}
double outer_hi(const FlowSetup& S, double s) { return S.config.rho * std::exp(0.5 * s); }

// tip graph in cone coordinates (type II units) from the graph node on
struct TipGraph {
    std::vector<double> r;
    std::vector<double> psi;
};

TipGraph tip_graph(const FlowState& st) {
    const FlowSetup& S = *st.setup;
    TipGraph g;
    const std::size_t M = st.tip_w_hat.size();
    for (std::size_t j = S.tip_graph_index; j < M; ++j) {
        const BaseGeometry& b = S.tip_geom[j];
        const double w = st.tip_w_hat[j];
        const auto [r, psi] = cone_coordinates(S.cone.p, S.cone.q, b.S + w * std::sin(b.phi),
                                               b.T - w * std::cos(b.phi));
        if (!g.r.empty() && !(r > g.r.back()))
            throw NumericalError("flow: tip chart lost its graph property over the cone");
        g.r.push_back(r);
        g.psi.push_back(psi);
    }
    return g;
}

// cone coordinates of B(sigma) + w N(sigma)
std::pair<double, double> tip_point_cone(const FlowSetup& S, std::size_t j, double w) {
    const BaseGeometry& b = S.tip_geom[j];
    return cone_coordinates(S.cone.p, S.cone.q, b.S + w * std::sin(b.phi), b.T - w * std::cos(b.phi));
}

// w with B_j + w N_j on the curve z -> (z, target(z))
template <class F>
double offset_onto(const FlowSetup& S, std::size_t j, double w0, const F& target) {
    auto g = [&](double w) {
        const auto [r, psi] = tip_point_cone(S, j, w);
        return psi - target(r);
    };
    double w = w0;
    double gw = g(w);
    for (int it = 0; it < 30; ++it) {
        const double h = 1e-7 * std::max(1e-3, std::fabs(w));
        const double d = (g(w + h) - gw) / h;
        if (!(std::fabs(d) > 1e-14)) throw NumericalError("flow: chart conversion is singular");
        const double dw = -gw / d;
        w += dw;
        gw = g(w);
        if (std::fabs(dw) < 1e-15 * std::max(1.0, std::fabs(w))) break;
    }
    return w;
}

double tip_speed(const FlowSetup& S, const BaseGeometry& b, const GraphJet& j, double e2s) {
    const double BN = b.S * std::sin(b.phi) - b.T * std::cos(b.phi);
    const double BT = b.S * std::cos(b.phi) + b.T * std::sin(b.phi);
    const double scaling = 0.5 + S.sigma_l();
    return scaling * (BN + j.u - j.du * BT / (1.0 + j.u * b.k)) +
           e2s * normal_speed(b, j, S.cone.p, S.cone.q);
}

double outer_speed(const BaseGeometry& b, const GraphJet& jy, double y, int p, int q) {
    return normal_speed(b, jy, p, q) + 0.5 * (jy.u - y * jy.du);
}

// first and second differences; fourth order where two neighbours exist on each side
std::pair<double, double> diffs(double fm2, double fm1, double f0, double fp1, double fp2, double h) {
    return {(fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h),
            (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h)};
}

GraphJet outer_jet_y(const std::vector<double>& v, std::size_t i, double h, double y) {
    double vx = (v[i + 1] - v[i - 1]) / (2.0 * h);
    double vxx = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
    if (i >= 2 && i + 2 < v.size()) std::tie(vx, vxx) = diffs(v[i - 2], v[i - 1], v[i], v[i + 1], v[i + 2], h);
    return GraphJet{v[i], vx / y, (vxx - vx) / (y * y)};
}

// node 0 sits on the axis; w is even there
GraphJet tip_jet(const std::vector<double>& w, std::size_t j, double h) {
    const std::size_t M = w.size();
    if (j + 2 < M) {
        const double wm1 = j >= 1 ? w[j - 1] : w[1];
        const double wm2 = j >= 2 ? w[j - 2] : w[2 - j];
        const auto [d1, d2] = diffs(wm2, wm1, w[j], w[j + 1], w[j + 2], h);
        return GraphJet{w[j], j == 0 ? 0.0 : d1, d2};
    }
    return GraphJet{w[j], (w[j + 1] - w[j - 1]) / (2.0 * h), (w[j + 1] - 2.0 * w[j] + w[j - 1]) / (h * h)};
}

// integral of f(y) y^(n-1) e^{-y^2/4} dy over the outer grid (trapezoid in log y)
double outer_integral(const FlowState& st, const std::vector<double>& f) {
    const int n = st.setup->cone.n;
    const std::vector<double>& y = st.outer_y;
    const double h = std::log(y[1] / y[0]);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double w = (i == 0 || i + 1 == y.size()) ? 0.5 : 1.0;
        acc += w * f[i] * std::pow(y[i], n) * std::exp(-0.25 * y[i] * y[i]);
    }
    return acc * h;
}

double top_coefficient(const EigenMode& m) {
    if (m.K.empty()) return 1.0;
    return (m.i % 2 == 0 ? 1.0 : -1.0) * m.K.back();
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12e", x);
    return buf;
}

}  // namespace

// ================================================================ config

nlohmann::json FlowConfig::to_json() const {
    return nlohmann::json{{"p", p},
                          {"q", q},
                          {"beta", beta},
                          {"rho", rho},
                          {"Lambda", Lambda},
                          {"s0", s0},
                          {"s_end", s_end},
                          {"xi", xi},
                          {"theta", theta},
                          {"alpha_tilde", alpha_tilde},
                          {"outer_points", outer_points},
                          {"tip_points", tip_points},
                          {"dt", dt},
                          {"regrid_interval", regrid_interval},
                          {"leaf_step", leaf_step},
                          {"tune", tune},
                          {"seed", seed},
                          {"a", a},
                          {"barrier_spread", barrier_spread},
                          {"barrier_R", barrier_R},
                          {"tip_delta", tip_delta},
                          {"tip_C_factor", tip_C_factor},
                          {"track_r", track_r},
                          {"track_R", track_R},
                          {"tuning_radius", tuning_radius}};
}

FlowConfig FlowConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("flow config: expected a JSON object");
    static const char* known[] = {"p", "q", "beta", "rho", "Lambda", "s0", "s_end", "xi", "theta",
                                  "alpha_tilde", "outer_points", "tip_points", "dt", "regrid_interval",
                                  "leaf_step", "tune", "seed", "a", "barrier_spread", "barrier_R",
                                  "tip_delta", "tip_C_factor", "track_r", "track_R", "tuning_radius"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        require(ok, it.key(), "is not a flow setting");
    }
    FlowConfig c;
    read_field(j, "p", c.p);
    read_field(j, "q", c.q);
    read_field(j, "beta", c.beta);
    read_field(j, "rho", c.rho);
    read_field(j, "Lambda", c.Lambda);
    read_field(j, "s0", c.s0);
    read_field(j, "s_end", c.s_end);
    read_field(j, "xi", c.xi);
    read_field(j, "theta", c.theta);
    read_field(j, "alpha_tilde", c.alpha_tilde);
    read_field(j, "outer_points", c.outer_points);
    read_field(j, "tip_points", c.tip_points);
    read_field(j, "dt", c.dt);
    read_field(j, "regrid_interval", c.regrid_interval);
    read_field(j, "leaf_step", c.leaf_step);
    read_field(j, "tune", c.tune);
    read_field(j, "seed", c.seed);
    read_field(j, "a", c.a);
    read_field(j, "barrier_spread", c.barrier_spread);
    read_field(j, "barrier_R", c.barrier_R);
    read_field(j, "tip_delta", c.tip_delta);
    read_field(j, "tip_C_factor", c.tip_C_factor);
    read_field(j, "track_r", c.track_r);
    read_field(j, "track_R", c.track_R);
    read_field(j, "tuning_radius", c.tuning_radius);
    require(c.p >= 1 && c.q >= 1 && c.p + c.q >= 6, "p", "must give n = p + q + 1 >= 7 with p, q >= 1");
    require(c.beta > 1.0, "beta", "must exceed 1");
    require(c.rho > 0.0, "rho", "must be positive");
    require(c.Lambda > 0.0, "Lambda", "must be positive");
    require(c.s_end > c.s0, "s_end", "must exceed s0");
    require(c.outer_points >= 64, "outer_points", "must be >= 64");
    require(c.tip_points >= 64, "tip_points", "must be >= 64");
    require(c.dt > 0.0 && c.dt <= c.regrid_interval, "dt", "must lie in (0, regrid_interval]");
    require(c.regrid_interval > 0.0, "regrid_interval", "must be positive");
    require(c.leaf_step > 0.0 && c.leaf_step < 0.1, "leaf_step", "must lie in (0, 0.1)");
    require(c.barrier_spread > 0.0 && c.barrier_spread < 1.0, "barrier_spread", "must lie in (0, 1)");
    require(c.barrier_R > 0.0, "barrier_R", "must be positive");
    require(c.track_r > 0.0 && c.track_R > c.track_r, "track_R", "must exceed track_r > 0");
    require(c.theta > 0.0 && c.theta < 1.0, "theta", "must lie in (0, 1)");
    require(c.xi > 0.0, "xi", "must be positive");
    require(c.tuning_radius >= 0.0, "tuning_radius", "must be >= 0");
    return c;
}

double tuning_radius(const FlowSetup& setup) {
    if (setup.config.tuning_radius > 0.0) return setup.config.tuning_radius;
    return std::pow(setup.config.beta, -setup.params.alpha_tilde);
}

std::shared_ptr<const FlowSetup> make_flow_setup(const FlowConfig& config) {
    auto S = std::make_shared<FlowSetup>();
    S->config = config;
    S->cone = quadratic_cone(config.p, config.q);
    const WeightedQuadrature quad = build_quadrature(S->cone.n, kQuadOrder);
    S->spectrum = order_and_select(S->cone, 6.0, quad, SpectrumScope::equivariant);
    S->omega1 = S->cone.link.omega1();
    S->unstable = S->spectrum.unstable_j1();
    if (!config.a.empty() && config.a.size() != S->unstable.size())
        throw ConfigError("flow config: field 'a' must have " + std::to_string(S->unstable.size()) +
                          " entries");

    const double sigma = S->spectrum.sigma_l;
    const double R_tip = 2.0 * config.beta * config.beta;
    const double lam1 = std::pow(S->omega1, 1.0 / (1.0 - S->spectrum.alpha));
    auto unit = std::make_shared<FoliationLeaf>(build_leaf(S->cone, config.leaf_step, 1.1 * R_tip / lam1));
    S->unit_leaf = unit;
    auto tip = std::make_shared<FoliationLeaf>(rescale_leaf(*unit, S->omega1));
    S->tip_leaf = tip;
    S->tip_base = BaseCurve::leaf(tip);

    const double at = config.alpha_tilde > 0.0 ? config.alpha_tilde : unit->fit_alpha_tilde;
    S->params = make_bundle(S->spectrum, at, config.xi, config.theta);
    S->params.Lambda = config.Lambda;
    S->params.beta = config.beta;
    S->params.rho = config.rho;
    S->params.t0 = t_of_s(config.s0);

    if (!(0.5 * config.beta > tip->R_s))
        throw ConfigError("flow config: field 'beta' too small, beta/2 must exceed the leaf graph radius " +
                          std::to_string(tip->R_s));
    const double sigR = tip->sigma_at(R_tip);
    const int M = config.tip_points;
    S->tip_sigma.resize(M);
    S->tip_geom.resize(M);
    S->tip_radius.resize(M);
    for (int j = 0; j < M; ++j) {
        S->tip_sigma[j] = sigR * j / (M - 1);
        S->tip_geom[j] = S->tip_base.at(S->tip_sigma[j]);
        S->tip_radius[j] = std::hypot(S->tip_geom[j].S, S->tip_geom[j].T);
    }
    const double sig_graph = tip->sigma_at(std::max(tip->R_s * 1.02, std::min(0.5 * config.beta, tip->R_s * 1.1)));
    std::size_t g = 0;
    while (g < S->tip_sigma.size() && S->tip_sigma[g] < sig_graph) ++g;
    S->tip_graph_index = g;
    (void)sigma;
    return S;
}

// ================================================================ time

double s_of_t(double t) {
    if (!(t < 0.0)) throw DomainError("s_of_t: t must be negative");
    return -std::log(-t);
}
double t_of_s(double s) { return -std::exp(-s); }
double tau_of_s(double s, double sigma_l) { return std::exp(2.0 * sigma_l * s) / (2.0 * sigma_l); }
double s_of_tau(double tau, double sigma_l) { return std::log(2.0 * sigma_l * tau) / (2.0 * sigma_l); }

double FlowState::s() const { return s_of_t(t); }
double FlowState::tau() const { return tau_of_s(s(), setup->sigma_l()); }

std::vector<double> FlowState::outer_x() const {
    const double f = std::exp(-0.5 * s());
    std::vector<double> x(outer_y.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = f * outer_y[i];
    return x;
}

std::vector<double> FlowState::outer_u() const {
    const double f = std::exp(-0.5 * s());
    std::vector<double> u(outer_v.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = f * outer_v[i];
    return u;
}

// ================================================================ charts

double linear_profile(const FlowSetup& S, const std::vector<double>& a, double y, double s) {
    const EigenMode& ml = S.mode_l();
    const double s0 = S.config.s0;
    double v = std::exp(-ml.lambda * s) * ml.raw(y);
    for (std::size_t k = 0; k < a.size() && k < S.unstable.size(); ++k)
        v += a[k] * std::exp(-ml.lambda * s0 - S.unstable[k].lambda * (s - s0)) * S.unstable[k].raw(y);
    return S.omega1 * v;
}

double outer_value(const FlowState& st, double y) {
    const auto& ys = st.outer_y;
    if (y < ys.front() * (1.0 - 1e-12) || y > ys.back() * (1.0 + 1e-12))
        throw DomainError("outer_value: radius outside the outer chart");
    const double h = std::log(ys[1] / ys[0]);
    const double x = std::log(y / ys[0]) / h;
    const std::size_t N = ys.size();
    long k = static_cast<long>(std::floor(x)) - 1;
    k = std::clamp(k, 0L, static_cast<long>(N) - 4);
    const double u = x - static_cast<double>(k);
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) {
        double w = 1.0;
        for (int m = 0; m < 4; ++m)
            if (m != i) w *= (u - m) / static_cast<double>(i - m);
        acc += w * st.outer_v[static_cast<std::size_t>(k + i)];
    }
    return acc;
}

double tip_psi(const FlowState& st, double z) {
    if (!st.has_tip()) throw DomainError("tip_psi: state has no tip chart");
    const TipGraph g = tip_graph(st);
    if (z < g.r.front() || z > g.r.back()) throw DomainError("tip_psi: radius outside the tip chart");
    return local_cubic(g.r, g.psi, 0, z);
}

namespace {

double tip_psi_graph(const TipGraph& g, double z) {
    if (z < g.r.front() || z > g.r.back()) throw DomainError("flow: radius outside the tip chart");
    return local_cubic(g.r, g.psi, 0, z);
}

// Dirichlet value of the tip chart at its last node from the outer chart
double tip_boundary_from_outer(const FlowState& st, double s) {
    const FlowSetup& S = *st.setup;
    const double e = std::exp(S.sigma_l() * s);
    const std::size_t j = S.tip_sigma.size() - 1;
    return offset_onto(S, j, st.tip_w_hat[j], [&](double r) { return e * outer_value(st, r / e); });
}

double inner_boundary_from_tip(const TipGraph& g, const FlowSetup& S, double y, double s) {
    const double e = std::exp(S.sigma_l() * s);
    return tip_psi_graph(g, e * y) / e;
}

}  // namespace

FlowState build_initial_state(std::shared_ptr<const FlowSetup> setup, const std::vector<double>& a) {
    const FlowSetup& S = *setup;
    if (a.size() != S.unstable.size())
        throw ConfigError("build_initial_state: a must have " + std::to_string(S.unstable.size()) + " entries");
    const double ball = tuning_radius(S);
    double na = 0.0;
    for (double x : a) na += x * x;
    if (!(std::sqrt(na) < ball))
        throw ConfigError("build_initial_state: a outside the tuning ball of radius " + std::to_string(ball));

    const double s0 = S.config.s0;
    const double e = std::exp(S.sigma_l() * s0);
    const double beta = S.config.beta;
    // glued profile in type II units
    auto glued = [&](double z) {
        const double chi = 1.0 - cutoff_eta(z / beta - 1.0);
        const double inter = e * linear_profile(S, a, z / e, s0);
        if (chi == 0.0) return inter;
        return chi * S.tip_leaf->psi_at(z) + (1.0 - chi) * inter;
    };

    FlowState st;
    st.setup = setup;
    st.t = t_of_s(s0);
    st.a = a;
    st.last_regrid_s = s0;
    st.outer_y = log_uniform(outer_lo(S, s0), outer_hi(S, s0), S.config.outer_points);
    st.outer_v.resize(st.outer_y.size());
    for (std::size_t i = 0; i < st.outer_y.size(); ++i) st.outer_v[i] = glued(e * st.outer_y[i]) / e;

    st.tip_w_hat.assign(S.tip_sigma.size(), 0.0);
    for (std::size_t j = S.tip_graph_index; j < S.tip_sigma.size(); ++j) {
        if (S.tip_radius[j] <= beta) continue;
        st.tip_w_hat[j] = offset_onto(S, j, 0.0, glued);
    }
    st.kappa = measure_kappa(st);
    const AdmissibilityReport adm = check_admissibility(st);
    if (!adm.ok)
        throw AdmissibilityError("build_initial_state: admissibility violated by construction at y = " +
                                 std::to_string(adm.worst_y) + " (order " + std::to_string(adm.worst_order) +
                                 ", ratio " + std::to_string(adm.worst_ratio) + ")");
    st.overlap_mismatch = overlap_mismatch(st);
    return st;
}

FlowState regrid(const FlowState& st) {
    const FlowSetup& S = *st.setup;
    const double s = st.s();
    FlowState out = st;
    out.last_regrid_s = s;
    const std::vector<double> y = log_uniform(outer_lo(S, s), outer_hi(S, s), static_cast<int>(st.outer_y.size()));
    std::vector<double> lx(st.outer_y.size());
    for (std::size_t i = 0; i < lx.size(); ++i) lx[i] = std::log(st.outer_y[i]);
    const MonotoneCubic f(lx, st.outer_v);
    TipGraph g;
    if (st.has_tip()) g = tip_graph(st);
    std::vector<double> v(y.size());
    const double lo = st.outer_y.front();
    const double hi = st.outer_y.back();
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] >= lo && y[i] <= hi) {
            v[i] = f(std::log(y[i]));
        } else if (y[i] < lo) {
            v[i] = st.has_tip() ? inner_boundary_from_tip(g, S, y[i], s)
                                : st.far_scale * linear_profile(S, st.a, y[i], s);
        } else {
            v[i] = st.far_scale * linear_profile(S, st.a, y[i], s);
        }
    }
    out.outer_y = y;
    out.outer_v = v;
    return out;
}

// implicitness of the linearly implicit step; 1/2 is second order in time
constexpr double theta_implicit = 0.5;

FlowState step(const FlowState& st, double dt) {
    if (!(dt > 0.0)) throw DomainError("step: dt must be positive");
    const FlowSetup& S = *st.setup;
    const int p = S.cone.p;
    const int q = S.cone.q;
    const double s = st.s();
    const double s1 = s + dt;
    const double th = theta_implicit * dt;
    FlowState out = st;
    out.t = t_of_s(s1);

    // tip chart advanced from st with far boundary value `w_far`
    auto advance_tip = [&](double w_far) {
        const auto& w = st.tip_w_hat;
        const std::size_t M = w.size();
        const double h = S.tip_sigma[1] - S.tip_sigma[0];
        const double e2s = std::exp(2.0 * S.sigma_l() * (s + 0.5 * dt));
        std::vector<BandRow> rows(M, BandRow{0.0, 0.0, 1.0, 0.0, 0.0});
        std::vector<double> rhs(M, 0.0);
        for (std::size_t j = 0; j + 1 < M; ++j) {
            const BaseGeometry& b = S.tip_geom[j];
            const GraphJet jj = tip_jet(w, j, h);
            const Linearized L = linearize([&](const GraphJet& g) { return tip_speed(S, b, g, e2s); }, jj);
            const BandRow r = implicit_row(th, L.a, L.b, L.c, h, j + 2 < M);
            // even reflection across the axis folds columns -1, -2 onto 1, 2
            BandRow folded{};
            for (int k = 0; k < 5; ++k) {
                const long col = static_cast<long>(j) + k - 2;
                const long tgt = col < 0 ? -col : col;
                folded[static_cast<std::size_t>(tgt - static_cast<long>(j) + 2)] += r[static_cast<std::size_t>(k)];
            }
            rows[j] = folded;
            rhs[j] = dt * L.R;
        }
        rhs[M - 1] = w_far - w[M - 1];
        solve_banded(rows, rhs);
        for (std::size_t j = 0; j < M; ++j) out.tip_w_hat[j] = w[j] + rhs[j];
    };
    // predictor: far boundary from the current outer chart
    if (st.has_tip()) advance_tip(tip_boundary_from_outer(st, s));

    // ---- outer chart; inner boundary from the advanced tip chart
    {
        const auto& y = st.outer_y;
        const auto& v = st.outer_v;
        const std::size_t N = y.size();
        const double h = std::log(y[1] / y[0]);
        const BaseCurve cone = BaseCurve::cone(p, q);
        std::vector<BandRow> rows(N, BandRow{0.0, 0.0, 1.0, 0.0, 0.0});
        std::vector<double> rhs(N, 0.0);
        for (std::size_t i = 1; i + 1 < N; ++i) {
            const BaseGeometry b = cone.at(y[i]);
            const GraphJet jy = outer_jet_y(v, i, h, y[i]);
            const double yi = y[i];
            const Linearized L = linearize([&](const GraphJet& j) { return outer_speed(b, j, yi, p, q); }, jy);
            // a (v_xx - v_x)/y^2 + b v_x / y + c v
            const double A = L.a / (yi * yi);
            const double B = -L.a / (yi * yi) + L.b / yi;
            rows[i] = implicit_row(th, A, B, L.c, h, i >= 2 && i + 2 < N);
            rhs[i] = dt * L.R;
        }
        const double v_in = out.has_tip() ? inner_boundary_from_tip(tip_graph(out), S, y.front(), s1)
                                          : st.far_scale * linear_profile(S, st.a, y.front(), s1);
        const double v_out = st.far_scale * linear_profile(S, st.a, y.back(), s1);
        rhs[0] = v_in - v.front();
        rhs[N - 1] = v_out - v.back();
        solve_banded(rows, rhs);
        for (std::size_t i = 0; i < N; ++i) out.outer_v[i] = v[i] + rhs[i];
        // corrector: far boundary from the advanced outer chart
        if (out.has_tip()) advance_tip(tip_boundary_from_outer(out, s1));
        // the tip chart owns z <= beta
        if (out.has_tip()) {
            const TipGraph g = tip_graph(out);
            const double e1 = std::exp(S.sigma_l() * s1);
            for (std::size_t i = 0; i < N && e1 * y[i] <= S.config.beta; ++i)
                out.outer_v[i] = inner_boundary_from_tip(g, S, y[i], s1);
        }
    }

    if (s1 >= st.last_regrid_s + S.config.regrid_interval - 1e-9) out = regrid(out);
    if (out.has_tip()) {
        out.overlap_mismatch = overlap_mismatch(out);
        if (out.overlap_mismatch > 1e-4) {
            out = regrid(out);
            out.overlap_mismatch = overlap_mismatch(out);
            if (out.overlap_mismatch > 1e-4)
                throw NumericalError("step: chart overlap mismatch " + std::to_string(out.overlap_mismatch) +
                                     " exceeds 1e-4 after regridding");
        }
    }
    return out;
}

double overlap_mismatch(const FlowState& st) {
    if (!st.has_tip()) return 0.0;
    const FlowSetup& S = *st.setup;
    const double e = std::exp(S.sigma_l() * st.s());
    const double beta = S.config.beta;
    const TipGraph g = tip_graph(st);
    double worst = 0.0;
    for (std::size_t k = 0; k < g.r.size(); ++k) {
        if (g.r[k] < beta || g.r[k] > 2.0 * beta * beta) continue;
        const double y = g.r[k] / e;
        if (y < st.outer_y.front() || y > st.outer_y.back()) continue;
        worst = std::max(worst, std::fabs(g.psi[k] - e * outer_value(st, y)));
    }
    return worst;
}

// ================================================================ views

RescaledView rescale(const FlowState& st, RescaledView::Kind kind) {
    RescaledView v;
    v.kind = kind;
    const double s = st.s();
    if (kind == RescaledView::Kind::typeI) {
        v.scale_time = s;
        v.coord = st.outer_y;
        v.value = st.outer_v;
        return v;
    }
    const double sig = st.setup->sigma_l();
    const double e = std::exp(sig * s);
    v.scale_time = tau_of_s(s, sig);
    v.coord.resize(st.outer_y.size());
    v.value.resize(st.outer_y.size());
    for (std::size_t i = 0; i < st.outer_y.size(); ++i) {
        v.coord[i] = e * st.outer_y[i];
        v.value[i] = e * st.outer_v[i];
    }
    return v;
}

std::pair<std::vector<double>, std::vector<double>> physical_from_typeI(const RescaledView& view) {
    if (view.kind != RescaledView::Kind::typeI) throw DomainError("physical_from_typeI: type I view expected");
    const double f = std::exp(-0.5 * view.scale_time);
    std::pair<std::vector<double>, std::vector<double>> out;
    for (std::size_t i = 0; i < view.coord.size(); ++i) {
        out.first.push_back(f * view.coord[i]);
        out.second.push_back(f * view.value[i]);
    }
    return out;
}

// ================================================================ projections

std::vector<double> cutoff_profile(const FlowState& st) {
    const FlowSetup& S = *st.setup;
    const double s = st.s();
    const double e = std::exp(S.sigma_l() * s);
    const double top = S.config.rho * std::exp(0.5 * s);
    std::vector<double> vt(st.outer_y.size());
    for (std::size_t i = 0; i < vt.size(); ++i) {
        const double y = st.outer_y[i];
        vt[i] = cutoff_eta(e * y - S.config.beta) * cutoff_eta(top - y) * st.outer_v[i];
    }
    return vt;
}

namespace {

double weighted_projection(const FlowState& st, const std::vector<double>& vt, const EigenMode& m) {
    std::vector<double> f(vt.size());
    for (std::size_t i = 0; i < vt.size(); ++i) f[i] = vt[i] * m.raw(st.outer_y[i]);
    return outer_integral(st, f);
}

}  // namespace

std::vector<double> mode_projection_map(const FlowState& st) {
    const FlowSetup& S = *st.setup;
    const std::vector<double> vt = cutoff_profile(st);
    const double g = std::exp(S.mode_l().lambda * st.s()) / S.omega1;
    std::vector<double> Phi;
    for (const EigenMode& m : S.unstable)
        Phi.push_back(g * m.c_norm * m.c_norm * weighted_projection(st, vt, m));
    return Phi;
}

double measure_kappa(const FlowState& st) {
    const FlowSetup& S = *st.setup;
    const EigenMode& m = S.mode_l();
    const std::vector<double> vt = cutoff_profile(st);
    return std::exp(m.lambda * st.s()) / S.omega1 * m.c_norm * m.c_norm * weighted_projection(st, vt, m);
}

// ================================================================ monitors

nlohmann::json AdmissibilityReport::to_json() const {
    return nlohmann::json{{"ok", ok}, {"worst_ratio", worst_ratio}, {"worst_y", worst_y}, {"worst_order", worst_order}};
}

AdmissibilityReport check_admissibility(const FlowState& st) {
    const FlowSetup& S = *st.setup;
    const double s = st.s();
    const double lam = S.mode_l().lambda;
    const double alpha = S.spectrum.alpha;
    const int n = S.cone.n;
    const double lo = S.config.beta * std::exp(-S.sigma_l() * s);
    const double hi = S.config.rho * std::exp(0.5 * s);
    const auto& y = st.outer_y;
    const auto& v = st.outer_v;
    const double h = std::log(y[1] / y[0]);
    const double amp = S.params.Lambda * std::exp(-lam * s);
    AdmissibilityReport r;
    for (std::size_t i = 1; i + 1 < y.size(); ++i) {
        if (y[i] < lo || y[i] > hi) continue;
        const GraphJet j = outer_jet_y(v, i, h, y[i]);
        const double rhs = amp * (std::pow(y[i], alpha) + std::pow(y[i], 2.0 * lam + 1.0));
        const double hess = std::sqrt(j.d2u * j.d2u + (n - 1) * (j.du / y[i]) * (j.du / y[i]));
        const double lhs[3] = {std::fabs(j.u), y[i] * std::fabs(j.du), y[i] * y[i] * hess};
        for (int k = 0; k < 3; ++k) {
            const double ratio = lhs[k] / rhs;
            if (ratio > r.worst_ratio) {
                r.worst_ratio = ratio;
                r.worst_y = y[i];
                r.worst_order = k;
            }
        }
    }
    r.ok = r.worst_ratio < 1.0;
    return r;
}

CurvatureSample sup_curvature(const FlowState& st) {
    const FlowSetup& S = *st.setup;
    const int p = S.cone.p;
    const int q = S.cone.q;
    const double s = st.s();
    CurvatureSample c;
    c.t = st.t;
    double outer = 0.0;
    {
        const auto& y = st.outer_y;
        const double h = std::log(y[1] / y[0]);
        const BaseCurve cone = BaseCurve::cone(p, q);
        // the tip chart owns z < 2 beta when present
        const double own = st.has_tip() ? 2.0 * S.config.beta * std::exp(-S.sigma_l() * s) : 0.0;
        for (std::size_t i = 1; i + 1 < y.size(); ++i) {
            if (y[i] < own) continue;
            const GraphJet j = outer_jet_y(st.outer_v, i, h, y[i]);
            outer = std::max(outer, second_fundamental_norm2_jet(cone.at(y[i]), j, p, q));
        }
        outer = std::exp(0.5 * s) * std::sqrt(outer);
    }
    double tip = 0.0;
    std::size_t arg = 0;
    if (st.has_tip()) {
        const double h = S.tip_sigma[1] - S.tip_sigma[0];
        for (std::size_t j = 0; j + 1 < st.tip_w_hat.size(); ++j) {
            if (S.tip_radius[j] > 2.0 * S.config.beta) break;
            const double a2 = second_fundamental_norm2_jet(S.tip_geom[j], tip_jet(st.tip_w_hat, j, h), p, q);
            if (a2 > tip) {
                tip = a2;
                arg = j;
            }
        }
        tip = std::exp((0.5 + S.sigma_l()) * s) * std::sqrt(tip);
    }
    c.sup_A = std::max(outer, tip);
    c.in_tip = st.has_tip() && tip >= outer && S.tip_radius[arg] < 2.0 * S.config.beta - 1e-9;
    return c;
}

double tracking_residual(const FlowState& st, double kappa, double r, double R) {
    const FlowSetup& S = *st.setup;
    const EigenMode& m = S.mode_l();
    const double s = st.s();
    const double g = std::exp(m.lambda * s) / S.omega1;
    double worst = 0.0;
    double scale = 0.0;
    const int K = 64;
    for (int k = 0; k < K; ++k) {
        const double y = r * std::pow(R / r, static_cast<double>(k) / (K - 1));
        const double lead = m.raw(y);
        worst = std::max(worst, std::fabs(g * outer_value(st, y) - kappa * lead));
        scale = std::max(scale, std::fabs(lead));
    }
    return worst / scale;
}

// ================================================================ barriers

nlohmann::json OuterBarrierReport::to_json() const {
    return nlohmann::json{{"C0_plus", C0_plus},
                          {"C0_minus", C0_minus},
                          {"C_plus", C_plus},
                          {"C_minus", C_minus},
                          {"M_l", M_l},
                          {"points", points},
                          {"violations", violations},
                          {"sign_violations", sign_violations},
                          {"min_upper_gap", min_upper_gap},
                          {"min_lower_gap", min_lower_gap},
                          {"min_super_margin", min_super_margin}};
}

double outer_barrier_defect(const FlowSetup& S, double C0, double C, double t, double x) {
    const double lam = S.mode_l().lambda;
    const double m = 2.0 * lam + 1.0;
    const double w1 = S.omega1;
    const double at = std::fabs(t);
    GraphJet j;
    j.u = C0 * (std::pow(x, m) - C * at * std::pow(x, m - 2.0)) * w1;
    j.du = C0 * (m * std::pow(x, m - 1.0) - C * at * (m - 2.0) * std::pow(x, m - 3.0)) * w1;
    j.d2u = C0 * (m * (m - 1.0) * std::pow(x, m - 2.0) - C * at * (m - 2.0) * (m - 3.0) * std::pow(x, m - 4.0)) * w1;
    const double ut = C0 * C * std::pow(x, m - 2.0) * w1;
    const BaseGeometry b = BaseCurve::cone(S.cone.p, S.cone.q).at(x);
    // (d_t - L) u - E(u) = u_t + H/V
    return ut - normal_speed(b, j, S.cone.p, S.cone.q);
}

OuterBarrierReport verify_outer_barriers(const FlowState& st) {
    const FlowSetup& S = *st.setup;
    const EigenMode& ml = S.mode_l();
    const double lam = ml.lambda;
    const double m = 2.0 * lam + 1.0;
    const int n = S.cone.n;
    OuterBarrierReport r;
    r.M_l = m * (2.0 * lam + n - 1.0) - S.cone.mu1();
    const double K = top_coefficient(ml);
    const double Cp = S.config.barrier_spread;
    if (K > 0.0) {
        r.C0_plus = (1.0 + Cp) * st.kappa * K;
        r.C0_minus = (1.0 - Cp) * st.kappa * K;
        r.C_plus = 2.0 * r.M_l;
        r.C_minus = 0.0;
    } else {
        r.C0_plus = (1.0 - Cp) * st.kappa * K;
        r.C0_minus = (1.0 + Cp) * st.kappa * K;
        r.C_plus = 0.0;
        r.C_minus = 2.0 * r.M_l;
    }
    const double s = st.s();
    const double t = st.t;
    const double w1 = S.omega1;
    const double y_lo = 2.0 * S.config.barrier_R;
    const double y_hi = S.config.rho * std::exp(0.5 * s);
    r.min_upper_gap = r.min_lower_gap = r.min_super_margin = std::numeric_limits<double>::infinity();
    const double decay = std::exp(-lam * s);
    for (std::size_t i = 0; i < st.outer_y.size(); ++i) {
        const double y = st.outer_y[i];
        if (y < y_lo || y > y_hi * (1.0 + 1e-12)) continue;
        ++r.points;
        const double vp = decay * r.C0_plus * (std::pow(y, m) - r.C_plus * std::pow(y, m - 2.0)) * w1;
        const double vm = decay * r.C0_minus * (std::pow(y, m) - r.C_minus * std::pow(y, m - 2.0)) * w1;
        const double v = st.outer_v[i];
        const double gu = (vp - v) / std::fabs(vp);
        const double gl = (v - vm) / std::fabs(vm);
        r.min_upper_gap = std::min(r.min_upper_gap, gu);
        r.min_lower_gap = std::min(r.min_lower_gap, gl);
        if (gu < 0.0 || gl < 0.0) ++r.violations;
        const double x = std::exp(-0.5 * s) * y;
        const double norm = std::fabs(r.C0_plus) * std::max(r.C_plus, r.M_l) * std::pow(x, m - 2.0) * w1;
        const double dp = outer_barrier_defect(S, r.C0_plus, r.C_plus, t, x);
        const double dm = outer_barrier_defect(S, r.C0_minus, r.C_minus, t, x);
        r.min_super_margin = std::min(r.min_super_margin, dp / norm);
        if (dp < 0.0 || dm > 0.0) ++r.sign_violations;
    }
    if (r.points == 0) r.min_upper_gap = r.min_lower_gap = r.min_super_margin = 0.0;
    return r;
}

TipSchedule tip_schedule(const FlowSetup& S, double tau) {
    const ParamBundle& P = S.params;
    TipSchedule sc;
    sc.tau0 = tau_of_s(S.config.s0, P.sigma_l);
    sc.tau = tau;
    const double decay = std::pow(tau / sc.tau0, -P.varrho);
    const double amp = std::pow(P.beta, -P.alpha_tilde / 4.0);
    const double base = std::pow(2.0 * P.sigma_l * tau, -1.0 + P.varrho) * decay;
    sc.lambda_minus = 1.0 - amp * decay;
    sc.lambda_plus = 1.0 + amp * decay;
    sc.d0 = S.config.tip_C_factor * P.beta * base;
    sc.d1 = S.config.tip_delta * amp * base;
    sc.radius = std::pow(2.0 * P.sigma_l * tau, 0.5 * (1.0 - P.theta));
    return sc;
}

nlohmann::json TipBarrierReport::to_json() const {
    return nlohmann::json{{"tau", schedule.tau},
                          {"tau0", schedule.tau0},
                          {"lambda_minus", schedule.lambda_minus},
                          {"lambda_plus", schedule.lambda_plus},
                          {"d0", schedule.d0},
                          {"d1", schedule.d1},
                          {"radius", schedule.radius},
                          {"points", points},
                          {"violations", violations},
                          {"min_lower_gap", min_lower_gap},
                          {"min_upper_gap", min_upper_gap}};
}

double scaled_leaf_offset(const BaseCurve& base, double sigma, double scale) {
    const FoliationLeaf* leaf = base.leaf_ptr();
    if (!leaf) throw DomainError("scaled_leaf_offset: leaf base required");
    const ProfileSample x = profile_at(leaf->curve, sigma);
    const double Tx = std::cos(x.phi), Ty = std::sin(x.phi);
    const double Nx = std::sin(x.phi), Ny = -std::cos(x.phi);
    double sp = sigma / scale;
    for (int it = 0; it < 50; ++it) {
        const ProfileSample y = profile_at(leaf->curve, sp);
        const double g = (scale * y.s - x.s) * Tx + (scale * y.t - x.t) * Ty;
        const double d = scale * (std::cos(y.phi) * Tx + std::sin(y.phi) * Ty);
        const double ds = -g / d;
        sp = std::max(0.0, sp + ds);
        if (std::fabs(ds) < 1e-14 * std::max(1.0, sp)) break;
    }
    const ProfileSample y = profile_at(leaf->curve, sp);
    return (scale * y.s - x.s) * Nx + (scale * y.t - x.t) * Ny;
}

TipBarrierReport tip_barrier_margins(const FlowState& st, const TipSchedule& sc) {
    const FlowSetup& S = *st.setup;
    if (!st.has_tip()) throw DomainError("tip_barrier_margins: state has no tip chart");
    TipBarrierReport r;
    r.schedule = sc;
    const double ex = 1.0 / (1.0 - S.spectrum.alpha);
    const TipEigen eig = tip_dirichlet_eigen(*S.tip_leaf, sc.radius);
    r.min_lower_gap = r.min_upper_gap = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < st.tip_w_hat.size(); ++j) {
        if (S.tip_radius[j] >= sc.radius) break;
        const double sig = S.tip_sigma[j];
        auto it = std::upper_bound(eig.sigma.begin(), eig.sigma.end(), sig);
        double phi1 = 0.0;
        if (it != eig.sigma.end() && it != eig.sigma.begin()) {
            const std::size_t k = static_cast<std::size_t>(it - eig.sigma.begin());
            const double u = (sig - eig.sigma[k - 1]) / (eig.sigma[k] - eig.sigma[k - 1]);
            phi1 = (1.0 - u) * eig.phi1[k - 1] + u * eig.phi1[k];
        }
        const double wm = scaled_leaf_offset(S.tip_base, sig, std::pow(sc.lambda_minus, ex));
        const double wp = scaled_leaf_offset(S.tip_base, sig, std::pow(sc.lambda_plus, ex)) + sc.d0 * phi1 -
                          sc.d1 * S.tip_radius[j];
        const double w = st.tip_w_hat[j];
        ++r.points;
        r.min_lower_gap = std::min(r.min_lower_gap, w - wm);
        r.min_upper_gap = std::min(r.min_upper_gap, wp - w);
        if (w < wm || w > wp) ++r.violations;
    }
    return r;
}

TipBarrierReport verify_tip_barriers(const FlowState& st) {
    const TipSchedule sc = tip_schedule(*st.setup, st.tau());
    if (!(sc.lambda_minus > 0.99 && sc.lambda_minus < 1.0))
        throw ConfigError("verify_tip_barriers: schedule violates lambda_- in (99/100, 1) (lambda_- = " +
                          std::to_string(sc.lambda_minus) + ")");
    if (!(sc.d0 >= 0.0 && sc.d1 >= 0.0)) throw ConfigError("verify_tip_barriers: d_0, d_1 must be >= 0");
    return tip_barrier_margins(st, sc);
}

// ================================================================ blow-up

double log_slope(const std::vector<double>& x, const std::vector<double>& values) {
    if (x.size() != values.size() || x.size() < 2) throw DomainError("log_slope: need >= 2 matching samples");
    double mx = 0.0, my = 0.0;
    const double N = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(values[i] > 0.0)) throw DomainError("log_slope: values must be positive");
        mx += x[i];
        my += std::log(values[i]);
    }
    mx /= N;
    my /= N;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (std::log(values[i]) - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (!(sxx > 0.0)) throw DomainError("log_slope: degenerate abscissae");
    return sxy / sxx;
}

double blowup_exponent(const std::vector<CurvatureSample>& h) {
    if (h.size() < 2) throw DomainError("blowup_exponent: need >= 2 samples");
    double tmin = std::fabs(h.front().t), tmax = tmin;
    std::vector<double> x, v;
    for (const auto& c : h) {
        if (!c.in_tip)
            throw DomainError("blowup_exponent: curvature maximum not inside a tip chart, no blow-up to fit");
        tmin = std::min(tmin, std::fabs(c.t));
        tmax = std::max(tmax, std::fabs(c.t));
        x.push_back(std::log(std::fabs(c.t)));
        v.push_back(c.sup_A);
    }
    if (std::log10(tmax / tmin) < 1.5) throw DomainError("blowup_exponent: fewer than 1.5 decades of |t|");
    return log_slope(x, v);
}

double blowup_exponent(const std::vector<FlowState>& history) {
    std::vector<CurvatureSample> h;
    for (const auto& s : history) h.push_back(sup_curvature(s));
    return blowup_exponent(h);
}

// ================================================================ driver

namespace {

SnapshotRow make_row(const FlowState& st, bool diagnostics) {
    const FlowSetup& S = *st.setup;
    SnapshotRow r;
    r.s = st.s();
    r.t = st.t;
    r.tau = st.tau();
    r.kappa = st.kappa;
    r.Phi = mode_projection_map(st);
    if (!diagnostics) return r;
    const CurvatureSample c = sup_curvature(st);
    r.sup_A = c.sup_A;
    r.sup_in_tip = c.in_tip;
    for (std::size_t j = 0; j < st.tip_w_hat.size(); ++j)
        if (S.tip_radius[j] <= 2.0 * S.config.beta) r.tip_sup_w = std::max(r.tip_sup_w, std::fabs(st.tip_w_hat[j]));
    r.overlap = st.overlap_mismatch;
    r.adm_ratio = check_admissibility(st).worst_ratio;
    const TipSchedule sc = tip_schedule(S, r.tau);
    r.lambda_minus = sc.lambda_minus;
    try {
        r.tip_violations = verify_tip_barriers(st).violations;
    } catch (const ConfigError&) {
        r.tip_violations = -1;
    }
    r.v_track_raw = tracking_residual(st, 1.0, S.config.track_r, S.config.track_R);
    return r;
}

}  // namespace

FlowRun simulate(std::shared_ptr<const FlowSetup> setup, const std::vector<double>& a, double s_end,
                 bool keep_snapshots, bool diagnostics) {
    const FlowSetup& S = *setup;
    FlowRun run;
    FlowState st = build_initial_state(setup, a);
    const double s0 = S.config.s0;
    const long per = std::max(1L, std::lround(S.config.regrid_interval / S.config.dt));
    const double dt = S.config.regrid_interval / static_cast<double>(per);
    const long total = std::lround((s_end - s0) / dt);
    // barriers and tracking use the kappa measured at the final snapshot
    const bool hold = keep_snapshots || diagnostics;
    run.rows.push_back(make_row(st, diagnostics));
    if (hold) run.snapshots.push_back(st);
    for (long k = 1; k <= total; ++k) {
        FlowState next = step(st, dt);
        // pin the clock to the nominal grid to keep runs reproducible
        next.t = t_of_s(s0 + dt * static_cast<double>(k));
        st = std::move(next);
        ++run.steps;
        if (diagnostics) {
            const AdmissibilityReport adm = check_admissibility(st);
            if (!adm.ok) {
                run.admissible = false;
                throw AdmissibilityError("simulate: admissibility monitor fired at s = " + std::to_string(st.s()) +
                                         ", y = " + std::to_string(adm.worst_y) + " (order " +
                                         std::to_string(adm.worst_order) + ")");
            }
        }
        if (k % per == 0 || k == total) {
            st.kappa = measure_kappa(st);
            run.rows.push_back(make_row(st, diagnostics));
            if (hold) run.snapshots.push_back(st);
        }
    }
    run.final_state = st;
    if (diagnostics) {
        const double kf = st.kappa;
        for (std::size_t i = 0; i < run.snapshots.size(); ++i) {
            FlowState x = run.snapshots[i];
            x.kappa = kf;
            const OuterBarrierReport ob = verify_outer_barriers(x);
            run.rows[i].outer_violations = ob.violations + ob.sign_violations;
            run.rows[i].outer_super_margin = ob.min_super_margin;
            run.tracking.push_back(tracking_residual(x, kf, S.config.track_r, S.config.track_R));
        }
    }
    if (!keep_snapshots) run.snapshots.clear();
    return run;
}

std::vector<double> evaluate_Phi(std::shared_ptr<const FlowSetup> setup, const std::vector<double>& a,
                                 double s_end) {
    const FlowRun r = simulate(std::move(setup), a, s_end, false, false);
    return mode_projection_map(r.final_state);
}

nlohmann::json TuningRecord::to_json() const {
    return nlohmann::json{{"a", a},
                          {"target_time", target_time},
                          {"residual", residual},
                          {"iterations", iterations},
                          {"evaluations", evaluations},
                          {"converged", converged}};
}

TuningRecord tune_map(const std::function<std::vector<double>(const std::vector<double>&)>& Phi,
                      std::vector<double> a, double radius, double fd_step, double tol, int max_iter,
                      int workers) {
    TuningRecord rec;
    const std::size_t d = a.size();
    auto norm = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };
    auto check_ball = [&](const std::vector<double>& x) {
        if (!(norm(x) < radius))
            throw AdmissibilityError("tune: iterate left the tuning ball of radius " + std::to_string(radius));
    };
    if (d == 0) {
        rec.a = a;
        rec.converged = true;
        return rec;
    }
    check_ball(a);
    std::vector<double> F = Phi(a);
    ++rec.evaluations;
    double fn = norm(F);
    for (int it = 0; it < max_iter && fn > tol; ++it) {
        ++rec.iterations;
        // forward-difference Jacobian, columns in parallel
        std::vector<std::vector<double>> cols(d);
        {
            std::vector<std::future<std::vector<double>>> jobs;
            std::size_t next = 0;
            while (next < d) {
                const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), d - next);
                for (std::size_t k = 0; k < batch; ++k) {
                    std::vector<double> ap = a;
                    ap[next + k] += fd_step;
                    jobs.push_back(std::async(std::launch::async, [&Phi, ap] { return Phi(ap); }));
                }
                for (std::size_t k = 0; k < batch; ++k) cols[next + k] = jobs[next + k].get();
                next += batch;
            }
            rec.evaluations += static_cast<int>(d);
        }
        // solve J da = -F by Gaussian elimination with partial pivoting
        std::vector<std::vector<double>> J(d, std::vector<double>(d + 1));
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t c = 0; c < d; ++c) J[r][c] = (cols[c][r] - F[r]) / fd_step;
            J[r][d] = -F[r];
        }
        for (std::size_t c = 0; c < d; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < d; ++r)
                if (std::fabs(J[r][c]) > std::fabs(J[piv][c])) piv = r;
            std::swap(J[c], J[piv]);
            if (!(std::fabs(J[c][c]) > 0.0)) throw NumericalError("tune: singular Jacobian");
            for (std::size_t r = 0; r < d; ++r) {
                if (r == c) continue;
                const double m = J[r][c] / J[c][c];
                for (std::size_t k = c; k <= d; ++k) J[r][k] -= m * J[c][k];
            }
        }
        std::vector<double> da(d);
        for (std::size_t c = 0; c < d; ++c) da[c] = J[c][d] / J[c][c];
        // damping: halve the step while the residual grows
        double lam = 1.0;
        bool accepted = false;
        for (int h = 0; h < 30; ++h) {
            std::vector<double> an(d);
            for (std::size_t k = 0; k < d; ++k) an[k] = a[k] + lam * da[k];
            check_ball(an);
            std::vector<double> Fn;
            bool ok = true;
            try {
                Fn = Phi(an);
            } catch (const AdmissibilityError&) {
                ok = false;
            } catch (const NumericalError&) {
                ok = false;
            }
            ++rec.evaluations;
            if (ok && norm(Fn) < fn) {
                a = an;
                F = Fn;
                fn = norm(Fn);
                accepted = true;
                break;
            }
            lam *= 0.5;
        }
        if (!accepted) break;
    }
    rec.a = a;
    rec.residual = F;
    rec.converged = fn <= tol;
    return rec;
}

TuningRecord tune(double target_s, std::shared_ptr<const FlowSetup> setup, int workers) {
    const FlowSetup& S = *setup;
    const double s0 = S.config.s0;
    if (!(target_s > s0)) throw DomainError("tune: target time must exceed s0");
    const double radius = tuning_radius(S);
    // fastest relative growth among the tuned directions
    double growth = 0.0;
    for (const EigenMode& m : S.unstable) growth = std::max(growth, S.mode_l().lambda - m.lambda);
    std::vector<double> a(S.unstable.size(), 0.0);
    if (!S.config.a.empty()) a = S.config.a;
    // continuation targets: steps of 1/2 over the first two units, then 1
    std::vector<double> targets;
    for (double T = s0;;) {
        T = std::min(target_s, T + (T < s0 + 2.0 - 1e-12 ? 0.5 : 1.0));
        targets.push_back(T);
        if (T >= target_s) break;
    }
    TuningRecord rec;
    int evals = 0;
    for (double T : targets) {
        // the difference step shrinks with the amplification of Phi
        const double fd = 1e-4 * std::pow(S.config.beta, -S.params.alpha_tilde) * std::exp(-0.5 * growth * (T - s0));
        auto Phi = [&setup, T](const std::vector<double>& x) { return evaluate_Phi(setup, x, T); };
        rec = tune_map(Phi, a, radius, fd, 1e-6, 30, workers);
        evals += rec.evaluations;
        a = rec.a;
    }
    rec.target_time = target_s;
    rec.evaluations = evals;
    return rec;
}

std::string rows_csv(const FlowRun& run) {
    std::ostringstream os;
    const std::size_t d = run.rows.empty() ? 0 : run.rows.front().Phi.size();
    os << "s,t,tau,sup_A,sup_in_tip,kappa";
    for (std::size_t k = 0; k < d; ++k) os << ",Phi" << k;
    os << ",tip_sup_w,overlap,adm_ratio,outer_violations,outer_super_margin,tip_violations,lambda_minus,"
          "v_track_raw,track_residual\n";
    for (std::size_t i = 0; i < run.rows.size(); ++i) {
        const SnapshotRow& r = run.rows[i];
        os << fmt(r.s) << ',' << fmt(r.t) << ',' << fmt(r.tau) << ',' << fmt(r.sup_A) << ','
           << (r.sup_in_tip ? 1 : 0) << ',' << fmt(r.kappa);
        for (double x : r.Phi) os << ',' << fmt(x);
        os << ',' << fmt(r.tip_sup_w) << ',' << fmt(r.overlap) << ',' << fmt(r.adm_ratio) << ','
           << r.outer_violations << ',' << fmt(r.outer_super_margin) << ',' << r.tip_violations << ','
           << fmt(r.lambda_minus) << ',' << fmt(r.v_track_raw) << ','
           << (i < run.tracking.size() ? fmt(run.tracking[i]) : std::string("nan")) << '\n';
    }
    return os.str();
}

}  // namespace mcflab
