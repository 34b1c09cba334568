#include "mcflab/foliation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <boost/numeric/odeint.hpp>

#include "mcflab/errors.hpp"
#include "mcflab/spectrum.hpp"

namespace mcflab {

namespace {

using State = std::array<double, 3>;

constexpr double kPi = 3.14159265358979323846;

// near the axis the two terms of phi' cancel; use the regular limit
bool near_axis(double s, double t) { return t < 1e-7 * s; }

double axis_curvature(int p, int q, double s) { return -p / ((q + 1.0) * s); }

struct ProfileRhs {
    int p;
    int q;
    void operator()(const State& x, State& dx, double) const {
        dx[0] = std::cos(x[2]);
        dx[1] = std::sin(x[2]);
        dx[2] = profile_curvature(p, q, x[0], x[1], x[2]);
    }
};

double radius_of(const ProfileSample& a) { return std::hypot(a.s, a.t); }

// Drives the adaptive stepper across [sigma0, ...) in chunks of `step`,
// recording a sample at each chunk end.
void march(int p, int q, State x, double sigma0, double step, double r_max, bool check_cone,
           ProfileCurve& out) {
    namespace odeint = boost::numeric::odeint;
    auto stepper = odeint::make_controlled<odeint::runge_kutta_cash_karp54<State>>(1e-13, 1e-13);
    const ProfileRhs rhs{p, q};
    const auto [nx, ny] = std::pair{std::sin(cone_angle(p, q)), -std::cos(cone_angle(p, q))};
    double sigma = sigma0;
    double dt = std::min(step, 1e-3);
    std::size_t k = out.samples.size();
    const std::size_t cap = 50000000;
    while (true) {
        const double target = step * static_cast<double>(k);
        if (target > sigma) {
            try {
                odeint::integrate_adaptive(stepper, rhs, x, sigma, target, std::min(dt, target - sigma));
            } catch (const std::exception& e) {
                throw NumericalError(std::string("shoot_leaf: integrator failure: ") + e.what());
            }
            sigma = target;
        }
        if (!std::isfinite(x[0]) || !std::isfinite(x[1]) || !std::isfinite(x[2]))
            throw NumericalError("shoot_leaf: non-finite state");
        if (x[1] < 0.0) throw NumericalError("shoot_leaf: curve returned to the axis");
        if (check_cone && x[0] * nx + x[1] * ny < 0.0)
            throw NumericalError("shoot_leaf: shooting failure, curve crossed the cone");
        out.samples.push_back({x[0], x[1], x[2]});
        ++k;
        if (std::hypot(x[0], x[1]) >= r_max) break;
        if (k > cap) throw NumericalError("shoot_leaf: sample cap exceeded");
    }
}

std::vector<double> log_grid(double lo, double hi, int count) {
    std::vector<double> g(count);
    for (int i = 0; i < count; ++i)
        g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1));
    return g;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// (r, psi) over the graph region with strictly increasing r.
std::pair<std::vector<double>, std::vector<double>> graph_arrays(const ProfileCurve& c,
                                                                 std::size_t start) {
    std::vector<double> r;
    std::vector<double> psi;
    for (std::size_t k = start; k < c.samples.size(); ++k) {
        const auto [rk, pk] = cone_coordinates(c.p, c.q, c.samples[k].s, c.samples[k].t);
        if (!r.empty() && !(rk > r.back())) continue;
        r.push_back(rk);
        psi.push_back(pk);
    }
    return {r, psi};
}

void attach_interpolants(FoliationLeaf& leaf) {
    const ProfileCurve& c = leaf.curve;
    std::vector<double> r;
    std::vector<double> psi;
    std::vector<double> sig;
    for (std::size_t k = leaf.graph_start; k < c.samples.size(); ++k) {
        const auto [rk, pk] = cone_coordinates(c.p, c.q, c.samples[k].s, c.samples[k].t);
        if (!r.empty() && !(rk > r.back())) continue;
        r.push_back(rk);
        psi.push_back(pk);
        sig.push_back(c.arclength(k));
    }
    leaf.psi_interp = MonotoneCubic(r, std::move(psi));
    leaf.sigma_interp = MonotoneCubic(std::move(r), std::move(sig));
}

}  // namespace

double profile_curvature(int p, int q, double s, double t, double phi) {
    if (near_axis(s, t)) return axis_curvature(p, q, s);
    return q * std::cos(phi) / t - p * std::sin(phi) / s;
}

double profile_curvature_deriv(int p, int q, double s, double t, double phi) {
    if (near_axis(s, t)) return 0.0;
    const double k = profile_curvature(p, q, s, t, phi);
    const double sp = std::sin(phi);
    const double cp = std::cos(phi);
    return -q * sp * k / t - q * cp * sp / (t * t) - p * cp * k / s + p * sp * cp / (s * s);
}

double cone_angle(int p, int q) { return std::atan(std::sqrt(static_cast<double>(q) / p)); }

std::pair<double, double> cone_coordinates(int p, int q, double s, double t) {
    const double th = cone_angle(p, q);
    return {s * std::cos(th) + t * std::sin(th), s * std::sin(th) - t * std::cos(th)};
}

double curve_length(const ProfileCurve& curve) {
    return curve.samples.empty() ? 0.0 : curve.arclength(curve.samples.size() - 1);
}

ProfileSample profile_at(const ProfileCurve& c, double sigma) {
    if (c.samples.empty()) throw DomainError("profile_at: empty curve");
    const double h = c.arclength_step;
    const double L = curve_length(c);
    sigma = std::clamp(sigma, 0.0, L);
    std::size_t k = static_cast<std::size_t>(sigma / h);
    if (k >= c.samples.size() - 1) return c.samples.back();
    const ProfileSample& a = c.samples[k];
    const ProfileSample& b = c.samples[k + 1];
    const double u = (sigma - h * static_cast<double>(k)) / h;
    const double h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
    const double h10 = u * (1.0 - u) * (1.0 - u);
    const double h01 = u * u * (3.0 - 2.0 * u);
    const double h11 = u * u * (u - 1.0);
    const double ka = profile_curvature(c.p, c.q, a.s, a.t, a.phi);
    const double kb = profile_curvature(c.p, c.q, b.s, b.t, b.phi);
    ProfileSample r;
    r.s = h00 * a.s + h10 * h * std::cos(a.phi) + h01 * b.s + h11 * h * std::cos(b.phi);
    r.t = h00 * a.t + h10 * h * std::sin(a.phi) + h01 * b.t + h11 * h * std::sin(b.phi);
    r.phi = h00 * a.phi + h10 * h * ka + h01 * b.phi + h11 * h * kb;
    return r;
}

ProfileCurve integrate_profile(int p, int q, ProfileSample start, double step, double r_max) {
    if (p < 1 || q < 1) throw DomainError("integrate_profile: p, q >= 1");
    if (!(step > 0.0)) throw DomainError("integrate_profile: step must be positive");
    if (!(start.t > 0.0 && start.s > 0.0)) throw DomainError("integrate_profile: start off the axes");
    ProfileCurve c;
    c.p = p;
    c.q = q;
    c.arclength_step = step;
    c.samples.push_back(start);
    march(p, q, {start.s, start.t, start.phi}, 0.0, step, r_max, false, c);
    return c;
}

ProfileCurve shoot_leaf(int p, int q, double s0, double step, double r_max) {
    if (p < 2 || q < 2) throw DomainError("shoot_leaf: p, q >= 2");
    if (!(s0 > 0.0)) throw DomainError("shoot_leaf: s0 must be positive");
    if (!(step > 0.0) || !(r_max > 2.0 * s0)) throw DomainError("shoot_leaf: need step > 0, r_max >> s0");
    ProfileCurve c;
    c.p = p;
    c.q = q;
    c.arclength_step = step;
    c.samples.push_back({s0, 0.0, kPi / 2.0});
    // regular orthogonal crossing: phi - pi/2 is odd in sigma
    const double k0 = axis_curvature(p, q, s0);
    const double d = std::min(step, s0) * 1e-3;
    const State x{s0 - 0.5 * k0 * d * d, d - k0 * k0 * d * d * d / 6.0, kPi / 2.0 + k0 * d};
    march(p, q, x, d, step, r_max, true, c);
    return c;
}

std::size_t graph_region_start(const ProfileCurve& curve) {
    const double th = cone_angle(curve.p, curve.q);
    const double tol = 5.0 * kPi / 180.0;
    for (std::size_t k = 0; k < curve.samples.size(); ++k)
        if (std::fabs(curve.samples[k].phi - th) < tol) return k;
    throw NumericalError("graph_region_start: tangent never within 5 degrees of the cone");
}

AsymptoticFit fit_asymptotics(const ProfileCurve& curve, const ConeSpec& cone) {
    if (curve.samples.size() < 30) throw DomainError("fit_asymptotics: fewer than 30 samples");
    double maxabs = 0.0;
    for (const auto& x : curve.samples)
        maxabs = std::max(maxabs, std::fabs(cone_coordinates(curve.p, curve.q, x.s, x.t).second));
    if (maxabs == 0.0) throw DomainError("fit_asymptotics: degenerate zero distance");
    const std::size_t start = graph_region_start(curve);
    auto [r, psi] = graph_arrays(curve, start);
    AsymptoticFit f;
    f.r_hi = r.back();
    f.r_lo = f.r_hi / 10.0;
    int usable = 0;
    for (std::size_t k = 0; k < r.size(); ++k)
        if (r[k] >= f.r_lo && psi[k] > 0.0) ++usable;
    f.samples = usable;
    if (usable < 30) throw DomainError("fit_asymptotics: fewer than 30 usable samples in the fit window");
    for (double v : psi)
        if (!(v > 0.0)) throw DomainError("fit_asymptotics: psi not positive in the graph region");
    const MonotoneCubic lpsi(r, psi);

    const auto g1 = log_grid(f.r_lo, f.r_hi, 200);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double x : g1) {
        const double lx = std::log(x);
        const double ly = std::log(lpsi(x));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double N = static_cast<double>(g1.size());
    f.alpha = (N * sxy - sx * sy) / (N * sxx - sx * sx);

    const double a1 = alpha_plus(cone.mu1(), cone.n);
    auto g = [&](double x) { return lpsi(x) * std::pow(x, -a1); };
    std::vector<double> rates;
    std::vector<double> cs;
    const auto g2 = log_grid(f.r_lo, f.r_hi / 4.0, 60);
    for (double x : g2) {
        const double d1 = g(x) - g(2.0 * x);
        const double d2 = g(2.0 * x) - g(4.0 * x);
        if (d1 / d2 > 0.0) rates.push_back(std::log2(d1 / d2));
    }
    if (rates.size() < 10) throw NumericalError("fit_asymptotics: correction term not resolved");
    f.alpha_tilde = median(rates);
    const double shrink = 1.0 - std::pow(2.0, -f.alpha_tilde);
    for (double x : g2) cs.push_back(g(x) - (g(x) - g(2.0 * x)) / shrink);
    f.c = median(cs);
    return f;
}

double FoliationLeaf::sigma_at(double r) const {
    if (r < R_s || r > r_max()) throw DomainError("sigma_at: radius outside the graph region");
    const double th = cone_angle(curve.p, curve.q);
    double sig = sigma_interp(r);
    for (int it = 0; it < 4; ++it) {
        const ProfileSample x = profile_at(curve, sig);
        const double rr = x.s * std::cos(th) + x.t * std::sin(th);
        sig -= (rr - r) / std::cos(x.phi - th);
    }
    return sig;
}

double FoliationLeaf::psi_at(double r) const {
    if (r < R_s) throw DomainError("psi_at: radius inside the tip region");
    const ProfileSample x = profile_at(curve, sigma_at(r));
    return cone_coordinates(curve.p, curve.q, x.s, x.t).second;
}

double FoliationLeaf::r_max() const { return psi_interp.hi(); }

nlohmann::json FoliationLeaf::fit_json() const {
    return nlohmann::json{{"p", curve.p},
                          {"q", curve.q},
                          {"kappa", kappa},
                          {"c", fit_c},
                          {"alpha_fit", fit_alpha},
                          {"alpha_tilde_fit", fit_alpha_tilde},
                          {"alpha_cone", cone_alpha},
                          {"R_s", R_s},
                          {"s0", curve.samples.front().s},
                          {"arclength_step", curve.arclength_step},
                          {"samples", curve.samples.size()}};
}

FoliationLeaf make_leaf(const ProfileCurve& curve, const ConeSpec& cone, double kappa) {
    FoliationLeaf leaf;
    leaf.curve = curve;
    leaf.kappa = kappa;
    const AsymptoticFit f = fit_asymptotics(curve, cone);
    leaf.fit_c = f.c;
    leaf.fit_alpha = f.alpha;
    leaf.fit_alpha_tilde = f.alpha_tilde;
    leaf.cone_alpha = alpha_plus(cone.mu1(), cone.n);
    leaf.graph_start = graph_region_start(curve);
    const auto& x = curve.samples[leaf.graph_start];
    leaf.R_s = cone_coordinates(curve.p, curve.q, x.s, x.t).first;
    attach_interpolants(leaf);
    return leaf;
}

FoliationLeaf rescale_leaf(const FoliationLeaf& leaf, double kappa) {
    if (!(kappa > 0.0)) throw DomainError("rescale_leaf: kappa must be positive");
    const double lam = std::pow(kappa, 1.0 / (1.0 - leaf.cone_alpha));
    FoliationLeaf out = leaf;
    out.kappa = leaf.kappa * kappa;
    out.fit_c = leaf.fit_c * kappa;
    out.R_s = leaf.R_s * lam;
    out.curve.arclength_step = leaf.curve.arclength_step * lam;
    for (auto& x : out.curve.samples) {
        x.s *= lam;
        x.t *= lam;
    }
    attach_interpolants(out);
    return out;
}

FoliationLeaf build_leaf(const ConeSpec& cone, double step, double r_max) {
    if (!cone.is_quadratic()) throw ConfigError("build_leaf: equivariant leaves need a quadratic cone");
    const ProfileCurve raw = shoot_leaf(cone.p, cone.q, 1.0, step, 1.2 * r_max);
    const FoliationLeaf shot = make_leaf(raw, cone, 1.0);
    // scale so that the leading coefficient is 1
    FoliationLeaf unit = rescale_leaf(shot, 1.0 / shot.fit_c);
    unit.kappa = 1.0;
    unit.fit_c = 1.0;
    return unit;
}

TipEigen tip_dirichlet_eigen(const FoliationLeaf& leaf, double radius, int nodes) {
    const ProfileCurve& c = leaf.curve;
    const double s0 = c.samples.front().s;
    if (!(radius >= 2.0 * s0)) throw DomainError("tip_dirichlet_eigen: radius must cover the tip");
    if (nodes < 20) throw DomainError("tip_dirichlet_eigen: too few nodes");
    std::size_t kR = 0;
    while (kR < c.samples.size() && radius_of(c.samples[kR]) < radius) ++kR;
    if (kR == c.samples.size()) throw DomainError("tip_dirichlet_eigen: radius beyond the leaf samples");
    // refine the boundary arclength linearly between samples
    const double ra = radius_of(c.samples[kR - 1]);
    const double rb = radius_of(c.samples[kR]);
    const double sigR = c.arclength(kR - 1) + c.arclength_step * (radius - ra) / (rb - ra);

    const int N = nodes;
    const double H = sigR / N;
    const int p = c.p;
    const int q = c.q;
    auto rho = [&](double sig) {
        const ProfileSample x = profile_at(c, sig);
        return std::pow(x.s, p) * std::pow(x.t, q);
    };
    auto A2 = [&](double sig) {
        const ProfileSample x = profile_at(c, sig);
        const double k = profile_curvature(p, q, x.s, x.t, x.phi);
        const double ns = std::sin(x.phi) / x.s;
        const double nt = near_axis(x.s, x.t) ? k : -std::cos(x.phi) / x.t;
        return k * k + p * ns * ns + q * nt * nt;
    };
    std::vector<double> mass(N), face(N), a2(N);
    for (int i = 0; i < N; ++i) {
        face[i] = rho((i + 0.5) * H);
        a2[i] = A2(i * H);
        if (i == 0) {
            // int_0^{H/2} rho by 3-point Gauss
            const double g[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
            const double w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
            double acc = 0.0;
            for (int m = 0; m < 3; ++m) acc += w[m] * rho(0.25 * H * (1.0 + g[m]));
            mass[0] = 0.25 * H * acc;
        } else {
            mass[i] = rho(i * H) * H;
        }
    }
    Eigen::VectorXd diag(N), sub(N - 1);
    for (int i = 0; i < N; ++i) {
        const double left = i > 0 ? face[i - 1] : 0.0;
        diag(i) = ((left + face[i]) / H - mass[i] * a2[i]) / mass[i];
        if (i + 1 < N) sub(i) = -face[i] / H / std::sqrt(mass[i] * mass[i + 1]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("tip_dirichlet_eigen: eigen-solver failed");
    const double lam = es.eigenvalues()(0);
    if (!(lam > 0.0))
        throw NumericalError("tip_dirichlet_eigen: lambda_1 <= 0 contradicts stability of the leaf");

    // inverse iteration for the eigenvector (Thomas algorithm)
    const double mu = lam - 1e-9 * (1.0 + std::fabs(lam));
    std::vector<double> x(N, 1.0);
    for (int it = 0; it < 4; ++it) {
        std::vector<double> cp(N), dp(N);
        for (int i = 0; i < N; ++i) {
            const double a = i > 0 ? sub(i - 1) : 0.0;
            const double b = diag(i) - mu;
            const double cc = i + 1 < N ? sub(i) : 0.0;
            const double den = b - (i > 0 ? a * cp[i - 1] : 0.0);
            cp[i] = cc / den;
            dp[i] = (x[i] - (i > 0 ? a * dp[i - 1] : 0.0)) / den;
        }
        for (int i = N - 1; i >= 0; --i) x[i] = dp[i] - (i + 1 < N ? cp[i] * x[i + 1] : 0.0);
        double nrm = 0.0;
        for (double v : x) nrm = std::max(nrm, std::fabs(v));
        for (double& v : x) v /= nrm;
    }
    TipEigen out;
    out.lambda = lam;
    double mx = 0.0;
    for (int i = 0; i < N; ++i) {
        out.sigma.push_back(i * H);
        out.phi1.push_back(x[i] / std::sqrt(mass[i]));
        if (std::fabs(out.phi1.back()) > std::fabs(mx)) mx = out.phi1.back();
    }
    out.sigma.push_back(sigR);
    out.phi1.push_back(0.0);
    for (double& v : out.phi1) v /= mx;
    for (int i = 0; i < N; ++i)
        if (!(out.phi1[i] > 0.0)) throw NumericalError("tip_dirichlet_eigen: first eigenfunction changes sign");
    return out;
}

double jacobi_field_positivity(const ProfileCurve& curve) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& x : curve.samples) m = std::min(m, x.s * std::sin(x.phi) - x.t * std::cos(x.phi));
    return m;
}

double min_radial_gap(const ProfileCurve& a, const ProfileCurve& b) {
    auto polar = [](const ProfileCurve& c) {
        std::vector<double> th;
        std::vector<double> R;
        for (const auto& x : c.samples) {
            const double t = std::atan2(x.t, x.s);
            if (!th.empty() && !(t > th.back())) {
                if (t < th.back() - 1e-12) throw NumericalError("min_radial_gap: leaf not a polar graph");
                continue;
            }
            th.push_back(t);
            R.push_back(std::hypot(x.s, x.t));
        }
        return MonotoneCubic(th, R);
    };
    const MonotoneCubic fa = polar(a);
    const MonotoneCubic fb = polar(b);
    const double lo = std::max(fa.lo(), fb.lo());
    const double hi = std::min(fa.hi(), fb.hi());
    if (!(hi > lo)) throw DomainError("min_radial_gap: no common angular range");
    double gap = std::numeric_limits<double>::infinity();
    const int M = 4000;
    for (int i = 0; i <= M; ++i) {
        const double th = lo + (hi - lo) * i / M;
        gap = std::min(gap, fb(th) - fa(th));
    }
    return gap;
}

}  // namespace mcflab
