// Acceptance checks: one PASS/FAIL line per criterion, details indented below.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mcflab/cone.hpp"
#include "mcflab/errors.hpp"
#include "mcflab/flowsim.hpp"
#include "mcflab/foliation.hpp"
#include "mcflab/graphgeo.hpp"
#include "mcflab/params.hpp"
#include "mcflab/rng.hpp"
#include "mcflab/specfun.hpp"
#include "mcflab/spectrum.hpp"
#include "mcflab/wspace.hpp"

using namespace mcflab;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> details;

    void require(bool ok, const std::string& what) {
        pass = pass && ok;
        details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
    void note(const std::string& what) { details.push_back("     " + what); }
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
    char buf[200];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

int run_criterion(int id, const std::string& name, double budget_s, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.require(false, std::string("unexpected exception: ") + e.what());
    }
    const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(el < budget_s, fmt("runtime %.2f s < %.0f s", el, budget_s));
    std::printf("%s %d %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str());
    for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
    std::fflush(stdout);
    return o.pass ? 0 : 1;
}

double linear_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double N = static_cast<double>(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        sxy += x[k] * y[k];
    }
    return (N * sxy - sx * sy) / (N * sxx - sx * sx);
}

// ---------------------------------------------------------------- 1

void spectral_closed_forms(Outcome& o) {
    const ConeSpec c = quadratic_cone(3, 3);
    const auto q = build_quadrature(7, 40);
    const double alpha = alpha_plus(c.mu1(), c.n);
    const double lam = build_mode(c, 2, 1, q).lambda;
    const auto sp = order_and_select(c, 3.0, q, SpectrumScope::equivariant);
    const double cl = derived_constants_unchecked(sp.alpha, c.n, sp.lambda_l, 0.1, 0.4).c_l;
    o.require(c.n == 7, "n = 7");
    o.require(std::fabs(alpha + 2.0) <= 1e-12, fmt("alpha = %.15g", alpha));
    o.require(std::fabs(lam - 0.5) <= 1e-12, fmt("lambda_{2,1} = %.15g", lam));
    o.require(std::fabs(sp.sigma_l - 1.0 / 6.0) <= 1e-12, fmt("sigma_l = %.15g", sp.sigma_l));
    o.require(std::fabs(cl - 2.0) <= 1e-12, fmt("c_l = %.15g", cl));
}

// ---------------------------------------------------------------- 2

void kummer_consistency(Outcome& o) {
    const ConeSpec c = quadratic_cone(3, 3);
    const auto q = build_quadrature(7, 40);
    int modes = 0;
    double worst_poly = 0.0;
    double worst_ode = 0.0;
    for (std::size_t j = 1; j <= c.link.mu.size(); ++j) {
        const double a = alpha_plus(c.link.mu[j - 1], c.n);
        for (int i = 0;; ++i) {
            const double lam = -0.5 * (1.0 - a) + i;
            if (lam > 5.0 + 1e-12) break;
            const EigenMode m = build_mode(c, i, static_cast<int>(j), q);
            const auto kp = KummerParams::make(-i, m.alpha + 0.5 * c.n);
            ++modes;
            for (double y = 1e-3; y <= 20.0 * (1.0 + 1e-12); y *= 1.05) {
                double mag = 1.0;
                for (int k = 1; k <= i; ++k) mag += m.K[k - 1] * std::pow(y, 2.0 * k);
                const double xi = 0.25 * y * y;
                worst_poly = std::max(worst_poly, std::fabs(kummer_m(kp, xi) - m.poly(y)) / mag);
                worst_ode = std::max(worst_ode, std::fabs(kummer_ode_residual(kp, xi, std::min(1e-4, xi / 8.0))));
            }
        }
    }
    o.note(fmt("%.0f modes with lambda <= 5, y in [1e-3, 20]", modes));
    o.require(modes > 0, "mode set nonempty");
    o.require(worst_poly <= 1e-13, fmt("terminating series vs K-polynomial: %.3g (relative to term magnitudes) <= 1e-13", worst_poly));
    o.require(worst_ode <= 1e-6, fmt("Kummer ODE residual %.3g <= 1e-6", worst_ode));
}

// ---------------------------------------------------------------- 3

void orthonormality(Outcome& o) {
    const ConeSpec c = quadratic_cone(3, 3);
    const auto q = build_quadrature(7, 80);
    std::vector<EigenMode> modes;
    for (int i = 0; i < 15; ++i) modes.push_back(build_mode(c, i, 1, q));
    double worst = 0.0;
    for (std::size_t a = 0; a < 15; ++a)
        for (std::size_t b = 0; b < 15; ++b)
            worst = std::max(worst, std::fabs(mode_inner_product(modes[a], modes[b], 80) - (a == b ? 1.0 : 0.0)));
    o.require(worst <= 1e-8, fmt("15x15 Gram matrix deviation %.3g <= 1e-8", worst));
    double mom = std::fabs(q.mass() / (std::pow(2.0, 6) * std::tgamma(3.5)) - 1.0);
    for (int k = 1; k < 40; ++k) {
        const double exact = std::exp(k * std::log(4.0) + std::lgamma(3.5 + k) - std::lgamma(3.5));
        const double got = q.integrate([k](double y) { return std::pow(y, 2.0 * k); }) / q.mass();
        mom = std::max(mom, std::fabs(got / exact - 1.0));
    }
    o.require(mom <= 1e-11, fmt("moments y^(2k), k < 40: relative error %.3g <= 1e-11", mom));
}

// ---------------------------------------------------------------- 4

void large_n(Outcome& o) {
    for (int n : {51, 101, 151, 201}) {
        const SimonsAsymptotics r = simons_asymptotics(n);
        const double n2 = static_cast<double>(n) * n;
        const double dev = std::fabs(r.alpha_exact - r.alpha_approx);
        o.require(dev <= 5.0 / n2, fmt("n = %.0f: |alpha - (-1 - 2/(n+1))| = %.3g n^-2 <= 5 n^-2", n, dev * n2));
        o.require(r.alpha_tilde_exact == 2.0 - 2.0 * r.alpha_exact, fmt("n = %.0f: alpha_tilde = 2 - 2 alpha", n));
        const ConeSpec c = quadratic_cone(r.p, r.q, 3.0);
        const auto sp = order_and_select(c, 3.0, build_quadrature(c.n, 30), SpectrumScope::equivariant);
        const auto s = admissible_intervals(n, sp.alpha, 2.0 - 2.0 * sp.alpha, sp.lambda_l, sp.delta_l);
        const double target = 1.0 / (n + 2.0);
        const bool near = !s.empty && s.theta.lo <= 1.1 * target && s.theta.hi > 1.1 * target;
        o.require(near, fmt("n = %.0f: theta interval (%.4g, %.4g) nonempty, reaching 1/(n+2) within 10%%", n,
                            s.theta.lo, s.theta.hi));
    }
    const ConeSpec c7 = quadratic_cone(3, 3, 3.0);
    const auto sp7 = order_and_select(c7, 3.0, build_quadrature(7, 30), SpectrumScope::equivariant);
    const auto ac = check_alpha_condition(7, -2.0, 6.0, sp7.lambda_l, sp7.delta_l);
    const double expect = -1.0 / 7.0 - 1.0 / 3.0;
    o.require(!ac.pass, "n = 7: alpha inequality fails");
    o.require(std::fabs(ac.margins[1] - expect) <= 1e-12,
              fmt("n = 7: margin on (n-4+2a)/(n+4+2a) = %.15g (expected %.15g)", ac.margins[1], expect));
}

// ---------------------------------------------------------------- 5

void foliation(Outcome& o) {
    const ConeSpec cone = quadratic_cone(3, 3);
    const FoliationLeaf leaf = build_leaf(cone, 1e-3, 1e3);
    o.require(std::fabs(leaf.fit_alpha + 2.0) <= 0.05, fmt("alpha_fit = %.5f, target -2 +- 0.05", leaf.fit_alpha));
    o.require(std::fabs(leaf.fit_alpha_tilde - 6.0) <= 0.9,
              fmt("alpha_tilde_fit = %.5f, target 6 +- 0.9", leaf.fit_alpha_tilde));
    const double th = cone_angle(3, 3);
    const ProfileCurve line = integrate_profile(3, 3, {std::cos(th), std::sin(th), th}, 1e-2, 100.0);
    double drift = 0.0;
    for (const auto& x : line.samples) drift = std::max(drift, std::fabs(x.phi - th));
    o.require(drift <= 1e-12, fmt("cone line drift %.3g <= 1e-12", drift));
    const ProfileCurve a = shoot_leaf(3, 3, 1.0, 1e-3, 200.0);
    const ProfileCurve b = shoot_leaf(3, 3, 1.5, 1e-3, 200.0);
    const ProfileCurve c = shoot_leaf(3, 3, 2.0, 1e-3, 200.0);
    const double g = std::min({min_radial_gap(a, b), min_radial_gap(b, c), min_radial_gap(a, c)});
    o.require(g > 0.0, fmt("three leaves pairwise disjoint, min radial gap %.3g", g));
}

// ---------------------------------------------------------------- 6

void graph_geometry(Outcome& o) {
    const auto leaf = std::make_shared<const FoliationLeaf>(build_leaf(quadratic_cone(3, 3), 1e-3, 200.0));
    auto H = [&](double h) {
        GraphChart ch{BaseCurve::cone(3, 3), {}, {}};
        for (double r = 3.0; r <= 12.0 + 1e-12; r += h) {
            ch.sigma.push_back(r);
            ch.u.push_back(leaf->psi_at(r));
        }
        double m = 0.0;
        for (std::size_t i = 1; i + 1 < ch.sigma.size(); ++i)
            if (ch.sigma[i] >= 4.0 - 1e-12 && ch.sigma[i] <= 10.0 + 1e-12)
                m = std::max(m, std::fabs(graph_mean_curvature(ch, i)));
        return m;
    };
    const double e1 = H(0.2), e2 = H(0.1), e3 = H(0.05);
    o.require(std::fabs(e1 / e2 / 4.0 - 1.0) <= 0.1 && std::fabs(e2 / e3 / 4.0 - 1.0) <= 0.1,
              fmt("leaf over cone: |H| ratios under halving %.3f, %.3f (target 4)", e1 / e2, e2 / e3));
    auto E = [](double eps, int p, int q) {
        const RadialFunction b = make_bump(3.0, 1.5);
        GraphChart ch{BaseCurve::cone(p, q), {}, {}};
        for (double r = 3.0 - 2.25; r <= 3.0 + 2.25; r += 0.01) {
            ch.sigma.push_back(r);
            ch.u.push_back(eps * b.eval(r));
        }
        double m = 0.0;
        for (std::size_t i = 1; i + 1 < ch.sigma.size(); ++i) m = std::max(m, std::fabs(error_term(ch, i)));
        return m;
    };
    std::vector<double> le, lE, lE33;
    for (double eps = 1e-4; eps <= 1.0001e-2; eps *= std::sqrt(10.0)) {
        le.push_back(std::log(eps));
        lE.push_back(std::log(E(eps, 3, 4)));
        lE33.push_back(std::log(E(eps, 3, 3)));
    }
    const double slope = linear_slope(le, lE);
    o.require(std::fabs(slope - 2.0) <= 0.05, fmt("E(eps u) log-log slope on C_{3,4}: %.4f (target 2 +- 0.05)", slope));
    o.note(fmt("on C_{3,3} E is odd in u; slope %.4f", linear_slope(le, lE33)));
}

// ---------------------------------------------------------------- 8

void coercivity_and_inequalities(Outcome& o) {
    const ConeSpec c = quadratic_cone(3, 3);
    const auto cert = coercivity_certificate(c, 20, 200, 42);
    o.require(cert.eps_tilde > 0.0, fmt("coercivity eps_tilde = %.4g > 0", cert.eps_tilde));

    const auto q = build_quadrature(7, 40);
    std::vector<EigenMode> modes;
    for (int i = 0; i < 10; ++i) modes.push_back(build_mode(c, i, 1, q));
    std::vector<double> grid;
    for (double y = 1e-3; y <= 10.0; y *= 1.1) grid.push_back(y);
    const double C = calibrate_morrey_constant(c, modes, grid);
    const MorreyGram gram = morrey_gram(c, modes);
    Rng rng(2024);
    int morrey_ok = 0;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> coeffs(modes.size());
        for (auto& x : coeffs) x = rng.uniform(-1.0, 1.0);
        bool ok = true;
        for (double y : grid) ok = ok && morrey_check(c, modes, gram, coeffs, y, C).holds;
        morrey_ok += ok;
    }
    o.require(morrey_ok == 100, fmt("Morrey bound holds for %.0f / 100 random functions", morrey_ok));

    int hardy_ok = 0;
    double worst = -1e300;
    for (int t = 0; t < 100; ++t) {
        const double center = std::pow(10.0, rng.uniform(-2.0, 1.0));
        const double d = hardy_defect(make_bump(center, center * rng.uniform(0.1, 0.95)), 7, q);
        worst = std::max(worst, d);
        hardy_ok += d <= hardy_constant(7);
    }
    o.require(hardy_ok == 100, fmt("Hardy bound holds for %.0f / 100 random bumps (worst %.4f <= %.4f)", hardy_ok,
                                   worst, hardy_constant(7)));

    const auto sp = order_and_select(c, 3.0, q, SpectrumScope::equivariant);
    const double target = (c.n + 2.0 * sp.alpha) * sp.sigma_l;
    std::vector<double> s;
    for (double x = 40.0; x <= 100.0; x += 5.0) s.push_back(x);
    const auto fit = cutoff_overlap_decay(sp.mode_l(), sp.mode_l(), 100.0, 0.01, sp.sigma_l, s);
    o.require(std::fabs(fit.exponent / target - 1.0) <= 0.1,
              fmt("cutoff-overlap decay exponent %.4f vs (n+2 alpha) sigma_l = %.4f", fit.exponent, target));
}

// ---------------------------------------------------------------- 7, 9

struct TunedTrajectory {
    bool have = false;
    std::vector<double> a;
    std::string csv;
    std::shared_ptr<const FlowSetup> setup;
};

void judge_run(Outcome& o, const FlowRun& run, const std::string& label, bool binding) {
    auto add = [&](bool ok, const std::string& what) {
        if (binding)
            o.require(ok, label + what);
        else
            o.note(std::string(ok ? "[diag ok]   " : "[diag FAIL] ") + label + what);
    };
    double adm = 0.0;
    for (const auto& r : run.rows) adm = std::max(adm, r.adm_ratio);
    add(run.admissible && adm < 1.0, fmt("(a) admissibility monitor silent, worst ratio %.3g", adm));

    std::vector<double> s, tr;
    for (std::size_t i = 0; i < run.rows.size(); ++i) {
        s.push_back(run.rows[i].s);
        tr.push_back(run.tracking[i]);
    }
    const double extra = -log_slope(s, tr);
    add(extra > 0.0, fmt("(b) tracking residual %.3g -> %.3g, fitted extra exponent %.4f > 0", tr.front(), tr.back(), extra));

    std::vector<CurvatureSample> hist;
    for (const auto& r : run.rows) hist.push_back({r.t, r.sup_A, r.sup_in_tip});
    double slope = 0.0;
    bool slope_ok = false;
    try {
        slope = blowup_exponent(hist);
        slope_ok = std::fabs(slope / (-(0.5 + 1.0 / 6.0)) - 1.0) <= 0.1;
    } catch (const std::exception& e) {
        add(false, std::string("(c) blow-up exponent unavailable: ") + e.what());
    }
    if (slope != 0.0) add(slope_ok, fmt("(c) sup|A| log-log slope %.4f vs -2/3 +- 10%%", slope));

    int outer = 0;
    int tip = 0;
    bool tip_invalid = false;
    for (const auto& r : run.rows) {
        outer += r.outer_violations;
        if (r.tip_violations < 0)
            tip_invalid = true;
        else
            tip += r.tip_violations;
    }
    add(outer == 0, fmt("(d) outer barrier violations %.0f", outer));
    add(!tip_invalid && tip == 0, tip_invalid ? std::string("(d) tip barrier schedule invalid (lambda_- outside (0.99, 1))")
                                              : fmt("(d) tip barrier violations %.0f", tip));
}

void flow_properties(Outcome& o, TunedTrajectory& out) {
    FlowConfig cfg;
    cfg.s_end = 10.0;
    const auto setup = make_flow_setup(cfg);
    o.note(fmt("default ball radius beta^(-alpha_tilde) = %.4f", tuning_radius(*setup)));
    bool tuned = false;
    try {
        const TuningRecord rec = tune(10.0, setup, 4);
        tuned = rec.converged;
        o.require(rec.converged, fmt("tuning converged, |a| residual %.3g", std::hypot(rec.residual[0], rec.residual[1])));
        if (tuned) {
            const FlowRun run = simulate(setup, rec.a, 10.0, false, true);
            judge_run(o, run, "", true);
        }
    } catch (const AdmissibilityError& e) {
        o.require(false, std::string("tuning inside the default ball: ") + e.what());
    } catch (const NumericalError& e) {
        o.require(false, std::string("tuning: numerical failure: ") + e.what());
    }
    if (tuned) return;

    // Labelled diagnostic: same config, tuning ball enlarged so the root is reachable.
    FlowConfig diag = cfg;
    diag.tuning_radius = 3.0;
    const auto dsetup = make_flow_setup(diag);
    const auto t0 = std::chrono::steady_clock::now();
    const TuningRecord rec = tune(10.0, dsetup, 4);
    const FlowRun run = simulate(dsetup, rec.a, 10.0, false, true);
    const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.note(fmt("diagnostic, tuning radius 3 (not the criterion): a = (%.6f, %.6f), %.0f s", rec.a[0], rec.a[1], el));
    judge_run(o, run, "", false);
    if (rec.converged) {
        out.have = true;
        out.a = rec.a;
        out.csv = rows_csv(run);
        out.setup = dsetup;
    }
}

void determinism(Outcome& o, const TunedTrajectory& tr) {
    if (!tr.have) {
        o.require(false, "no tuned trajectory to repeat");
        return;
    }
    o.note("config: criterion 7 diagnostic (tuning radius 3), tuned a");
    const std::string again = rows_csv(simulate(tr.setup, tr.a, 10.0, false, true));
    const std::string third = rows_csv(simulate(make_flow_setup(tr.setup->config), tr.a, 10.0, false, true));
    o.require(again == tr.csv, fmt("repeat run CSV byte-identical (%.0f bytes)", static_cast<double>(again.size())));
    o.require(third == tr.csv, "repeat run with a fresh setup byte-identical");
}

}  // namespace

int main() {
    int failures = 0;
    TunedTrajectory traj;
    failures += run_criterion(1, "spectral closed forms", 1.0, spectral_closed_forms);
    failures += run_criterion(2, "Kummer consistency", 5.0, kummer_consistency);
    failures += run_criterion(3, "weighted orthonormality", 5.0, orthonormality);
    failures += run_criterion(4, "large-n parameter sets", 1.0, large_n);
    failures += run_criterion(5, "foliation", 30.0, foliation);
    failures += run_criterion(6, "graph geometry", 30.0, graph_geometry);
    failures += run_criterion(7, "flow properties", 600.0, [&](Outcome& o) { flow_properties(o, traj); });
    failures += run_criterion(8, "coercivity and inequalities", 120.0, coercivity_and_inequalities);
    failures += run_criterion(9, "determinism", 600.0, [&](Outcome& o) { determinism(o, traj); });
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
