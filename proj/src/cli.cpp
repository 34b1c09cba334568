#include "mcflab/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mcflab/cone.hpp"
#include "mcflab/errors.hpp"
#include "mcflab/flowsim.hpp"
#include "mcflab/foliation.hpp"
#include "mcflab/params.hpp"
#include "mcflab/spectrum.hpp"
#include "mcflab/wspace.hpp"

namespace mcflab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12e", x);
    return buf;
}

std::string short_num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << text;
}

// ------------------------------------------------------------ config access

template <class T>
T field(const json& j, const std::string& key, T fallback, const std::string& path) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": wrong type");
    }
}

void only_known(const json& j, const std::set<std::string>& known, const std::string& path) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError(path + "." + it.key() + ": unknown field");
}

ConeSpec cone_from(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    if (j.contains("link")) return j.get<ConeSpec>();
    only_known(j, {"p", "q", "lambda_cap"}, path);
    if (!j.contains("p") || !j.contains("q")) throw ConfigError(path + ": needs p and q (or n and link)");
    const int p = field<int>(j, "p", 0, path);
    const int q = field<int>(j, "q", 0, path);
    if (p < 1 || q < 1) throw ConfigError(path + ".p/q: must be positive");
    return quadratic_cone(p, q, field<double>(j, "lambda_cap", 6.0, path));
}

// ------------------------------------------------------------ SVG

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::string color;
};

std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                     const std::vector<Series>& series, bool logx, bool logy) {
    const double W = 720, H = 480, L = 80, R = 180, T = 40, B = 60;
    auto tx = [&](double v) { return logx ? std::log10(v) : v; };
    auto ty = [&](double v) { return logy ? std::log10(v) : v; };
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if ((logx && !(s.x[k] > 0)) || (logy && !(s.y[k] > 0)) || !std::isfinite(s.x[k]) || !std::isfinite(s.y[k]))
                continue;
            x0 = std::min(x0, tx(s.x[k]));
            x1 = std::max(x1, tx(s.x[k]));
            y0 = std::min(y0, ty(s.y[k]));
            y1 = std::max(y1, ty(s.y[k]));
        }
    if (!(x1 > x0)) {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if (!(y1 > y0)) {
        y0 -= 1.0;
        y1 += 1.0;
    }
    auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n"
       << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    auto label = [&](double v, bool lg) { return lg ? "1e" + short_num(v) : short_num(v); };
    os << "<text x=\"" << L << "\" y=\"" << H - B + 18 << "\" font-size=\"12\">" << label(x0, logx) << "</text>\n"
       << "<text x=\"" << W - R << "\" y=\"" << H - B + 18 << "\" font-size=\"12\" text-anchor=\"end\">"
       << label(x1, logx) << "</text>\n"
       << "<text x=\"" << L - 6 << "\" y=\"" << H - B << "\" font-size=\"12\" text-anchor=\"end\">" << label(y0, logy)
       << "</text>\n"
       << "<text x=\"" << L - 6 << "\" y=\"" << T + 12 << "\" font-size=\"12\" text-anchor=\"end\">"
       << label(y1, logy) << "</text>\n"
       << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 20 << "\" text-anchor=\"middle\" font-size=\"13\">"
       << xlabel << "</text>\n"
       << "<text x=\"20\" y=\"" << (T + H - B) / 2 << "\" font-size=\"13\" transform=\"rotate(-90 20 "
       << (T + H - B) / 2 << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
    int row = 0;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if ((logx && !(s.x[k] > 0)) || (logy && !(s.y[k] > 0)) || !std::isfinite(s.x[k]) || !std::isfinite(s.y[k]))
                continue;
            os << short_num(px(s.x[k])) << ',' << short_num(py(s.y[k])) << ' ';
        }
        os << "\"/>\n";
        const double ly = T + 16 + 18 * row++;
        os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly - 4
           << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n"
           << "<text x=\"" << W - R + 36 << "\" y=\"" << ly << "\" font-size=\"12\">" << s.name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

// ------------------------------------------------------------ run context

struct Context {
    const RunConfig& cfg;
    fs::path dir;
    int workers = 1;
    std::string module = "cli";
    RunResult& result;
    bool echo = true;

    void write(const std::string& name, const std::string& text) {
        write_text(dir / name, text);
        result.outputs.push_back(name);
    }
};

// ------------------------------------------------------------ spectrum

int cmd_spectrum(Context& cx) {
    const json& b = cx.cfg.body;
    cx.module = "cone";
    const ConeSpec cone = cone_from(b.value("cone", json{{"p", 3}, {"q", 3}}), "config.cone");
    const double cutoff = field<double>(b, "lambda_cutoff", 3.0, "config");
    const int order = field<int>(b, "quadrature_order", 40, "config");
    const std::string scope = field<std::string>(b, "scope", "equivariant", "config");
    if (scope != "equivariant" && scope != "full") throw ConfigError("config.scope: must be equivariant or full");
    std::optional<int> forced;
    if (b.contains("i1")) forced = field<int>(b, "i1", 0, "config");
    cx.module = "spectrum";
    const auto quad = build_quadrature(cone.n, order);
    const OrderedSpectrum sp = order_and_select(
        cone, cutoff, quad, scope == "full" ? SpectrumScope::full : SpectrumScope::equivariant, forced);
    std::size_t kmax = 0;
    for (const auto& m : sp.modes) kmax = std::max(kmax, m.K.size());
    std::ostringstream os;
    os << "index,i,j,mu,alpha_j,lambda_ij,c_ij,mult";
    for (std::size_t k = 1; k <= kmax; ++k) os << ",K" << k;
    os << '\n';
    for (std::size_t e = 0; e < sp.modes.size(); ++e) {
        const EigenMode& m = sp.modes[e];
        os << sp.first_index[e] << ',' << m.i << ',' << m.j << ',' << num(m.mu) << ',' << num(m.alpha) << ','
           << num(m.lambda) << ',' << num(m.c_norm) << ',' << m.mult;
        for (std::size_t k = 0; k < kmax; ++k) os << ',' << (k < m.K.size() ? num(m.K[k]) : std::string());
        os << '\n';
    }
    cx.write("spectrum.csv", os.str());
    cx.write("spectrum.json", sp.to_json().dump(2) + "\n");
    cx.result.summary = {{"modes", sp.modes.size()}, {"lambda_l", sp.lambda_l}, {"sigma_l", sp.sigma_l},
                         {"delta_l", sp.delta_l}, {"i1", sp.i1},           {"alpha", sp.alpha}};
    return exit_ok;
}

// ------------------------------------------------------------ foliation

int cmd_foliation(Context& cx) {
    const json& b = cx.cfg.body;
    cx.module = "cone";
    const ConeSpec cone = cone_from(b.value("cone", json{{"p", 3}, {"q", 3}}), "config.cone");
    if (!cone.is_quadratic()) throw ConfigError("config.cone: foliation needs a quadratic cone (p, q)");
    const double step = field<double>(b, "step", 1e-3, "config");
    const double r_max = field<double>(b, "r_max", 1e3, "config");
    const double plot_r = field<double>(b, "plot_radius", 6.0, "config");
    std::vector<double> kappas = field<std::vector<double>>(b, "kappas", {1.0, 1.5, 2.0}, "config");
    if (!(step > 0.0) || !(r_max > 10.0 * step)) throw ConfigError("config.step/r_max: need 0 < 10 step < r_max");
    if (kappas.empty()) throw ConfigError("config.kappas: must be nonempty");
    for (double k : kappas)
        if (!(k > 0.0)) throw ConfigError("config.kappas: entries must be positive");
    std::sort(kappas.begin(), kappas.end());

    cx.module = "foliation";
    const FoliationLeaf leaf = build_leaf(cone, step, r_max);
    const auto& smp = leaf.curve.samples;
    const std::size_t stride = std::max<std::size_t>(1, smp.size() / 20000);
    std::ostringstream os;
    os << "sigma,s,t,phi\n";
    for (std::size_t k = 0; k < smp.size(); k += stride)
        os << num(leaf.curve.arclength(k)) << ',' << num(smp[k].s) << ',' << num(smp[k].t) << ',' << num(smp[k].phi)
           << '\n';
    cx.write("curve.csv", os.str());

    std::vector<FoliationLeaf> leaves;
    for (double k : kappas) leaves.push_back(rescale_leaf(leaf, k));
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < leaves.size(); ++i)
        min_gap = std::min(min_gap, min_radial_gap(leaves[i].curve, leaves[i + 1].curve));
    const double jac = jacobi_field_positivity(leaf.curve);

    json rep = leaf.fit_json();
    rep["sample_stride"] = stride;
    rep["kappas"] = kappas;
    rep["jacobi_positivity"] = jac;
    if (leaves.size() > 1) rep["min_radial_gap"] = min_gap;
    cx.write("fit.json", rep.dump(2) + "\n");

    std::vector<Series> ser;
    const double th = cone_angle(cone.p, cone.q);
    ser.push_back({"cone", {0.0, plot_r * std::cos(th)}, {0.0, plot_r * std::sin(th)}, "black"});
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        Series s{"leaf kappa=" + short_num(kappas[i]), {}, {}, palette[i % 6]};
        const auto& c = leaves[i].curve.samples;
        const std::size_t st = std::max<std::size_t>(1, c.size() / 4000);
        for (std::size_t k = 0; k < c.size(); k += st) {
            if (std::hypot(c[k].s, c[k].t) > plot_r) break;
            s.x.push_back(c[k].s);
            s.y.push_back(c[k].t);
        }
        ser.push_back(std::move(s));
    }
    cx.write("leaves.svg", svg_plot("cone and leaves", "s", "t", ser, false, false));
    cx.result.summary = {{"alpha_fit", leaf.fit_alpha}, {"alpha_tilde_fit", leaf.fit_alpha_tilde},
                         {"c_fit", leaf.fit_c},         {"R_s", leaf.R_s},
                         {"jacobi_positivity", jac}};
    if (leaves.size() > 1) cx.result.summary["min_radial_gap"] = min_gap;
    return exit_ok;
}

// ------------------------------------------------------------ check-params

int cmd_check_params(Context& cx) {
    const json& b = cx.cfg.body;
    cx.module = "cone";
    ConeSpec cone;
    if (b.contains("cone")) {
        cone = cone_from(b.at("cone"), "config.cone");
        if (b.contains("n") && field<int>(b, "n", 0, "config") != cone.n)
            throw ConfigError("config.n: disagrees with config.cone");
    } else if (b.contains("n")) {
        const int n = field<int>(b, "n", 0, "config");
        if (n < 3) throw ConfigError("config.n: must be at least 3");
        const int p = (n - 1) / 2;
        cone = quadratic_cone(p, n - 1 - p, 3.0);
    } else {
        throw ConfigError("config: needs n or cone");
    }
    cx.module = "spectrum";
    const double cutoff = field<double>(b, "lambda_cutoff", 3.0, "config");
    const OrderedSpectrum sp =
        order_and_select(cone, cutoff, build_quadrature(cone.n, 30), SpectrumScope::equivariant);
    cx.module = "params";
    const int n = cone.n;
    const double at = field<double>(b, "alpha_tilde", 2.0 - 2.0 * sp.alpha, "config");
    const AlphaCondition ac = check_alpha_condition(n, sp.alpha, at, sp.lambda_l, sp.delta_l);
    const AdmissibleSet set = admissible_intervals(n, sp.alpha, at, sp.lambda_l, sp.delta_l);
    double xi = 0.1;
    double theta = 0.4;
    if (!set.empty) {
        xi = set.xi_used;
        theta = 0.5 * (set.theta.lo + set.theta.hi);
    }
    xi = field<double>(b, "xi", xi, "config");
    theta = field<double>(b, "theta", theta, "config");
    ParamBundle bundle = make_bundle(sp, at, xi, theta);
    bundle.Lambda = field<double>(b, "Lambda", bundle.Lambda, "config");
    bundle.beta = field<double>(b, "beta", bundle.beta, "config");
    bundle.rho = field<double>(b, "rho", bundle.rho, "config");
    bundle.t0 = field<double>(b, "t0", bundle.t0, "config");
    const auto viol = bundle.violations();

    static const char* term_names[] = {"2(1-a)/(n+2a+4)", "(n-4+2a)/(n+4+2a)", "2(1-a)delta/((n+2a+4)lambda)",
                                       "at/(1+at)"};
    std::ostringstream csv;
    csv << "check,value,bound,margin,pass\n";
    std::ostringstream table;
    table << "check                                                          value          bound          margin         result\n";
    auto row = [&](const std::string& name, double value, double bound, double margin, bool pass) {
        csv << name << ',' << num(value) << ',' << num(bound) << ',' << num(margin) << ',' << (pass ? 1 : 0) << '\n';
        char buf[200];
        std::snprintf(buf, sizeof buf, "%-62s %-14.6g %-14.6g %-14.6g %s\n", name.c_str(), value, bound, margin,
                      pass ? "pass" : "FAIL");
        table << buf;
    };
    for (int k = 0; k < 4; ++k)
        row(std::string("alpha inequality vs ") + term_names[k], ac.lhs, ac.terms[k], ac.margins[k],
            ac.margins[k] > 0.0);
    row("xi interval", set.xi.lo, set.xi.hi, set.xi.hi - set.xi.lo, !set.xi.empty());
    row("theta interval", set.theta.lo, set.theta.hi, set.theta.hi - set.theta.lo, !set.theta.empty());
    for (const auto& v : viol) row("bundle invariant: " + v, 0.0, 0.0, 0.0, false);
    cx.write("params.csv", csv.str());
    if (cx.echo) std::cout << table.str();

    json rep = {{"n", n},
                {"alpha", sp.alpha},
                {"alpha_tilde", at},
                {"lambda_l", sp.lambda_l},
                {"delta_l", sp.delta_l},
                {"alpha_condition", ac.to_json()},
                {"admissible", set.to_json()},
                {"bundle", bundle.to_json()},
                {"violations", viol}};
    cx.write("params.json", rep.dump(2) + "\n");
    double min_margin = ac.margins[0];
    for (double m : ac.margins) min_margin = std::min(min_margin, m);
    cx.result.summary = {{"n", n},
                         {"alpha", sp.alpha},
                         {"alpha_condition", ac.pass},
                         {"margin_min", min_margin},
                         {"margin_2", ac.margins[1]},
                         {"theta_lo", set.theta.lo},
                         {"theta_hi", set.theta.hi},
                         {"interval_nonempty", !set.empty},
                         {"bundle_violations", viol.size()}};
    return exit_ok;
}

// ------------------------------------------------------------ flow

json state_json(const FlowState& st) {
    return {{"t", st.t},
            {"kappa", st.kappa},
            {"a", st.a},
            {"last_regrid_s", st.last_regrid_s},
            {"overlap_mismatch", st.overlap_mismatch},
            {"far_scale", st.far_scale},
            {"outer_y", st.outer_y},
            {"outer_v", st.outer_v},
            {"tip_w_hat", st.tip_w_hat},
            {"flow_config", st.setup->config.to_json()}};
}

FlowState state_from_json(const json& j, std::shared_ptr<const FlowSetup> setup) {
    FlowState st;
    try {
        st.t = j.at("t").get<double>();
        st.kappa = j.at("kappa").get<double>();
        st.a = j.at("a").get<std::vector<double>>();
        st.last_regrid_s = j.at("last_regrid_s").get<double>();
        st.overlap_mismatch = j.at("overlap_mismatch").get<double>();
        st.far_scale = j.at("far_scale").get<double>();
        st.outer_y = j.at("outer_y").get<std::vector<double>>();
        st.outer_v = j.at("outer_v").get<std::vector<double>>();
        st.tip_w_hat = j.at("tip_w_hat").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("final_state.json: ") + e.what());
    }
    if (st.outer_y.size() != st.outer_v.size() || st.outer_y.size() < 8)
        throw ConfigError("final_state.json: outer chart arrays are inconsistent");
    if (!st.tip_w_hat.empty() && st.tip_w_hat.size() != setup->tip_sigma.size())
        throw ConfigError("final_state.json: tip chart size does not match tip_points");
    st.setup = std::move(setup);
    return st;
}

json tip_report(const FlowState& st) {
    try {
        json r = verify_tip_barriers(st).to_json();
        r["schedule_valid"] = true;
        return r;
    } catch (const ConfigError& e) {
        json r = tip_barrier_margins(st, tip_schedule(*st.setup, st.tau())).to_json();
        r["schedule_valid"] = false;
        r["schedule_error"] = e.what();
        return r;
    }
}

void flow_plots(Context& cx, const FlowRun& run) {
    const FlowState& st = run.final_state;
    const FlowSetup& S = *st.setup;
    const double s = st.s();
    const EigenMode& ml = S.mode_l();
    Series v{"e^(lambda s) v / omega_1", {}, {}, palette[0]};
    Series lead{"kappa phi_l / c_l", {}, {}, palette[1]};
    const double g = std::exp(ml.lambda * s) / S.omega1;
    for (std::size_t i = 0; i < st.outer_y.size(); i += 8) {
        const double y = st.outer_y[i];
        v.x.push_back(y);
        v.y.push_back(std::fabs(g * st.outer_v[i]));
        lead.x.push_back(y);
        lead.y.push_back(std::fabs(st.kappa * ml.raw(y)));
    }
    cx.write("profile_typeI.svg", svg_plot("type I profile at s = " + short_num(s), "y", "|value|", {v, lead}, true, true));

    if (st.has_tip()) {
        Series w{"tip chart psi(z)", {}, {}, palette[0]};
        Series lf{"tip leaf", {}, {}, palette[1]};
        const double z0 = S.tip_leaf->R_s;
        const double z1 = 2.0 * S.config.beta;
        for (int k = 0; k <= 200; ++k) {
            const double z = z0 + (z1 - z0) * k / 200.0;
            try {
                w.y.push_back(tip_psi(st, z));
                w.x.push_back(z);
            } catch (const DomainError&) {
                // the graph region of the evolved tip starts past the leaf's
            }
            lf.x.push_back(z);
            lf.y.push_back(S.tip_leaf->psi_at(z));
        }
        cx.write("profile_tip.svg", svg_plot("type II tip profile at s = " + short_num(s), "z", "psi", {w, lf}, false, false));
    }
    Series a{"sup|A|", {}, {}, palette[0]};
    for (const auto& r : run.rows) {
        a.x.push_back(std::fabs(r.t));
        a.y.push_back(r.sup_A);
    }
    cx.write("sup_curvature.svg", svg_plot("curvature blow-up", "|t|", "sup|A|", {a}, true, true));
}

int cmd_flow(Context& cx) {
    const json& b = cx.cfg.body;
    cx.module = "flowsim";
    json fj = b.value("flow", json::object());
    if (!fj.is_object()) throw ConfigError("config.flow: expected an object");
    if (b.contains("cone")) {
        const json& c = b.at("cone");
        only_known(c, {"p", "q"}, "config.cone");
        if (c.contains("p")) fj["p"] = c.at("p");
        if (c.contains("q")) fj["q"] = c.at("q");
    }
    fj["seed"] = cx.cfg.seed;
    FlowConfig fc = FlowConfig::from_json(fj);
    const auto setup = make_flow_setup(fc);

    json rep = {{"flow_config", fc.to_json()}, {"tuning_ball_radius", tuning_radius(*setup)}};
    std::vector<double> a = fc.a;
    if (fc.tune) {
        try {
            const TuningRecord rec = tune(fc.s_end, setup, cx.workers);
            rep["tuning"] = rec.to_json();
            a = rec.a;
        } catch (const AdmissibilityError& e) {
            rep["failure"] = std::string("tuning: ") + e.what();
            cx.write("report.json", rep.dump(2) + "\n");
            throw;
        }
    } else if (a.empty()) {
        a.assign(setup->unstable.size(), 0.0);
    }

    FlowRun run = simulate(setup, a, fc.s_end, false, true);
    cx.write("flow.csv", rows_csv(run));

    double adm = 0.0;
    int outer = 0;
    int tip = 0;
    bool tip_invalid = false;
    double overlap = 0.0;
    std::vector<double> s, tr;
    std::vector<CurvatureSample> hist;
    for (std::size_t i = 0; i < run.rows.size(); ++i) {
        const auto& r = run.rows[i];
        adm = std::max(adm, r.adm_ratio);
        outer += r.outer_violations;
        if (r.tip_violations < 0)
            tip_invalid = true;
        else
            tip += r.tip_violations;
        overlap = std::max(overlap, r.overlap);
        s.push_back(r.s);
        tr.push_back(run.tracking[i]);
        hist.push_back({r.t, r.sup_A, r.sup_in_tip});
    }
    rep["a"] = a;
    rep["steps"] = run.steps;
    rep["admissible"] = run.admissible;
    rep["failure"] = run.failure;
    rep["kappa"] = run.final_state.kappa;
    rep["Phi_final"] = run.rows.empty() ? std::vector<double>{} : run.rows.back().Phi;
    rep["max_adm_ratio"] = adm;
    rep["max_overlap"] = overlap;
    rep["outer_violations"] = outer;
    rep["tip_violations"] = tip;
    rep["tip_schedule_valid"] = !tip_invalid;
    double tracking_exponent = std::numeric_limits<double>::quiet_NaN();
    if (tr.size() >= 2) {
        tracking_exponent = -log_slope(s, tr);
        rep["tracking_exponent"] = tracking_exponent;
    }
    double blow = std::numeric_limits<double>::quiet_NaN();
    try {
        blow = blowup_exponent(hist);
        rep["blowup_exponent"] = blow;
    } catch (const DomainError& e) {
        rep["blowup_exponent_error"] = e.what();
    }
    rep["final_outer_barriers"] = verify_outer_barriers(run.final_state).to_json();
    rep["final_tip_barriers"] = tip_report(run.final_state);
    cx.write("report.json", rep.dump(2) + "\n");
    cx.write("final_state.json", state_json(run.final_state).dump() + "\n");
    flow_plots(cx, run);

    cx.result.summary = {{"steps", run.steps},          {"kappa", run.final_state.kappa},
                         {"admissible", run.admissible}, {"max_adm_ratio", adm},
                         {"outer_violations", outer},    {"tip_schedule_valid", !tip_invalid}};
    if (std::isfinite(blow)) cx.result.summary["blowup_exponent"] = blow;
    if (std::isfinite(tracking_exponent)) cx.result.summary["tracking_exponent"] = tracking_exponent;
    for (std::size_t k = 0; k < a.size(); ++k) cx.result.summary["a" + std::to_string(k)] = a[k];
    if (!run.admissible) throw AdmissibilityError("flowsim: " + run.failure);
    return exit_ok;
}

// ------------------------------------------------------------ verify

int cmd_verify(Context& cx) {
    const json& b = cx.cfg.body;
    const std::string dir = field<std::string>(b, "run_dir", "", "config");
    if (dir.empty()) throw ConfigError("config.run_dir: missing");
    const json sj = read_json_file((fs::path(dir) / "final_state.json").string());
    if (!sj.contains("flow_config")) throw ConfigError("final_state.json: missing flow_config");
    cx.module = "flowsim";
    const auto setup = make_flow_setup(FlowConfig::from_json(sj.at("flow_config")));
    const FlowState st = state_from_json(sj, setup);

    const AdmissibilityReport adm = check_admissibility(st);
    const OuterBarrierReport ob = verify_outer_barriers(st);
    const json tip = tip_report(st);
    const double overlap = overlap_mismatch(st);
    const double kappa = measure_kappa(st);
    json rep = {{"run_dir", dir},
                {"s", st.s()},
                {"admissibility", adm.to_json()},
                {"outer_barriers", ob.to_json()},
                {"tip_barriers", tip},
                {"overlap_mismatch", overlap},
                {"stored_overlap_mismatch", st.overlap_mismatch},
                {"kappa_stored", st.kappa},
                {"kappa_remeasured", kappa}};
    const fs::path report = fs::path(dir) / "report.json";
    if (fs::exists(report)) {
        const json stored = read_json_file(report.string());
        if (stored.contains("final_outer_barriers"))
            rep["outer_barriers_match_stored"] = stored.at("final_outer_barriers") == ob.to_json();
    }
    cx.write("verify.json", rep.dump(2) + "\n");
    cx.result.summary = {{"admissible", adm.ok},
                         {"adm_ratio", adm.worst_ratio},
                         {"outer_violations", ob.violations + ob.sign_violations},
                         {"tip_schedule_valid", tip.at("schedule_valid").get<bool>()},
                         {"tip_violations", tip.at("violations").get<int>()},
                         {"overlap_mismatch", overlap}};
    if (!adm.ok) throw AdmissibilityError("verify: admissibility monitor fires on the stored state");
    return exit_ok;
}

const std::map<std::string, std::set<std::string>>& command_fields() {
    static const std::map<std::string, std::set<std::string>> f = {
        {"spectrum", {"cone", "lambda_cutoff", "quadrature_order", "scope", "i1"}},
        {"foliation", {"cone", "step", "r_max", "plot_radius", "kappas"}},
        {"check-params", {"cone", "n", "lambda_cutoff", "alpha_tilde", "xi", "theta", "Lambda", "beta", "rho", "t0"}},
        {"flow", {"cone", "flow"}},
        {"verify", {"run_dir"}}};
    return f;
}

}  // namespace

// ------------------------------------------------------------ public API

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return exit_config;
    if (dynamic_cast<const AdmissibilityError*>(&e)) return exit_admissibility;
    return exit_numerical;
}

RunConfig parse_run_config(const json& doc, const std::string& command) {
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
    if (!doc.contains("command")) throw ConfigError("config.command: missing field");
    RunConfig rc;
    rc.command = field<std::string>(doc, "command", "", "config");
    const auto& cf = command_fields();
    if (!cf.count(rc.command)) throw ConfigError("config.command: unknown command '" + rc.command + "'");
    if (!command.empty() && command != rc.command)
        throw ConfigError("config.command: '" + rc.command + "' does not match subcommand '" + command + "'");
    rc.output_dir = field<std::string>(doc, "output_dir", "", "config");
    if (rc.output_dir.empty()) throw ConfigError("config.output_dir: missing (or pass --out)");
    if (doc.contains("seed")) {
        if (!doc.at("seed").is_number_integer() || doc.at("seed").get<long long>() < 0)
            throw ConfigError("config.seed: must be a nonnegative integer");
        rc.seed = doc.at("seed").get<std::uint64_t>();
    }
    std::set<std::string> known = cf.at(rc.command);
    known.insert({"command", "output_dir", "seed"});
    only_known(doc, known, "config");
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (it.key() != "command" && it.key() != "output_dir" && it.key() != "seed") rc.body[it.key()] = it.value();
    rc.echo = doc;
    rc.echo["seed"] = rc.seed;
    return rc;
}

RunResult run(const RunConfig& config, int workers, bool echo) {
    RunResult result;
    const auto t0 = std::chrono::steady_clock::now();
    Context cx{config, fs::path(config.output_dir), std::max(1, workers), "cli", result, echo};
    try {
        fs::create_directories(cx.dir);
        if (config.command == "spectrum")
            result.exit_code = cmd_spectrum(cx);
        else if (config.command == "foliation")
            result.exit_code = cmd_foliation(cx);
        else if (config.command == "check-params")
            result.exit_code = cmd_check_params(cx);
        else if (config.command == "flow")
            result.exit_code = cmd_flow(cx);
        else if (config.command == "verify")
            result.exit_code = cmd_verify(cx);
        else
            throw ConfigError("config.command: unknown command '" + config.command + "'");
    } catch (const std::exception& e) {
        result.exit_code = exit_code_for(e);
        result.module = cx.module;
        result.error = e.what();
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json manifest = {{"command", config.command},
                     {"config", config.echo},
                     {"seed", config.seed},
                     {"library_version", library_version},
                     {"wall_time_s", wall},
                     {"workers", cx.workers},
                     {"exit_code", result.exit_code},
                     {"outputs", result.outputs},
                     {"summary", result.summary}};
    if (result.exit_code != exit_ok) manifest["error"] = {{"module", result.module}, {"message", result.error}};
    try {
        fs::create_directories(cx.dir);
        write_text(cx.dir / "manifest.json", manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        if (result.exit_code == exit_ok) {
            result.exit_code = exit_config;
            result.module = "cli";
            result.error = e.what();
        }
    }
    return result;
}

std::vector<RunConfig> expand_sweep(const json& doc, const std::string& out_root, std::uint64_t seed,
                                    bool seed_given) {
    if (!doc.is_object()) throw ConfigError("sweep: expected a JSON object");
    std::vector<json> docs;
    if (doc.contains("runs")) {
        only_known(doc, {"runs"}, "sweep");
        if (!doc.at("runs").is_array() || doc.at("runs").empty()) throw ConfigError("sweep.runs: expected a nonempty array");
        for (const auto& r : doc.at("runs")) docs.push_back(r);
    } else if (doc.contains("base") && doc.contains("vary")) {
        only_known(doc, {"base", "vary"}, "sweep");
        const json& vary = doc.at("vary");
        if (!vary.is_object() || vary.size() != 1) throw ConfigError("sweep.vary: expected exactly one field");
        const std::string key = vary.begin().key();
        const json& values = vary.begin().value();
        if (!values.is_array() || values.empty()) throw ConfigError("sweep.vary." + key + ": expected a nonempty array");
        for (const auto& v : values) {
            json d = doc.at("base");
            std::string pointer = "/" + key;
            std::replace(pointer.begin(), pointer.end(), '.', '/');
            const json::json_pointer ptr(pointer);
            d[ptr] = v;
            if (!d.contains("output_dir")) d["output_dir"] = key + "_" + (v.is_string() ? v.get<std::string>() : v.dump());
            docs.push_back(d);
        }
    } else {
        throw ConfigError("sweep: needs runs, or base and vary");
    }
    std::vector<RunConfig> out;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        json d = docs[i];
        const std::string path = "sweep entry " + std::to_string(i);
        if (!d.is_object() || !d.contains("output_dir") || !d.at("output_dir").is_string())
            throw ConfigError(path + ".output_dir: missing");
        d["output_dir"] = (fs::path(out_root) / d.at("output_dir").get<std::string>()).string();
        if (seed_given || !d.contains("seed")) d["seed"] = seed;
        RunConfig rc;
        try {
            rc = parse_run_config(d, "");
        } catch (const ConfigError& e) {
            throw ConfigError(path + ": " + e.what());
        }
        const std::string key = fs::absolute(fs::path(rc.output_dir)).lexically_normal().string();
        if (!seen.insert(key).second) throw ConfigError(path + ".output_dir: duplicate output directory " + rc.output_dir);
        out.push_back(std::move(rc));
    }
    return out;
}

SweepResult sweep(const std::vector<RunConfig>& runs, int workers) {
    std::set<std::string> seen;
    for (const auto& r : runs) {
        const std::string key = fs::absolute(fs::path(r.output_dir)).lexically_normal().string();
        if (!seen.insert(key).second) throw ConfigError("sweep: duplicate output directory " + r.output_dir);
    }
    SweepResult res;
    res.results.resize(runs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) res.results[i] = run(runs[i], 1, false);
    };
    const int nt = std::max(1, std::min<int>(workers, static_cast<int>(runs.size())));
    std::vector<std::thread> pool;
    for (int k = 1; k < nt; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::set<std::string> keys;
    for (const auto& r : res.results)
        for (auto it = r.summary.begin(); it != r.summary.end(); ++it) keys.insert(it.key());
    std::ostringstream os;
    os << "output_dir,command,seed,exit_code";
    for (const auto& k : keys) os << ',' << k;
    os << '\n';
    for (std::size_t i = 0; i < runs.size(); ++i) {
        os << fs::path(runs[i].output_dir).filename().string() << ',' << runs[i].command << ',' << runs[i].seed << ','
           << res.results[i].exit_code;
        for (const auto& k : keys) {
            os << ',';
            if (!res.results[i].summary.contains(k)) continue;
            const json& v = res.results[i].summary.at(k);
            if (v.is_boolean())
                os << (v.get<bool>() ? 1 : 0);
            else if (v.is_number_integer())
                os << v.get<long long>();
            else if (v.is_number())
                os << num(v.get<double>());
            else if (v.is_string())
                os << v.get<std::string>();
        }
        os << '\n';
    }
    res.csv = os.str();
    return res;
}

int main_entry(int argc, char** argv) {
    CLI::App app{"Equivariant mean curvature flow lab: spectra, foliations, parameters and flows"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out;
    long long seed = -1;
    int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--out", out, "output directory (overrides output_dir)");
        sub->add_option("--seed", seed, "seed recorded in the manifest (overrides the config)");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    };
    const std::vector<std::string> commands = {"spectrum", "foliation", "flow", "check-params", "verify"};
    std::map<std::string, CLI::App*> subs;
    for (const auto& c : commands) {
        subs[c] = app.add_subcommand(c, "run the " + c + " command");
        common(subs[c]);
    }
    CLI::App* sw = app.add_subcommand("sweep", "run many configs (runs list or base + vary) and tabulate them");
    common(sw);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config;
    }
    try {
        json doc = read_json_file(config_path);
        if (seed < -1) throw ConfigError("--seed: must be nonnegative");
        if (sw->parsed()) {
            if (out.empty()) throw ConfigError("--out: required for sweep");
            const auto runs = expand_sweep(doc, out, seed >= 0 ? static_cast<std::uint64_t>(seed) : 1, seed >= 0);
            const SweepResult res = sweep(runs, workers);
            fs::create_directories(out);
            write_text(fs::path(out) / "sweep.csv", res.csv);
            int worst = exit_ok;
            for (std::size_t i = 0; i < runs.size(); ++i) {
                const auto& r = res.results[i];
                std::cout << runs[i].output_dir << ": exit " << r.exit_code;
                if (r.exit_code != exit_ok) std::cout << " [" << r.module << "] " << r.error;
                std::cout << '\n';
                worst = std::max(worst, r.exit_code);
            }
            return worst;
        }
        std::string command;
        for (const auto& c : commands)
            if (subs[c]->parsed()) command = c;
        if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
        if (!out.empty()) doc["output_dir"] = out;
        if (seed >= 0) doc["seed"] = seed;
        const RunConfig rc = parse_run_config(doc, command);
        const RunResult r = run(rc, workers);
        if (r.exit_code != exit_ok) {
            std::cerr << "error [" << r.module << "]: " << r.error << '\n';
        } else {
            std::cout << command << ": wrote";
            for (const auto& o : r.outputs) std::cout << ' ' << o;
            std::cout << " manifest.json to " << rc.output_dir << '\n';
        }
        return r.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error [cli]: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

}  // namespace mcflab::cli
