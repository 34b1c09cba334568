#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcflab/cone.hpp"
#include "mcflab/foliation.hpp"
#include "mcflab/graphgeo.hpp"
#include "mcflab/params.hpp"
#include "mcflab/spectrum.hpp"

namespace mcflab {

/// Run configuration of the equivariant flow on C_{p,q}.
struct FlowConfig {
    int p = 3;
    int q = 3;
    double beta = 3.0;
    double rho = 2.0;
    double Lambda = 1e3;
    double s0 = 4.0;
    double s_end = 10.0;
    double xi = 0.1;
    double theta = 0.4;
    double alpha_tilde = 0.0;   ///< 0: take the leaf fit
    int outer_points = 4096;
    int tip_points = 1024;
    double dt = 2e-3;           ///< step in s
    double regrid_interval = 0.1;
    double leaf_step = 2e-3;    ///< arclength step of the shot leaf (unit scale)
    bool tune = true;
    std::uint64_t seed = 1;
    std::vector<double> a;      ///< initial tuning parameters (untuned runs)
    // outer barrier constants
    double barrier_spread = 0.25;  ///< C' in C_0^+- = (1 +- C') kappa K_top
    double barrier_R = 6.5;
    // tip barrier constants
    double tip_delta = 1e-3;
    double tip_C_factor = 10.0;    ///< C(beta) = factor * beta
    // type I tracking annulus
    double track_r = 2.0;
    double track_R = 8.0;
    // radius of the tuning ball; 0 selects beta^(-alpha_tilde)
    double tuning_radius = 0.0;

    nlohmann::json to_json() const;
    /// Throws ConfigError naming the offending field.
    static FlowConfig from_json(const nlohmann::json& j);
};

/// Immutable data shared by every state of one run.
struct FlowSetup {
    FlowConfig config;
    ConeSpec cone;
    OrderedSpectrum spectrum;
    ParamBundle params;
    double omega1 = 0.0;
    std::shared_ptr<const FoliationLeaf> unit_leaf;  ///< kappa = 1, c = 1
    std::shared_ptr<const FoliationLeaf> tip_leaf;   ///< base of the tip chart (c = omega_1)
    BaseCurve tip_base;
    std::vector<double> tip_sigma;                   ///< uniform arclength nodes
    std::vector<BaseGeometry> tip_geom;
    std::vector<double> tip_radius;                  ///< |B| at the nodes
    std::size_t tip_graph_index = 0;                 ///< first node of the graph region
    std::vector<EigenMode> unstable;                 ///< tuned directions (i < i_1, j = 1)

    const EigenMode& mode_l() const { return spectrum.mode_l(); }
    double sigma_l() const { return params.sigma_l; }
    int i1() const { return spectrum.i1; }
};

/// Radius of the ball holding the tuning parameters a.
double tuning_radius(const FlowSetup& setup);

/// Builds cone, equivariant spectrum, leaves and tip grid.  Throws
/// ConfigError for inconsistent settings.
std::shared_ptr<const FlowSetup> make_flow_setup(const FlowConfig& config);

/// Snapshot of the flow.  The outer chart is held in type I variables
/// (y, v) on a log-uniform grid; the tip chart as a normal graph over the
/// tip leaf in type II variables.
struct FlowState {
    double t = 0.0;
    std::vector<double> outer_y;
    std::vector<double> outer_v;
    std::vector<double> tip_w_hat;  ///< empty: no tip chart
    double kappa = 1.0;
    std::vector<double> a;
    double last_regrid_s = 0.0;
    double overlap_mismatch = 0.0;
    /// Multiplier of the linear-profile Dirichlet data (far end; both ends without a tip chart).
    double far_scale = 1.0;
    std::shared_ptr<const FlowSetup> setup;

    double s() const;
    double tau() const;
    const ParamBundle& params() const { return setup->params; }
    const OrderedSpectrum& spectrum_ref() const { return setup->spectrum; }
    /// Physical chart: x = e^{-s/2} y, u = e^{-s/2} v.
    std::vector<double> outer_x() const;
    std::vector<double> outer_u() const;
    bool has_tip() const { return !tip_w_hat.empty(); }
};

double s_of_t(double t);
double t_of_s(double s);
double tau_of_s(double s, double sigma_l);
double s_of_tau(double tau, double sigma_l);

/// v_lin(y, s): linear evolution of the initial intermediate profile.
double linear_profile(const FlowSetup& setup, const std::vector<double>& a, double y, double s);

/// Initial state at s0: intermediate profile e^{-lambda_l s0} omega_1 (phi_l + sum a_k phi_k)
/// (normalizations divided out), glued over [beta, 2 beta] (type II) to the
/// tip leaf.  Throws AdmissibilityError when the monitor fires on it.
FlowState build_initial_state(std::shared_ptr<const FlowSetup> setup, const std::vector<double>& a);

/// One linearly implicit Euler step of size dt (in s) of both charts,
/// followed by boundary exchange and, on schedule, regridding.
FlowState step(const FlowState& state, double dt);

/// Re-lays the outer grid on [beta e^{-sigma s}/2, rho e^{s/2}].
FlowState regrid(const FlowState& state);

struct RescaledView {
    enum class Kind { typeI, typeII };
    Kind kind = Kind::typeI;
    double scale_time = 0.0;     ///< s or tau
    std::vector<double> coord;   ///< y or z
    std::vector<double> value;   ///< v or w
};

RescaledView rescale(const FlowState& state, RescaledView::Kind kind);
/// Inverse of the type I view: physical (x, u).
std::pair<std::vector<double>, std::vector<double>> physical_from_typeI(const RescaledView& view);

/// Outer chart value v(y) (local cubic in log y).
double outer_value(const FlowState& state, double y);
/// Tip chart as a graph over the cone in type II units: psi(z).
double tip_psi(const FlowState& state, double z);

/// Phi_k = e^{lambda_l s} <c_k v_tilde, phi_k> over the tuned directions.
std::vector<double> mode_projection_map(const FlowState& state);
/// kappa = c_l e^{lambda_l s} <v_tilde, phi_l>.
double measure_kappa(const FlowState& state);
/// Cut-off type I profile eta(e^{sigma s} y - beta) eta(rho e^{s/2} - y) v.
std::vector<double> cutoff_profile(const FlowState& state);

struct AdmissibilityReport {
    bool ok = true;
    double worst_ratio = 0.0;  ///< max of lhs/rhs
    double worst_y = 0.0;
    int worst_order = 0;
    nlohmann::json to_json() const;
};

/// y^k |nabla^k v| < Lambda e^{-lambda_l s} (y^alpha + y^(2 lambda_l + 1)), k <= 2,
/// on [beta e^{-sigma s}, rho e^{s/2}].
AdmissibilityReport check_admissibility(const FlowState& state);

struct CurvatureSample {
    double t = 0.0;
    double sup_A = 0.0;   ///< physical
    bool in_tip = false;  ///< maximum attained inside the tip chart
};

CurvatureSample sup_curvature(const FlowState& state);

/// Relative sup of v - kappa e^{-lambda_l s} omega_1 phi_l/c_l on [r, R], times e^{0}:
/// measured against the leading term's own sup.
double tracking_residual(const FlowState& state, double kappa, double r, double R);

/// Overlap mismatch in type II units over [beta, 2 beta^2].
double overlap_mismatch(const FlowState& state);

struct OuterBarrierReport {
    double C0_plus = 0.0;
    double C0_minus = 0.0;
    double C_plus = 0.0;
    double C_minus = 0.0;
    double M_l = 0.0;
    int points = 0;
    int violations = 0;               ///< containment failures
    int sign_violations = 0;          ///< super/sub-solution sign failures
    double min_upper_gap = 0.0;       ///< min (u+ - u)/|u+|
    double min_lower_gap = 0.0;       ///< min (u - u-)/|u-|
    double min_super_margin = 0.0;    ///< min margin / (C0+ C+ x^(2 lambda - 1) omega_1)
    nlohmann::json to_json() const;
};

/// u^+- = C_0^+-(x^(2 lambda_l+1) - C^+- |t| x^(2 lambda_l-1)) omega_1 on [2R sqrt|t|, rho].
OuterBarrierReport verify_outer_barriers(const FlowState& state);

/// (d_t - L) u - E(u) for the barrier profile at physical x.
double outer_barrier_defect(const FlowSetup& setup, double C0, double C, double t, double x);

struct TipSchedule {
    double tau0 = 0.0;
    double tau = 0.0;
    double lambda_minus = 0.0;
    double lambda_plus = 0.0;
    double d0 = 0.0;
    double d1 = 0.0;
    double radius = 0.0;  ///< (2 sigma tau)^((1 - theta)/2)
};

TipSchedule tip_schedule(const FlowSetup& setup, double tau);

struct TipBarrierReport {
    TipSchedule schedule;
    int points = 0;
    int violations = 0;
    double min_lower_gap = 0.0;  ///< min (w_hat - w_hat^-)
    double min_upper_gap = 0.0;  ///< min (w_hat^+ - w_hat)
    nlohmann::json to_json() const;
};

/// Normal offset over the tip leaf of the leaf scaled by `scale` (lengths),
/// at arclength sigma.
double scaled_leaf_offset(const BaseCurve& base, double sigma, double scale);

/// Containment check without validating the schedule constraints.
TipBarrierReport tip_barrier_margins(const FlowState& state, const TipSchedule& sched);

/// Validates the schedule (lambda_- in (99/100, 1), d_0, d_1 >= 0) and
/// checks containment.  Throws ConfigError when the schedule is invalid.
TipBarrierReport verify_tip_barriers(const FlowState& state);

/// Slope of log sup|A| against log|t|.  Throws DomainError for fewer than
/// 1.5 decades or when the maximum is not attained inside a tip chart.
double blowup_exponent(const std::vector<CurvatureSample>& history);
double blowup_exponent(const std::vector<FlowState>& history);

/// One row of the per-snapshot table.
struct SnapshotRow {
    double s = 0.0;
    double t = 0.0;
    double tau = 0.0;
    double sup_A = 0.0;
    bool sup_in_tip = false;
    double kappa = 0.0;
    std::vector<double> Phi;
    double tip_sup_w = 0.0;
    double overlap = 0.0;
    double adm_ratio = 0.0;
    int outer_violations = 0;
    double outer_super_margin = 0.0;
    int tip_violations = -1;       ///< -1: schedule invalid
    double lambda_minus = 0.0;
    double v_track_raw = 0.0;      ///< e^{lambda_l s} sup |v - e^{-lambda_l s} omega_1 phi_l/c_l| on the annulus
};

struct FlowRun {
    FlowState final_state;
    std::vector<SnapshotRow> rows;
    std::vector<FlowState> snapshots;
    std::vector<double> tracking;  ///< residual against the final kappa per row
    int steps = 0;
    bool admissible = true;
    std::string failure;
};

/// Integrates from s0 to s_end, recording a row every regrid interval.
/// `keep_snapshots` retains the states.  Errors propagate.
FlowRun simulate(std::shared_ptr<const FlowSetup> setup, const std::vector<double>& a, double s_end,
                 bool keep_snapshots = false, bool diagnostics = true);

/// Phi(a) at s_end (a full simulation without diagnostics).
std::vector<double> evaluate_Phi(std::shared_ptr<const FlowSetup> setup, const std::vector<double>& a,
                                 double s_end);

struct TuningRecord {
    std::vector<double> a;
    double target_time = 0.0;   ///< s
    std::vector<double> residual;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    nlohmann::json to_json() const;
};

/// Damped Newton on a -> Phi(a) with a forward-difference Jacobian; the
/// Jacobian columns are evaluated concurrently.  Throws AdmissibilityError
/// when an iterate leaves the ball of `radius`.
TuningRecord tune_map(const std::function<std::vector<double>(const std::vector<double>&)>& Phi,
                      std::vector<double> a0, double radius, double fd_step, double tol = 1e-6,
                      int max_iter = 30, int workers = 4);

/// Tunes Phi(a, target_s) = 0 with continuation over intermediate targets.
TuningRecord tune(double target_s, std::shared_ptr<const FlowSetup> setup, int workers = 4);

/// Least-squares slope of log(values) against x.
double log_slope(const std::vector<double>& x, const std::vector<double>& values);

/// CSV of the snapshot table (fixed formatting, deterministic).
std::string rows_csv(const FlowRun& run);

}  // namespace mcflab
