#pragma once

#include <utility>
#include <vector>

#include "json.hpp"
#include "mcflab/cone.hpp"
#include "mcflab/interp.hpp"

namespace mcflab {

/// One sample of an equivariant profile curve in the (s, t) quadrant:
/// s, t are the radii of the two sphere factors, phi the tangent angle.
struct ProfileSample {
    double s = 0.0;
    double t = 0.0;
    double phi = 0.0;
};

/// Arclength-ordered profile curve of an O(p+1) x O(q+1)-invariant
/// hypersurface.  Samples sit at multiples of `arclength_step`.
struct ProfileCurve {
    int p = 0;
    int q = 0;
    double arclength_step = 0.0;
    std::vector<ProfileSample> samples;

    double arclength(std::size_t k) const { return arclength_step * static_cast<double>(k); }
};

/// Curvature phi' of a minimal profile: phi' = q cos(phi)/t - p sin(phi)/s.
/// With the right normal N = (sin phi, -cos phi) this is H = 0.
double profile_curvature(int p, int q, double s, double t, double phi);

/// Arclength derivative of profile_curvature along the minimal profile.
double profile_curvature_deriv(int p, int q, double s, double t, double phi);

/// State at arclength sigma by cubic Hermite interpolation of (s, t) with
/// exact tangents and of phi with exact curvature.  Clamps to the ends.
ProfileSample profile_at(const ProfileCurve& curve, double sigma);

/// Total arclength covered by the samples.
double curve_length(const ProfileCurve& curve);

/// Integrates the minimal-profile ODE from an arbitrary regular state until
/// the radius sqrt(s^2+t^2) reaches r_max.  Used for equilibrium checks.
ProfileCurve integrate_profile(int p, int q, ProfileSample start, double step, double r_max);

/// Shoots the leaf crossing the t = 0 axis orthogonally at (s0, 0).
/// Throws NumericalError when the curve crosses the cone or the integrator
/// fails.
ProfileCurve shoot_leaf(int p, int q, double s0, double step, double r_max);

/// Cone direction angle theta_c with tan theta_c = sqrt(q/p).
double cone_angle(int p, int q);

/// (r, psi): coordinate along the cone line and signed normal distance to
/// it (positive on the side of the s axis).
std::pair<double, double> cone_coordinates(int p, int q, double s, double t);

struct AsymptoticFit {
    double c = 0.0;
    double alpha = 0.0;
    double alpha_tilde = 0.0;
    double r_lo = 0.0;
    double r_hi = 0.0;
    int samples = 0;
};

/// Fits psi ~ c r^alpha (1 + d r^(-alpha_tilde)) on the outer decade
/// [r_hi/10, r_hi].  alpha_tilde comes from dyadic differences of
/// psi r^(-alpha_1) with the cone's indicial root.
AsymptoticFit fit_asymptotics(const ProfileCurve& curve, const ConeSpec& cone);

struct FoliationLeaf {
    ProfileCurve curve;
    double kappa = 1.0;
    double fit_c = 0.0;
    double fit_alpha = 0.0;
    double fit_alpha_tilde = 0.0;
    double cone_alpha = 0.0;  ///< indicial root alpha_1 used for rescaling
    double R_s = 0.0;         ///< start of the graph region over the cone
    std::size_t graph_start = 0;

    /// psi(r) in the graph region r >= R_s, solved on the Hermite profile.
    double psi_at(double r) const;
    /// Largest r covered by the samples.
    double r_max() const;
    /// Arclength of the point with cone coordinate r (graph region).
    double sigma_at(double r) const;
    nlohmann::json fit_json() const;

    MonotoneCubic psi_interp;    ///< coarse r -> psi, also the Newton seed
    MonotoneCubic sigma_interp;  ///< r -> arclength in the graph region
};

/// Leaf of the cone's foliation, normalized to c = 1 (kappa = 1):
/// shot from s0 = 1, fitted, then scaled by c^(-1/(1-alpha)).
FoliationLeaf build_leaf(const ConeSpec& cone, double step, double r_max);

/// Wraps a shot curve as a leaf (fits, R_s by the 5 degree rule).
FoliationLeaf make_leaf(const ProfileCurve& curve, const ConeSpec& cone, double kappa);

/// Scales by kappa^(1/(1-alpha)); kappa multiplies the current leaf's kappa.
FoliationLeaf rescale_leaf(const FoliationLeaf& leaf, double kappa);

/// First radius where the tangent is within 5 degrees of the cone direction.
std::size_t graph_region_start(const ProfileCurve& curve);

struct TipEigen {
    double lambda = 0.0;
    std::vector<double> sigma;  ///< arclength nodes, last one on the boundary
    std::vector<double> phi1;   ///< first eigenfunction, max-normalized
};

/// First Dirichlet eigenpair of -(Delta + |A|^2) on the leaf ball of given
/// radius, from a finite-volume discretization of the equivariant Jacobi
/// operator.  Throws NumericalError when lambda <= 0.
TipEigen tip_dirichlet_eigen(const FoliationLeaf& leaf, double radius, int nodes = 2000);

/// min over samples of <X, nu> with nu = (sin phi, -cos phi).
double jacobi_field_positivity(const ProfileCurve& curve);

/// Smallest radial gap R_b(theta) - R_a(theta) between two leaves written in
/// polar form over the cone angle; positive when b lies outside a.
double min_radial_gap(const ProfileCurve& a, const ProfileCurve& b);

}  // namespace mcflab
