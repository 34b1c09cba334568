#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "json.hpp"
#include "mcflab/cone.hpp"

namespace mcflab {

/// Radial rule for integrals  int_0^inf f(y) y^(n-1) e^(-y^2/4) dy.
///
/// Gauss-Laguerre rules may absorb an extra power y^shift into the weight;
/// integrate() divides it back out so that callers always see the plain
/// Gaussian measure.  Panel rules (composite Gauss-Legendre on log-spaced
/// panels) serve compactly supported or sampled integrands.
struct WeightedQuadrature {
    enum class Kind { laguerre, panels };
    Kind kind = Kind::laguerre;
    int n = 0;
    int order = 0;
    double shift = 0.0;
    std::vector<double> nodes;
    std::vector<double> weights;

    /// sum_k w_k f(y_k) y_k^(-shift)
    double integrate(const std::function<double(double)>& f) const;
    /// int y^(n-1) e^(-y^2/4) over the rule (mass of the measure)
    double mass() const;
};

/// Generalized Gauss-Laguerre rule in eta = y^2/4 with weight
/// eta^((n+shift)/2-1) e^(-eta), via Golub-Welsch.  Exact for
/// y^shift * polynomial(y^2) of degree <= 2*order-1 in eta.
WeightedQuadrature build_quadrature(int n, int order, double shift = 0.0);

/// Composite Gauss-Legendre rule on [y_lo, y_hi] with `panels` log-spaced
/// panels of `points` nodes each; weights include y^(n-1) e^(-y^2/4).
WeightedQuadrature build_panel_quadrature(int n, double y_lo, double y_hi, int panels,
                                          int points = 8);

/// Radial function with optional derivative and support.
struct RadialFunction {
    enum class Decay { polynomial, gaussian_borderline };
    std::function<double(double)> eval;
    std::function<double(double)> deriv;
    Decay decay = Decay::polynomial;
    double support_lo = 0.0;
    double support_hi = std::numeric_limits<double>::infinity();
};

/// Radial factor paired with a link eigenfunction index (1-based level).
struct LinkedFunction {
    RadialFunction f;
    int j = 1;
};

/// <f,g>_W = radial integral times delta_{j_f j_g} (orthonormal link basis).
double inner_product_W(const LinkedFunction& f, const LinkedFunction& g, const ConeSpec& cone,
                       const WeightedQuadrature& quad);

/// Sharp constant C'(n) = (n-2)/4 of the weighted Hardy inequality
///   int (u'^2 - (n-2)^2/(4y^2) u^2) dW >= -C' int u^2 dW.
double hardy_constant(int n);

/// Empirical Hardy ratio R(u) for a compactly supported u (deriv needed).
/// The quadrature argument is ignored when u carries a finite support; a
/// panel rule on the support is used instead.
double hardy_defect(const RadialFunction& u, int n, const WeightedQuadrature& quad);

/// Smooth bump exp(1 - 1/(1 - x^2)), x = (y - center)/half_width.
RadialFunction make_bump(double center, double half_width);

struct CoercivityCertificate {
    double eps_tilde = 0.0;      ///< padded empirical constant
    double C = 0.0;              ///< C' + 1/2
    double eps_min_raw = 0.0;    ///< minimum over trials before padding
    double eps_analytic = 0.0;   ///< margin / (margin + sup|A|^2)
    int trials = 0;
    int basis_size = 0;
    std::uint64_t seed = 0;
    nlohmann::json to_json() const;
};

/// Empirical coercivity constants from random bump x link-mode trial
/// functions.  Throws DomainError when the cone is not strictly stable.
CoercivityCertificate coercivity_certificate(const ConeSpec& cone, int basis_size, int trials,
                                             std::uint64_t seed = 1);

/// Data for a Morrey check at one radius: sup over the link of |v(y,.)|,
/// and the weighted norms of v and grad v.
struct MorreySample {
    double y = 1.0;
    double abs_value = 0.0;
    double norm_W = 0.0;
    double grad_norm_W = 0.0;
};

/// Right-hand side profile y^(-n/2) + e^((y+1)^2/4).
double morrey_envelope(int n, double y);

/// Returns the slack C * envelope * (|grad v| + |v|) - |v(y)|; the bound
/// holds when the slack is >= 0.
double morrey_slack(const MorreySample& s, int n, double C);

}  // namespace mcflab
