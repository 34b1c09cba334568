#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcflab/cone.hpp"
#include "mcflab/wspace.hpp"

namespace mcflab {

/// Eigenpair of L_C = Delta + |A|^2 - y/2 d_y + 1/2 on the cone:
///   phi_ij = c y^alpha (1 + sum_m (-1)^m K_m y^(2m)) omega_j,
///   lambda_ij = -(1 - alpha)/2 + i.
struct EigenMode {
    int i = 0;
    int j = 1;                 ///< 1-based link level
    int n = 0;
    double mu = 0.0;           ///< link eigenvalue of level j
    double alpha = 0.0;        ///< indicial root alpha_j^+
    double lambda = 0.0;
    std::vector<double> K;     ///< K_1..K_i, all > 0
    double c_norm = 1.0;
    std::uint64_t mult = 1;    ///< multiplicity of the link level

    /// Radial profile without normalization: y^alpha (1 + sum ...).
    double raw(double y) const;
    double raw_deriv(double y) const;
    double raw_deriv2(double y) const;
    /// Normalized radial profile c_norm * raw(y).
    double profile(double y) const { return c_norm * raw(y); }
    double profile_deriv(double y) const { return c_norm * raw_deriv(y); }
    double profile_deriv2(double y) const { return c_norm * raw_deriv2(y); }
    /// Polynomial part 1 + sum (-1)^m K_m y^(2m).
    double poly(double y) const;
    RadialFunction as_radial() const;
};

/// alpha^+ = (-(n-2) + sqrt((n-2)^2 + 4 mu)) / 2.
double alpha_plus(double mu, int n);

/// K_m = (-1)^m (-i)^(m) / ((alpha + n/2)^(m) 4^m m!), m = 1..i.
std::vector<double> mode_coefficients(int i, double alpha, int n);

/// Builds mode (i, j).  The normalization uses a Laguerre rule of the
/// order of `quad` whose weight absorbs y^(2 alpha).  Throws DomainError
/// when 2 alpha_j - 2 <= -n (mode outside H^1_W).
EigenMode build_mode(const ConeSpec& cone, int i, int j, const WeightedQuadrature& quad);

/// <phi_a, phi_b>_W with an exponent-adapted Laguerre rule of `order`.
double mode_inner_product(const EigenMode& a, const EigenMode& b, int order);

/// Which link levels enter the ordering.
enum class SpectrumScope {
    full,         ///< every supplied link level
    equivariant,  ///< constant link eigenfunction only (j = 1)
};

struct OrderedSpectrum {
    std::vector<EigenMode> modes;          ///< sorted by (lambda, j, i)
    std::vector<std::uint64_t> first_index;///< 1-based single index of each entry
    SpectrumScope scope = SpectrumScope::full;
    int n = 0;
    double alpha = 0.0;                    ///< alpha_1
    std::size_t pos_l = 0;                 ///< entry holding lambda_l
    std::uint64_t l = 0;
    int i1 = 0;
    double lambda_l = 0.0;
    double delta_l = 0.0;
    int m_of_l = 1;
    std::vector<int> i_k;                  ///< i_1, i_2, ..., i_m
    double sigma_l = 0.0;

    const EigenMode& mode_l() const { return modes[pos_l]; }
    /// Modes (i, 1) with i < i_1, i.e. the unstable directions tuned in
    /// the equivariant flow.
    std::vector<EigenMode> unstable_j1() const;
    nlohmann::json to_json() const;
};

/// Sorted spectrum up to `lambda_cutoff` with the l, delta_l, m(l), i_k,
/// sigma_l bookkeeping.  When `forced_i1` is given that branch index is
/// used and a zero gap is an error; otherwise the smallest positive j = 1
/// eigenvalue with a positive gap is chosen.
OrderedSpectrum order_and_select(const ConeSpec& cone, double lambda_cutoff,
                                 const WeightedQuadrature& quad,
                                 SpectrumScope scope = SpectrumScope::full,
                                 std::optional<int> forced_i1 = std::nullopt);

/// Radial samples of one link component.
struct SampledRadial {
    std::vector<double> y;  ///< strictly increasing
    std::vector<double> v;
    int j = 1;
    bool zero_outside = false;  ///< treat v as 0 outside [y.front(), y.back()]
};

/// <v, phi>_W.  v is interpolated (monotone cubic in log y) to the nodes of
/// `quad`; nodes outside the samples are an error unless zero_outside.
double project(const SampledRadial& v, const EigenMode& mode, const WeightedQuadrature& quad);

/// Smooth step: 0 for x <= 0, 1 for x >= 1.
double cutoff_eta(double x);

/// Result of a log-linear decay fit.
struct DecayFit {
    bool converged = false;  ///< deviations at rounding level everywhere
    double exponent = 0.0;
    std::vector<double> deviations;
};

/// |<eta(e^{sigma s} y - beta) eta(rho e^{s/2} - y) phi_a, phi_b>_W - delta_ab|
/// on s_grid, fitted to C e^{-k s}.
DecayFit cutoff_overlap_decay(const EigenMode& a, const EigenMode& b, double beta, double rho,
                              double sigma_l, const std::vector<double>& s_grid);

/// Morrey bound check for v = sum c_k phi_k (j = 1 modes).
struct MorreyResult {
    bool holds = false;
    double slack = 0.0;
    MorreySample sample;
};

/// Calibrated constant for the span of `modes`: 1.1 times the maximum over
/// y_grid of |omega_1| |(phi_k(y))_k| / envelope(y).
double calibrate_morrey_constant(const ConeSpec& cone, const std::vector<EigenMode>& modes,
                                 const std::vector<double>& y_grid);

MorreyResult morrey_check(const ConeSpec& cone, const std::vector<EigenMode>& modes,
                          const std::vector<double>& coeffs, double y, double C);

/// W-inner products of the modes and of their gradients (row-major N x N).
struct MorreyGram {
    std::vector<double> mass;
    std::vector<double> grad;
};

MorreyGram morrey_gram(const ConeSpec& cone, const std::vector<EigenMode>& modes);

/// Same check with precomputed Gram matrices (reusable across radii and coefficients).
MorreyResult morrey_check(const ConeSpec& cone, const std::vector<EigenMode>& modes, const MorreyGram& gram,
                          const std::vector<double>& coeffs, double y, double C);

}  // namespace mcflab
