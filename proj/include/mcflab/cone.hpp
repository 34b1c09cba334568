#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"

namespace mcflab {

/// Spectral description of the link Sigma = C cap S^n.
///
/// `mu` lists the distinct eigenvalues of -(Delta_Sigma + |A_Sigma|^2) in
/// increasing order, `mult` their multiplicities.  Eigenvalues beyond the
/// supplied list are treated as +infinity.
struct LinkSpec {
    int dim = 0;                      ///< n - 1
    std::vector<double> mu;           ///< distinct link eigenvalues, increasing
    std::vector<std::uint64_t> mult;  ///< multiplicity of each mu level
    double sup_A2 = 0.0;              ///< sup |A_Sigma|^2
    double area = 0.0;                ///< |Sigma|
    bool symmetric = false;           ///< first eigenfunction is constant

    /// Throws ConfigError when an invariant fails.
    void validate() const;

    /// Constant first eigenfunction |Sigma|^{-1/2} (unit L^2 norm).
    double omega1() const;
};

struct ConeSpec {
    int n = 0;  ///< hypersurface dimension, ambient R^{n+1}
    LinkSpec link;
    double stability_margin = 0.0;  ///< mu_1 + (n-2)^2/4
    int p = 0;                      ///< sphere dimensions for C_{p,q}, 0 otherwise
    int q = 0;

    /// Builds and validates; the margin is computed from the link.
    static ConeSpec make(int n, LinkSpec link);

    bool strictly_stable() const { return stability_margin > 0.0; }
    bool is_quadratic() const { return p > 0 && q > 0; }
    double mu1() const { return link.mu.front(); }
};

/// Area of the round sphere S^k of radius r.
double sphere_area(int k, double r);

/// Dimension of degree-k spherical harmonics on S^k_dim.
std::uint64_t spherical_harmonic_dim(int sphere_dim, int degree);

/// The cone over S^p(sqrt(p/(n-1))) x S^q(sqrt(q/(n-1))).  Link levels are
/// generated for every product harmonic whose lowest radial eigenvalue
/// lambda_{0j} does not exceed `lambda_cap`.
ConeSpec quadratic_cone(int p, int q, double lambda_cap = 6.0);

/// |A_C|^2 at distance y from the vertex.
double cone_A2(const ConeSpec& cone, double y);

/// (|grad r|^2, |Hess r|^2) on the cone.
std::pair<double, double> hessian_r_identities(const ConeSpec& cone, double r);

void to_json(nlohmann::json& j, const LinkSpec& l);
void from_json(const nlohmann::json& j, LinkSpec& l);
void to_json(nlohmann::json& j, const ConeSpec& c);
void from_json(const nlohmann::json& j, ConeSpec& c);

}  // namespace mcflab
