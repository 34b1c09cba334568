#pragma once

#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcflab/spectrum.hpp"

namespace mcflab {

/// The full constant system with its validity checks.
struct ParamBundle {
    int n = 0;
    double alpha = 0.0;
    double alpha_tilde = 0.0;
    double lambda_l = 0.0;
    double delta_l = 0.0;
    double sigma_l = 0.0;
    double xi = 0.0;
    double theta = 0.0;
    double varrho = 0.0;
    double k_tilde = 0.0;
    double c_l = 0.0;
    double Lambda = 1e3;
    double beta = 1e2;
    double rho = 1e-2;
    double t0 = -0.018315638888734179;  // -e^{-4}

    /// Names of violated invariants; empty when the bundle is valid.
    std::vector<std::string> violations() const;
    nlohmann::json to_json() const;
};

/// Outcome of the main inequality
///   (-1-a)/(1-a) < min{ 2(1-a)/(n+2a+4), (n-4+2a)/(n+4+2a),
///                       2(1-a) delta/((n+2a+4) lambda), at/(1+at) }.
struct AlphaCondition {
    bool pass = false;
    double lhs = 0.0;
    std::array<double, 4> terms{};
    std::array<double, 4> margins{};  ///< term - lhs
    nlohmann::json to_json() const;
};

AlphaCondition check_alpha_condition(int n, double alpha, double alpha_tilde, double lambda_l,
                                     double delta_l);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool empty() const { return !(hi > lo); }
    bool contains(double x) const { return x > lo && x < hi; }
};

struct AdmissibleSet {
    Interval xi;
    Interval theta;          ///< for xi at the midpoint of the xi interval
    double xi_used = 0.0;
    double theta_weak_hi = 0.0;  ///< the looser 4 xi/(n+2a) bound, for the record
    bool empty = true;
    nlohmann::json to_json() const;
};

/// All (xi, theta) constraints, enforcing the n+2a+4 denominator.
AdmissibleSet admissible_intervals(int n, double alpha, double alpha_tilde, double lambda_l,
                                   double delta_l);

struct DerivedConstants {
    double sigma_l = 0.0;
    double c_l = 0.0;
    double varrho = 0.0;
    double k_tilde = 0.0;
};

/// Closed forms without validation.
DerivedConstants derived_constants_unchecked(double alpha, int n, double lambda_l, double xi,
                                             double theta);

/// Closed forms; throws ConfigError naming the first violated inequality.
DerivedConstants derived_constants(const OrderedSpectrum& sp, double alpha_tilde, double xi,
                                   double theta);

struct SimonsAsymptotics {
    int p = 0;
    int q = 0;
    double alpha_exact = 0.0;
    double alpha_approx = 0.0;
    double alpha_tilde_exact = 0.0;  ///< 2 - 2 alpha_exact
    double alpha_tilde_approx = 0.0;
    double theta_approx = 0.0;
    double tolerance = 0.0;          ///< 5/n^2, widened for uneven splits
};

SimonsAsymptotics simons_asymptotics(int n);

/// Bundle for a cone spectrum at the given (xi, theta); invariants are not
/// enforced (see ParamBundle::violations).
ParamBundle make_bundle(const OrderedSpectrum& sp, double alpha_tilde, double xi, double theta);

}  // namespace mcflab
