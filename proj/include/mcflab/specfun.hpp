#pragma once

namespace mcflab {

/// Parameters of Kummer's function M(a;b;xi).
struct KummerParams {
    double a = 0.0;
    double b = 1.0;
    bool terminating = false;  ///< a in {0,-1,-2,...}

    /// Validates b and classifies a.  Throws DomainError when b is a
    /// nonpositive integer.
    static KummerParams make(double a, double b);

    /// Number of series terms when terminating (1 - a), otherwise 0.
    int term_count() const;
};

/// Pochhammer symbol a(a+1)...(a+m-1); 1 for m = 0.
double rising_factorial(double a, int m);

/// Gamma function (Lanczos, reflection for negative non-integers).
double gamma_fn(double x);

/// log|Gamma(x)| and the sign of Gamma(x).
double log_gamma_fn(double x, int* sign = nullptr);

/// Kummer's confluent hypergeometric function M(a;b;xi), xi >= 0.
/// Terminating series are summed exactly; otherwise the series is summed
/// by term-ratio recurrence to 1e-13 relative.  Throws OverflowError when
/// the partial sums leave the double range.
double kummer_m(const KummerParams& p, double xi);

/// Derivative dM/dxi = (a/b) M(a+1;b+1;xi).
double kummer_m_prime(const KummerParams& p, double xi);

/// xi M'' + (b - xi) M' - a M with centered differences of step h, divided by
/// max(1, M(|a|;b;xi), sum of the three term magnitudes).
double kummer_ode_residual(const KummerParams& p, double xi, double h);

/// Large-argument form Gamma(b)/Gamma(a) e^xi xi^(a-b).  Throws
/// DomainError for terminating a.
double kummer_asymptotic(const KummerParams& p, double xi);

}  // namespace mcflab
