#pragma once

#include <memory>
#include <vector>

namespace mcflab {

/// Monotone cubic (Steffen) interpolant over strictly increasing abscissae.
/// Thin RAII wrapper over GSL; evaluation outside the range throws
/// DomainError unless clamping is requested.
class MonotoneCubic {
public:
    MonotoneCubic();
    MonotoneCubic(std::vector<double> x, std::vector<double> y);
    MonotoneCubic(const MonotoneCubic& other);
    MonotoneCubic& operator=(const MonotoneCubic& other);
    MonotoneCubic(MonotoneCubic&&) noexcept;
    MonotoneCubic& operator=(MonotoneCubic&&) noexcept;
    ~MonotoneCubic();

    double operator()(double x) const;
    double deriv(double x) const;
    double lo() const { return x_.front(); }
    double hi() const { return x_.back(); }
    bool empty() const { return x_.empty(); }

private:
    void build();
    struct Impl;
    std::vector<double> x_;
    std::vector<double> y_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mcflab
