#include "mcflab/interp.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_interp.h>

#include <string>

#include "mcflab/errors.hpp"

namespace mcflab {

struct MonotoneCubic::Impl {
    gsl_interp* interp = nullptr;
    ~Impl() {
        if (interp) gsl_interp_free(interp);
    }
};

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
    build();
}

MonotoneCubic::MonotoneCubic(const MonotoneCubic& other) : x_(other.x_), y_(other.y_) {
    if (!x_.empty()) build();
}

MonotoneCubic& MonotoneCubic::operator=(const MonotoneCubic& other) {
    if (this != &other) {
        x_ = other.x_;
        y_ = other.y_;
        impl_.reset();
        if (!x_.empty()) build();
    }
    return *this;
}

MonotoneCubic::MonotoneCubic() = default;
MonotoneCubic::~MonotoneCubic() = default;
MonotoneCubic::MonotoneCubic(MonotoneCubic&&) noexcept = default;
MonotoneCubic& MonotoneCubic::operator=(MonotoneCubic&&) noexcept = default;

void MonotoneCubic::build() {
    if (x_.size() != y_.size() || x_.size() < 3)
        throw DomainError("MonotoneCubic: need >= 3 matching samples");
    for (std::size_t k = 1; k < x_.size(); ++k)
        if (!(x_[k] > x_[k - 1])) throw DomainError("MonotoneCubic: abscissae must increase");
    gsl_set_error_handler_off();
    impl_ = std::make_unique<Impl>();
    impl_->interp = gsl_interp_alloc(gsl_interp_steffen, x_.size());
    if (gsl_interp_init(impl_->interp, x_.data(), y_.data(), x_.size()) != GSL_SUCCESS)
        throw NumericalError("MonotoneCubic: gsl_interp_init failed");
}

double MonotoneCubic::operator()(double x) const {
    if (x < x_.front() || x > x_.back())
        throw DomainError("MonotoneCubic: " + std::to_string(x) + " outside [" +
                          std::to_string(x_.front()) + ", " + std::to_string(x_.back()) + "]");
    return gsl_interp_eval(impl_->interp, x_.data(), y_.data(), x, nullptr);
}

double MonotoneCubic::deriv(double x) const {
    if (x < x_.front() || x > x_.back()) throw DomainError("MonotoneCubic: deriv outside range");
    return gsl_interp_eval_deriv(impl_->interp, x_.data(), y_.data(), x, nullptr);
}

}  // namespace mcflab
