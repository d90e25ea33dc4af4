// SCAD penalty: derivative, value, and the closed-form scalar threshold rule.

#pragma once

#include <cmath>
#include <stdexcept>

namespace scadspline {

/// SCAD penalty parameters. The shape parameter a must exceed 2; 3.7 is the
/// standard choice and the only value the selection machinery tunes is lambda.
struct ScadParams {
    double lambda = 0.0;
    double a = 3.7;

    void validate() const {
        if (!(lambda >= 0.0)) throw std::invalid_argument("ScadParams: lambda must be >= 0");
        if (!(a > 2.0)) throw std::invalid_argument("ScadParams: a must be > 2");
    }
};

/// p'_lambda(theta) = lambda * { 1                        if theta <= lambda
///                               (a*lambda-theta)_+ / ((a-1)*lambda)  otherwise }.
/// The value at theta = 0 is the right limit lambda.
inline double scad_derivative(double theta, const ScadParams& params) {
    if (theta < 0.0) throw std::domain_error("scad_derivative: theta must be >= 0");
    params.validate();
    const double lambda = params.lambda;
    if (lambda == 0.0) return 0.0;
    if (theta <= lambda) return lambda;
    const double tail = params.a * lambda - theta;
    return tail > 0.0 ? tail / (params.a - 1.0) : 0.0;
}

/// Antiderivative of scad_derivative with p(0) = 0: linear up to lambda,
/// quadratic up to a*lambda, then the constant plateau (a+1)*lambda^2/2.
inline double scad_value(double theta, const ScadParams& params) {
    if (theta < 0.0) throw std::domain_error("scad_value: theta must be >= 0");
    params.validate();
    const double lambda = params.lambda;
    const double a = params.a;
    if (theta <= lambda) return lambda * theta;
    if (theta <= a * lambda)
        return -(theta * theta - 2.0 * a * lambda * theta + lambda * lambda) / (2.0 * (a - 1.0));
    return (a + 1.0) * lambda * lambda / 2.0;
}

/// Minimizer of (z-theta)^2/2 + scad_value(|theta|): soft thresholding below
/// 2*lambda, a linear interpolation up to a*lambda, and the identity beyond.
inline double scad_threshold(double z, const ScadParams& params) {
    params.validate();
    const double lambda = params.lambda;
    const double a = params.a;
    const double az = std::abs(z);
    const double sign = z < 0.0 ? -1.0 : 1.0;
    if (az <= 2.0 * lambda) {
        const double shrunk = az - lambda;
        return shrunk > 0.0 ? sign * shrunk : 0.0;
    }
    if (az <= a * lambda) return ((a - 1.0) * z - sign * a * lambda) / (a - 2.0);
    return z;
}

}  // namespace scadspline
