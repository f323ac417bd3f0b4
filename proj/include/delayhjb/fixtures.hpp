#pragma once

#include "delayhjb/sde.hpp"

#include <memory>
#include <vector>

namespace delayhjb {

/// b = -x(0), sigma = 1, q = 0, L = 1.
std::shared_ptr<const Coefficients> ou_coefficients();
/// b = 0, sigma = I_d, q = 0.
std::shared_ptr<const Coefficients> brownian_coefficients(int dim = 1);
/// b = 0, sigma = 0, q = 0.
std::shared_ptr<const Coefficients> zero_coefficients(int dim = 1, double lipschitz = 1.0);
/// b = u, sigma = sigma0, q = x(0)^2 + u^2 (depends on the history only through x(0)).
std::shared_ptr<const Coefficients> lq_coefficients(double sigma0);
/// b = u + kappa int e^theta x(theta) d theta, sigma = sigma0, q = x(0)^2 + u^2.
std::shared_ptr<const Coefficients> exp_memory_coefficients(double kappa, double sigma0);

/// Positive root a of a^2 + lambda a - 1 = 0 and the value a z^2 + sigma^2 a / lambda.
struct Riccati {
    double lambda = 3.0;
    double sigma = 1.0;
    double a = 0.0;

    Riccati(double lambda, double sigma);
    double value(double z) const { return a * z * z + sigma * sigma * a / lambda; }
    double gradient(double z) const { return 2.0 * a * z; }
    double hessian() const { return 2.0 * a; }
    double feedback(double z) const { return -a * z; }
};

/// n equally spaced points on [lo, hi].
std::vector<double> uniform_grid(double lo, double hi, std::size_t n);

}  // namespace delayhjb
