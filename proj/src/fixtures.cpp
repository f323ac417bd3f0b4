#include "delayhjb/fixtures.hpp"

#include <cmath>
#include <stdexcept>

namespace delayhjb {

std::shared_ptr<const Coefficients> ou_coefficients() {
    FunctionCoefficients::Spec s;
    s.name = "ou";
    s.lipschitz = 1.0;
    s.growth = CostGrowth{0.0, 1};
    s.drift = [](const PathView& x, Control, Eigen::Ref<Eigen::VectorXd> b) { b[0] = -x.tip(0); };
    s.diffusion = [](const PathView&, Control, Eigen::Ref<Eigen::MatrixXd> sg) { sg(0, 0) = 1.0; };
    s.cost = [](const PathView&, Control) { return 0.0; };
    return std::make_shared<FunctionCoefficients>(std::move(s));
}

std::shared_ptr<const Coefficients> brownian_coefficients(int dim) {
    FunctionCoefficients::Spec s;
    s.name = "brownian";
    s.state_dim = dim;
    s.noise_dim = dim;
    s.lipschitz = 1.0;
    s.growth = CostGrowth{0.0, 1};
    s.drift = [](const PathView&, Control, Eigen::Ref<Eigen::VectorXd> b) { b.setZero(); };
    s.diffusion = [](const PathView&, Control, Eigen::Ref<Eigen::MatrixXd> sg) { sg.setIdentity(); };
    s.cost = [](const PathView&, Control) { return 0.0; };
    return std::make_shared<FunctionCoefficients>(std::move(s));
}

std::shared_ptr<const Coefficients> zero_coefficients(int dim, double lipschitz) {
    FunctionCoefficients::Spec s;
    s.name = "zero";
    s.state_dim = dim;
    s.noise_dim = dim;
    s.lipschitz = lipschitz;
    s.growth = CostGrowth{0.0, 1};
    s.drift = [](const PathView&, Control, Eigen::Ref<Eigen::VectorXd> b) { b.setZero(); };
    s.diffusion = [](const PathView&, Control, Eigen::Ref<Eigen::MatrixXd> sg) { sg.setZero(); };
    s.cost = [](const PathView&, Control) { return 0.0; };
    return std::make_shared<FunctionCoefficients>(std::move(s));
}

std::shared_ptr<const Coefficients> lq_coefficients(double sigma0) {
    if (!std::isfinite(sigma0)) throw std::invalid_argument("lq: sigma must be finite");
    FunctionCoefficients::Spec s;
    s.name = "lq";
    s.lipschitz = 1.0;
    s.growth = CostGrowth{1.0, 2};
    s.drift = [](const PathView&, Control u, Eigen::Ref<Eigen::VectorXd> b) { b[0] = u; };
    s.diffusion = [sigma0](const PathView&, Control, Eigen::Ref<Eigen::MatrixXd> sg) { sg(0, 0) = sigma0; };
    s.cost = [](const PathView& x, Control u) {
        const double z = x.tip(0);
        return z * z + u * u;
    };
    return std::make_shared<FunctionCoefficients>(std::move(s));
}

std::shared_ptr<const Coefficients> exp_memory_coefficients(double kappa, double sigma0) {
    if (!std::isfinite(kappa) || !std::isfinite(sigma0))
        throw std::invalid_argument("exp-memory: parameters must be finite");
    FunctionCoefficients::Spec s;
    s.name = "exp-memory";
    s.lipschitz = std::max(1.0, std::abs(kappa));
    s.growth = CostGrowth{1.0, 2};
    s.memory_rate = 1.0;
    s.drift = [kappa](const PathView& x, Control u, Eigen::Ref<Eigen::VectorXd> b) {
        b[0] = u + kappa * x.exp_integral(1.0, 0);
    };
    s.diffusion = [sigma0](const PathView&, Control, Eigen::Ref<Eigen::MatrixXd> sg) { sg(0, 0) = sigma0; };
    s.cost = [](const PathView& x, Control u) {
        const double z = x.tip(0);
        return z * z + u * u;
    };
    return std::make_shared<FunctionCoefficients>(std::move(s));
}

Riccati::Riccati(double lambda_, double sigma_) : lambda(lambda_), sigma(sigma_) {
    if (!(lambda > 0.0)) throw std::invalid_argument("riccati: lambda must be positive");
    a = 0.5 * (-lambda + std::sqrt(lambda * lambda + 4.0));
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_grid: need at least one point");
    if (n == 1) return {0.5 * (lo + hi)};
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

}  // namespace delayhjb
