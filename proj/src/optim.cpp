#include "xplain/optim.hpp"

#include <cmath>

#include "xplain/errors.hpp"

namespace xplain {

RAdam::RAdam(std::size_t size, double lr, double beta1, double beta2, double eps, double weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay), m_(size, 0.0), v_(size, 0.0) {}

void RAdam::step(std::vector<double>& params, const std::vector<double>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw ArgumentError("RAdam size mismatch");
    ++t_;
    const double t = static_cast<double>(t_);
    const double bias1 = 1.0 - std::pow(beta1_, t);
    const double beta2_t = std::pow(beta2_, t);
    const double bias2 = 1.0 - beta2_t;
    const double rho_inf = 2.0 / (1.0 - beta2_) - 1.0;
    const double rho_t = rho_inf - 2.0 * t * beta2_t / bias2;

    double rect = 0.0;
    const bool adaptive = rho_t > 5.0;
    if (adaptive) {
        rect = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = grad[i] + weight_decay_ * params[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
        double m_hat = m_[i] / bias1;
        if (adaptive) {
            double v_hat = std::sqrt(v_[i] / bias2);
            params[i] -= lr_ * rect * m_hat / (v_hat + eps_);
        } else {
            params[i] -= lr_ * m_hat;
        }
    }
}

}  // namespace xplain
