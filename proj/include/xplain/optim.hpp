#pragma once

#include <cstddef>
#include <vector>

namespace xplain {

// Rectified Adam. Uses the SGD-with-momentum step while the variance
// rectification term is undefined (rho_t <= 5).
class RAdam {
public:
    RAdam(std::size_t size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
          double weight_decay = 0.0);

    void step(std::vector<double>& params, const std::vector<double>& grad);
    std::size_t steps() const { return t_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    double lr_, beta1_, beta2_, eps_, weight_decay_;
    std::size_t t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace xplain
